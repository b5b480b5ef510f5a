mod common;

use common::brute_force_balanced;
use proptest::prelude::*;
use tracefem_core::geometry::{LevelSet, Plane, Sphere};
use tracefem_core::linalg::Vec3;
use tracefem_core::octree::{CellKey, OctreeError, OctreeGrid};

fn leaves_are_disjoint(grid: &OctreeGrid) -> bool {
    let leaves = grid.leaves();
    leaves
        .iter()
        .enumerate()
        .all(|(a, &ka)| leaves[a + 1..].iter().all(|&kb| !ka.contains(kb) && !kb.contains(ka)))
}

fn volume(grid: &OctreeGrid) -> f64 {
    grid.leaves().iter().map(|&k| grid.cell_size(k.level).powi(3)).sum()
}

/// Trilinear polynomial `c0 + c1 x + c2 y + c3 z + c4 xy + c5 yz + c6 xz + c7 xyz`.
fn trilinear(c: [f64; 8], x: Vec3) -> f64 {
    let [a, b, d] = x.0;
    c[0] + c[1] * a + c[2] * b + c[3] * d + c[4] * a * b + c[5] * b * d + c[6] * a * d + c[7] * a * b * d
}

#[test]
fn uniform_grids() {
    let g = OctreeGrid::uniform(-2.0, 2.0, 0.25).unwrap();
    assert_eq!(g.num_leaves(), 4096);
    assert!(g.hanging_nodes().is_empty());
    let g = OctreeGrid::uniform(0.0, 1.0, 1.0).unwrap();
    assert_eq!((g.num_leaves(), g.num_vertices(), g.hanging_nodes().len()), (1, 8, 0));
    let g = OctreeGrid::uniform(0.0, 1.0, 0.5).unwrap();
    assert_eq!((g.num_leaves(), g.num_vertices()), (8, 27));
    assert!(matches!(OctreeGrid::uniform(0.0, 1.0, 0.3), Err(OctreeError::NonDivisibleResolution { .. })));
}

#[test]
fn refinement_examples() {
    let mut g = OctreeGrid::uniform(0.0, 1.0, 0.5).unwrap();
    let before = g.clone();
    g.refine(&[]).unwrap();
    assert_eq!(g.leaves(), before.leaves());
    g.refine(&[g.leaves()[3]]).unwrap();
    assert_eq!(g.num_leaves(), 15);
    assert!(brute_force_balanced(&g));

    let mut g = OctreeGrid::uniform(-2.0, 2.0, 0.25).unwrap();
    let mut target = g.leaves()[1234];
    for _ in 0..4 {
        g.refine(&[target]).unwrap();
        assert!(brute_force_balanced(&g));
        target = target.children()[5];
    }
}

#[test]
fn balance_splits_a_coarse_neighbour() {
    let mut g = OctreeGrid::uniform(0.0, 1.0, 0.5).unwrap();
    g.refine(&[CellKey::new(0, 0, 0, 0)]).unwrap();
    g.refine(&[CellKey::new(1, 1, 1, 1)]).unwrap();
    assert!(g.is_leaf(CellKey::new(1, 1, 1, 1).children()[0]));
    // the level-0 neighbours across faces of the level-1 parent must have been split
    assert!(!g.is_leaf(CellKey::new(0, 1, 0, 0)));
    assert!(brute_force_balanced(&g));
    let n = g.num_leaves();
    assert_eq!(g.enforce_balance().unwrap(), 0);
    assert_eq!(g.num_leaves(), n);
}

#[test]
fn random_fifty_cell_refinement_on_an_eight_cube() {
    use rand::{seq::SliceRandom, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(50);
    let mut g = OctreeGrid::uniform(0.0, 1.0, 0.125).unwrap();
    for _ in 0..3 {
        let marked: Vec<CellKey> = g.leaves().choose_multiple(&mut rng, 50).copied().collect();
        g.refine(&marked).unwrap();
        assert!(brute_force_balanced(&g));
        assert!(g.balance_violation().is_none());
    }
}

#[test]
fn level_cap_is_reported() {
    let mut g = OctreeGrid::uniform_with_cap(0.0, 1.0, 0.5, 2).unwrap();
    let k = g.leaves()[0];
    g.refine(&[k]).unwrap();
    g.refine(&[k.children()[0]]).unwrap();
    assert_eq!(g.refine(&[k.children()[0].children()[0]]), Err(OctreeError::MaxLevelExceeded(2)));
}

#[test]
fn band_matches_dense_sampling_of_the_interpolant() {
    let g = OctreeGrid::uniform(-2.0, 2.0, 0.25).unwrap();
    let sphere = Sphere::new(1.0);
    let band = g.surface_band(&sphere).unwrap();
    // sample the raw nodal interpolant (exact zeros at corners count as cut)
    let values = g.constrained_values(|x| sphere.value(x));
    let mut sampled = Vec::new();
    for (leaf, &key) in g.leaves().iter().enumerate() {
        let cv: Vec<f64> = g.cell_vertices(leaf).iter().map(|&v| values[v as usize]).collect();
        let (mut neg, mut pos) = (false, false);
        for a in 0..10 {
            for b in 0..10 {
                for c in 0..10 {
                    let t = [a as f64 / 9.0, b as f64 / 9.0, c as f64 / 9.0];
                    let v: f64 = (0..8)
                        .map(|m| {
                            let w: f64 = (0..3).map(|d| if m >> d & 1 == 1 { t[d] } else { 1.0 - t[d] }).product();
                            w * cv[m]
                        })
                        .sum();
                    neg |= v <= 0.0;
                    pos |= v >= 0.0;
                }
            }
        }
        if neg && pos {
            sampled.push(key);
        }
    }
    let mut band = band;
    band.sort();
    sampled.sort();
    assert_eq!(band, sampled);
}

#[test]
fn band_examples() {
    let g = OctreeGrid::uniform(0.0, 1.0, 0.5).unwrap();
    let band = g.surface_band(&Plane::new(Vec3::new(0.0, 0.0, 1.0), 0.1)).unwrap();
    assert_eq!(band.len(), 4);
    assert!(band.iter().all(|k| k.k == 0));
    let g = OctreeGrid::uniform(-2.0, 2.0, 0.5).unwrap();
    assert_eq!(g.surface_band(&Sphere::new(10.0)), Err(OctreeError::EmptyBand));
}

#[test]
fn hanging_weights_are_midpoint_or_face_centre() {
    let sphere = Sphere::new(0.7);
    let g = common::random_adaptive_grid(-1.0, 1.0, 0.25, &sphere, 3, 9);
    assert!(!g.hanging_nodes().is_empty());
    for hn in g.hanging_nodes() {
        let w: Vec<f64> = hn.masters().map(|(_, w)| w).collect();
        assert!(w == [0.5, 0.5] || w == [0.25; 4], "{w:?}");
    }
}

#[derive(Clone, Debug)]
enum Op {
    Refine(Vec<prop::sample::Index>),
    RefineNear(f64),
    Coarsen(prop::sample::Index),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => prop::collection::vec(any::<prop::sample::Index>(), 1..4).prop_map(Op::Refine),
        1 => (0.2f64..0.9).prop_map(Op::RefineNear),
        1 => any::<prop::sample::Index>().prop_map(Op::Coarsen),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn random_operation_sequences_keep_the_grid_valid(ops in prop::collection::vec(op(), 1..200)) {
        let mut g = OctreeGrid::uniform_with_cap(0.0, 1.0, 0.25, 4).unwrap();
        for op in ops {
            if g.num_leaves() > 6000 {
                break;
            }
            match op {
                Op::Refine(ix) => {
                    let marked: Vec<CellKey> = ix.iter().map(|i| *i.get(g.leaves())).filter(|k| k.level < 4).collect();
                    g.refine(&marked).unwrap();
                }
                Op::RefineNear(r) => {
                    let s = Sphere::new(r);
                    let marked: Vec<CellKey> = g
                        .leaves()
                        .iter()
                        .copied()
                        .filter(|&k| k.level < 3 && s.value(g.cell_center(k) - Vec3::new(0.5, 0.5, 0.5)).abs() < g.cell_size(k.level))
                        .collect();
                    g.refine(&marked).unwrap();
                }
                Op::Coarsen(i) => {
                    if let Some(p) = i.get(g.leaves()).parent() {
                        g.coarsen(&[p]).unwrap();
                    }
                }
            }
            prop_assert!((volume(&g) - 1.0).abs() <= 1e-12);
        }
        prop_assert!(g.balance_violation().is_none());
        prop_assert!(brute_force_balanced(&g));
        prop_assert!(leaves_are_disjoint(&g));
    }

    #[test]
    fn hanging_nodes_reproduce_trilinear_polynomials(
        c in prop::array::uniform8(-2.0f64..2.0),
        seed in 0u64..1000,
    ) {
        let g = common::random_adaptive_grid(-1.0, 1.0, 0.5, &Sphere::new(0.6), 3, seed);
        let f = |x: Vec3| trilinear(c, x);
        let constrained = g.constrained_values(f);
        for hn in g.hanging_nodes() {
            let direct = f(g.vertex_position(hn.node));
            let via: f64 = hn.masters().map(|(m, w)| w * f(g.vertex_position(m))).sum();
            prop_assert!((direct - via).abs() <= 1e-13 * (1.0 + direct.abs()));
            prop_assert!((constrained[hn.node as usize] - direct).abs() <= 1e-13 * (1.0 + direct.abs()));
        }
    }
}
