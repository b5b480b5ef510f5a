//! Piecewise-trilinear level-set interpolation and crack-free triangulation of its zero set.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::fem::basis;
use crate::geometry::{closest_point_project, GeometryError, LevelSet};
use crate::linalg::Vec3;
use crate::octree::{CellKey, FxMap, LatticePoint, OctreeGrid, CELL_FACES};
use crate::par;
use crate::quadrature::QuadratureRule;

/// Nodal values smaller than this (relative to the field scale) are moved to the positive side.
pub const NUDGE: f64 = 1e-14;

/// Twice the area, relative to `h^2`, below which a triangle normal is taken from the level set.
const SLIVER_AREA: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub enum SurfaceError {
    NonFiniteValue { node: u32 },
    /// The contour on the boundary of a cell does not close up.
    OpenContour(CellKey),
    /// A lattice point needed for a subdivided face is missing (unbalanced grid).
    MissingFacePoint(CellKey),
    NonManifoldEdge { a: u32, b: u32, count: usize },
    EmptySurface,
}

impl fmt::Display for SurfaceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SurfaceError::NonFiniteValue { node } => write!(f, "level-set value at node {node} is not finite"),
            SurfaceError::OpenContour(c) => write!(f, "face contours of cell {c:?} do not close"),
            SurfaceError::MissingFacePoint(c) => write!(f, "cell {c:?} has a partially subdivided face; is the grid balanced?"),
            SurfaceError::NonManifoldEdge { a, b, count } => {
                write!(f, "edge ({a}, {b}) has {count} incident triangles instead of 2")
            }
            SurfaceError::EmptySurface => f.write_str("the level set has no zero crossing in the grid"),
        }
    }
}

impl core::error::Error for SurfaceError {}

/// Continuous piecewise-trilinear field given by nodal values on an octree.
#[derive(Clone, Debug, PartialEq)]
pub struct TrilinearField {
    values: Vec<f64>,
    scale: f64,
}

impl TrilinearField {
    /// Nodal interpolant of `ls`, constrained at hanging nodes, with near-zero values nudged.
    pub fn interpolate(grid: &OctreeGrid, ls: &dyn LevelSet) -> Result<Self, SurfaceError> {
        let values = grid.constrained_values(|x| ls.value(x));
        Self::from_nodal(values)
    }

    /// Field from nodal values that already satisfy the hanging-node constraints.
    pub fn from_nodal(mut values: Vec<f64>) -> Result<Self, SurfaceError> {
        if let Some(n) = values.iter().position(|v| !v.is_finite()) {
            return Err(SurfaceError::NonFiniteValue { node: n as u32 });
        }
        let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let tiny = NUDGE * scale;
        for v in values.iter_mut() {
            if v.abs() < tiny {
                *v = tiny;
            }
        }
        Ok(TrilinearField { values, scale })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn cell_values(&self, grid: &OctreeGrid, leaf: usize) -> [f64; 8] {
        grid.cell_vertices(leaf).map(|v| self.values[v as usize])
    }

    /// Value and gradient inside leaf `leaf`.
    pub fn eval_in_cell(&self, grid: &OctreeGrid, leaf: usize, x: Vec3) -> (f64, Vec3) {
        let (o, h) = grid.cell_box(grid.leaves()[leaf]);
        basis::interpolate(o, h, &self.cell_values(grid, leaf), x)
    }

    /// Value at an arbitrary point of the box.
    pub fn eval(&self, grid: &OctreeGrid, x: Vec3) -> Option<f64> {
        let key = grid.locate(x)?;
        Some(self.eval_in_cell(grid, grid.leaf_id(key)?, x).0)
    }

    /// Leaves whose corner values change sign.
    pub fn band(&self, grid: &OctreeGrid) -> Vec<usize> {
        (0..grid.num_leaves())
            .filter(|&l| {
                let v = self.cell_values(grid, l);
                v.iter().any(|&x| x < 0.0) && v.iter().any(|&x| x > 0.0)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Triangle {
    pub vertices: [u32; 3],
    /// Index of the parent leaf in the grid the surface was extracted from.
    pub leaf: u32,
    pub cell: CellKey,
    /// Unit normal pointing towards increasing level-set values.
    pub normal: Vec3,
    pub area: f64,
}

/// Marks the missing neighbour of an edge on the boundary of the box.
pub const NO_TRIANGLE: u32 = u32::MAX;

/// Undirected mesh edge with its incident triangles (`NO_TRIANGLE` on the box boundary).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshEdge {
    pub a: u32,
    pub b: u32,
    pub triangles: [u32; 2],
}

impl MeshEdge {
    pub fn is_boundary(&self) -> bool {
        self.triangles[1] == NO_TRIANGLE
    }
}

/// Contiguous run of triangles sharing one parent leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CellPatch {
    pub leaf: u32,
    pub start: u32,
    pub end: u32,
}

#[derive(Clone, Debug, Default)]
pub struct SurfaceTriangulation {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<Triangle>,
    pub edges: Vec<MeshEdge>,
    /// Cells of the grid containing triangles, in leaf order.
    pub patches: Vec<CellPatch>,
}

impl SurfaceTriangulation {
    pub fn area(&self) -> f64 {
        self.triangles.iter().map(|t| t.area).sum()
    }

    pub fn is_closed(&self) -> bool {
        self.edges.iter().all(|e| !e.is_boundary())
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.triangles.len() as i64
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].vertices.map(|v| self.vertices[v as usize])
    }

    pub fn barycenter(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (a + b + c) * (1.0 / 3.0)
    }

    /// Maps barycentric quadrature points of a rule to physical points of triangle `t`.
    pub fn map_point(&self, t: usize, bary: [f64; 3]) -> Vec3 {
        let [a, b, c] = self.corners(t);
        a * bary[0] + b * bary[1] + c * bary[2]
    }

    /// Leaf indices of the cells containing triangles (the set `omega_h`).
    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.patches.iter().map(|p| p.leaf as usize)
    }

    pub fn max_triangles_per_cell(&self) -> usize {
        self.patches.iter().map(|p| (p.end - p.start) as usize).max().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum VertexKey {
    Edge(LatticePoint, LatticePoint),
    Centre(u32, u16),
}

struct LocalPatch {
    vertices: Vec<(VertexKey, Vec3)>,
    triangles: Vec<[u32; 3]>,
}

#[derive(Clone, Copy)]
struct Crossing {
    key: (LatticePoint, LatticePoint),
    pos: Vec3,
    down: bool,
}

/// Triangulate the zero set of `field` cell by cell.
pub fn extract_surface(grid: &OctreeGrid, field: &TrilinearField) -> Result<SurfaceTriangulation, SurfaceError> {
    let band = field.band(grid);
    if band.is_empty() {
        return Err(SurfaceError::EmptySurface);
    }
    let patches = par::map(&band, |_, &leaf| cell_patch(grid, field, leaf));

    let mut surf = SurfaceTriangulation::default();
    let mut index: FxMap<VertexKey, u32> = FxMap::default();
    for (&leaf, patch) in band.iter().zip(patches) {
        let patch = patch?;
        let local: Vec<u32> = patch
            .vertices
            .iter()
            .map(|&(key, pos)| {
                *index.entry(key).or_insert_with(|| {
                    surf.vertices.push(pos);
                    (surf.vertices.len() - 1) as u32
                })
            })
            .collect();
        let start = surf.triangles.len() as u32;
        let key = grid.leaves()[leaf];
        let h = grid.cell_size(key.level);
        for t in patch.triangles {
            let v = t.map(|i| local[i as usize]);
            let [a, b, c] = v.map(|i| surf.vertices[i as usize]);
            let cross = (b - a).cross(c - a);
            let len = cross.norm();
            // slivers get the interpolant's normal; their cross product is mostly rounding noise
            let normal = if len > SLIVER_AREA * h * h {
                cross * (1.0 / len)
            } else {
                field.eval_in_cell(grid, leaf, (a + b + c) * (1.0 / 3.0)).1.normalized()
            };
            surf.triangles.push(Triangle { vertices: v, leaf: leaf as u32, cell: key, normal, area: 0.5 * len });
        }
        let end = surf.triangles.len() as u32;
        if end > start {
            surf.patches.push(CellPatch { leaf: leaf as u32, start, end });
        }
    }
    let (lo, hi) = grid.bounds();
    let tol = 1e-12 * (hi - lo);
    let on_boundary = |p: Vec3, q: Vec3| {
        (0..3).any(|a| {
            ((p[a] - lo).abs() < tol && (q[a] - lo).abs() < tol) || ((p[a] - hi).abs() < tol && (q[a] - hi).abs() < tol)
        })
    };
    surf.edges = build_edges(&surf.triangles, |a, b| on_boundary(surf.vertices[a as usize], surf.vertices[b as usize]))?;
    Ok(surf)
}

fn build_edges(triangles: &[Triangle], boundary: impl Fn(u32, u32) -> bool) -> Result<Vec<MeshEdge>, SurfaceError> {
    let mut half: Vec<(u32, u32, u32)> = Vec::with_capacity(triangles.len() * 3);
    for (t, tri) in triangles.iter().enumerate() {
        let v = tri.vertices;
        for e in 0..3 {
            let (a, b) = (v[e], v[(e + 1) % 3]);
            half.push((a.min(b), a.max(b), t as u32));
        }
    }
    half.sort_unstable();
    let mut edges = Vec::with_capacity(half.len() / 2);
    let mut i = 0;
    while i < half.len() {
        let mut j = i + 1;
        while j < half.len() && half[j].0 == half[i].0 && half[j].1 == half[i].1 {
            j += 1;
        }
        let (a, b) = (half[i].0, half[i].1);
        let triangles = match j - i {
            2 => [half[i].2, half[i + 1].2],
            1 if boundary(a, b) => [half[i].2, NO_TRIANGLE],
            count => return Err(SurfaceError::NonManifoldEdge { a, b, count }),
        };
        edges.push(MeshEdge { a, b, triangles });
        i = j;
    }
    Ok(edges)
}

fn value_at(grid: &OctreeGrid, field: &TrilinearField, p: LatticePoint) -> Option<f64> {
    grid.vertex_id(p).map(|id| field.values[id as usize])
}

/// Zero crossing on the lattice segment `p q`, descending into existing midpoints.
fn edge_crossing(grid: &OctreeGrid, field: &TrilinearField, p: LatticePoint, vp: f64, q: LatticePoint, vq: f64) -> Crossing {
    if let Some(m) = p.midpoint(q) {
        if let Some(vm) = value_at(grid, field, m) {
            return if (vp < 0.0) != (vm < 0.0) {
                edge_crossing(grid, field, p, vp, m, vm)
            } else {
                edge_crossing(grid, field, m, vm, q, vq)
            };
        }
    }
    let down = vp > 0.0;
    let ((a, va), (b, vb)) = if p < q { ((p, vp), (q, vq)) } else { ((q, vq), (p, vp)) };
    let t = va / (va - vb);
    let (xa, xb) = (grid.lattice_position(a), grid.lattice_position(b));
    Crossing { key: (a, b), pos: xa + (xb - xa) * t, down }
}

/// Oriented contour segments of one bilinear square (corners counter-clockwise from outside).
fn square_segments(
    grid: &OctreeGrid,
    field: &TrilinearField,
    sq: &[(LatticePoint, f64); 4],
    out: &mut Vec<(Crossing, Crossing)>,
) {
    let mut cross: [Option<Crossing>; 4] = [None; 4];
    let mut n = 0;
    for i in 0..4 {
        let (p, vp) = sq[i];
        let (q, vq) = sq[(i + 1) % 4];
        if (vp < 0.0) != (vq < 0.0) {
            cross[i] = Some(edge_crossing(grid, field, p, vp, q, vq));
            n += 1;
        }
    }
    match n {
        0 => {}
        2 => {
            let mut it = cross.iter().flatten();
            let (c0, c1) = (*it.next().unwrap(), *it.next().unwrap());
            if c0.down {
                out.push((c0, c1));
            } else {
                out.push((c1, c0));
            }
        }
        _ => {
            // asymptotic decider: sign of the bilinear saddle value
            let v = sq.map(|s| s.1);
            let saddle = (v[0] * v[2] - v[1] * v[3]) / (v[0] + v[2] - v[1] - v[3]);
            let positive_connected = saddle >= 0.0;
            for i in 0..4 {
                let c = cross[i].unwrap();
                if c.down {
                    let j = if positive_connected { (i + 1) % 4 } else { (i + 3) % 4 };
                    out.push((c, cross[j].unwrap()));
                }
            }
        }
    }
}

fn cell_patch(grid: &OctreeGrid, field: &TrilinearField, leaf: usize) -> Result<LocalPatch, SurfaceError> {
    let key = grid.leaves()[leaf];
    let cv = grid.cell_vertices(leaf);
    let lat = cv.map(|v| grid.vertices()[v as usize]);
    let val = cv.map(|v| field.values[v as usize]);

    let mut segments: Vec<(Crossing, Crossing)> = Vec::with_capacity(16);
    for face in CELL_FACES {
        let c: [(LatticePoint, f64); 4] = face.map(|k| (lat[k], val[k]));
        let centre = c[0].0.midpoint(c[2].0).and_then(|m| value_at(grid, field, m).map(|v| (m, v)));
        match centre {
            Some(z) => {
                let mut mids = [(LatticePoint(0), 0.0); 4];
                for i in 0..4 {
                    let m = c[i].0.midpoint(c[(i + 1) % 4].0).ok_or(SurfaceError::MissingFacePoint(key))?;
                    let v = value_at(grid, field, m).ok_or(SurfaceError::MissingFacePoint(key))?;
                    mids[i] = (m, v);
                }
                let subs = [
                    [c[0], mids[0], z, mids[3]],
                    [mids[0], c[1], mids[1], z],
                    [z, mids[1], c[2], mids[2]],
                    [mids[3], z, mids[2], c[3]],
                ];
                for s in &subs {
                    square_segments(grid, field, s, &mut segments);
                }
            }
            None => square_segments(grid, field, &c, &mut segments),
        }
    }

    let (origin, h) = grid.cell_box(key);
    let mut patch = LocalPatch { vertices: Vec::new(), triangles: Vec::new() };
    let mut local: Vec<(LatticePoint, LatticePoint)> = Vec::new();
    let mut vid = |c: &Crossing, patch: &mut LocalPatch| -> u32 {
        if let Some(i) = local.iter().position(|k| *k == c.key) {
            return i as u32;
        }
        local.push(c.key);
        patch.vertices.push((VertexKey::Edge(c.key.0, c.key.1), c.pos));
        (local.len() - 1) as u32
    };
    let ids: Vec<(u32, u32)> = segments.iter().map(|(s, e)| (vid(s, &mut patch), vid(e, &mut patch))).collect();

    let mut used = vec![false; ids.len()];
    let mut loop_count: u16 = 0;
    for first in 0..ids.len() {
        if used[first] {
            continue;
        }
        used[first] = true;
        let mut ring = vec![ids[first].0];
        let mut cur = ids[first].1;
        while cur != ring[0] {
            let next = (0..ids.len()).find(|&s| !used[s] && ids[s].0 == cur).ok_or(SurfaceError::OpenContour(key))?;
            used[next] = true;
            ring.push(cur);
            cur = ids[next].1;
        }
        if ring.len() == 3 {
            patch.triangles.push([ring[0], ring[1], ring[2]]);
        } else {
            let pts: Vec<Vec3> = ring.iter().map(|&i| patch.vertices[i as usize].1).collect();
            let centroid = pts.iter().fold(Vec3::ZERO, |a, &p| a + p) * (1.0 / pts.len() as f64);
            match project_to_zero(origin, h, &val, centroid, field.scale) {
                Some(x) => {
                    patch.vertices.push((VertexKey::Centre(leaf as u32, loop_count), x));
                    let c = (patch.vertices.len() - 1) as u32;
                    for i in 0..ring.len() {
                        patch.triangles.push([c, ring[i], ring[(i + 1) % ring.len()]]);
                    }
                }
                None => {
                    for i in 1..ring.len() - 1 {
                        patch.triangles.push([ring[0], ring[i], ring[i + 1]]);
                    }
                }
            }
        }
        loop_count += 1;
    }
    Ok(patch)
}

/// Point of the trilinear zero set in the cell near `x0`: Newton steps, then bisection along the gradient line.
fn project_to_zero(origin: Vec3, h: f64, corner: &[f64; 8], x0: Vec3, scale: f64) -> Option<Vec3> {
    let tol = 1e-13 * scale;
    let inside = |x: Vec3| (0..3).all(|a| x[a] >= origin[a] - 1e-12 * h && x[a] <= origin[a] + h * (1.0 + 1e-12));
    let clamp = |x: Vec3| Vec3::new(
        x[0].clamp(origin[0], origin[0] + h),
        x[1].clamp(origin[1], origin[1] + h),
        x[2].clamp(origin[2], origin[2] + h),
    );
    let f = |x: Vec3| basis::interpolate(origin, h, corner, x);

    let mut x = x0;
    for _ in 0..30 {
        let (v, g) = f(x);
        if v.abs() <= tol {
            return Some(clamp(x));
        }
        let g2 = g.norm_squared();
        if g2 == 0.0 {
            break;
        }
        x -= g * (v / g2);
        if !inside(x) {
            break;
        }
    }

    let (v0, g0) = f(x0);
    let dir = g0.normalized();
    if dir.norm_squared() == 0.0 {
        return None;
    }
    // largest |t| keeping x0 + t dir inside the cell, on either side
    let reach = |sign: f64| {
        let mut t = f64::INFINITY;
        for a in 0..3 {
            let d = dir[a] * sign;
            if d > 0.0 {
                t = t.min((origin[a] + h - x0[a]) / d);
            } else if d < 0.0 {
                t = t.min((origin[a] - x0[a]) / d);
            }
        }
        t.max(0.0)
    };
    let (lo_t, hi_t) = (-reach(-1.0), reach(1.0));
    let steps = 32;
    let mut best: Option<(f64, f64)> = None;
    for side in [1.0, -1.0] {
        let mut prev: (f64, f64) = (0.0, v0);
        let end = if side > 0.0 { hi_t } else { lo_t };
        for s in 1..=steps {
            let t = end * s as f64 / steps as f64;
            let v = f(x0 + dir * t).0;
            if (v < 0.0) != (prev.1 < 0.0) {
                let cand = (prev.0, t);
                if best.is_none_or(|b| cand.0.abs() < b.0.abs()) {
                    best = Some(cand);
                }
                break;
            }
            prev = (t, v);
        }
    }
    let (mut a, mut b) = best?;
    let mut va = f(x0 + dir * a).0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let vm = f(x0 + dir * m).0;
        if vm.abs() <= tol || (b - a).abs() < 1e-16 * h {
            return Some(clamp(x0 + dir * m));
        }
        if (vm < 0.0) == (va < 0.0) {
            a = m;
            va = vm;
        } else {
            b = m;
        }
    }
    Some(clamp(x0 + dir * (0.5 * (a + b))))
}

/// Approximation quality of a triangulation against the exact surface.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeometryQuality {
    /// Largest distance to the surface over triangle quadrature points.
    pub max_distance: f64,
    /// Largest `|n(p(x)) - n_h|` over the same points.
    pub max_normal_error: f64,
}

pub fn geometry_quality(
    surf: &SurfaceTriangulation,
    ls: &dyn LevelSet,
    quad: &QuadratureRule,
) -> Result<GeometryQuality, GeometryError> {
    let per_tri = par::map_range(surf.triangles.len(), |t| -> Result<GeometryQuality, GeometryError> {
        let mut q = GeometryQuality::default();
        let nh = surf.triangles[t].normal;
        for bary in &quad.points {
            let x = surf.map_point(t, *bary);
            let p = closest_point_project(ls, x, 1e-13)?;
            let n = ls.gradient(p).normalized();
            q.max_distance = q.max_distance.max((x - p).norm());
            q.max_normal_error = q.max_normal_error.max((n - nh).norm());
        }
        Ok(q)
    });
    let mut out = GeometryQuality::default();
    for q in per_tri {
        let q = q?;
        out.max_distance = out.max_distance.max(q.max_distance);
        out.max_normal_error = out.max_normal_error.max(q.max_normal_error);
    }
    Ok(out)
}

/// Violations found by [`audit`]; all counts are zero for a valid triangulation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub triangles: usize,
    pub outside_parent: usize,
    pub misoriented: usize,
    pub max_vertex_residual: f64,
    pub max_triangles_per_cell: usize,
}

impl AuditReport {
    pub fn is_clean(&self, scale: f64) -> bool {
        self.outside_parent == 0 && self.misoriented == 0 && self.max_vertex_residual <= 1e-10 * scale
    }
}

/// Check parent containment, orientation and vertex residuals (watertightness is checked on extraction).
pub fn audit(grid: &OctreeGrid, field: &TrilinearField, surf: &SurfaceTriangulation) -> AuditReport {
    let mut rep = AuditReport {
        triangles: surf.triangles.len(),
        max_triangles_per_cell: surf.max_triangles_per_cell(),
        ..Default::default()
    };
    for (t, tri) in surf.triangles.iter().enumerate() {
        let leaf = tri.leaf as usize;
        let (o, h) = grid.cell_box(tri.cell);
        let b = surf.barycenter(t);
        let slack = 1e-12 * h.max(1.0);
        if (0..3).any(|a| b[a] < o[a] - slack || b[a] > o[a] + h + slack) {
            rep.outside_parent += 1;
        }
        for x in surf.corners(t) {
            let (v, _) = field.eval_in_cell(grid, leaf, x);
            rep.max_vertex_residual = rep.max_vertex_residual.max(v.abs());
        }
        let (_, g) = field.eval_in_cell(grid, leaf, b);
        if tri.area > 1e-14 * h * h && tri.normal.dot(g) <= 0.0 {
            rep.misoriented += 1;
        }
    }
    rep
}
