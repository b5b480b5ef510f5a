//! Cubic octrees over a box with 2:1 face/edge balance and hanging-node tables.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use hashbrown::{HashMap, HashSet};
use rustc_hash::FxBuildHasher;

use crate::geometry::LevelSet;
use crate::linalg::Vec3;

pub type FxMap<K, V> = HashMap<K, V, FxBuildHasher>;
pub type FxSet<K> = HashSet<K, FxBuildHasher>;

/// Default cap on refinement levels below the base grid.
pub const DEFAULT_MAX_LEVEL: u8 = 12;

const LATTICE_BITS: u32 = 21;
const LATTICE_MASK: u64 = (1 << LATTICE_BITS) - 1;

#[derive(Clone, Debug, PartialEq)]
pub enum OctreeError {
    NonDivisibleResolution { side: f64, h: f64 },
    MaxLevelExceeded(u8),
    LatticeTooLarge { base: u32, max_level: u8 },
    EmptyBand,
}

impl fmt::Display for OctreeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OctreeError::NonDivisibleResolution { side, h } => {
                write!(f, "cell size {h} does not divide the box side {side}")
            }
            OctreeError::MaxLevelExceeded(cap) => write!(f, "refinement would exceed the level cap {cap}"),
            OctreeError::LatticeTooLarge { base, max_level } => write!(
                f,
                "base resolution {base} with {max_level} levels does not fit the vertex lattice"
            ),
            OctreeError::EmptyBand => f.write_str("the surface does not intersect the grid"),
        }
    }
}

impl core::error::Error for OctreeError {}

/// A cell at `level`, indexed by `(i, j, k)` among the `base * 2^level` cells per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub i: u32,
    pub j: u32,
    pub k: u32,
}

impl CellKey {
    pub const fn new(level: u8, i: u32, j: u32, k: u32) -> Self {
        CellKey { level, i, j, k }
    }

    pub fn parent(self) -> Option<CellKey> {
        (self.level > 0).then(|| CellKey::new(self.level - 1, self.i >> 1, self.j >> 1, self.k >> 1))
    }

    /// Ancestor at a coarser `level` (or `self` when equal).
    pub fn ancestor(self, level: u8) -> CellKey {
        let s = self.level - level;
        CellKey::new(level, self.i >> s, self.j >> s, self.k >> s)
    }

    /// Children in corner order (x fastest).
    pub fn children(self) -> [CellKey; 8] {
        let (i, j, k) = (self.i << 1, self.j << 1, self.k << 1);
        let l = self.level + 1;
        core::array::from_fn(|c| CellKey::new(l, i + (c as u32 & 1), j + ((c as u32 >> 1) & 1), k + ((c as u32 >> 2) & 1)))
    }

    pub fn ijk(self) -> [u32; 3] {
        [self.i, self.j, self.k]
    }

    fn offset(self, d: [i32; 3], cells_per_axis: u32) -> Option<CellKey> {
        let mut out = [0u32; 3];
        for a in 0..3 {
            let v = self.ijk()[a] as i64 + d[a] as i64;
            if v < 0 || v >= cells_per_axis as i64 {
                return None;
            }
            out[a] = v as u32;
        }
        Some(CellKey::new(self.level, out[0], out[1], out[2]))
    }

    /// Whether `self` covers `other` (equal or ancestor).
    pub fn contains(self, other: CellKey) -> bool {
        other.level >= self.level && other.ancestor(self.level) == self
    }
}

/// Face and edge neighbour offsets.
pub const BALANCE_DIRECTIONS: [[i32; 3]; 18] = {
    let mut out = [[0; 3]; 18];
    let mut n = 0;
    let mut a = 0;
    while a < 27 {
        let d = [(a % 3) - 1, ((a / 3) % 3) - 1, (a / 9) - 1];
        let nz = (d[0] != 0) as i32 + (d[1] != 0) as i32 + (d[2] != 0) as i32;
        if nz == 1 || nz == 2 {
            out[n] = d;
            n += 1;
        }
        a += 1;
    }
    out
};

/// Vertex on the finest-level integer lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint(pub u64);

impl LatticePoint {
    pub fn new(a: u64, b: u64, c: u64) -> Self {
        LatticePoint((c << (2 * LATTICE_BITS)) | (b << LATTICE_BITS) | a)
    }

    pub fn coords(self) -> [u64; 3] {
        [self.0 & LATTICE_MASK, (self.0 >> LATTICE_BITS) & LATTICE_MASK, self.0 >> (2 * LATTICE_BITS)]
    }

    pub fn midpoint(self, other: LatticePoint) -> Option<LatticePoint> {
        let (a, b) = (self.coords(), other.coords());
        let s: [u64; 3] = core::array::from_fn(|i| a[i] + b[i]);
        if s.iter().any(|v| v % 2 != 0) {
            return None;
        }
        Some(LatticePoint::new(s[0] / 2, s[1] / 2, s[2] / 2))
    }
}

/// Constraint `value(node) = sum weights[m] * value(masters[m])` for a hanging node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HangingNode {
    pub node: u32,
    pub masters: [u32; 4],
    pub weights: [f64; 4],
    pub count: u8,
}

impl HangingNode {
    pub fn masters(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        (0..self.count as usize).map(|m| (self.masters[m], self.weights[m]))
    }
}

/// Corner pairs of the 12 cell edges (corner index = x + 2y + 4z).
pub const CELL_EDGES: [(usize, usize); 12] = [
    (0, 1), (2, 3), (4, 5), (6, 7),
    (0, 2), (1, 3), (4, 6), (5, 7),
    (0, 4), (1, 5), (2, 6), (3, 7),
];

/// Corners of the 6 faces (`-x, +x, -y, +y, -z, +z`), counter-clockwise seen from outside.
pub const CELL_FACES: [[usize; 4]; 6] = [
    [0, 4, 6, 2],
    [1, 3, 7, 5],
    [0, 1, 5, 4],
    [2, 6, 7, 3],
    [0, 2, 3, 1],
    [4, 5, 7, 6],
];

#[derive(Clone, Debug)]
pub struct OctreeGrid {
    lo: f64,
    hi: f64,
    base: u32,
    max_level: u8,
    leaves: Vec<CellKey>,
    leaf_index: FxMap<CellKey, u32>,
    vertices: Vec<LatticePoint>,
    vertex_index: FxMap<LatticePoint, u32>,
    cell_vertices: Vec<[u32; 8]>,
    hanging: Vec<HangingNode>,
    hanging_index: FxMap<u32, u32>,
}

/// Outcome of a refinement call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefineStats {
    pub refined: usize,
    pub ignored: usize,
    pub balance_splits: usize,
}

impl OctreeGrid {
    /// Uniform grid of cubes with side `h0` on `[lo, hi]^3`.
    pub fn uniform(lo: f64, hi: f64, h0: f64) -> Result<Self, OctreeError> {
        Self::uniform_with_cap(lo, hi, h0, DEFAULT_MAX_LEVEL)
    }

    pub fn uniform_with_cap(lo: f64, hi: f64, h0: f64, max_level: u8) -> Result<Self, OctreeError> {
        let side = hi - lo;
        let n = side / h0;
        let base = crate::math::round(n);
        if !(h0 > 0.0 && side > 0.0) || base < 1.0 || (n - base).abs() > 1e-9 * n.max(1.0) {
            return Err(OctreeError::NonDivisibleResolution { side, h: h0 });
        }
        let base = base as u32;
        let mut leaves = Vec::with_capacity((base as usize).pow(3));
        for k in 0..base {
            for j in 0..base {
                for i in 0..base {
                    leaves.push(CellKey::new(0, i, j, k));
                }
            }
        }
        Self::from_leaves(lo, hi, base, max_level, leaves)
    }

    /// Grid from an explicit leaf set; the leaves must tile the box.
    pub fn from_leaves(
        lo: f64,
        hi: f64,
        base: u32,
        max_level: u8,
        leaves: Vec<CellKey>,
    ) -> Result<Self, OctreeError> {
        if (base as u64) << max_level > LATTICE_MASK {
            return Err(OctreeError::LatticeTooLarge { base, max_level });
        }
        if let Some(l) = leaves.iter().map(|c| c.level).max() {
            if l > max_level {
                return Err(OctreeError::MaxLevelExceeded(max_level));
            }
        }
        let mut grid = OctreeGrid {
            lo,
            hi,
            base,
            max_level,
            leaves,
            leaf_index: FxMap::default(),
            vertices: Vec::new(),
            vertex_index: FxMap::default(),
            cell_vertices: Vec::new(),
            hanging: Vec::new(),
            hanging_index: FxMap::default(),
        };
        grid.rebuild();
        Ok(grid)
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    pub fn leaves(&self) -> &[CellKey] {
        &self.leaves
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_id(&self, key: CellKey) -> Option<usize> {
        self.leaf_index.get(&key).map(|&i| i as usize)
    }

    pub fn is_leaf(&self, key: CellKey) -> bool {
        self.leaf_index.contains_key(&key)
    }

    pub fn cells_per_axis(&self, level: u8) -> u32 {
        self.base << level
    }

    pub fn cell_size(&self, level: u8) -> f64 {
        (self.hi - self.lo) / self.cells_per_axis(level) as f64
    }

    /// Lower corner and side length of a cell.
    pub fn cell_box(&self, key: CellKey) -> (Vec3, f64) {
        let h = self.cell_size(key.level);
        let o = Vec3::new(
            self.lo + key.i as f64 * h,
            self.lo + key.j as f64 * h,
            self.lo + key.k as f64 * h,
        );
        (o, h)
    }

    pub fn cell_center(&self, key: CellKey) -> Vec3 {
        let (o, h) = self.cell_box(key);
        o + Vec3::new(0.5 * h, 0.5 * h, 0.5 * h)
    }

    pub fn vertices(&self) -> &[LatticePoint] {
        &self.vertices
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertex_id(&self, p: LatticePoint) -> Option<u32> {
        self.vertex_index.get(&p).copied()
    }

    pub fn lattice_spacing(&self) -> f64 {
        self.cell_size(self.max_level)
    }

    pub fn lattice_position(&self, p: LatticePoint) -> Vec3 {
        let h = self.lattice_spacing();
        let c = p.coords();
        Vec3::new(
            self.lo + c[0] as f64 * h,
            self.lo + c[1] as f64 * h,
            self.lo + c[2] as f64 * h,
        )
    }

    pub fn vertex_position(&self, v: u32) -> Vec3 {
        self.lattice_position(self.vertices[v as usize])
    }

    /// Vertex ids of a leaf, corner order `x + 2y + 4z`.
    pub fn cell_vertices(&self, leaf: usize) -> &[u32; 8] {
        &self.cell_vertices[leaf]
    }

    pub fn corner_lattice(&self, key: CellKey, corner: usize) -> LatticePoint {
        let s = self.max_level - key.level;
        let a = (key.i as u64 + (corner & 1) as u64) << s;
        let b = (key.j as u64 + ((corner >> 1) & 1) as u64) << s;
        let c = (key.k as u64 + ((corner >> 2) & 1) as u64) << s;
        LatticePoint::new(a, b, c)
    }

    pub fn hanging_nodes(&self) -> &[HangingNode] {
        &self.hanging
    }

    pub fn hanging(&self, node: u32) -> Option<&HangingNode> {
        self.hanging_index.get(&node).map(|&i| &self.hanging[i as usize])
    }

    pub fn is_hanging(&self, node: u32) -> bool {
        self.hanging_index.contains_key(&node)
    }

    /// Leaf covering the same-level cell `key`, if one exists at `key.level` or coarser.
    pub fn covering_leaf(&self, key: CellKey) -> Option<CellKey> {
        (0..=key.level).rev().map(|l| key.ancestor(l)).find(|a| self.leaf_index.contains_key(a))
    }

    /// Leaf containing the point `x` (points on shared faces go to the upper cell).
    pub fn locate(&self, x: Vec3) -> Option<CellKey> {
        let h = self.cell_size(0);
        let n = self.base;
        let mut idx = [0u32; 3];
        for a in 0..3 {
            let t = crate::math::floor((x[a] - self.lo) / h);
            if !(t >= 0.0 || x[a] >= self.lo) || x[a] > self.hi {
                return None;
            }
            idx[a] = (t.max(0.0) as u32).min(n - 1);
        }
        let mut key = CellKey::new(0, idx[0], idx[1], idx[2]);
        loop {
            if self.is_leaf(key) {
                return Some(key);
            }
            if key.level >= self.max_level {
                return None;
            }
            let (o, h) = self.cell_box(key);
            let c = (0..3).fold(0usize, |acc, a| acc | (((x[a] >= o[a] + 0.5 * h) as usize) << a));
            key = key.children()[c];
        }
    }

    /// Split marked leaves, then restore balance.
    pub fn refine(&mut self, marked: &[CellKey]) -> Result<RefineStats, OctreeError> {
        let mut stats = RefineStats::default();
        let mut set: FxSet<CellKey> = self.leaves.iter().copied().collect();
        let mut uniq: Vec<CellKey> = marked.to_vec();
        uniq.sort_unstable();
        uniq.dedup();
        for key in uniq {
            if !set.contains(&key) {
                stats.ignored += 1;
                continue;
            }
            if key.level >= self.max_level {
                return Err(OctreeError::MaxLevelExceeded(self.max_level));
            }
            set.remove(&key);
            set.extend(key.children());
            stats.refined += 1;
        }
        if stats.refined == 0 {
            return Ok(stats);
        }
        stats.balance_splits = self.balance_set(&mut set)?;
        self.leaves = set.into_iter().collect();
        self.rebuild();
        Ok(stats)
    }

    /// Refine every leaf once.
    pub fn refine_all(&mut self) -> Result<RefineStats, OctreeError> {
        let all = self.leaves.clone();
        self.refine(&all)
    }

    /// Restore 2:1 face/edge balance by splitting coarse leaves; returns the number of splits.
    pub fn enforce_balance(&mut self) -> Result<usize, OctreeError> {
        let mut set: FxSet<CellKey> = self.leaves.iter().copied().collect();
        let splits = self.balance_set(&mut set)?;
        if splits > 0 {
            self.leaves = set.into_iter().collect();
            self.rebuild();
        }
        Ok(splits)
    }

    /// Merge complete sibling groups whose parent is listed, then rebalance.
    pub fn coarsen(&mut self, parents: &[CellKey]) -> Result<usize, OctreeError> {
        let mut set: FxSet<CellKey> = self.leaves.iter().copied().collect();
        let mut merged = 0;
        for &p in parents {
            let kids = p.children();
            if kids.iter().all(|c| set.contains(c)) {
                for c in kids {
                    set.remove(&c);
                }
                set.insert(p);
                merged += 1;
            }
        }
        // merged parents that violate balance get split again
        self.balance_set(&mut set)?;
        self.leaves = set.into_iter().collect();
        self.rebuild();
        Ok(merged)
    }

    fn balance_set(&self, set: &mut FxSet<CellKey>) -> Result<usize, OctreeError> {
        let mut buckets: Vec<Vec<CellKey>> = vec![Vec::new(); self.max_level as usize + 1];
        for &c in set.iter() {
            buckets[c.level as usize].push(c);
        }
        for b in buckets.iter_mut() {
            b.sort_unstable();
        }
        let mut splits = 0;
        for level in (2..=self.max_level as usize).rev() {
            let cells = core::mem::take(&mut buckets[level]);
            let n = self.cells_per_axis(level as u8);
            for c in cells {
                if !set.contains(&c) {
                    continue;
                }
                for d in BALANCE_DIRECTIONS {
                    let Some(nb) = c.offset(d, n) else { continue };
                    let Some(mut leaf) = (0..=nb.level).rev().map(|l| nb.ancestor(l)).find(|a| set.contains(a)) else {
                        continue;
                    };
                    while (leaf.level as usize) + 1 < level {
                        set.remove(&leaf);
                        let kids = leaf.children();
                        for k in kids {
                            set.insert(k);
                            buckets[k.level as usize].push(k);
                        }
                        splits += 1;
                        leaf = nb.ancestor(leaf.level + 1);
                    }
                }
            }
        }
        Ok(splits)
    }

    /// First face- or edge-adjacent leaf pair whose levels differ by more than one.
    pub fn balance_violation(&self) -> Option<(CellKey, CellKey)> {
        for &c in &self.leaves {
            if c.level < 2 {
                continue;
            }
            let n = self.cells_per_axis(c.level);
            for d in BALANCE_DIRECTIONS {
                let Some(nb) = c.offset(d, n) else { continue };
                if let Some(leaf) = self.covering_leaf(nb) {
                    if leaf.level + 1 < c.level {
                        return Some((c, leaf));
                    }
                }
            }
        }
        None
    }

    /// Sum of leaf volumes.
    pub fn total_volume(&self) -> f64 {
        self.leaves
            .iter()
            .map(|c| {
                let h = self.cell_size(c.level);
                h * h * h
            })
            .sum()
    }

    fn rebuild(&mut self) {
        self.leaves.sort_unstable();
        self.leaf_index = self.leaves.iter().enumerate().map(|(n, &c)| (c, n as u32)).collect();

        let mut pts: Vec<LatticePoint> = Vec::with_capacity(self.leaves.len() * 2);
        for &c in &self.leaves {
            for corner in 0..8 {
                pts.push(self.corner_lattice(c, corner));
            }
        }
        pts.sort_unstable();
        pts.dedup();
        self.vertex_index = pts.iter().enumerate().map(|(n, &p)| (p, n as u32)).collect();
        self.vertices = pts;
        self.cell_vertices = self
            .leaves
            .iter()
            .map(|&c| core::array::from_fn(|corner| self.vertex_index[&self.corner_lattice(c, corner)]))
            .collect();

        let mut hanging: Vec<HangingNode> = Vec::new();
        let mut seen: FxSet<u32> = FxSet::default();
        for (leaf, &c) in self.leaves.iter().enumerate() {
            if c.level >= self.max_level {
                continue;
            }
            let cv = self.cell_vertices[leaf];
            for (a, b) in CELL_EDGES {
                let (pa, pb) = (self.vertices[cv[a] as usize], self.vertices[cv[b] as usize]);
                let Some(m) = pa.midpoint(pb) else { continue };
                if let Some(&id) = self.vertex_index.get(&m) {
                    if seen.insert(id) {
                        hanging.push(HangingNode {
                            node: id,
                            masters: [cv[a], cv[b], 0, 0],
                            weights: [0.5, 0.5, 0.0, 0.0],
                            count: 2,
                        });
                    }
                }
            }
            for f in CELL_FACES {
                let (pa, pc) = (self.vertices[cv[f[0]] as usize], self.vertices[cv[f[2]] as usize]);
                let Some(m) = pa.midpoint(pc) else { continue };
                if let Some(&id) = self.vertex_index.get(&m) {
                    if seen.insert(id) {
                        hanging.push(HangingNode {
                            node: id,
                            masters: [cv[f[0]], cv[f[1]], cv[f[2]], cv[f[3]]],
                            weights: [0.25; 4],
                            count: 4,
                        });
                    }
                }
            }
        }
        hanging.sort_unstable_by_key(|h| h.node);
        self.hanging_index = hanging.iter().enumerate().map(|(n, h)| (h.node, n as u32)).collect();
        self.hanging = hanging;
    }

    /// Nodal values of `phi` with hanging nodes set by their constraints.
    pub fn constrained_values(&self, phi: impl Fn(Vec3) -> f64) -> Vec<f64> {
        let mut values: Vec<f64> = (0..self.vertices.len() as u32)
            .map(|v| if self.is_hanging(v) { 0.0 } else { phi(self.vertex_position(v)) })
            .collect();
        self.apply_constraints(&mut values);
        values
    }

    /// Overwrite hanging-node entries with the combination of their masters (resolving chains).
    pub fn apply_constraints(&self, values: &mut [f64]) {
        let mut done = vec![false; self.hanging.len()];
        for h in 0..self.hanging.len() {
            self.resolve_hanging(h, values, &mut done);
        }
    }

    fn resolve_hanging(&self, h: usize, values: &mut [f64], done: &mut [bool]) -> f64 {
        let node = &self.hanging[h];
        if done[h] {
            return values[node.node as usize];
        }
        let mut v = 0.0;
        for (m, w) in node.masters() {
            let mv = match self.hanging_index.get(&m) {
                Some(&mh) => self.resolve_hanging(mh as usize, values, done),
                None => values[m as usize],
            };
            v += w * mv;
        }
        values[node.node as usize] = v;
        done[h] = true;
        v
    }

    /// Express a node through unconstrained nodes: `(node, weight)` pairs, merged and sorted.
    pub fn resolve_node(&self, node: u32) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = Vec::with_capacity(4);
        self.push_resolved(node, 1.0, &mut out);
        out.sort_unstable_by_key(|p| p.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(out.len());
        for (n, w) in out {
            match merged.last_mut() {
                Some(last) if last.0 == n => last.1 += w,
                _ => merged.push((n, w)),
            }
        }
        merged
    }

    fn push_resolved(&self, node: u32, weight: f64, out: &mut Vec<(u32, f64)>) {
        match self.hanging(node) {
            None => out.push((node, weight)),
            Some(h) => {
                let h = *h;
                for (m, w) in h.masters() {
                    self.push_resolved(m, weight * w, out);
                }
            }
        }
    }

    /// Leaves whose corner values of the constrained interpolant of `ls` change sign or vanish.
    pub fn surface_band(&self, ls: &dyn LevelSet) -> Result<Vec<CellKey>, OctreeError> {
        let values = self.constrained_values(|x| ls.value(x));
        self.band_from_values(&values)
    }

    pub fn band_from_values(&self, values: &[f64]) -> Result<Vec<CellKey>, OctreeError> {
        let band: Vec<CellKey> = self
            .leaves
            .iter()
            .enumerate()
            .filter(|&(n, _)| {
                let cv = &self.cell_vertices[n];
                let (mut neg, mut pos) = (false, false);
                for &v in cv {
                    let f = values[v as usize];
                    neg |= f <= 0.0;
                    pos |= f >= 0.0;
                }
                neg && pos
            })
            .map(|(_, &c)| c)
            .collect();
        if band.is_empty() {
            return Err(OctreeError::EmptyBand);
        }
        Ok(band)
    }
}
