//! Nested dissection with level-structure separators.

use alloc::vec;
use alloc::vec::Vec;

const LEAF: usize = 48;

struct Graph<'a> {
    ptr: &'a [usize],
    adj: &'a [u32],
    /// Membership stamp of the current subgraph.
    owner: Vec<u32>,
    seen: Vec<u32>,
    dist: Vec<u32>,
    stamp: u32,
    tag: u32,
}

impl Graph<'_> {
    fn neighbours(&self, v: u32) -> &[u32] {
        &self.adj[self.ptr[v as usize]..self.ptr[v as usize + 1]]
    }

    /// Breadth-first levels from `root` inside the current subgraph.
    fn levels(&mut self, root: u32) -> Vec<Vec<u32>> {
        self.stamp += 1;
        let stamp = self.stamp;
        let mut levels = vec![vec![root]];
        self.seen[root as usize] = stamp;
        self.dist[root as usize] = 0;
        loop {
            let mut next = Vec::new();
            for &v in levels.last().unwrap() {
                let (lo, hi) = (self.ptr[v as usize], self.ptr[v as usize + 1]);
                for &u in &self.adj[lo..hi] {
                    let ui = u as usize;
                    if self.owner[ui] == self.tag && self.seen[ui] != stamp {
                        self.seen[ui] = stamp;
                        self.dist[ui] = levels.len() as u32;
                        next.push(u);
                    }
                }
            }
            if next.is_empty() {
                return levels;
            }
            levels.push(next);
        }
    }

    fn dissect(&mut self, verts: Vec<u32>, out: &mut Vec<u32>) {
        if verts.len() <= LEAF {
            out.extend(verts);
            return;
        }
        self.tag += 1;
        let tag = self.tag;
        for &v in &verts {
            self.owner[v as usize] = tag;
        }
        // connected components
        let mut comps: Vec<Vec<u32>> = Vec::new();
        let mut covered = 0;
        let stamp0 = self.stamp + 1;
        for &v in &verts {
            if self.seen[v as usize] >= stamp0 && self.seen[v as usize] <= self.stamp {
                continue;
            }
            let lv = self.levels(v);
            let comp: Vec<u32> = lv.into_iter().flatten().collect();
            covered += comp.len();
            comps.push(comp);
            if covered == verts.len() {
                break;
            }
        }
        if comps.len() > 1 {
            for c in comps {
                self.dissect(c, out);
            }
            return;
        }
        // pseudo-peripheral root
        let mut lv = self.levels(verts[0]);
        for _ in 0..4 {
            let last = lv.last().unwrap();
            let cand = *last.iter().min_by_key(|&&u| (self.neighbours(u).len(), u)).unwrap();
            let lc = self.levels(cand);
            if lc.len() > lv.len() {
                lv = lc;
            } else {
                // restore distances of the kept structure
                lv = self.levels(lv[0][0]);
                break;
            }
        }
        if lv.len() < 3 {
            out.extend(verts);
            return;
        }
        let half = verts.len() / 2;
        let mut cum = 0;
        let mut m = 1;
        for (k, l) in lv.iter().enumerate() {
            cum += l.len();
            if cum >= half {
                m = k;
                break;
            }
        }
        let m = m.clamp(1, lv.len() - 2);
        // keep in the separator only nodes touching the far side
        let stamp = self.stamp;
        let far = (m + 1) as u32;
        let mut sep = Vec::new();
        let mut a: Vec<u32> = lv[..m].iter().flatten().copied().collect();
        for &v in &lv[m] {
            let touches = self
                .neighbours(v)
                .iter()
                .any(|&u| self.seen[u as usize] == stamp && self.owner[u as usize] == tag && self.dist[u as usize] == far);
            if touches {
                sep.push(v);
            } else {
                a.push(v);
            }
        }
        let b: Vec<u32> = lv[m + 1..].iter().flatten().copied().collect();
        self.dissect(a, out);
        self.dissect(b, out);
        out.extend(sep);
    }
}

/// Fill-reducing elimination order (`order[new] = old`) for the symmetric graph given in
/// adjacency form. Self loops are ignored.
pub fn nested_dissection(ptr: &[usize], adj: &[u32]) -> Vec<u32> {
    let n = ptr.len() - 1;
    let mut g = Graph {
        ptr,
        adj,
        owner: vec![0; n],
        seen: vec![0; n],
        dist: vec![0; n],
        stamp: 0,
        tag: 0,
    };
    let mut out = Vec::with_capacity(n);
    g.dissect((0..n as u32).collect(), &mut out);
    out
}
