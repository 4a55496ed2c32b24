use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Configuration, Sausage};
use crate::error::{config, Error, Result};
use crate::geometry::{default_cell_size, segment_distance_sq_raw, GridIndex};

/// Earliest horizon at which the two sausages intersect, or `None` if they
/// stay apart up to their common horizon.
///
/// Equals `times[m]` for the least `m` such that some segment pair `(i, j)`
/// with `max(i, j) = m` comes within `r1 + r2`. Truncating both paths at any
/// `t′ ≥ τ` keeps that pair; truncating below `τ` removes every touching
/// pair, so the answer is monotone in the horizon by construction.
pub fn connection_time(s1: &Sausage, s2: &Sausage) -> Result<Option<f64>> {
    if s1.dim() != s2.dim() || s1.n_segments() != s2.n_segments() || s1.path.horizon() != s2.path.horizon() {
        return config("sausages differ in dimension or time grid");
    }
    Ok(first_contact(s1, s2, usize::MAX).map(|m| s1.path.time(m)))
}

/// Least `max(i, j)` below `limit` over touching segment pairs.
pub(crate) fn first_contact(s1: &Sausage, s2: &Sausage, limit: usize) -> Option<usize> {
    let reach = s1.radius + s2.radius;
    let reach_sq = reach * reach;
    let b1 = s1.chunk_boxes();
    let b2 = s2.chunk_boxes();
    let (g1, g2) = (s1.group_boxes(), s2.group_boxes());
    let chunk = super::CHUNK;
    let group = super::GROUP;
    let n = s1.n_segments();
    let levels = b1.len().min(limit.div_ceil(chunk));
    let n_groups = levels.div_ceil(group);
    let mut groups = vec![false; n_groups * n_groups];
    let mut any = false;
    for a in 0..n_groups {
        for b in 0..n_groups {
            let hit = g1[a].intersects(&g2[b]);
            groups[a * n_groups + b] = hit;
            any |= hit;
        }
    }
    if !any {
        return None;
    }
    let mut best = limit;
    // chunk pairs by increasing max(a, b): every pair at level c has
    // max(i, j) ≥ c·CHUNK, so the first level with a hit settles the answer
    for c in 0..levels {
        if c * chunk >= best {
            break;
        }
        let live1 = b1[c].intersects(&s2.aabb);
        let live2 = b2[c].intersects(&s1.aabb);
        if !live1 && !live2 {
            continue;
        }
        for other in 0..=c {
            let (gc, go) = (c / group, other / group);
            if live1 && groups[gc * n_groups + go] && b1[c].intersects(&b2[other]) {
                scan(s1, s2, c, other, chunk, n, reach_sq, &mut best);
            }
            if other < c && live2 && groups[go * n_groups + gc] && b2[c].intersects(&b1[other]) {
                scan(s2, s1, c, other, chunk, n, reach_sq, &mut best);
            }
        }
    }
    (best < limit).then_some(best)
}

/// Segment pairs of chunk `ca` of `p` and chunk `cb` of `q`; records the
/// least `max(i, j)` within `reach`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn scan(p: &Sausage, q: &Sausage, ca: usize, cb: usize, chunk: usize, n: usize, reach_sq: f64, best: &mut usize) {
    for i in ca * chunk..((ca + 1) * chunk).min(n) {
        if i >= *best {
            return;
        }
        let (a, b) = p.segment(i);
        for j in cb * chunk..((cb + 1) * chunk).min(n) {
            let m = i.max(j);
            if m >= *best {
                break;
            }
            let (u, v) = q.segment(j);
            if segment_distance_sq_raw(a, b, u, v) <= reach_sq {
                *best = m;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub tau: f64,
}

/// Sausages `0..n` plus two virtual face nodes `LEFT = n` and `RIGHT = n+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedGraph {
    pub n_sausages: usize,
    pub horizon: f64,
    /// Sorted by `(a, b)` with `a < b`.
    pub edges: Vec<Edge>,
}

impl TimedGraph {
    pub fn new(n_sausages: usize, horizon: f64, mut edges: Vec<Edge>) -> Self {
        for e in &mut edges {
            if e.a > e.b {
                std::mem::swap(&mut e.a, &mut e.b);
            }
        }
        edges.sort_by(|x, y| (x.a, x.b).cmp(&(y.a, y.b)).then(x.tau.total_cmp(&y.tau)));
        Self { n_sausages, horizon, edges }
    }

    pub fn left(&self) -> u32 {
        self.n_sausages as u32
    }

    pub fn right(&self) -> u32 {
        self.n_sausages as u32 + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.n_sausages + 2
    }

    pub fn is_face(&self, v: u32) -> bool {
        v as usize >= self.n_sausages
    }

    /// Sausage-to-sausage adjacency lists with edge times `≤ horizon`.
    pub fn adjacency(&self, horizon: f64) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_sausages];
        for e in &self.edges {
            if e.tau <= horizon && !self.is_face(e.a) && !self.is_face(e.b) {
                adj[e.a as usize].push(e.b);
                adj[e.b as usize].push(e.a);
            }
        }
        adj
    }
}

/// Edges between sausages whose boxes overlap (broad phase on a hash grid)
/// and that intersect by the horizon, plus face edges carrying the first
/// time each sausage reaches `x₁ ≤ lo₁` or `x₁ ≥ hi₁`.
pub fn build_timed_graph(cfg: &Configuration) -> Result<TimedGraph> {
    let n = cfg.sausages.len();
    let mut edges = Vec::new();
    if n > 0 {
        let boxes: Vec<_> = cfg.sausages.iter().map(|s| s.aabb).collect();
        let grid = GridIndex::build(cfg.params.d, default_cell_size(&boxes, 0.9), &boxes)?;
        let pairs = grid.overlapping_pairs();
        let timed: Vec<Option<Edge>> = pairs
            .par_iter()
            .map(|&(a, b)| {
                connection_time(&cfg.sausages[a as usize], &cfg.sausages[b as usize])
                    .map(|tau| tau.map(|tau| Edge { a, b, tau }))
            })
            .collect::<Result<_>>()?;
        edges.extend(timed.into_iter().flatten());
    }
    let (left, right) = (n as u32, n as u32 + 1);
    let lo = cfg.bbox.lo[0];
    let hi = cfg.bbox.hi[0];
    for (i, s) in cfg.sausages.iter().enumerate() {
        if let Some(tau) = s.face_time(0, lo, true) {
            edges.push(Edge { a: i as u32, b: left, tau });
        }
        if let Some(tau) = s.face_time(0, hi, false) {
            edges.push(Edge { a: i as u32, b: right, tau });
        }
    }
    Ok(TimedGraph::new(n, cfg.horizon(), edges))
}

/// Disjoint-set forest with union by rank and path halving.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n as u32).collect(), rank: vec![0; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = self.parent[x as usize];
        }
        x
    }

    /// Merges the sets of `a` and `b`; `false` if they were already joined.
    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (ra, rb) = if self.rank[ra as usize] < self.rank[rb as usize] { (rb, ra) } else { (ra, rb) };
        self.parent[rb as usize] = ra;
        if self.rank[ra as usize] == self.rank[rb as usize] {
            self.rank[ra as usize] += 1;
        }
        true
    }

    pub fn same(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Minimax LEFT–RIGHT path value: edges are merged in order of `(τ, a, b)`
/// and the `τ` that first joins the faces is returned.
pub fn crossing_time(g: &TimedGraph) -> Option<f64> {
    let mut order: Vec<&Edge> = g.edges.iter().collect();
    order.sort_by(|x, y| x.tau.total_cmp(&y.tau).then((x.a, x.b).cmp(&(y.a, y.b))));
    let mut uf = UnionFind::new(g.n_nodes());
    let (l, r) = (g.left(), g.right());
    for e in order {
        uf.union(e.a, e.b);
        if uf.same(l, r) {
            return Some(e.tau);
        }
    }
    None
}

/// [`crossing_time`] of [`build_timed_graph`] without building the graph.
///
/// Kruskal's sweep with lazily evaluated pairs: a pair enters the queue
/// keyed by a lower bound on its connection index (the two starts are too
/// far apart until the running excursions cover the gap) and is only
/// resolved when popped while its ends are still in different clusters.
/// Candidate pairs come from the tube boxes up to a horizon that doubles
/// until the faces join or the full horizon is reached.
pub fn configuration_crossing_time(cfg: &Configuration) -> Result<Option<f64>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = cfg.len();
    if n == 0 {
        return Ok(None);
    }
    let s0 = &cfg.sausages[0];
    let len = s0.n_segments();
    if cfg
        .sausages
        .iter()
        .any(|s| s.n_segments() != len || s.path.horizon() != s0.path.horizon() || s.dim() != s0.dim())
    {
        return config("sausages differ in dimension or time grid");
    }
    let (left, right) = (n as u32, n as u32 + 1);
    let (lo, hi) = (cfg.bbox.lo[0], cfg.bbox.hi[0]);
    let faces: Vec<(Option<usize>, Option<usize>)> =
        cfg.sausages.iter().map(|s| (s.face_index(0, lo, true), s.face_index(0, hi, false))).collect();
    let starts: Vec<&[f64]> = cfg.sausages.iter().map(|s| s.path.coords(0)).collect();
    let mut limit = super::CHUNK.min(len);
    loop {
        let kmax = limit - 1;
        let mut heap: BinaryHeap<Reverse<(usize, u8, u32, u32)>> = BinaryHeap::new();
        for (i, &(l, r)) in faces.iter().enumerate() {
            for (k, face) in [(l, left), (r, right)] {
                if let Some(k) = k.filter(|&k| k <= kmax) {
                    heap.push(Reverse((k, 0, i as u32, face)));
                }
            }
        }
        let boxes: Vec<_> = cfg.sausages.iter().map(|s| s.aabb_until(kmax)).collect();
        let grid = GridIndex::build(cfg.params.d, default_cell_size(&boxes, 0.9), &boxes)?;
        for (a, b) in grid.overlapping_pairs() {
            let (sa, sb) = (&cfg.sausages[a as usize], &cfg.sausages[b as usize]);
            let gap = crate::geometry::dist_sq(starts[a as usize], starts[b as usize]).sqrt() - sa.radius - sb.radius;
            let (ea, eb) = (sa.excursion(), sb.excursion());
            // a contact at index m puts both starts within their excursions by m
            let (mut bound, mut top) = (0, limit);
            while bound < top {
                let mid = (bound + top) / 2;
                if ea[mid] + eb[mid] < gap {
                    bound = mid + 1;
                } else {
                    top = mid;
                }
            }
            if bound < limit {
                heap.push(Reverse((bound, 1, a, b)));
            }
        }
        let mut uf = UnionFind::new(n + 2);
        while let Some(Reverse((k, kind, a, b))) = heap.pop() {
            if kind == 1 {
                if uf.same(a, b) {
                    continue;
                }
                if let Some(m) = first_contact(&cfg.sausages[a as usize], &cfg.sausages[b as usize], limit) {
                    heap.push(Reverse((m, 0, a, b)));
                }
                continue;
            }
            uf.union(a, b);
            if uf.same(left, right) {
                return Ok(Some(s0.path.time(k)));
            }
        }
        if limit == len {
            return Ok(None);
        }
        limit = (2 * limit).min(len);
    }
}

/// Breadth-first layers of the sausage cluster of `root`: `ℰ_0 = {root}`,
/// `ℰ_{n+1}` the new neighbors of `ℰ_n`. Face nodes are not traversed.
pub fn explore_generations(g: &TimedGraph, root: u32) -> Result<Vec<Vec<u32>>> {
    if root as usize >= g.n_sausages {
        return Err(Error::NotFound(root as usize));
    }
    let adj = g.adjacency(f64::INFINITY);
    let mut seen = vec![false; g.n_sausages];
    seen[root as usize] = true;
    let mut layers = vec![vec![root]];
    loop {
        let mut next = Vec::new();
        for &v in layers.last().unwrap() {
            for &w in &adj[v as usize] {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        layers.push(next);
    }
    Ok(layers)
}

/// Sizes of the sausage clusters at `horizon`, largest first.
pub fn component_sizes(g: &TimedGraph, horizon: f64) -> Vec<usize> {
    let mut uf = UnionFind::new(g.n_sausages);
    for e in &g.edges {
        if e.tau <= horizon && !g.is_face(e.a) && !g.is_face(e.b) {
            uf.union(e.a, e.b);
        }
    }
    let mut counts = vec![0usize; g.n_sausages];
    for v in 0..g.n_sausages as u32 {
        counts[uf.find(v) as usize] += 1;
    }
    let mut sizes: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    sizes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, PointD};
    use crate::percolation::PercolationParams;
    use crate::stochastic::BrownianPath;

    fn line_path(start: [f64; 4], vel: [f64; 4], t: f64, delta: f64) -> BrownianPath {
        let n = (t / delta).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * delta).collect();
        let pos: Vec<f64> = times.iter().flat_map(|&s| (0..4).map(move |i| start[i] + vel[i] * s)).collect();
        BrownianPath::from_samples(4, delta, times, pos).unwrap()
    }

    #[test]
    fn overlapping_start_balls_connect_at_zero() {
        let a = Sausage::new(0, line_path([0.0; 4], [0.0; 4], 2.0, 0.25), 0.6).unwrap();
        let b = Sausage::new(1, line_path([1.0, 0.0, 0.0, 0.0], [0.0; 4], 2.0, 0.25), 0.6).unwrap();
        assert_eq!(connection_time(&a, &b).unwrap(), Some(0.0));
    }

    #[test]
    fn approaching_fixture_connects_at_four() {
        let a = Sausage::new(0, line_path([0.0; 4], [0.0; 4], 6.0, 0.25), 0.5).unwrap();
        let b = Sausage::new(1, line_path([5.0, 0.0, 0.0, 0.0], [-1.0, 0.0, 0.0, 0.0], 6.0, 0.25), 0.5).unwrap();
        assert_eq!(connection_time(&a, &b).unwrap(), Some(4.0));
        assert_eq!(connection_time(&b, &a).unwrap(), Some(4.0));
        let far = Sausage::new(2, line_path([50.0, 0.0, 0.0, 0.0], [0.0; 4], 6.0, 0.25), 0.5).unwrap();
        assert_eq!(connection_time(&a, &far).unwrap(), None);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = Sausage::new(0, line_path([0.0; 4], [0.0; 4], 2.0, 0.25), 0.5).unwrap();
        let b = Sausage::new(1, line_path([0.0; 4], [0.0; 4], 3.0, 0.25), 0.5).unwrap();
        assert!(connection_time(&a, &b).is_err());
    }

    fn params(r: f64) -> PercolationParams {
        PercolationParams {
            d: 4,
            lambda: 1.0,
            t: 1.0,
            r,
            delta: Some(0.25),
            refine_levels: 0,
            box_side: 10.0,
            margin: 0.0,
        }
    }

    #[test]
    fn empty_configuration_has_isolated_faces() {
        let cfg = Configuration::from_paths(params(0.5), Aabb::cube(4, 0.0, 10.0).unwrap(), vec![]).unwrap();
        let g = build_timed_graph(&cfg).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert!(g.edges.is_empty());
        assert_eq!(crossing_time(&g), None);
    }

    #[test]
    fn collinear_frozen_balls_form_a_path() {
        let r = 0.5;
        let paths = (0..3)
            .map(|k| {
                BrownianPath::frozen(PointD::new(&[3.0 + 1.5 * r * k as f64, 5.0, 5.0, 5.0]).unwrap(), 1.0, 0.25)
                    .unwrap()
            })
            .collect();
        let cfg = Configuration::from_paths(params(r), Aabb::cube(4, 0.0, 10.0).unwrap(), paths).unwrap();
        let g = build_timed_graph(&cfg).unwrap();
        let pairs: Vec<(u32, u32)> = g.edges.iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        assert_eq!(explore_generations(&g, 0).unwrap(), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn lazy_sweep_matches_full_graph() {
        for (seed, lambda, r) in [(1, 0.3, 0.4), (2, 0.6, 0.3), (3, 1.0, 0.2), (4, 0.1, 0.5), (5, 2.0, 0.15)] {
            let p = PercolationParams {
                d: 4,
                lambda,
                t: 2.0,
                r,
                delta: Some(0.02),
                refine_levels: 0,
                box_side: 3.0,
                margin: 1.0,
            };
            let cfg = crate::percolation::sample_configuration(&p, seed, &[]).unwrap();
            let full = crossing_time(&build_timed_graph(&cfg).unwrap());
            assert_eq!(configuration_crossing_time(&cfg).unwrap(), full, "seed {seed}");
        }
    }

    #[test]
    fn bottleneck_examples() {
        // LEFT=3, RIGHT=4; sausages A=0, B=1, C=2
        let chain = TimedGraph::new(
            3,
            10.0,
            vec![Edge { a: 0, b: 3, tau: 1.0 }, Edge { a: 0, b: 1, tau: 3.0 }, Edge { a: 1, b: 4, tau: 2.0 }],
        );
        assert_eq!(crossing_time(&chain), Some(3.0));
        let two = TimedGraph::new(
            3,
            10.0,
            vec![
                Edge { a: 0, b: 3, tau: 5.0 },
                Edge { a: 0, b: 4, tau: 1.0 },
                Edge { a: 1, b: 3, tau: 2.0 },
                Edge { a: 1, b: 2, tau: 4.0 },
                Edge { a: 2, b: 4, tau: 0.5 },
            ],
        );
        assert_eq!(crossing_time(&two), Some(4.0));
    }

    #[test]
    fn isolated_root_and_missing_root() {
        let g = TimedGraph::new(2, 1.0, vec![]);
        assert_eq!(explore_generations(&g, 1).unwrap(), vec![vec![1]]);
        assert!(matches!(explore_generations(&g, 5), Err(Error::NotFound(5))));
    }

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(5);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.same(0, 1));
        assert_eq!(uf.find(3), uf.find(3));
        assert!(!uf.same(0, 3));
    }
}
