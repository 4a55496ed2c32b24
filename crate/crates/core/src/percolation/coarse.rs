use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Configuration, TimedGraph};
use crate::capacity::{cap_hitting, GreenKernel, HittingParams, SausageTarget};
use crate::error::{config, Result};
use crate::geometry::PointD;
use crate::stochastic::RngStream;

/// Neighbor directions in the exploration order `(1,0) ≺ (0,1) ≺ (−1,0) ≺ (0,−1)`.
pub const DIRECTIONS: [(i32, i32); 4] = [(1, 0), (0, 1), (-1, 0), (0, -1)];

type Cell = (i32, i32);

/// Good points: the half-horizon sausage stays in `B(x, c_B√(t/2))` and its
/// capacity estimate reaches `cap_threshold`.
///
/// With `cap_threshold = 0` no capacity is estimated and good means confined.
pub fn classify_good(
    cfg: &Configuration,
    c_b: f64,
    cap_threshold: f64,
    hitting: &HittingParams,
    seed: u64,
) -> Result<Vec<bool>> {
    if !(cap_threshold >= 0.0) {
        return config(format!("capacity threshold must be nonnegative, got {cap_threshold}"));
    }
    let half = 0.5 * cfg.horizon();
    let limit = c_b * half.sqrt();
    let k = GreenKernel::new(cfg.params.d)?;
    cfg.sausages
        .par_iter()
        .map(|s| {
            let path = s.path.truncate(half);
            if path.max_excursion() + s.radius > limit {
                return Ok(false);
            }
            if cap_threshold == 0.0 {
                return Ok(true);
            }
            let target = SausageTarget::new(&path, s.radius)?;
            let mut rng = RngStream::derive(seed, &[0x900d, s.id as u64]);
            Ok(cap_hitting(&k, &target, &mut rng, hitting)?.value >= cap_threshold)
        })
        .collect()
}

/// A good point seen by the coarse-graining: its box and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgPoint {
    pub id: usize,
    pub cell: Cell,
    pub pos: PointD,
}

/// Abstract input of the box exploration: good points by box and their
/// sausage adjacency (indices into `points`, symmetric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseInput {
    /// Boxes `z` with `max(|z₁|, |z₂|) ≤ half_width` exist.
    pub half_width: i32,
    pub points: Vec<CgPoint>,
    pub neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CgCase {
    /// No good point in the origin box.
    Empty,
    Init,
    /// A box was added.
    Extend,
    /// No eligible neighbor; the cluster is final.
    Exhausted,
    /// `C_n = C_{n−1}`.
    Stopped,
    /// The added box lies on the window boundary.
    Boundary,
}

/// State after step `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgStep {
    pub n: usize,
    pub case: CgCase,
    /// Index `i(n)` of the box the step grew from.
    pub i_n: Option<usize>,
    /// Id of the point chosen at this step.
    pub e_n: Option<usize>,
    pub c: Vec<Cell>,
    pub d: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseGrainState {
    pub half_width: i32,
    /// Boxes in the order they joined.
    pub c: Vec<Cell>,
    /// Ids of the chosen points `e_i`.
    pub e: Vec<usize>,
    /// Dismissed boxes, sorted.
    pub d: Vec<Cell>,
    /// Reached the window boundary.
    pub certificate: bool,
    pub trace: Vec<CgStep>,
}

/// Origin box first, then by norm; equal norms by coordinates.
fn closer(a: &PointD, da: f64, b: &PointD, db: f64) -> bool {
    match da.total_cmp(&db) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => {
            a.coords().iter().zip(b.coords()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(Ordering::Less)
        }
    }
}

fn add(c: Cell, u: Cell) -> Cell {
    (c.0 + u.0, c.1 + u.1)
}

/// Grows the cluster of connected good boxes from the origin box.
///
/// `V_i` holds the unit neighbors `z` of `c_i` with a good point in box `z`
/// adjacent to `e_i`; among the boxes not yet in `C ∪ D`, the step grows from
/// the most recent index `i(n)` that still has one, in the first direction
/// of [`DIRECTIONS`], choosing the adjacent good point nearest to `e_{i(n)}`.
/// Unconnected earlier directions of `c_{i(n)}` and all free neighbors of
/// boxes added after `i(n)` are dismissed. Dismissals never include boxes of
/// the cluster itself.
pub fn coarse_grain(input: &CoarseInput) -> CoarseGrainState {
    let w = input.half_width;
    let pts = &input.points;
    let on_boundary = |z: Cell| z.0.abs() == w || z.1.abs() == w;
    let mut state =
        CoarseGrainState { half_width: w, c: vec![], e: vec![], d: vec![], certificate: false, trace: vec![] };

    let mut e0: Option<usize> = None;
    for (k, p) in pts.iter().enumerate() {
        if p.cell == (0, 0) {
            let better = match e0 {
                None => true,
                Some(b) => closer(&p.pos, p.pos.norm(), &pts[b].pos, pts[b].pos.norm()),
            };
            if better {
                e0 = Some(k);
            }
        }
    }
    let Some(e0) = e0 else {
        state.trace.push(CgStep { n: 0, case: CgCase::Empty, i_n: None, e_n: None, c: vec![], d: vec![] });
        return state;
    };
    let mut c: Vec<Cell> = vec![(0, 0)];
    let mut e: Vec<usize> = vec![e0];
    let mut d: BTreeSet<Cell> = BTreeSet::new();
    let init_case = if on_boundary((0, 0)) { CgCase::Boundary } else { CgCase::Init };
    state.trace.push(CgStep { n: 0, case: init_case, i_n: None, e_n: Some(pts[e0].id), c: c.clone(), d: vec![] });
    let mut certificate = init_case == CgCase::Boundary;
    let mut prev_len = 0usize;
    let mut n = 0usize;

    while !certificate {
        if c.len() == prev_len {
            state.trace.push(CgStep {
                n: n + 1,
                case: CgCase::Stopped,
                i_n: None,
                e_n: None,
                c: c.clone(),
                d: d.iter().copied().collect(),
            });
            break;
        }
        prev_len = c.len();
        let taken = |z: &Cell, d: &BTreeSet<Cell>| c.contains(z) || d.contains(z);
        // connected unit neighbors of c_i through e_i, in direction order
        let connected = |i: usize| -> Vec<(Cell, bool)> {
            DIRECTIONS
                .iter()
                .map(|&u| {
                    let z = add(c[i], u);
                    (u, input.neighbors[e[i]].iter().any(|&q| pts[q].cell == z))
                })
                .collect()
        };
        let eligible = |i: usize| -> Option<Cell> {
            connected(i).into_iter().find(|&(u, ok)| ok && !taken(&add(c[i], u), &d)).map(|(u, _)| u)
        };
        let pick = (0..c.len()).rev().find_map(|i| eligible(i).map(|u| (i, u)));
        let Some((i_n, dir)) = pick else {
            state.trace.push(CgStep {
                n: n + 1,
                case: CgCase::Exhausted,
                i_n: None,
                e_n: None,
                c: c.clone(),
                d: d.iter().copied().collect(),
            });
            n += 1;
            continue;
        };
        let c_new = add(c[i_n], dir);
        let from = e[i_n];
        let mut e_new: Option<usize> = None;
        for &q in &input.neighbors[from] {
            if pts[q].cell != c_new {
                continue;
            }
            let dq = pts[q].pos.dist(&pts[from].pos);
            let better = match e_new {
                None => true,
                Some(b) => closer(&pts[q].pos, dq, &pts[b].pos, pts[b].pos.dist(&pts[from].pos)),
            };
            if better {
                e_new = Some(q);
            }
        }
        let e_new = e_new.expect("eligible direction has an adjacent good point");

        let mut dismissed: Vec<Cell> = Vec::new();
        for (u, ok) in connected(i_n) {
            if u == dir {
                break;
            }
            if !ok {
                dismissed.push(add(c[i_n], u));
            }
        }
        for &ci in &c[i_n + 1..] {
            for &u in &DIRECTIONS {
                let z = add(ci, u);
                if !taken(&z, &d) {
                    dismissed.push(z);
                }
            }
        }
        c.push(c_new);
        e.push(e_new);
        for z in dismissed {
            if !c.contains(&z) {
                d.insert(z);
            }
        }
        let case = if on_boundary(c_new) { CgCase::Boundary } else { CgCase::Extend };
        certificate = case == CgCase::Boundary;
        state.trace.push(CgStep {
            n: n + 1,
            case,
            i_n: Some(i_n),
            e_n: Some(pts[e_new].id),
            c: c.clone(),
            d: d.iter().copied().collect(),
        });
        n += 1;
    }
    state.c = c;
    state.e = e.iter().map(|&k| pts[k].id).collect();
    state.d = d.into_iter().collect();
    state.certificate = certificate;
    state
}

/// Good points of a configuration sorted into the balls
/// `ℬ_z = B(o + 2z·c_B√t, c_B√t)` of the ℤ² slab through the center `o` of
/// the observation box, with adjacency from the timed graph at the horizon.
pub fn coarse_input(
    cfg: &Configuration,
    g: &TimedGraph,
    good: &[bool],
    c_b: f64,
    half_width: i32,
) -> Result<CoarseInput> {
    if good.len() != cfg.len() || g.n_sausages != cfg.len() {
        return config("good flags or graph do not match the configuration");
    }
    if !(c_b > 0.0) || half_width < 0 {
        return config("c_B must be positive and the window nonempty");
    }
    let d = cfg.params.d;
    let t = cfg.horizon();
    let rad = c_b * t.sqrt();
    let o = cfg.bbox.center();
    for i in 0..d {
        let half_side = 0.5 * cfg.bbox.edge(i);
        let need = if i < 2 { (2 * half_width + 1) as f64 * rad } else { rad };
        if need > half_side * (1.0 + 1e-12) {
            return config(format!(
                "window of half-width {half_width} with ball radius {rad:.4} does not fit the box (axis {i})"
            ));
        }
    }
    let mut index_of = vec![usize::MAX; cfg.len()];
    let mut points = Vec::new();
    for (k, s) in cfg.sausages.iter().enumerate() {
        if !good[k] {
            continue;
        }
        let x = s.start();
        let z = (((x[0] - o[0]) / (2.0 * rad)).round() as i32, ((x[1] - o[1]) / (2.0 * rad)).round() as i32);
        if z.0.abs() > half_width || z.1.abs() > half_width {
            continue;
        }
        let mut center = o;
        center.coords_mut()[0] += 2.0 * rad * z.0 as f64;
        center.coords_mut()[1] += 2.0 * rad * z.1 as f64;
        if x.dist(&center) <= rad {
            index_of[k] = points.len();
            points.push(CgPoint { id: k, cell: z, pos: x - o });
        }
    }
    let mut neighbors = vec![Vec::new(); points.len()];
    for e in &g.edges {
        if e.tau > t || g.is_face(e.a) || g.is_face(e.b) {
            continue;
        }
        let (a, b) = (index_of[e.a as usize], index_of[e.b as usize]);
        if a != usize::MAX && b != usize::MAX {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    Ok(CoarseInput { half_width, points, neighbors })
}

/// [`coarse_input`] followed by [`coarse_grain`].
pub fn coarse_grain_explore(
    cfg: &Configuration,
    g: &TimedGraph,
    good: &[bool],
    c_b: f64,
    half_width: i32,
) -> Result<CoarseGrainState> {
    Ok(coarse_grain(&coarse_input(cfg, g, good, c_b, half_width)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One good point at the center of every box, adjacent across unit
    /// neighbors.
    fn full_grid(w: i32) -> CoarseInput {
        let mut points = Vec::new();
        for x in -w..=w {
            for y in -w..=w {
                let id = points.len();
                points.push(CgPoint { id, cell: (x, y), pos: PointD::new(&[x as f64, y as f64, 0.0, 0.0]).unwrap() });
            }
        }
        let neighbors = points
            .iter()
            .map(|p| {
                points
                    .iter()
                    .enumerate()
                    .filter(|(_, q)| (p.cell.0 - q.cell.0).abs() + (p.cell.1 - q.cell.1).abs() == 1)
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        CoarseInput { half_width: w, points, neighbors }
    }

    #[test]
    fn no_good_point_at_origin() {
        let input = CoarseInput { half_width: 2, points: vec![], neighbors: vec![] };
        let st = coarse_grain(&input);
        assert!(st.c.is_empty());
        assert!(!st.certificate);
    }

    #[test]
    fn fully_connected_window_certifies() {
        let st = coarse_grain(&full_grid(2));
        assert!(st.certificate);
        assert_eq!(st.c, vec![(0, 0), (1, 0), (2, 0)]);
        assert!(st.c.iter().any(|z| z.0.abs() == 2 || z.1.abs() == 2));
    }

    #[test]
    fn isolated_origin_stops() {
        let mut input = full_grid(2);
        for k in 0..input.neighbors.len() {
            input.neighbors[k].clear();
        }
        let st = coarse_grain(&input);
        assert_eq!(st.c, vec![(0, 0)]);
        assert_eq!(st.trace.last().unwrap().case, CgCase::Stopped);
        assert_eq!(st.trace[1].case, CgCase::Exhausted);
    }
}
