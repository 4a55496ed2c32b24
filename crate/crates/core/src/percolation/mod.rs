//! The occupied set `O_{t,r}` at desk scale.
//!
//! A [`Configuration`] is a Poisson cloud of starting points in a box (plus a
//! margin) with one Brownian path per point. [`build_timed_graph`] records for
//! every intersecting pair the earliest horizon at which their sausages meet,
//! so a single bottleneck sweep ([`crossing_time`]) answers "does the box
//! cross by time `t′`" for every `t′` at once.

mod coarse;
mod contours;
mod graph;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::geometry::{Aabb, PointD};
use crate::stochastic::{refine_bridge, sample_brownian, sample_poisson_cloud, BrownianPath, RngStream};

pub use coarse::{
    classify_good, coarse_grain, coarse_grain_explore, coarse_input, CgCase, CgPoint, CgStep, CoarseGrainState,
    CoarseInput, DIRECTIONS,
};
pub use contours::{count_star_contours, count_star_contours_by_min_vertex, encloses_origin};
pub use graph::{
    build_timed_graph, component_sizes, configuration_crossing_time, connection_time, crossing_time,
    explore_generations, Edge, TimedGraph, UnionFind,
};

/// Number of consecutive segments summarized by one bounding box.
const CHUNK: usize = 16;
/// Chunks per coarser box.
const GROUP: usize = 8;

/// `W^{x,r}_{[0,t]}` on a discretized path.
///
/// Segment `i` joins sample `max(i − 1, 0)` to sample `i` and is reached at
/// time `times[i]`; segment 0 is the starting ball.
#[derive(Debug, Clone)]
pub struct Sausage {
    pub id: u32,
    pub path: BrownianPath,
    pub radius: f64,
    /// Path box inflated by the radius.
    pub aabb: Aabb,
    /// `sup_s ‖B_s − B_0‖ + r`.
    pub outradius: f64,
    chunk_boxes: Vec<Aabb>,
    group_boxes: Vec<Aabb>,
    /// `max_{m ≤ k} ‖B_m − B_0‖`.
    excursion: Vec<f64>,
}

impl Sausage {
    pub fn new(id: u32, path: BrownianPath, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return config(format!("sausage radius must be positive, got {radius}"));
        }
        let aabb = path.bounds().inflate(radius);
        let outradius = path.max_excursion() + radius;
        let n = path.len();
        let chunk_boxes = (0..n.div_ceil(CHUNK))
            .map(|c| {
                let mut b = Aabb::empty(path.dim());
                for k in (c * CHUNK).saturating_sub(1)..((c + 1) * CHUNK).min(n) {
                    b.grow(path.coords(k));
                }
                b.inflate(radius)
            })
            .collect::<Vec<_>>();
        let group_boxes =
            chunk_boxes.chunks(GROUP).map(|g| g.iter().fold(Aabb::empty(path.dim()), |a, b| a.union(b))).collect();
        let start = path.coords(0).to_vec();
        let mut far = 0.0f64;
        let excursion = (0..n)
            .map(|k| {
                far = far.max(crate::geometry::dist_sq(path.coords(k), &start));
                far.sqrt()
            })
            .collect();
        Ok(Self { id, path, radius, aabb, outradius, chunk_boxes, group_boxes, excursion })
    }

    pub fn dim(&self) -> usize {
        self.path.dim()
    }

    pub fn start(&self) -> PointD {
        self.path.start()
    }

    pub fn n_segments(&self) -> usize {
        self.path.len()
    }

    #[inline]
    pub(crate) fn segment(&self, i: usize) -> (&[f64], &[f64]) {
        (self.path.coords(i.saturating_sub(1)), self.path.coords(i))
    }

    pub(crate) fn chunk_boxes(&self) -> &[Aabb] {
        &self.chunk_boxes
    }

    pub(crate) fn group_boxes(&self) -> &[Aabb] {
        &self.group_boxes
    }

    pub(crate) fn excursion(&self) -> &[f64] {
        &self.excursion
    }

    /// Box of the tube over samples `0..=k`, possibly a little larger.
    pub(crate) fn aabb_until(&self, k: usize) -> Aabb {
        let c = (k / CHUNK + 1).min(self.chunk_boxes.len());
        let g = c / GROUP;
        let mut b = self.group_boxes[..g].iter().fold(Aabb::empty(self.dim()), |a, x| a.union(x));
        for x in &self.chunk_boxes[g * GROUP..c] {
            b = b.union(x);
        }
        b
    }

    /// First sample time at which the tube reaches the half-space
    /// `x_axis ≤ level` (`below = true`) or `x_axis ≥ level`.
    pub fn face_time(&self, axis: usize, level: f64, below: bool) -> Option<f64> {
        self.face_index(axis, level, below).map(|k| self.path.time(k))
    }

    pub(crate) fn face_index(&self, axis: usize, level: f64, below: bool) -> Option<usize> {
        (0..self.path.len()).find(|&k| {
            let x = self.path.coords(k)[axis];
            if below {
                x - self.radius <= level
            } else {
                x + self.radius >= level
            }
        })
    }

    pub fn truncated(&self, t_cut: f64) -> Result<Self> {
        Sausage::new(self.id, self.path.truncate(t_cut), self.radius)
    }

    pub fn translated(&self, shift: &PointD) -> Result<Self> {
        Sausage::new(self.id, self.path.translated(shift), self.radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercolationParams {
    pub d: usize,
    pub lambda: f64,
    pub t: f64,
    pub r: f64,
    /// Path step; `None` means `(r/4)²`.
    pub delta: Option<f64>,
    pub refine_levels: u32,
    /// Side of the observation cube `[0, side]^d`.
    pub box_side: f64,
    /// Starting points are drawn in the cube inflated by this margin.
    pub margin: f64,
}

impl PercolationParams {
    pub fn step(&self) -> f64 {
        self.delta.unwrap_or((self.r / 4.0).powi(2))
    }

    fn validate(&self) -> Result<()> {
        if !(3..=8).contains(&self.d) {
            return config(format!("dimension must be in 3..=8, got {}", self.d));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return config(format!("intensity must be nonnegative, got {}", self.lambda));
        }
        if !(self.t > 0.0) || !(self.r > 0.0) || !(self.step() > 0.0) {
            return config("t, r and the path step must be positive");
        }
        if !(self.box_side > 0.0) || !(self.margin >= 0.0) {
            return config("box side must be positive and margin nonnegative");
        }
        Ok(())
    }
}

/// Poisson cloud of sausages; the occupied set is their union.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub params: PercolationParams,
    /// Observation box; its faces `x₁ = lo₁`, `x₁ = hi₁` define crossing.
    pub bbox: Aabb,
    /// Region the starting points were drawn from.
    pub sample_box: Aabb,
    pub sausages: Vec<Sausage>,
    /// `(seed, stream path)` the configuration was drawn from.
    pub seed: u64,
    pub stream: Vec<u64>,
}

impl Configuration {
    /// Wraps explicit paths (fixtures); all must share dimension, step and
    /// horizon.
    pub fn from_paths(params: PercolationParams, bbox: Aabb, paths: Vec<BrownianPath>) -> Result<Self> {
        params.validate()?;
        for p in &paths {
            if p.dim() != params.d {
                return config("path dimension differs from configuration");
            }
        }
        if let Some(first) = paths.first() {
            if paths.iter().any(|p| p.len() != first.len() || p.horizon() != first.horizon()) {
                return config("all paths of a configuration need the same time grid");
            }
        }
        let sausages =
            paths.into_iter().enumerate().map(|(i, p)| Sausage::new(i as u32, p, params.r)).collect::<Result<_>>()?;
        Ok(Self { params, bbox, sample_box: bbox.inflate(params.margin), sausages, seed: 0, stream: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.sausages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sausages.is_empty()
    }

    /// Horizon shared by the sausages (the nominal `t` if empty).
    pub fn horizon(&self) -> f64 {
        self.sausages.first().map(|s| s.path.horizon()).unwrap_or(self.params.t)
    }

    /// Every path cut at `t_cut`.
    pub fn truncated(&self, t_cut: f64) -> Result<Self> {
        let mut out = self.clone();
        out.sausages = self.sausages.iter().map(|s| s.truncated(t_cut)).collect::<Result<_>>()?;
        out.params.t = out.horizon().min(t_cut);
        Ok(out)
    }

    /// Everything shifted by `v`.
    pub fn translated(&self, v: &PointD) -> Result<Self> {
        let mut out = self.clone();
        out.bbox = self.bbox.translate(v);
        out.sample_box = self.sample_box.translate(v);
        out.sausages = self.sausages.iter().map(|s| s.translated(v)).collect::<Result<_>>()?;
        Ok(out)
    }
}

/// Samples a configuration in `[0, box_side]^d` with starting points in the
/// box inflated by `margin`.
///
/// The cloud is a union of unit-intensity layers `ℓ < ⌈λ⌉` drawn from
/// stream `(seed, parts…, 0, ℓ)`; a point of layer `ℓ` with uniform mark `u`
/// is kept when `ℓ + u < λ`, and its path uses stream
/// `(seed, parts…, 1, ℓ, k)`. Raising `λ` with everything else fixed only
/// adds sausages.
pub fn sample_configuration(params: &PercolationParams, seed: u64, parts: &[u64]) -> Result<Configuration> {
    sample_configuration_rooted(params, seed, parts, None)
}

/// As [`sample_configuration`], with an extra sausage started at `root`
/// placed first (id 0, stream `(seed, parts…, 2)`).
pub fn sample_configuration_rooted(
    params: &PercolationParams,
    seed: u64,
    parts: &[u64],
    root: Option<&PointD>,
) -> Result<Configuration> {
    params.validate()?;
    if let Some(p) = root {
        if p.dim() != params.d {
            return config("root dimension differs from configuration");
        }
    }
    let bbox = Aabb::cube(params.d, 0.0, params.box_side)?;
    let sample_box = bbox.inflate(params.margin);
    let sub = |tail: &[u64]| -> Vec<u64> { parts.iter().chain(tail).copied().collect() };
    let mut starts: Vec<(PointD, Vec<u64>)> = root.map(|p| (*p, sub(&[2]))).into_iter().collect();
    for layer in 0..params.lambda.ceil() as u64 {
        let mut rng = RngStream::derive(seed, &sub(&[0, layer]));
        let cloud = sample_poisson_cloud(&mut rng, &sample_box, 1.0)?;
        let marks: Vec<f64> = cloud.points.iter().map(|_| rng.uniform()).collect();
        for (k, (x, u)) in cloud.points.into_iter().zip(marks).enumerate() {
            if (layer as f64) + u < params.lambda {
                starts.push((x, sub(&[1, layer, k as u64])));
            }
        }
    }
    let delta = params.step();
    let sausages = starts
        .par_iter()
        .enumerate()
        .map(|(i, (x, key))| {
            let mut rng = RngStream::derive(seed, key);
            let mut path = sample_brownian(&mut rng, x, params.t, delta)?;
            if params.refine_levels > 0 {
                path = refine_bridge(&path, params.refine_levels, &mut rng);
            }
            Sausage::new(i as u32, path, params.r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Configuration { params: *params, bbox, sample_box, sausages, seed, stream: parts.to_vec() })
}
