//! Reproducible random sampling.
//!
//! Every random quantity is drawn from an [`RngStream`]: a ChaCha8 generator
//! keyed by a 64-bit seed and selecting one of 2^64 independent streams.
//! ChaCha output is specified bit-for-bit, so a `(seed, stream_id)` pair yields
//! the same sequence on every platform. Stream ids for parallel work are
//! derived by hashing `(experiment_seed, trial_index, entity_index, ...)`, so
//! trials never need to coordinate.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{config, Result};
use crate::geometry::{Aabb, PointD};

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of a seed and a sequence of indices into a stream id.
pub fn derive_stream_id(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |h, &p| splitmix64(h ^ splitmix64(p.wrapping_add(0x6a09_e667_f3bc_c909))))
}

/// A seeded, stream-selected generator owned by exactly one worker.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    /// Stream for the entity addressed by `parts` under `seed`.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        Self::new(seed, derive_stream_id(seed, parts))
    }

    /// Independent child stream; deterministic in `(self.seed, self.stream_id, k)`
    /// and unaffected by how much of `self` has been consumed.
    pub fn substream(&self, k: u64) -> Self {
        Self::new(self.seed, derive_stream_id(self.stream_id, &[k]))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn poisson(&mut self, mean: f64) -> u64 {
        if !(mean > 0.0) {
            return 0;
        }
        // rand_distr rejects means past ~1.8e19; nothing here gets close
        Poisson::new(mean).map(|p| p.sample(&mut self.rng) as u64).unwrap_or(u64::MAX)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform point on the unit sphere of ℝ^dim.
    pub fn unit_vector(&mut self, dim: usize) -> PointD {
        loop {
            let mut v = PointD::origin(dim);
            for c in v.coords_mut() {
                *c = self.normal();
            }
            let n = v.norm();
            if n > 1e-12 {
                return v.scale(1.0 / n);
            }
        }
    }

    /// Uniform point in the ball `B(0, radius)` of ℝ^dim.
    pub fn in_ball(&mut self, dim: usize, radius: f64) -> PointD {
        let dir = self.unit_vector(dim);
        let rho = radius * self.uniform().powf(1.0 / dim as f64);
        dir.scale(rho)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// A discretized Brownian trajectory.
///
/// Positions are stored flat (`dim` coordinates per sample) alongside their
/// sample times. Times are `0, δ, 2δ, …` followed by a final partial step
/// ending exactly at the horizon when `t/δ` is not an integer.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    dim: usize,
    step: f64,
    horizon: f64,
    times: Vec<f64>,
    positions: Vec<f64>,
}

/// Relative slack under which `t/δ` counts as an integer.
const GRID_SLACK: f64 = 1e-9;

fn grid_len(t: f64, delta: f64) -> (usize, f64) {
    let ratio = t / delta;
    let mut n_full = ratio.floor();
    if ratio - n_full > 1.0 - GRID_SLACK {
        n_full += 1.0;
    }
    let rem = t - n_full * delta;
    let rem = if rem.abs() <= GRID_SLACK * delta { 0.0 } else { rem };
    (n_full as usize, rem)
}

impl BrownianPath {
    /// Builds a path from explicit samples; used for fixtures and truncation.
    pub fn from_samples(dim: usize, step: f64, times: Vec<f64>, positions: Vec<f64>) -> Result<Self> {
        if positions.len() != times.len() * dim || times.is_empty() {
            return config("path samples and times disagree in length");
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[0] < w[1])) {
            return config("path times must start at 0 and increase strictly");
        }
        if !(step > 0.0) || positions.iter().any(|x| !x.is_finite()) {
            return config("invalid path step or positions");
        }
        let horizon = *times.last().unwrap();
        Ok(Self { dim, step, horizon, times, positions })
    }

    /// A path that never moves from `start`, sampled on the usual grid.
    pub fn frozen(start: PointD, t: f64, delta: f64) -> Result<Self> {
        check_horizon(t, delta)?;
        let dim = start.dim();
        let times = grid_times(t, delta);
        let positions = times.iter().flat_map(|_| start.coords().iter().copied()).collect();
        Ok(Self { dim, step: delta, horizon: t, times, positions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn flat(&self) -> &[f64] {
        &self.positions
    }

    #[inline]
    pub fn coords(&self, k: usize) -> &[f64] {
        &self.positions[k * self.dim..(k + 1) * self.dim]
    }

    pub fn position(&self, k: usize) -> PointD {
        PointD::from_slice(self.coords(k))
    }

    pub fn start(&self) -> PointD {
        self.position(0)
    }

    pub fn end(&self) -> PointD {
        self.position(self.len() - 1)
    }

    /// Position at time `u` on the polyline through the samples (clamped to
    /// `[0, horizon]`), written into `out`.
    pub fn interpolate_into(&self, u: f64, out: &mut [f64]) {
        let d = self.dim;
        let k = self.times.partition_point(|&s| s <= u);
        if k == 0 {
            out[..d].copy_from_slice(self.coords(0));
            return;
        }
        if k >= self.len() {
            out[..d].copy_from_slice(self.coords(self.len() - 1));
            return;
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (u - t0) / (t1 - t0);
        let (a, b) = (self.coords(k - 1), self.coords(k));
        for i in 0..d {
            out[i] = a[i] + w * (b[i] - a[i]);
        }
    }

    pub fn interpolate(&self, u: f64) -> PointD {
        let mut p = PointD::origin(self.dim);
        self.interpolate_into(u, p.coords_mut());
        p
    }

    /// Bounding box of the sample points.
    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::empty(self.dim);
        for k in 0..self.len() {
            b.grow(self.coords(k));
        }
        b
    }

    /// `sup_k ‖B_k − B_0‖` over the samples.
    pub fn max_excursion(&self) -> f64 {
        let s = self.start();
        (0..self.len()).map(|k| s.dist(&self.position(k))).fold(0.0, f64::max)
    }

    /// Prefix of the samples with time ≤ `t_cut` (at least the start point).
    pub fn truncate(&self, t_cut: f64) -> Self {
        let keep = self.times.partition_point(|&s| s <= t_cut).max(1);
        Self {
            dim: self.dim,
            step: self.step,
            horizon: self.times[keep - 1],
            times: self.times[..keep].to_vec(),
            positions: self.positions[..keep * self.dim].to_vec(),
        }
    }

    /// Same increments, translated so the path starts at `start`.
    pub fn translated_to(&self, start: &PointD) -> Self {
        let shift = *start - self.start();
        self.translated(&shift)
    }

    pub fn translated(&self, shift: &PointD) -> Self {
        let mut out = self.clone();
        for k in 0..out.len() {
            for i in 0..self.dim {
                out.positions[k * self.dim + i] += shift[i];
            }
        }
        out
    }

    /// Positions multiplied by `a` around the origin, times by `a²`.
    pub fn scaled(&self, a: f64) -> Self {
        Self {
            dim: self.dim,
            step: self.step * a * a,
            horizon: self.horizon * a * a,
            times: self.times.iter().map(|t| t * a * a).collect(),
            positions: self.positions.iter().map(|x| x * a).collect(),
        }
    }
}

fn check_horizon(t: f64, delta: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return config(format!("path horizon must be positive, got {t}"));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return config(format!("path step must be positive, got {delta}"));
    }
    Ok(())
}

fn grid_times(t: f64, delta: f64) -> Vec<f64> {
    let (n_full, rem) = grid_len(t, delta);
    let mut times: Vec<f64> = (0..=n_full).map(|k| k as f64 * delta).collect();
    if rem > 0.0 {
        times.push(t);
    } else {
        *times.last_mut().unwrap() = t;
    }
    if times.len() == 1 {
        // t/δ rounded down to zero steps: keep a single (partial) step
        times.push(t);
    }
    times
}

/// Samples `B^start_{[0,t]}` on the grid of step `delta`.
///
/// Increments are independent centered Gaussians with per-coordinate variance
/// equal to the elapsed time of their step.
pub fn sample_brownian(rng: &mut RngStream, start: &PointD, t: f64, delta: f64) -> Result<BrownianPath> {
    check_horizon(t, delta)?;
    let dim = start.dim();
    let times = grid_times(t, delta);
    let mut positions = Vec::with_capacity(times.len() * dim);
    positions.extend_from_slice(start.coords());
    for k in 1..times.len() {
        let sd = (times[k] - times[k - 1]).sqrt();
        for i in 0..dim {
            let prev = positions[(k - 1) * dim + i];
            positions.push(prev + sd * rng.normal());
        }
    }
    Ok(BrownianPath { dim, step: delta, horizon: t, times, positions })
}

/// Halves every step `levels` times by Brownian-bridge midpoint insertion.
///
/// Given the endpoints of a step of duration `h`, the bridge midpoint is
/// Gaussian around the chord midpoint with per-coordinate variance `h/4`, so
/// the joint law of the original samples is untouched.
pub fn refine_bridge(path: &BrownianPath, levels: u32, rng: &mut RngStream) -> BrownianPath {
    let mut cur = path.clone();
    let dim = path.dim;
    for _ in 0..levels {
        let n = cur.len();
        let mut times = Vec::with_capacity(2 * n - 1);
        let mut positions = Vec::with_capacity((2 * n - 1) * dim);
        times.push(cur.times[0]);
        positions.extend_from_slice(cur.coords(0));
        for k in 1..n {
            let h = cur.times[k] - cur.times[k - 1];
            let sd = 0.5 * h.sqrt();
            times.push(0.5 * (cur.times[k - 1] + cur.times[k]));
            for i in 0..dim {
                let mid = 0.5 * (cur.positions[(k - 1) * dim + i] + cur.positions[k * dim + i]);
                positions.push(mid + sd * rng.normal());
            }
            times.push(cur.times[k]);
            positions.extend_from_slice(cur.coords(k));
        }
        cur = BrownianPath { dim, step: cur.step * 0.5, horizon: cur.horizon, times, positions };
    }
    cur
}

/// Points of a homogeneous Poisson process restricted to a box.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCloud {
    pub bbox: Aabb,
    pub intensity: f64,
    pub points: Vec<PointD>,
}

/// Draws `Poisson(λ·vol)` points i.i.d. uniform in `bbox`.
pub fn sample_poisson_cloud(rng: &mut RngStream, bbox: &Aabb, intensity: f64) -> Result<PoissonCloud> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return config(format!("Poisson intensity must be positive, got {intensity}"));
    }
    let vol = bbox.volume();
    let count = if vol > 0.0 { rng.poisson(intensity * vol) } else { 0 };
    let dim = bbox.dim();
    let points = (0..count)
        .map(|_| {
            let mut p = bbox.lo;
            for i in 0..dim {
                p.coords_mut()[i] += rng.uniform() * bbox.edge(i);
            }
            p
        })
        .collect();
    Ok(PoissonCloud { bbox: *bbox, intensity, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn origin4() -> PointD {
        PointD::origin(4)
    }

    #[test]
    fn determinism_bit_for_bit() {
        let a = sample_brownian(&mut RngStream::new(7, 3), &origin4(), 1.0, 0.01).unwrap();
        let b = sample_brownian(&mut RngStream::new(7, 3), &origin4(), 1.0, 0.01).unwrap();
        assert_eq!(a.flat(), b.flat());
        let c = sample_brownian(&mut RngStream::new(7, 4), &origin4(), 1.0, 0.01).unwrap();
        assert_ne!(a.flat(), c.flat());
    }

    #[test]
    fn large_step_gives_two_positions() {
        let p = sample_brownian(&mut RngStream::new(1, 1), &origin4(), 0.5, 2.0).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.times(), &[0.0, 0.5]);
        let q = sample_brownian(&mut RngStream::new(1, 1), &origin4(), 0.5, 0.5).unwrap();
        assert_eq!(q.len(), 2);
    }

    #[test]
    fn grid_length_with_partial_step() {
        let p = sample_brownian(&mut RngStream::new(1, 1), &origin4(), 1.05, 0.1).unwrap();
        assert_eq!(p.len(), 12);
        assert!((p.time(10) - 1.0).abs() < 1e-12);
        assert_eq!(p.time(11), 1.05);
        let q = sample_brownian(&mut RngStream::new(1, 1), &origin4(), 1.0, 0.1).unwrap();
        assert_eq!(q.len(), 11);
        assert_eq!(q.horizon(), 1.0);
        assert_eq!(q.start(), origin4());
    }

    #[test]
    fn rejects_bad_horizon() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_brownian(&mut rng, &origin4(), 0.0, 0.1).is_err());
        assert!(sample_brownian(&mut rng, &origin4(), 1.0, -0.1).is_err());
    }

    #[test]
    fn endpoint_second_moment() {
        let mut rng = RngStream::new(11, 0);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let p = sample_brownian(&mut rng, &origin4(), 1.0, 0.1).unwrap();
                p.end().norm_sq()
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 4.0).abs() < 0.2, "mean {mean}");
    }

    #[test]
    fn refine_zero_levels_is_identity() {
        let mut rng = RngStream::new(5, 5);
        let p = sample_brownian(&mut rng, &origin4(), 1.0, 0.25).unwrap();
        assert_eq!(refine_bridge(&p, 0, &mut rng), p);
    }

    #[test]
    fn refine_keeps_original_samples() {
        let mut rng = RngStream::new(5, 6);
        let p = sample_brownian(&mut rng, &origin4(), 1.1, 0.25).unwrap();
        let q = refine_bridge(&p, 2, &mut rng);
        assert_eq!(q.len(), 4 * (p.len() - 1) + 1);
        for k in 0..p.len() {
            assert_eq!(q.coords(4 * k), p.coords(k));
            assert_eq!(q.time(4 * k), p.time(k));
        }
    }

    #[test]
    fn bridge_midpoint_variance() {
        let mut rng = RngStream::new(9, 1);
        let delta = 0.4;
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let p = sample_brownian(&mut rng, &origin4(), delta, delta).unwrap();
            let q = refine_bridge(&p, 1, &mut rng);
            let chord_mid = (p.start() + p.end()).scale(0.5);
            acc += (q.position(1) - chord_mid).norm_sq();
        }
        let var = acc / (4.0 * n as f64);
        assert!((var - delta / 4.0).abs() < 0.05 * delta / 4.0, "var {var}");
    }

    #[test]
    fn poisson_count_mean_and_variance() {
        let bbox = Aabb::cube(4, 0.0, 2.0).unwrap();
        let mut rng = RngStream::new(2, 2);
        let n = 10_000;
        let counts: Vec<f64> =
            (0..n).map(|_| sample_poisson_cloud(&mut rng, &bbox, 1.0).unwrap().points.len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / n as f64;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 16.0).abs() < 3.0 * (16.0f64 / n as f64).sqrt(), "mean {mean}");
        assert!((var / mean - 1.0).abs() < 0.05, "var {var} mean {mean}");
    }

    #[test]
    fn points_stay_in_box() {
        let bbox = Aabb::new(PointD::new(&[-1., 2., 0.]).unwrap(), PointD::new(&[3., 2.5, 10.]).unwrap()).unwrap();
        let cloud = sample_poisson_cloud(&mut RngStream::new(0, 9), &bbox, 3.0).unwrap();
        assert!(!cloud.points.is_empty());
        assert!(cloud.points.iter().all(|p| bbox.contains(p)));
    }

    #[test]
    fn degenerate_box_has_no_points() {
        let bbox = Aabb::new(PointD::new(&[0., 0., 0., 0.]).unwrap(), PointD::new(&[1., 1., 0., 1.]).unwrap()).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            assert!(sample_poisson_cloud(&mut rng, &bbox, 50.0).unwrap().points.is_empty());
        }
        assert!(sample_poisson_cloud(&mut rng, &bbox, 0.0).is_err());
    }

    #[test]
    fn stream_ids_differ_by_parts() {
        assert_ne!(derive_stream_id(1, &[0, 1]), derive_stream_id(1, &[1, 0]));
        assert_ne!(derive_stream_id(1, &[0]), derive_stream_id(2, &[0]));
        assert_eq!(derive_stream_id(1, &[4, 5]), derive_stream_id(1, &[4, 5]));
    }
}
