use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ball_potential, cap_hitting, GreenKernel, HittingParams, SausageTarget};
use crate::error::{config, Result};
use crate::geometry::PointD;
use crate::stats::{fit_line, wilson_interval, LineFit, Moments};
use crate::stochastic::{sample_brownian, BrownianPath, RngStream};

/// Draws sausages `W^{0,r}_{[0,t]}` and their hitting-capacity estimates,
/// path `i` always from the same streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapSampler {
    pub d: usize,
    pub t: f64,
    pub r: f64,
    /// Path step; `None` means `(r/4)²`.
    pub delta: Option<f64>,
    pub hitting: HittingParams,
    pub seed: u64,
}

impl CapSampler {
    pub fn new(d: usize, t: f64, r: f64, seed: u64) -> Self {
        Self { d, t, r, delta: None, hitting: HittingParams::conditioned(4000), seed }
    }

    pub fn step(&self) -> f64 {
        self.delta.unwrap_or((self.r / 4.0).powi(2))
    }

    pub fn path(&self, i: u64) -> Result<BrownianPath> {
        let mut rng = RngStream::derive(self.seed, &[0x70a7, i]);
        sample_brownian(&mut rng, &PointD::origin(self.d), self.t, self.step())
    }

    pub fn capacity_of(&self, k: &GreenKernel, path: &BrownianPath, i: u64) -> Result<super::CapacityEstimate> {
        let target = SausageTarget::new(path, self.r)?;
        let mut rng = RngStream::derive(self.seed, &[0xca9, i]);
        cap_hitting(k, &target, &mut rng, &self.hitting)
    }

    /// Capacity values of paths `0..n`, optionally keeping only paths whose
    /// sausage stays in `B(0, radius)` (`None` marks the others).
    pub fn capacities(&self, n: usize, confine_radius: Option<f64>) -> Result<Vec<Option<f64>>> {
        let k = GreenKernel::new(self.d)?;
        (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let path = self.path(i)?;
                if let Some(rad) = confine_radius {
                    if path.max_excursion() + self.r > rad {
                        return Ok(None);
                    }
                }
                Ok(Some(self.capacity_of(&k, &path, i)?.value))
            })
            .collect()
    }
}

/// Estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Valued {
    pub value: f64,
    pub std_error: f64,
}

impl Valued {
    fn of(m: &Moments) -> Self {
        Self { value: m.mean, std_error: m.std_error() }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            0.0
        } else {
            self.std_error / self.value.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub d: usize,
    pub t: f64,
    pub r: f64,
    pub n_paths: usize,
    /// Paths entering the moments (all, or only the confined ones).
    pub n_used: usize,
    pub mean_cap: Valued,
    pub second_moment: Valued,
    pub fourth_moment: Valued,
    pub confine: Option<f64>,
    /// `P(W ⊆ B(0, c_B√t))` with a 95% Wilson interval.
    pub confined_fraction: Option<(f64, f64, f64)>,
    /// `E[cap; W ⊆ B(0, c_B√t)]`, i.e. the mean of `cap·1{confined}`.
    pub mean_cap_on_event: Option<Valued>,
}

impl MomentReport {
    /// Second moment dominates the squared mean up to sampling error.
    pub fn is_consistent(&self) -> bool {
        let rel = self.second_moment.relative_error() + 2.0 * self.mean_cap.relative_error();
        self.second_moment.value >= self.mean_cap.value.powi(2) * (1.0 - 3.0 * rel)
    }
}

/// Mean, second and fourth moments of `cap(W^{0,r}_{[0,t]})`; with
/// `confine = Some(c_B)` restricted to `W ⊆ B(0, c_B√t)`.
pub fn moment_report(sampler: &CapSampler, n_paths: usize, confine: Option<f64>) -> Result<MomentReport> {
    if n_paths < 100 {
        return config(format!("moment_report needs at least 100 paths, got {n_paths}"));
    }
    let radius = confine.map(|c| c * sampler.t.sqrt());
    let caps = sampler.capacities(n_paths, radius)?;
    let used: Vec<f64> = caps.iter().flatten().copied().collect();
    let m1: Moments = used.iter().copied().collect();
    let m2: Moments = used.iter().map(|c| c * c).collect();
    let m4: Moments = used.iter().map(|c| c.powi(4)).collect();
    let (confined_fraction, mean_cap_on_event) = match confine {
        Some(_) => {
            let hits = used.len() as u64;
            let (lo, hi) = wilson_interval(hits, n_paths as u64, 1.96);
            let on_event: Moments = caps.iter().map(|c| c.unwrap_or(0.0)).collect();
            (Some((hits as f64 / n_paths as f64, lo, hi)), Some(Valued::of(&on_event)))
        }
        None => (None, None),
    };
    Ok(MomentReport {
        d: sampler.d,
        t: sampler.t,
        r: sampler.r,
        n_paths,
        n_used: used.len(),
        mean_cap: Valued::of(&m1),
        second_moment: Valued::of(&m2),
        fourth_moment: Valued::of(&m4),
        confine,
        confined_fraction,
        mean_cap_on_event,
    })
}

/// Capacity unit of the tail classes: `t·r^{d−4}` for `d ≥ 5`, `t/|log r|`
/// for `d = 4`.
pub fn tail_scale(d: usize, t: f64, r: f64) -> Result<f64> {
    if d == 4 {
        if !(r > 0.0 && r < 1.0) {
            return config(format!("d = 4 tail scale needs 0 < r < 1, got {r}"));
        }
        Ok(t / r.ln().abs())
    } else if d >= 5 {
        Ok(t * r.powi(d as i32 - 4))
    } else {
        config(format!("tail scale defined for d >= 4, got {d}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub j: f64,
    pub threshold: f64,
    pub count: u64,
    pub exceedance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub d: usize,
    pub t: f64,
    pub r: f64,
    pub n_paths: usize,
    pub scale: f64,
    pub rows: Vec<TailRow>,
    /// Weighted fit of `log exceedance` against `j` over rows with a nonzero
    /// count, with its 95% interval for the slope.
    pub slope_fit: Option<LineFit>,
    pub slope_ci: Option<(f64, f64)>,
}

/// Empirical `P(cap ≥ j·scale)` for each threshold index `j`.
pub fn tail_report(sampler: &CapSampler, n_paths: usize, thresholds: &[f64]) -> Result<TailReport> {
    let caps: Vec<f64> = sampler.capacities(n_paths, None)?.into_iter().flatten().collect();
    tail_from_values(sampler.d, sampler.t, sampler.r, &caps, thresholds)
}

/// Exceedance table of given capacity values.
pub fn tail_from_values(d: usize, t: f64, r: f64, caps: &[f64], thresholds: &[f64]) -> Result<TailReport> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[0] < w[1])) || thresholds[0] < 1.0 {
        return config("tail thresholds must be increasing and at least 1");
    }
    if caps.is_empty() {
        return config("no capacity samples");
    }
    let scale = tail_scale(d, t, r)?;
    let n = caps.len() as u64;
    let rows: Vec<TailRow> = thresholds
        .iter()
        .map(|&j| {
            let threshold = j * scale;
            let count = caps.iter().filter(|&&c| c >= threshold).count() as u64;
            let (ci_low, ci_high) = wilson_interval(count, n, 1.96);
            TailRow { j, threshold, count, exceedance: count as f64 / n as f64, ci_low, ci_high }
        })
        .collect();
    let (mut xs, mut ys, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for row in rows.iter().filter(|row| row.count > 0) {
        // binomial delta method for log p̂, with p̂ kept off 1
        let p = row.exceedance.min(1.0 - 0.5 / n as f64);
        xs.push(row.j);
        ys.push(row.exceedance.ln());
        ws.push(n as f64 * p / (1.0 - p));
    }
    let slope_fit = fit_line(&xs, &ys, Some(&ws));
    let slope_ci = slope_fit.as_ref().map(|f| (f.slope - 1.96 * f.slope_se, f.slope + 1.96 * f.slope_se));
    Ok(TailReport { d, t, r, n_paths: caps.len(), scale, rows, slope_fit, slope_ci })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPairMoment {
    pub d: usize,
    pub t: f64,
    /// Normalized estimate.
    pub value: f64,
    pub std_error: f64,
    /// `t` for `d ≥ 5`, `t log t` for `d = 4`.
    pub normalizer: f64,
    pub n_samples: usize,
}

/// `E[∫∫∫∫ G(B_u + z, B_v + z′) du dv dz dz′]` over `u, v ∈ [0, t]`,
/// `z, z′ ∈ B(0, 1)`, divided by `t` (`d ≥ 5`) or `t log t` (`d = 4`).
///
/// `B_u − B_v` is drawn directly as a centered Gaussian of variance `|u − v|`
/// and the `z′` integral is done in closed form.
pub fn green_pathpair_moment(d: usize, t: f64, n_samples: usize, rng: &mut RngStream) -> Result<PathPairMoment> {
    if !(t >= 2.0) {
        return config(format!("green_pathpair_moment needs t >= 2, got {t}"));
    }
    if d < 4 {
        return config(format!("green_pathpair_moment needs d >= 4, got {d}"));
    }
    if n_samples == 0 {
        return config("n_samples must be positive");
    }
    let k = GreenKernel::new(d)?;
    let mass = t * t * k.c_vol() * k.c_vol();
    let normalizer = if d == 4 { t * t.ln() } else { t };
    let mut acc = Moments::default();
    for _ in 0..n_samples {
        let lag = (t * (rng.uniform() - rng.uniform())).abs();
        let sd = lag.sqrt();
        let z = rng.in_ball(d, 1.0);
        let s = (0..d).map(|i| (sd * rng.normal() + z[i]).powi(2)).sum::<f64>().sqrt();
        acc.push(mass * ball_potential(&k, s, 1.0) / normalizer);
    }
    Ok(PathPairMoment { d, t, value: acc.mean, std_error: acc.std_error(), normalizer, n_samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tail_monotone_and_trivial_rows() {
        let caps: Vec<f64> = (0..1000).map(|k| 50.0 + (k % 97) as f64).collect();
        let rep = tail_from_values(5, 8.0, 1.0, &caps, &[1.0, 2.0, 6.0, 10.0, 20.0]).unwrap();
        assert_eq!(rep.rows[0].exceedance, 1.0);
        assert!(rep.rows.windows(2).all(|w| w[0].exceedance >= w[1].exceedance));
        assert_eq!(rep.rows[4].count, 0);
        assert!(tail_from_values(5, 8.0, 1.0, &caps, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn tail_scale_per_dimension() {
        assert_eq!(tail_scale(5, 8.0, 0.5).unwrap(), 4.0);
        assert!((tail_scale(4, 8.0, (-2.0f64).exp()).unwrap() - 4.0).abs() < 1e-12);
        assert!(tail_scale(4, 8.0, 1.0).is_err());
    }

    #[test]
    fn pathpair_std_error_shrinks_like_root_two() {
        let a = green_pathpair_moment(5, 4.0, 40_000, &mut RngStream::new(1, 0)).unwrap();
        let b = green_pathpair_moment(5, 4.0, 80_000, &mut RngStream::new(1, 1)).unwrap();
        let ratio = a.std_error / b.std_error;
        assert!((ratio - 2f64.sqrt()).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn moment_report_small() {
        let mut s = CapSampler::new(4, 2.0, 1.0, 11);
        s.hitting.n_walks = 500;
        let rep = moment_report(&s, 100, Some(3.0)).unwrap();
        assert!(rep.is_consistent());
        let (p, lo, hi) = rep.confined_fraction.unwrap();
        assert!(lo <= p && p <= hi && p > 0.0);
        assert!(moment_report(&s, 50, None).is_err());
    }
}
