use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CapacityEstimate, GreenKernel, HitTarget, Method};
use crate::error::{config, Result};
use crate::geometry::MAX_DIM;
use crate::stochastic::RngStream;

const BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingParams {
    pub n_walks: usize,
    /// Launch sphere radius; `None` uses the smallest admissible one.
    pub r_launch: Option<f64>,
    /// Hit tolerance; `None` uses the target's default.
    pub eps_hit: Option<f64>,
    /// Kill radius as a multiple of the launch radius.
    pub kill_factor: f64,
    pub max_steps: usize,
    /// Start walks on the target's bounding sphere instead of the launch
    /// sphere. Brownian motion from the uniform launch sphere first meets the
    /// bounding sphere (same center) with probability `(ρ/R)^{d−2}` and does so
    /// at a uniform point, so this only removes walks that never come close.
    pub condition_on_bounding_sphere: bool,
}

impl Default for HittingParams {
    fn default() -> Self {
        Self {
            n_walks: 10_000,
            r_launch: None,
            eps_hit: None,
            kill_factor: 100.0,
            max_steps: 100_000,
            condition_on_bounding_sphere: false,
        }
    }
}

impl HittingParams {
    pub fn with_walks(n_walks: usize) -> Self {
        Self { n_walks, ..Self::default() }
    }

    pub fn conditioned(n_walks: usize) -> Self {
        Self { n_walks, condition_on_bounding_sphere: true, ..Self::default() }
    }
}

/// Capacity from hitting probabilities of Brownian motion launched uniformly
/// on a sphere around the target, simulated by walk-on-spheres.
///
/// For a target inside `B(c, R)`, `P(hit) = cap / (κ_d R^{d−2})` exactly when
/// the start is uniform on `∂B(c, R)`. Walks passing the kill radius are
/// stopped; the chance `(R/|x − c|)^{d−2}` that they would have come back is
/// folded in as `p̂ = hits / (n − Σ return weights)`. Returns to the start
/// sphere land approximately uniformly since the kill radius is far out.
pub fn cap_hitting<T: HitTarget + ?Sized>(
    k: &GreenKernel,
    target: &T,
    rng: &mut RngStream,
    params: &HittingParams,
) -> Result<CapacityEstimate> {
    let d = k.dim();
    if target.dim() != d {
        return config("target dimension does not match the kernel");
    }
    if params.n_walks == 0 {
        return config("n_walks must be positive");
    }
    let (center, reach) = target.bounding_ball();
    let min_launch = 3.0 * reach;
    let r_launch = params.r_launch.unwrap_or(min_launch);
    if !(r_launch >= min_launch * (1.0 - 1e-12)) {
        return config(format!("launch radius {r_launch} below 3 x target reach {reach}"));
    }
    let eps = params.eps_hit.unwrap_or_else(|| target.default_eps());
    if !(eps > 0.0) {
        return config(format!("hit tolerance must be positive, got {eps}"));
    }
    if !(params.kill_factor > 1.0) {
        return config("kill factor must exceed 1");
    }
    let kill_sq = (params.kill_factor * r_launch).powi(2);
    let start_radius = if params.condition_on_bounding_sphere { reach } else { r_launch };

    let n_blocks = params.n_walks.div_ceil(BLOCK);
    let key = rng.next_u64();
    let base = rng.substream(key);
    let per_block: Vec<(u64, f64)> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut s = base.substream(b as u64);
            let count = BLOCK.min(params.n_walks - b * BLOCK);
            let mut hits = 0u64;
            let mut back = 0.0;
            for _ in 0..count {
                match walk(target, center.coords(), d, start_radius, eps, kill_sq, params.max_steps, &mut s) {
                    Outcome::Hit => hits += 1,
                    Outcome::Escape(w) => back += w,
                    Outcome::Stalled => {}
                }
            }
            (hits, back)
        })
        .collect();
    let hits: u64 = per_block.iter().map(|b| b.0).sum();
    let back: f64 = per_block.iter().map(|b| b.1).sum();
    let n = params.n_walks as f64;
    let eff = (n - back).max(1.0);
    let p = (hits as f64 / eff).min(1.0);
    let se_p = (p * (1.0 - p) / eff).sqrt();
    let scale = k.ball_capacity(start_radius);
    Ok(CapacityEstimate::new(Method::Hitting, scale * p, scale * se_p, params.n_walks as u64)
        .with("r_launch", r_launch)
        .with("start_radius", start_radius)
        .with("eps_hit", eps)
        .with("kill_radius", params.kill_factor * r_launch)
        .with("hits", hits as f64)
        .with("return_weight", back))
}

enum Outcome {
    Hit,
    Escape(f64),
    Stalled,
}

#[allow(clippy::too_many_arguments)]
fn walk<T: HitTarget + ?Sized>(
    target: &T,
    center: &[f64],
    d: usize,
    r_start: f64,
    eps: f64,
    kill_sq: f64,
    max_steps: usize,
    rng: &mut RngStream,
) -> Outcome {
    let mut x = [0.0; MAX_DIM];
    let u = rng.unit_vector(d);
    for i in 0..d {
        x[i] = center[i] + r_start * u[i];
    }
    for _ in 0..max_steps {
        let rho = target.distance(&x[..d]);
        if rho <= eps {
            return Outcome::Hit;
        }
        let s_sq = crate::geometry::dist_sq(&x[..d], center);
        if s_sq > kill_sq {
            return Outcome::Escape((r_start * r_start / s_sq).powf(0.5 * (d as f64 - 2.0)));
        }
        let step = (rho - eps).max(eps);
        let u = rng.unit_vector(d);
        for i in 0..d {
            x[i] += step * u[i];
        }
    }
    Outcome::Stalled
}
