use serde::{Deserialize, Serialize};

use super::{g_star_radial, CapacityEstimate, GreenKernel, Method};
use crate::error::{config, Result};
use crate::geometry::{PointD, MAX_DIM};
use crate::stochastic::BrownianPath;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZtParams {
    /// Time step of the occupation-integral Riemann sum.
    pub quad_step: f64,
    /// Pattern-search refinements started from the best coarse candidates.
    pub refine_starts: usize,
}

impl Default for ZtParams {
    fn default() -> Self {
        Self { quad_step: 0.05, refine_starts: 3 }
    }
}

/// Where the occupation potential of the tube is smallest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZtDetail {
    /// Minimal value found, `Ẑ`.
    pub z_hat: f64,
    pub argmin: PointD,
    /// Path time of the tube cross-section holding the argmin.
    pub base_time: f64,
    pub evaluations: usize,
}

/// Occupation potential `φ(y) = ∫_0^t r²·G*((y − B_u)/r) du` by the midpoint
/// rule, with the nodes precomputed.
struct Potential {
    d: usize,
    r: f64,
    du: f64,
    nodes: Vec<f64>,
}

impl Potential {
    fn new(path: &BrownianPath, r: f64, quad_step: f64) -> Self {
        let d = path.dim();
        let t = path.horizon();
        let n = ((t / quad_step).ceil() as usize).max(1);
        let du = t / n as f64;
        let mut nodes = vec![0.0; n * d];
        for m in 0..n {
            path.interpolate_into((m as f64 + 0.5) * du, &mut nodes[m * d..(m + 1) * d]);
        }
        Self { d, r, du, nodes }
    }

    fn eval(&self, y: &[f64]) -> f64 {
        let d = self.d;
        let inv_r = 1.0 / self.r;
        let mut acc = 0.0;
        for node in self.nodes.chunks_exact(d) {
            acc += g_star_radial(crate::geometry::dist_sq(y, node).sqrt() * inv_r);
        }
        acc * self.r * self.r * self.du
    }
}

/// Unit directions used for the coarse scan: coordinate axes and the
/// `2^d` main diagonals.
fn scan_directions(d: usize) -> Vec<[f64; MAX_DIM]> {
    let mut dirs = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = [0.0; MAX_DIM];
            e[i] = s;
            dirs.push(e);
        }
    }
    let norm = 1.0 / (d as f64).sqrt();
    for mask in 0..(1u32 << d) {
        let mut e = [0.0; MAX_DIM];
        for (i, c) in e.iter_mut().enumerate().take(d) {
            *c = if mask >> i & 1 == 1 { -norm } else { norm };
        }
        dirs.push(e);
    }
    dirs
}

fn normalize(e: &mut [f64]) {
    let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        e.iter_mut().for_each(|x| *x /= n);
    }
}

/// Minimizes the occupation potential over the tube boundary
/// `{B_s + r·e : s ∈ [0, t], |e| = 1}`.
///
/// The potential is superharmonic on ℝ⁴ and harmonic off the tube, so its
/// infimum over the tube sits on the boundary. A coarse scan over sample
/// times and fixed directions is followed by a deterministic pattern search
/// in `(s, e)`.
pub fn zt_minimize(path: &BrownianPath, r: f64, params: &ZtParams) -> Result<ZtDetail> {
    if path.dim() != 4 {
        return config(format!("the occupation bound is defined for d = 4 only, got d = {}", path.dim()));
    }
    if !(path.horizon() >= 1.0) {
        return config(format!("path horizon must be at least 1, got {}", path.horizon()));
    }
    if !(r > 0.0) || !(params.quad_step > 0.0) {
        return config("radius and quadrature step must be positive");
    }
    let d = 4;
    let phi = Potential::new(path, r, params.quad_step);
    let dirs = scan_directions(d);
    let mut evals = 0usize;
    let point = |s: f64, e: &[f64; MAX_DIM]| {
        let mut y = [0.0; MAX_DIM];
        path.interpolate_into(s, &mut y);
        for i in 0..d {
            y[i] += r * e[i];
        }
        y
    };

    // (value, time, direction); ties resolved by scan order
    let mut coarse: Vec<(f64, f64, [f64; MAX_DIM])> = Vec::with_capacity(path.len() * dirs.len());
    for k in 0..path.len() {
        let s = path.time(k);
        for e in &dirs {
            let y = point(s, e);
            coarse.push((phi.eval(&y[..d]), s, *e));
            evals += 1;
        }
    }
    coarse.sort_by(|a, b| a.0.total_cmp(&b.0));

    let t = path.horizon();
    let mut best = coarse[0];
    for start in coarse.iter().take(params.refine_starts.max(1)) {
        let (mut v, mut s, mut e) = *start;
        let mut ds = path.step();
        let mut de = 0.5;
        while de > 1e-4 {
            let mut improved = false;
            for cand_s in [s - ds, s + ds] {
                let cs = cand_s.clamp(0.0, t);
                let y = point(cs, &e);
                let cv = phi.eval(&y[..d]);
                evals += 1;
                if cv < v {
                    (v, s) = (cv, cs);
                    improved = true;
                }
            }
            for i in 0..d {
                for sign in [1.0, -1.0] {
                    let mut ce = e;
                    ce[i] += sign * de;
                    normalize(&mut ce[..d]);
                    let y = point(s, &ce);
                    let cv = phi.eval(&y[..d]);
                    evals += 1;
                    if cv < v {
                        (v, e) = (cv, ce);
                        improved = true;
                    }
                }
            }
            if !improved {
                ds *= 0.5;
                de *= 0.5;
            }
        }
        if v < best.0 {
            best = (v, s, e);
        }
    }
    let y = point(best.1, &best.2);
    Ok(ZtDetail { z_hat: best.0, argmin: PointD::from_slice(&y[..d]), base_time: best.1, evaluations: evals })
}

/// Upper bound `cap(W) ≤ c_vol·r⁴·t / Z_t` in `d = 4`, where
/// `Z_t = inf_{y ∈ W} ∫_0^t ∫_{B(0,r)} G(y, B_u + z) dz du`.
///
/// Testing the equilibrium measure against the occupation density shows
/// `∫_W f = c_vol r⁴ t ≥ cap(W)·Z_t`; equality holds for a frozen path.
pub fn cap_zt_upper(k: &GreenKernel, path: &BrownianPath, r: f64, params: &ZtParams) -> Result<CapacityEstimate> {
    if k.dim() != 4 {
        return config(format!("the occupation bound is defined for d = 4 only, kernel has d = {}", k.dim()));
    }
    let detail = zt_minimize(path, r, params)?;
    let t = path.horizon();
    let value = k.c_vol() * r.powi(4) * t / detail.z_hat;
    Ok(CapacityEstimate::new(Method::ZtUpper, value, 0.0, detail.evaluations as u64)
        .with("z_hat", detail.z_hat)
        .with("quad_step", params.quad_step)
        .with("argmin_time", detail.base_time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::{sample_brownian, RngStream};

    #[test]
    fn frozen_path_gives_ball_capacity() {
        let k = GreenKernel::new(4).unwrap();
        let path = BrownianPath::frozen(PointD::origin(4), 2.0, 0.0625).unwrap();
        let est = cap_zt_upper(&k, &path, 1.0, &ZtParams::default()).unwrap();
        assert!(est.value >= k.kappa() * (1.0 - 1e-9), "{}", est.value);
        assert!(est.value <= k.kappa() * (1.0 + 1e-6));
    }

    #[test]
    fn rejects_wrong_dimension_and_short_horizon() {
        let k5 = GreenKernel::new(5).unwrap();
        let p5 = BrownianPath::frozen(PointD::origin(5), 2.0, 0.1).unwrap();
        assert!(cap_zt_upper(&k5, &p5, 1.0, &ZtParams::default()).is_err());
        let k = GreenKernel::new(4).unwrap();
        let short = BrownianPath::frozen(PointD::origin(4), 0.5, 0.1).unwrap();
        assert!(cap_zt_upper(&k, &short, 1.0, &ZtParams::default()).is_err());
    }

    #[test]
    fn argmin_is_reproducible() {
        let path = sample_brownian(&mut RngStream::new(3, 3), &PointD::origin(4), 4.0, 1.0 / 16.0).unwrap();
        let a = zt_minimize(&path, 1.0, &ZtParams::default()).unwrap();
        let b = zt_minimize(&path, 1.0, &ZtParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_beats_centre_line() {
        let path = sample_brownian(&mut RngStream::new(8, 1), &PointD::origin(4), 4.0, 1.0 / 16.0).unwrap();
        let p = ZtParams::default();
        let phi = Potential::new(&path, 1.0, p.quad_step);
        let on_path = (0..path.len()).map(|k| phi.eval(path.coords(k))).fold(f64::INFINITY, f64::min);
        let detail = zt_minimize(&path, 1.0, &p).unwrap();
        assert!(detail.z_hat < on_path);
    }
}
