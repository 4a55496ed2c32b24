use serde::{Deserialize, Serialize};

use super::{CapacityEstimate, GreenKernel, Method};
use crate::error::{config, Result};
use crate::geometry::{PointD, MAX_DIM};
use crate::stats::Moments;
use crate::stochastic::{BrownianPath, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub n_pairs: usize,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { n_pairs: 20_000 }
    }
}

/// Mean of `G(x, z)` over `z` uniform in `B(0, r)` with `‖x‖ = s`.
///
/// Newton: shells inside radius `s` act as a point charge at the origin,
/// shells outside are constant, giving `N/r^d · (s² + d(r² − s²)/2)` for
/// `s < r` and `G(s)` beyond.
#[inline]
pub fn ball_potential(k: &GreenKernel, s: f64, r: f64) -> f64 {
    if s >= r {
        k.radial(s)
    } else {
        let d = k.dim() as f64;
        k.normalizer() * r.powi(-(k.dim() as i32)) * (s * s + 0.5 * d * (r * r - s * s))
    }
}

/// Lower bound on the capacity of the tube `W^{r}` around `path` via the
/// energy of the normalized occupation measure thickened by `B(0, r)`.
///
/// Pairs `(u, z)`, `(v, z′)` are drawn uniformly; the `z′`-average of the
/// Green kernel is done in closed form by [`ball_potential`], which keeps
/// every summand bounded by `N·d/(2r^{d−2})`.
pub fn cap_energy_lower(
    k: &GreenKernel,
    path: &BrownianPath,
    r: f64,
    params: &EnergyParams,
    rng: &mut RngStream,
) -> Result<CapacityEstimate> {
    let d = k.dim();
    if path.dim() != d {
        return config("path dimension does not match the kernel");
    }
    if !(r > 0.0) {
        return config(format!("radius must be positive, got {r}"));
    }
    if params.n_pairs < 1000 {
        return config(format!("n_pairs must be at least 1000, got {}", params.n_pairs));
    }
    if path.len() < 2 || !(path.horizon() > 0.0) {
        return config("degenerate path: need a positive horizon and two samples");
    }
    let t = path.horizon();
    let mut x = [0.0; MAX_DIM];
    let mut y = [0.0; MAX_DIM];
    let mut acc = Moments::default();
    for _ in 0..params.n_pairs {
        path.interpolate_into(t * rng.uniform(), &mut x);
        path.interpolate_into(t * rng.uniform(), &mut y);
        let z = rng.in_ball(d, r);
        let s = (0..d).map(|i| (x[i] + z[i] - y[i]).powi(2)).sum::<f64>().sqrt();
        acc.push(ball_potential(k, s, r));
    }
    Ok(from_energy(acc, params.n_pairs).with("r", r).with("horizon", t))
}

/// Energy estimate `1/Î` for an arbitrary probability measure given by a
/// sampler, with the raw kernel `G(X, Y)`; pairs that coincide are redrawn.
pub fn energy_of_measure<F>(
    k: &GreenKernel,
    mut sample: F,
    n_pairs: usize,
    rng: &mut RngStream,
) -> Result<CapacityEstimate>
where
    F: FnMut(&mut RngStream) -> PointD,
{
    if n_pairs == 0 {
        return config("n_pairs must be positive");
    }
    let mut acc = Moments::default();
    let mut redraws = 0u64;
    for _ in 0..n_pairs {
        loop {
            let a = sample(rng);
            let b = sample(rng);
            if a.dim() != k.dim() {
                return config("sampled point dimension does not match the kernel");
            }
            let s = a.dist(&b);
            if s > 0.0 {
                acc.push(k.radial(s));
                break;
            }
            redraws += 1;
        }
    }
    Ok(from_energy(acc, n_pairs).with("redraws", redraws as f64))
}

fn from_energy(acc: Moments, n: usize) -> CapacityEstimate {
    let i_hat = acc.mean;
    // delta method: se(1/Î) = se(Î)/Î²
    let se = acc.std_error() / (i_hat * i_hat);
    CapacityEstimate::new(Method::EnergyLower, 1.0 / i_hat, se, n as u64).with("energy", i_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Energy of the uniform measure on B(0,1) in d=4 by a product
    /// quadrature over (|x|, |y|, angle): densities 4ρ³ and (2/π)sin²θ.
    fn uniform_ball_energy_quadrature() -> f64 {
        let n = 160;
        let h = 1.0 / n as f64;
        let ht = PI / n as f64;
        let mut sum = 0.0;
        for a in 0..n {
            let ra = (a as f64 + 0.5) * h;
            for b in 0..n {
                let rb = (b as f64 + 0.5) * h;
                let w = 16.0 * ra.powi(3) * rb.powi(3) * h * h;
                let mut inner = 0.0;
                for c in 0..n {
                    let th = (c as f64 + 0.5) * ht;
                    let s2 = ra * ra + rb * rb - 2.0 * ra * rb * th.cos();
                    inner += (2.0 / PI) * th.sin().powi(2) * ht / (2.0 * PI * PI * s2);
                }
                sum += w * inner;
            }
        }
        sum
    }

    #[test]
    fn ball_potential_is_continuous_and_matches_g_star() {
        let k = GreenKernel::new(4).unwrap();
        for &s in &[0.0, 0.3, 0.99, 1.0, 2.5] {
            let gs = super::super::g_star_radial(s);
            assert!((ball_potential(&k, s, 1.0) * k.c_vol() - gs).abs() < 1e-14);
        }
        let k5 = GreenKernel::new(5).unwrap();
        let r = 0.7;
        assert!((ball_potential(&k5, r - 1e-12, r) - k5.radial(r)).abs() < 1e-9);
    }

    #[test]
    fn frozen_path_gives_uniform_ball_energy() {
        let k = GreenKernel::new(4).unwrap();
        let path = BrownianPath::frozen(PointD::origin(4), 1.0, 0.1).unwrap();
        let est =
            cap_energy_lower(&k, &path, 1.0, &EnergyParams { n_pairs: 100_000 }, &mut RngStream::new(5, 0)).unwrap();
        let oracle = 1.0 / uniform_ball_energy_quadrature();
        assert!((est.value - oracle).abs() < 3.0 * est.std_error + 2e-3 * oracle, "{} vs {oracle}", est.value);
        assert!(est.value <= k.kappa());
    }

    #[test]
    fn sphere_measure_recovers_kappa() {
        let k = GreenKernel::new(4).unwrap();
        let est = energy_of_measure(&k, |r| r.unit_vector(4), 200_000, &mut RngStream::new(6, 0)).unwrap();
        assert!((est.value - k.kappa()).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn rejects_few_pairs() {
        let k = GreenKernel::new(4).unwrap();
        let path = BrownianPath::frozen(PointD::origin(4), 1.0, 0.1).unwrap();
        assert!(cap_energy_lower(&k, &path, 1.0, &EnergyParams { n_pairs: 10 }, &mut RngStream::new(5, 0)).is_err());
    }
}
