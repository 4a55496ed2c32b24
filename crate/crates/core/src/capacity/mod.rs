//! Newtonian capacity toolbox.
//!
//! Green kernel and dimension constants, three independent capacity
//! estimators for Wiener sausages (hitting probabilities by walk-on-spheres,
//! a variational lower bound, and an occupation-functional upper bound in
//! `d = 4`), and Monte Carlo moment/tail statistics of sausage capacities.

mod energy;
mod hitting;
mod moments;
mod target;
mod zt;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{config, Error, Result};
use crate::geometry::PointD;

pub use energy::{ball_potential, cap_energy_lower, energy_of_measure, EnergyParams};
pub use hitting::{cap_hitting, HittingParams};
pub use moments::{
    green_pathpair_moment, moment_report, tail_from_values, tail_report, tail_scale, CapSampler, MomentReport,
    PathPairMoment, TailReport, TailRow, Valued,
};
pub use target::{BallTarget, BallUnionTarget, HitTarget, SausageTarget};
pub use zt::{cap_zt_upper, zt_minimize, ZtDetail, ZtParams};

/// Green function of Brownian motion on ℝ^d with its companion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreenKernel {
    d: usize,
    /// `Γ(d/2 − 1) / (2π^{d/2})`
    normalizer: f64,
    /// Capacity of the unit ball, `2π^{d/2} / Γ(d/2 − 1)`.
    kappa: f64,
    /// Volume of the unit ball.
    c_vol: f64,
}

impl GreenKernel {
    pub fn new(d: usize) -> Result<Self> {
        if !(3..=8).contains(&d) {
            return config(format!("Green kernel needs 3 <= d <= 8, got {d}"));
        }
        let h = d as f64 / 2.0;
        let pi_h = std::f64::consts::PI.powf(h);
        let normalizer = gamma(h - 1.0) / (2.0 * pi_h);
        Ok(Self { d, normalizer, kappa: 1.0 / normalizer, c_vol: pi_h / gamma(h + 1.0) })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn c_vol(&self) -> f64 {
        self.c_vol
    }

    /// `G` as a function of the distance `s > 0`.
    #[inline]
    pub fn radial(&self, s: f64) -> f64 {
        self.normalizer * s.powi(2 - self.d as i32)
    }

    /// Exact capacity of a ball of radius `radius`.
    pub fn ball_capacity(&self, radius: f64) -> f64 {
        self.kappa * radius.powi(self.d as i32 - 2)
    }
}

/// `G(x, y) = normalizer · ‖x − y‖^{2−d}`.
pub fn green(k: &GreenKernel, x: &PointD, y: &PointD) -> Result<f64> {
    if x.dim() != k.dim() || y.dim() != k.dim() {
        return config("point dimension does not match the kernel");
    }
    let s = x.dist(y);
    if s == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(k.radial(s))
}

/// `G*(x) = ∫_{B(0,1)} G(x, z) dz` in `d = 4`.
///
/// Radial; `1/(4‖x‖²)` outside the unit ball and `1/2 − ‖x‖²/4` inside (the
/// potential of the uniform ball, obtained shell by shell).
pub fn g_star(k: &GreenKernel, x: &PointD) -> Result<f64> {
    if k.dim() != 4 {
        return config(format!("G* is defined for d = 4 only, kernel has d = {}", k.dim()));
    }
    if x.dim() != 4 {
        return config("point dimension does not match the kernel");
    }
    Ok(g_star_radial(x.norm()))
}

#[inline]
pub(crate) fn g_star_radial(s: f64) -> f64 {
    if s >= 1.0 {
        0.25 / (s * s)
    } else {
        0.5 - 0.25 * s * s
    }
}

/// Which estimator produced a [`CapacityEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hitting,
    EnergyLower,
    ZtUpper,
}

/// Systematic bias of an estimator relative to the true capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bias {
    /// Consistent up to the `O(ε_hit)` thickening of the target.
    SlightlyUpward,
    Lower,
    Upper,
}

impl Method {
    pub fn bias(&self) -> Bias {
        match self {
            Method::Hitting => Bias::SlightlyUpward,
            Method::EnergyLower => Bias::Lower,
            Method::ZtUpper => Bias::Upper,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hitting => "hitting",
            Method::EnergyLower => "energy_lower",
            Method::ZtUpper => "zt_upper",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hitting" => Ok(Method::Hitting),
            "energy_lower" => Ok(Method::EnergyLower),
            "zt_upper" => Ok(Method::ZtUpper),
            other => config(format!("unknown capacity method '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: Method,
    pub bias: Bias,
    pub n_samples: u64,
    pub params: BTreeMap<String, f64>,
}

impl CapacityEstimate {
    pub(crate) fn new(method: Method, value: f64, std_error: f64, n_samples: u64) -> Self {
        Self { value: value.max(0.0), std_error, method, bias: method.bias(), n_samples, params: BTreeMap::new() }
    }

    pub(crate) fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochastic::RngStream;
    use std::f64::consts::PI;

    #[test]
    fn kernel_constants() {
        for d in 3..=8 {
            let k = GreenKernel::new(d).unwrap();
            assert!((k.normalizer() * k.kappa() - 1.0).abs() < 1e-14);
        }
        let k4 = GreenKernel::new(4).unwrap();
        assert!((k4.c_vol() - PI * PI / 2.0).abs() < 1e-13);
        assert!((k4.kappa() - 2.0 * PI * PI).abs() < 1e-12);
        let k5 = GreenKernel::new(5).unwrap();
        assert!((k5.kappa() - 4.0 * PI * PI).abs() < 1e-12);
        let k3 = GreenKernel::new(3).unwrap();
        assert!((k3.c_vol() - 4.0 * PI / 3.0).abs() < 1e-13);
        assert!(GreenKernel::new(2).is_err());
    }

    #[test]
    fn green_values() {
        let k4 = GreenKernel::new(4).unwrap();
        let o = PointD::origin(4);
        let e = PointD::on_axis(4, 2, 1.0);
        assert!((green(&k4, &o, &e).unwrap() - 0.050_660_6).abs() < 1e-7);
        assert!((green(&k4, &o, &e).unwrap() - 1.0 / (2.0 * PI * PI)).abs() < 1e-15);
        let k5 = GreenKernel::new(5).unwrap();
        let o5 = PointD::origin(5);
        let g1 = green(&k5, &o5, &PointD::on_axis(5, 0, 1.0)).unwrap();
        assert!((g1 - 0.025_330).abs() < 1e-6);
        let g2 = green(&k5, &o5, &PointD::on_axis(5, 0, 2.0)).unwrap();
        assert!((g2 - 0.003_166_3).abs() < 1e-7);
        assert!((g2 - g1 / 8.0).abs() < 1e-16);
        assert!(matches!(green(&k5, &o5, &o5), Err(Error::Singularity)));
    }

    #[test]
    fn g_star_outside_ball() {
        let k4 = GreenKernel::new(4).unwrap();
        assert!((g_star(&k4, &PointD::on_axis(4, 0, 2.0)).unwrap() - 0.0625).abs() < 1e-15);
        let far = g_star(&k4, &PointD::on_axis(4, 1, 100.0)).unwrap();
        assert!((far * 1e4 - 0.25).abs() < 1e-3);
        assert!(g_star(&GreenKernel::new(5).unwrap(), &PointD::origin(5)).is_err());
    }

    #[test]
    fn g_star_on_and_inside_ball() {
        let k4 = GreenKernel::new(4).unwrap();
        let at0 = g_star(&k4, &PointD::origin(4)).unwrap();
        let at1 = g_star(&k4, &PointD::on_axis(4, 0, 1.0)).unwrap();
        assert!(at1 > 0.0 && at1 <= at0);
        // continuity across the sphere
        let inside = g_star(&k4, &PointD::on_axis(4, 0, 1.0 - 1e-9)).unwrap();
        assert!((inside - at1).abs() < 1e-8);
    }

    /// Radial quadrature oracle: shells of radius ρ contribute
    /// `σ₃ρ³ · G(max(ρ, s))` by Newton's theorem, integrated by composite
    /// Simpson on a fine grid.
    fn g_star_by_shells(s: f64) -> f64 {
        let n = 20_000;
        let h = 1.0 / n as f64;
        let f = |rho: f64| {
            if rho == 0.0 {
                0.0
            } else {
                2.0 * PI * PI * rho.powi(3) / (2.0 * PI * PI * rho.max(s).powi(2))
            }
        };
        let mut acc = f(0.0) + f(1.0);
        for i in 1..n {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn g_star_matches_shell_quadrature() {
        let k4 = GreenKernel::new(4).unwrap();
        for &s in &[0.0, 0.1, 0.37, 0.5, 0.9, 1.0, 1.5, 2.0, 7.0] {
            let exact = g_star(&k4, &PointD::on_axis(4, 3, s)).unwrap();
            let quad = g_star_by_shells(s);
            assert!((exact - quad).abs() <= 1e-3 * exact, "s={s}: {exact} vs {quad}");
        }
    }

    #[test]
    fn g_star_matches_monte_carlo_quadrature() {
        let k4 = GreenKernel::new(4).unwrap();
        let mut rng = RngStream::new(44, 0);
        let x = PointD::on_axis(4, 0, 2.0);
        let n = 200_000;
        let vals: crate::stats::Moments = (0..n)
            .map(|_| {
                let z = rng.in_ball(4, 1.0);
                k4.c_vol() * green(&k4, &x, &z).unwrap()
            })
            .collect();
        assert!((vals.mean - 0.0625).abs() < 3.0 * vals.std_error(), "{} ± {}", vals.mean, vals.std_error());
    }
}
