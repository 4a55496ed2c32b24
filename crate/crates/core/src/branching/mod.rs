//! Multitype Galton-Watson domination of the cluster of the origin.
//!
//! Poisson points are typed by the capacity of their sausage (and, in
//! `d = 4`, by its outradius). [`estimate_kernel`] turns simulated
//! neighborhoods of a sausage at the origin into a mean-offspring matrix,
//! [`simulate_gw`] runs the branching process it defines and
//! [`series_check`] tests the summability criterion for extinction.

mod gw;
mod kernel;

pub use gw::{extinction_frequency, series_check, simulate_gw, BranchingState, SeriesReport, Verdict};
pub use kernel::{estimate_kernel, KernelParams, OffspringKernel, TailModel};

use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Type of a Poisson point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassIndex {
    /// Capacity class `j`.
    Cap(u32),
    /// Capacity class `j₁` and outradius class `j₂`.
    CapOut(u32, u32),
}

impl ClassIndex {
    /// Single type index; pairs are flattened as `j₁·n_out + j₂`.
    pub fn flatten(&self, n_out: u32) -> usize {
        match *self {
            ClassIndex::Cap(j) => j as usize,
            ClassIndex::CapOut(j1, j2) => j1 as usize * n_out as usize + j2.min(n_out.saturating_sub(1)) as usize,
        }
    }
}

/// How sausages are typed.
///
/// The capacity is that of the sausage of radius `cap_radius_factor·r`; in
/// `d = 4` the outradius is that of the sausage of radius
/// `out_radius_factor·r`. A class `j` covers `[j, j+1)·unit`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub d: usize,
    pub t: f64,
    pub r: f64,
    pub cap_unit: f64,
    /// `None` outside `d = 4`.
    pub out_unit: Option<f64>,
    pub cap_radius_factor: f64,
    pub out_radius_factor: f64,
}

impl ClassSpec {
    /// Units `t·r^{d−4}` for `d ≥ 5`; `t/|log r|` for the capacity and `t`
    /// for the outradius in `d = 4`.
    pub fn standard(d: usize, t: f64, r: f64) -> Result<Self> {
        if !(4..=8).contains(&d) {
            return config(format!("typing needs 4 <= d <= 8, got {d}"));
        }
        if !(t > 0.0) || !(r > 0.0) {
            return config("t and r must be positive");
        }
        let (cap_unit, out_unit) = if d == 4 {
            if !(r < 1.0) {
                return config(format!("d = 4 typing needs r < 1, got {r}"));
            }
            (t / r.ln().abs(), Some(t))
        } else {
            (t * r.powi(d as i32 - 4), None)
        };
        Ok(Self { d, t, r, cap_unit, out_unit, cap_radius_factor: 3.0, out_radius_factor: 2.0 })
    }

    /// Every sausage in type 0; no capacities are estimated.
    pub fn single(d: usize, t: f64, r: f64) -> Self {
        Self { d, t, r, cap_unit: f64::INFINITY, out_unit: None, cap_radius_factor: 3.0, out_radius_factor: 2.0 }
    }

    pub fn needs_capacity(&self) -> bool {
        self.cap_unit.is_finite()
    }

    pub fn classify(&self, cap: f64, outradius: f64) -> ClassIndex {
        let bin = |x: f64, unit: f64| {
            if unit.is_finite() {
                (x / unit).floor().clamp(0.0, u32::MAX as f64) as u32
            } else {
                0
            }
        };
        let j = bin(cap, self.cap_unit);
        match self.out_unit {
            Some(u) => ClassIndex::CapOut(j, bin(outradius, u)),
            None => ClassIndex::Cap(j),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_and_bins() {
        let s = ClassSpec::standard(5, 8.0, 0.5).unwrap();
        assert_eq!(s.cap_unit, 4.0);
        assert_eq!(s.classify(11.9, 0.0), ClassIndex::Cap(2));
        let s = ClassSpec::standard(4, 2.0, (-2.0f64).exp()).unwrap();
        assert!((s.cap_unit - 1.0).abs() < 1e-12);
        assert_eq!(s.classify(3.5, 4.1), ClassIndex::CapOut(3, 2));
        assert_eq!(ClassIndex::CapOut(3, 2).flatten(4), 14);
        assert!(ClassSpec::standard(4, 1.0, 1.5).is_err());
        assert_eq!(ClassSpec::single(5, 1.0, 0.1).classify(1e9, 1e9), ClassIndex::Cap(0));
    }
}
