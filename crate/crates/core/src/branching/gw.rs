use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::OffspringKernel;
use crate::error::{config, Error, Result};
use crate::stats::fit_line;
use crate::stochastic::RngStream;

/// Expected offspring per generation above which a run is abandoned.
pub const EXPLOSION_GUARD: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchingState {
    /// Last generation simulated.
    pub generation: usize,
    /// Population by type in that generation (the last type is the tail).
    pub counts: Vec<u64>,
    /// Total population of every generation from the root on.
    pub totals: Vec<u64>,
    /// First generation `n ≥ 1` with no individuals.
    pub extinction_time: Option<usize>,
}

/// Runs the branching process from one individual of `root_type` until it
/// dies out or `max_gen` generations have been produced. Each type's
/// offspring count is Poisson with mean `Σ_i Z_n(i)·K(i, j)`.
pub fn simulate_gw(
    kernel: &OffspringKernel,
    root_type: usize,
    max_gen: usize,
    rng: &mut RngStream,
) -> Result<BranchingState> {
    if max_gen == 0 {
        return config("max_gen must be at least 1");
    }
    let (m, mat) = kernel.extended();
    if root_type >= m {
        return config(format!("root type {root_type} outside 0..{m}"));
    }
    let mut counts = vec![0u64; m];
    counts[root_type] = 1;
    let mut totals = vec![1u64];
    let mut means = vec![0.0; m];
    for n in 0..max_gen {
        means.iter_mut().for_each(|x| *x = 0.0);
        for (i, &z) in counts.iter().enumerate() {
            if z > 0 {
                for j in 0..m {
                    means[j] += z as f64 * mat[i * m + j];
                }
            }
        }
        let expected: f64 = means.iter().sum();
        if expected > EXPLOSION_GUARD {
            return Err(Error::Explosion(expected));
        }
        for (c, &mu) in counts.iter_mut().zip(&means) {
            *c = rng.poisson(mu);
        }
        let total = counts.iter().sum();
        totals.push(total);
        if total == 0 {
            return Ok(BranchingState { generation: n + 1, counts, totals, extinction_time: Some(n + 1) });
        }
    }
    Ok(BranchingState { generation: max_gen, counts, totals, extinction_time: None })
}

/// Extinct runs out of `runs`, run `k` using stream `(seed, k)`. Runs that
/// trip the explosion guard count as surviving.
pub fn extinction_frequency(
    kernel: &OffspringKernel,
    root_type: usize,
    max_gen: usize,
    runs: u64,
    seed: u64,
) -> Result<u64> {
    (0..runs)
        .into_par_iter()
        .map(|k| match simulate_gw(kernel, root_type, max_gen, &mut RngStream::derive(seed, &[k])) {
            Ok(s) => Ok(u64::from(s.extinction_time.is_some())),
            Err(Error::Explosion(_)) => Ok(0),
            Err(e) => Err(e),
        })
        .sum::<Result<u64>>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub verdict: Verdict,
    /// `(K^k 𝟙)(i)` for `k = 0, 1, …`.
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Geometric ratio fitted to the last ten terms.
    pub ratio: Option<f64>,
}

/// Partial sums of `Σ_k (K^k 𝟙)(i)` on the kernel with its tail type.
///
/// Stops early when a term exceeds `budget` (divergent) or vanishes
/// (convergent). Otherwise the last ten terms decide: a fitted ratio below
/// `1 − 10⁻³` is convergent, above `1 + 10⁻³` divergent.
pub fn series_check(kernel: &OffspringKernel, i: usize, k_max: usize, budget: f64) -> Result<SeriesReport> {
    if k_max == 0 {
        return config("k_max must be at least 1");
    }
    let (m, mat) = kernel.extended();
    if i >= m {
        return config(format!("type {i} outside 0..{m}"));
    }
    let mut v = vec![1.0; m];
    let mut terms = vec![1.0];
    let mut partial_sums = vec![1.0];
    let finish =
        |verdict, terms: Vec<f64>, partial_sums, ratio| Ok(SeriesReport { verdict, terms, partial_sums, ratio });
    for _ in 0..k_max {
        v = (0..m).map(|a| (0..m).map(|b| mat[a * m + b] * v[b]).sum()).collect();
        let term = v[i];
        terms.push(term);
        partial_sums.push(partial_sums.last().unwrap() + term);
        if !(term <= budget) {
            return finish(Verdict::Divergent, terms, partial_sums, None);
        }
        if term == 0.0 {
            return finish(Verdict::Convergent, terms, partial_sums, Some(0.0));
        }
    }
    let tail = &terms[terms.len().saturating_sub(10)..];
    if tail.len() < 3 {
        return finish(Verdict::Inconclusive, terms, partial_sums, None);
    }
    let xs: Vec<f64> = (0..tail.len()).map(|k| k as f64).collect();
    let ys: Vec<f64> = tail.iter().map(|t| t.ln()).collect();
    let ratio = fit_line(&xs, &ys, None).map(|f| f.slope.exp());
    let verdict = match ratio {
        Some(q) if q < 1.0 - 1e-3 => Verdict::Convergent,
        Some(q) if q > 1.0 + 1e-3 => Verdict::Divergent,
        _ => Verdict::Inconclusive,
    };
    finish(verdict, terms, partial_sums, ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::TailModel;

    #[test]
    fn zero_kernel_dies_in_one_generation() {
        let k = OffspringKernel::single(0.0).unwrap();
        let s = simulate_gw(&k, 0, 5, &mut RngStream::new(1, 1)).unwrap();
        assert_eq!(s.extinction_time, Some(1));
        assert_eq!(s.totals, vec![1, 0]);
    }

    #[test]
    fn subcritical_dies_out() {
        let k = OffspringKernel::single(0.5).unwrap();
        let ext = extinction_frequency(&k, 0, 1000, 2000, 7).unwrap();
        assert!(ext >= 1998);
    }

    #[test]
    fn explosion_guard_trips() {
        let k = OffspringKernel::single(50.0).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut tripped = false;
        for _ in 0..20 {
            if let Err(Error::Explosion(x)) = simulate_gw(&k, 0, 100, &mut rng) {
                assert!(x > EXPLOSION_GUARD);
                tripped = true;
                break;
            }
        }
        assert!(tripped);
    }

    #[test]
    fn bad_arguments() {
        let k = OffspringKernel::single(1.0).unwrap();
        assert!(simulate_gw(&k, 0, 0, &mut RngStream::new(0, 0)).is_err());
        assert!(simulate_gw(&k, 5, 1, &mut RngStream::new(0, 0)).is_err());
        assert!(series_check(&k, 0, 0, 1e6).is_err());
    }

    #[test]
    fn geometric_series() {
        let k = OffspringKernel::new(2, vec![0.5, 0.0, 0.0, 0.5], TailModel::NONE).unwrap();
        let rep = series_check(&k, 0, 200, 1e12).unwrap();
        assert_eq!(rep.verdict, Verdict::Convergent);
        assert!((rep.partial_sums.last().unwrap() - 2.0).abs() < 1e-12);
        assert!((rep.ratio.unwrap() - 0.5).abs() < 1e-9);

        let k = OffspringKernel::new(2, vec![2.0, 0.0, 0.0, 2.0], TailModel::NONE).unwrap();
        assert_eq!(series_check(&k, 0, 50, 1e300).unwrap().verdict, Verdict::Divergent);
        assert_eq!(series_check(&k, 0, 50, 100.0).unwrap().verdict, Verdict::Divergent);
    }
}
