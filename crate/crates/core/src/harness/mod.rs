//! Critical-time sweeps: many configurations per radius, a robust summary
//! per radius and a scaling fit across radii.

mod config;

pub use config::{ExperimentConfig, ScalingModel, StepRule};

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::percolation::{configuration_crossing_time, sample_configuration, PercolationParams};
use crate::stats::{bootstrap_median_ci, fit_line, median};
use crate::stochastic::{derive_stream_id, RngStream};

/// Version of the CSV columns and JSON summary layout.
pub const SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: &str = "r,trial,tau_star,L,d,lambda,seed";

/// Crossing times of one `(r, L)` cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcEstimate {
    pub r: f64,
    pub box_side: f64,
    pub t_max: f64,
    /// Per trial: `τ*`, or `None` if the box was not crossed by `t_max`.
    pub taus: Vec<Option<f64>>,
    pub seeds: Vec<u64>,
    pub n_trials: usize,
    pub n_none: usize,
    /// Median crossing time; `None` when at least half the trials failed.
    pub median: Option<f64>,
    /// Bootstrap interval; an unbounded end is `None`.
    pub ci: (Option<f64>, Option<f64>),
    /// At least 20% of trials failed, so failures enter the median as `+∞`.
    pub flagged: bool,
    /// More than half the trials failed.
    pub underpowered: bool,
}

/// Seed of trial `trial` at radius index `r_index`.
pub fn trial_seed(seed: u64, r_index: usize, trial: usize) -> u64 {
    derive_stream_id(seed, &[r_index as u64, trial as u64])
}

/// Percolation parameters of one trial.
pub fn trial_params(cfg: &ExperimentConfig, r: f64, box_side: f64) -> PercolationParams {
    let unit = cfg.t_ref(r).sqrt();
    PercolationParams {
        d: cfg.d,
        lambda: cfg.lambda,
        t: cfg.t_max(r),
        r,
        delta: Some(cfg.delta.step(r)),
        refine_levels: cfg.refine_levels,
        box_side: box_side * unit,
        margin: cfg.margin_factor * cfg.c_b * unit,
    }
}

/// Runs the trials of one cell and summarizes them.
///
/// Failures are dropped from the median while they are under 20% of the
/// trials, otherwise counted as `+∞`. The data are sorted before resampling
/// so the summary does not depend on the order trials finished in.
pub fn estimate_tc(cfg: &ExperimentConfig, r_index: usize, box_side: f64) -> Result<TcEstimate> {
    cfg.validate()?;
    let Some(&r) = cfg.r.get(r_index) else {
        return config(format!("radius index {r_index} out of range"));
    };
    let params = trial_params(cfg, r, box_side);
    let seeds: Vec<u64> = (0..cfg.n_trials).map(|k| trial_seed(cfg.seed, r_index, k)).collect();
    let taus = seeds
        .par_iter()
        .map(|&s| {
            let c = sample_configuration(&params, s, &[])?;
            configuration_crossing_time(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(cfg, r_index, r, box_side, params.t, taus, seeds))
}

fn summarize(
    cfg: &ExperimentConfig,
    r_index: usize,
    r: f64,
    box_side: f64,
    t_max: f64,
    taus: Vec<Option<f64>>,
    seeds: Vec<u64>,
) -> TcEstimate {
    let n = taus.len();
    let n_none = taus.iter().filter(|t| t.is_none()).count();
    let flagged = 5 * n_none >= n;
    let underpowered = 2 * n_none > n;
    let mut data: Vec<f64> = if flagged {
        taus.iter().map(|t| t.unwrap_or(f64::INFINITY)).collect()
    } else {
        taus.iter().flatten().copied().collect()
    };
    data.sort_by(f64::total_cmp);
    let finite = |x: f64| x.is_finite().then_some(x);
    let (med, ci) = if data.is_empty() {
        (None, (None, None))
    } else {
        let b_seed = derive_stream_id(cfg.seed, &[0xb007, r_index as u64, box_side.to_bits()]);
        let (lo, hi) = bootstrap_median_ci(&data, cfg.bootstrap, cfg.ci_level, &mut RngStream::new(b_seed, 0));
        (finite(median(&data)), (finite(lo), finite(hi)))
    };
    TcEstimate { r, box_side, t_max, taus, seeds, n_trials: n, n_none, median: med, ci, flagged, underpowered }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub model: ScalingModel,
    /// Prefactor `A`.
    pub amplitude: f64,
    pub amplitude_se: f64,
    /// `β` of the power law.
    pub exponent: Option<f64>,
    pub exponent_se: Option<f64>,
    /// In the fitted coordinates, one per radius used.
    pub residuals: Vec<f64>,
    pub radii: Vec<f64>,
    /// `t̂ / √log(1/r)` per radius.
    pub log_root_ratios: Vec<f64>,
}

/// Least squares of `log t̂` on `log r` (power law) or of `t̂` on
/// `√log(1/r)` through the origin. Cells without a finite positive median
/// are skipped; at least three distinct radii must remain.
pub fn fit_scaling(estimates: &[TcEstimate], model: ScalingModel) -> Result<ScalingFit> {
    let used: Vec<(f64, f64)> =
        estimates.iter().filter_map(|e| e.median.filter(|&m| m > 0.0).map(|m| (e.r, m))).collect();
    let mut distinct: Vec<f64> = used.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if used.len() < 3 || distinct.len() < 3 {
        return config(format!("scaling fit needs 3 distinct radii with a finite median, got {}", distinct.len()));
    }
    let radii: Vec<f64> = used.iter().map(|p| p.0).collect();
    let log_root_ratios = used.iter().map(|&(r, m)| m / (1.0 / r).ln().sqrt()).collect();
    match model {
        ScalingModel::PowerLaw => {
            let x: Vec<f64> = used.iter().map(|p| p.0.ln()).collect();
            let y: Vec<f64> = used.iter().map(|p| p.1.ln()).collect();
            let f = fit_line(&x, &y, None).ok_or_else(|| crate::Error::Config("degenerate radii".into()))?;
            let amplitude = f.intercept.exp();
            Ok(ScalingFit {
                model,
                amplitude,
                amplitude_se: amplitude * f.intercept_se,
                exponent: Some(f.slope),
                exponent_se: Some(f.slope_se),
                residuals: f.residuals,
                radii,
                log_root_ratios,
            })
        }
        ScalingModel::LogRoot => {
            let x: Vec<f64> = used.iter().map(|p| (1.0 / p.0).ln().sqrt()).collect();
            let y: Vec<f64> = used.iter().map(|p| p.1).collect();
            let sxx: f64 = x.iter().map(|a| a * a).sum();
            let a = x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / sxx;
            let residuals: Vec<f64> = x.iter().zip(&y).map(|(u, v)| v - a * u).collect();
            let s2 = residuals.iter().map(|e| e * e).sum::<f64>() / (x.len() - 1) as f64;
            Ok(ScalingFit {
                model,
                amplitude: a,
                amplitude_se: (s2 / sxx).sqrt(),
                exponent: None,
                exponent_se: None,
                residuals,
                radii,
                log_root_ratios,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub box_side: f64,
    pub fit: Option<ScalingFit>,
    /// Why no fit was made.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub estimates: Vec<CellSummary>,
    pub fits: Vec<FitEntry>,
    pub underpowered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub r: f64,
    pub box_side: f64,
    pub t_max: f64,
    pub n_trials: usize,
    pub n_none: usize,
    pub median: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub flagged: bool,
    pub underpowered: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub estimates: Vec<TcEstimate>,
    pub summary: Summary,
    pub csv: String,
}

/// The full sweep over every `(L, r)` cell on a pool of `workers` threads
/// (`None`: the global pool). Outputs depend only on the configuration.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let work = || -> Result<Vec<TcEstimate>> {
        let mut out = Vec::new();
        for &l in &cfg.box_side {
            for ri in 0..cfg.r.len() {
                out.push(estimate_tc(cfg, ri, l)?);
            }
        }
        Ok(out)
    };
    let estimates = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| crate::Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let fits = cfg
        .box_side
        .iter()
        .map(|&l| {
            let cells: Vec<TcEstimate> = estimates.iter().filter(|e| e.box_side == l).cloned().collect();
            match fit_scaling(&cells, cfg.model) {
                Ok(f) => FitEntry { box_side: l, fit: Some(f), note: None },
                Err(e) => FitEntry { box_side: l, fit: None, note: Some(e.to_string()) },
            }
        })
        .collect();
    let cells = estimates
        .iter()
        .map(|e| CellSummary {
            r: e.r,
            box_side: e.box_side,
            t_max: e.t_max,
            n_trials: e.n_trials,
            n_none: e.n_none,
            median: e.median,
            ci_low: e.ci.0,
            ci_high: e.ci.1,
            flagged: e.flagged,
            underpowered: e.underpowered,
        })
        .collect();
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        underpowered: estimates.iter().any(|e| e.underpowered),
        estimates: cells,
        fits,
    };
    let csv = trials_csv(cfg, &estimates);
    Ok(ExperimentResult { estimates, summary, csv })
}

/// One row per trial; a missing crossing is written as `NONE`.
pub fn trials_csv(cfg: &ExperimentConfig, estimates: &[TcEstimate]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for e in estimates {
        for (k, (tau, seed)) in e.taus.iter().zip(&e.seeds).enumerate() {
            let tau = tau.map(|t| t.to_string()).unwrap_or_else(|| "NONE".into());
            let _ = writeln!(s, "{},{k},{tau},{},{},{},{seed}", e.r, e.box_side, cfg.d, cfg.lambda);
        }
    }
    s
}

/// Writes the CSV and JSON outputs named in the configuration.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    if let Some(p) = &cfg.output_csv {
        std::fs::write(p, &result.csv)?;
    }
    if let Some(p) = &cfg.output_json {
        std::fs::write(p, serde_json::to_string_pretty(&result.summary)? + "\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(r: f64, m: f64) -> TcEstimate {
        TcEstimate {
            r,
            box_side: 6.0,
            t_max: 1.0,
            taus: vec![Some(m)],
            seeds: vec![0],
            n_trials: 1,
            n_none: 0,
            median: Some(m),
            ci: (Some(m), Some(m)),
            flagged: false,
            underpowered: false,
        }
    }

    #[test]
    fn exact_power_law() {
        let e: Vec<_> = [0.05, 0.1, 0.2, 0.4].iter().map(|&r| est(r, r.powf(-0.5))).collect();
        let f = fit_scaling(&e, ScalingModel::PowerLaw).unwrap();
        assert!((f.exponent.unwrap() + 0.5).abs() < 1e-12);
        assert!((f.amplitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exact_log_root() {
        let e: Vec<_> = [0.01, 0.05, 0.1].iter().map(|&r| est(r, 3.0 * (1.0 / r).ln().sqrt())).collect();
        let f = fit_scaling(&e, ScalingModel::LogRoot).unwrap();
        assert!((f.amplitude - 3.0).abs() < 1e-12);
        assert!(f.log_root_ratios.iter().all(|x| (x - 3.0).abs() < 1e-12));
    }

    #[test]
    fn degenerate_design() {
        let e: Vec<_> = (0..4).map(|_| est(0.1, 2.0)).collect();
        assert!(fit_scaling(&e, ScalingModel::PowerLaw).is_err());
        assert!(fit_scaling(&e[..2], ScalingModel::PowerLaw).is_err());
    }

    #[test]
    fn summary_rules() {
        let cfg = ExperimentConfig::new(5, vec![0.1]);
        let few_none = summarize(
            &cfg,
            0,
            0.1,
            6.0,
            1.0,
            vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0), None],
            vec![0; 6],
        );
        assert!(!few_none.flagged && !few_none.underpowered);
        assert_eq!(few_none.median, Some(3.0));
        let some_none = summarize(&cfg, 0, 0.1, 6.0, 1.0, vec![Some(1.0), Some(2.0), Some(3.0), None], vec![0; 4]);
        assert!(some_none.flagged && !some_none.underpowered);
        assert_eq!(some_none.median, Some(2.5));
        let most_none = summarize(&cfg, 0, 0.1, 6.0, 1.0, vec![Some(1.0), None, None], vec![0; 3]);
        assert!(most_none.underpowered);
        assert_eq!(most_none.median, None);
    }

    #[test]
    fn median_interval_contains_median() {
        let cfg = ExperimentConfig::new(5, vec![0.1]);
        let taus = (0..30).map(|k| Some((k * 7 % 30) as f64)).collect();
        let e = summarize(&cfg, 0, 0.1, 6.0, 1.0, taus, vec![0; 30]);
        let m = e.median.unwrap();
        assert!(e.ci.0.unwrap() <= m && m <= e.ci.1.unwrap());
    }
}
