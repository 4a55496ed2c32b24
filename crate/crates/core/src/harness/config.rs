use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};

/// How the path step is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `(r/4)²`.
    Auto,
    Fixed(f64),
}

impl StepRule {
    pub fn step(&self, r: f64) -> f64 {
        match *self {
            StepRule::Auto => (r / 4.0).powi(2),
            StepRule::Fixed(x) => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    /// `t̂ = A·r^β`.
    PowerLaw,
    /// `t̂ = A·√log(1/r)`.
    LogRoot,
}

impl std::str::FromStr for ScalingModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power_law" => Ok(ScalingModel::PowerLaw),
            "log_root" => Ok(ScalingModel::LogRoot),
            _ => config(format!("unknown scaling model {s:?} (power_law or log_root)")),
        }
    }
}

/// An r-sweep of critical-time estimates.
///
/// Read from a flat `key = value` file; `#` starts a comment, lists are
/// comma separated, unknown or repeated keys are errors.
///
/// | key | default | meaning |
/// |---|---|---|
/// | `d` | required | dimension, 4..=8 |
/// | `r` | required | radii in (0, 1) |
/// | `lambda` | 1 | intensity |
/// | `box_side` | 6 | one or more box sides `L`, in units of `√t_ref` |
/// | `c_b` | 1 | ball radius factor; the start margin is `margin_factor·c_b·√t_ref` |
/// | `margin_factor` | 2 | |
/// | `delta` | auto | path step, `auto` = `(r/4)²` |
/// | `refine_levels` | 0 | bridge refinements per path |
/// | `n_trials` | 20 | configurations per `(r, L)` |
/// | `seed` | 0 | |
/// | `scale_const` | 1 | `t_ref = scale_const·r^{(4−d)/2}` (`√log(1/r)` in `d = 4`) |
/// | `t_safety` | 8 | horizon `t_max = t_safety·t_ref`, rounded up to the step grid |
/// | `bootstrap` | 1000 | resamples for the median interval |
/// | `ci_level` | 0.95 | |
/// | `model` | by `d` | `power_law` (`d ≥ 5`) or `log_root` (`d = 4`) |
/// | `output_csv` | none | trial table |
/// | `output_json` | none | summary |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub d: usize,
    pub lambda: f64,
    pub r: Vec<f64>,
    pub box_side: Vec<f64>,
    pub c_b: f64,
    pub margin_factor: f64,
    pub delta: StepRule,
    pub refine_levels: u32,
    pub n_trials: usize,
    pub seed: u64,
    pub scale_const: f64,
    pub t_safety: f64,
    pub bootstrap: usize,
    pub ci_level: f64,
    pub model: ScalingModel,
    pub output_csv: Option<PathBuf>,
    pub output_json: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults for everything but `d` and `r`.
    pub fn new(d: usize, r: Vec<f64>) -> Self {
        Self {
            d,
            lambda: 1.0,
            r,
            box_side: vec![6.0],
            c_b: 1.0,
            margin_factor: 2.0,
            delta: StepRule::Auto,
            refine_levels: 0,
            n_trials: 20,
            seed: 0,
            scale_const: 1.0,
            t_safety: 8.0,
            bootstrap: 1000,
            ci_level: 0.95,
            model: if d == 4 { ScalingModel::LogRoot } else { ScalingModel::PowerLaw },
            output_csv: None,
            output_json: None,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return config(format!("line {}: expected key = value", n + 1));
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !seen.insert(k.clone()) {
                return config(format!("line {}: key {k:?} given twice", n + 1));
            }
            pairs.push((n + 1, k, v));
        }
        let get = |key: &str| pairs.iter().find(|(_, k, _)| k == key).map(|(n, _, v)| (*n, v.as_str()));
        let num = |n: usize, key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>().map_err(|_| Error::Config(format!("line {n}: {key} = {v:?} is not a number")))
        };
        let int = |n: usize, key: &str, v: &str| -> Result<u64> {
            v.parse::<u64>().map_err(|_| Error::Config(format!("line {n}: {key} = {v:?} is not a nonnegative integer")))
        };
        let list = |n: usize, key: &str, v: &str| -> Result<Vec<f64>> {
            v.split(',').map(|x| num(n, key, x.trim())).collect()
        };

        let Some((n, d)) = get("d") else { return config("missing key d") };
        let d = int(n, "d", d)? as usize;
        let Some((n, r)) = get("r") else { return config("missing key r") };
        let mut cfg = Self::new(d, list(n, "r", r)?);
        for (n, key, v) in &pairs {
            let (n, v) = (*n, v.as_str());
            match key.as_str() {
                "d" | "r" => {}
                "lambda" => cfg.lambda = num(n, key, v)?,
                "box_side" => cfg.box_side = list(n, key, v)?,
                "c_b" => cfg.c_b = num(n, key, v)?,
                "margin_factor" => cfg.margin_factor = num(n, key, v)?,
                "delta" => cfg.delta = if v == "auto" { StepRule::Auto } else { StepRule::Fixed(num(n, key, v)?) },
                "refine_levels" => cfg.refine_levels = int(n, key, v)? as u32,
                "n_trials" => cfg.n_trials = int(n, key, v)? as usize,
                "seed" => cfg.seed = int(n, key, v)?,
                "scale_const" => cfg.scale_const = num(n, key, v)?,
                "t_safety" => cfg.t_safety = num(n, key, v)?,
                "bootstrap" => cfg.bootstrap = int(n, key, v)? as usize,
                "ci_level" => cfg.ci_level = num(n, key, v)?,
                "model" => cfg.model = v.parse()?,
                "output_csv" => cfg.output_csv = Some(PathBuf::from(v)),
                "output_json" => cfg.output_json = Some(PathBuf::from(v)),
                _ => return config(format!("line {n}: unknown key {key:?}")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(4..=8).contains(&self.d) {
            return config(format!("d must be in 4..=8, got {}", self.d));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return config(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.r.is_empty() || self.r.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return config("every r must lie in (0, 1)");
        }
        if self.box_side.is_empty() || self.box_side.iter().any(|&l| !(l >= 4.0) || !l.is_finite()) {
            return config("every box_side must be at least 4");
        }
        if self.n_trials == 0 {
            return config("n_trials must be at least 1");
        }
        if !(self.c_b > 0.0) || !(self.margin_factor >= 0.0) || !(self.scale_const > 0.0) || !(self.t_safety > 0.0) {
            return config("c_b, scale_const and t_safety must be positive, margin_factor nonnegative");
        }
        if let StepRule::Fixed(x) = self.delta {
            if !(x > 0.0) {
                return config("delta must be positive");
            }
        }
        if self.bootstrap == 0 || !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return config("bootstrap must be positive and ci_level in (0, 1)");
        }
        Ok(())
    }

    /// Predicted critical-time scale at radius `r`.
    pub fn t_ref(&self, r: f64) -> f64 {
        let shape = if self.d == 4 { (1.0 / r).ln().sqrt() } else { r.powf((4.0 - self.d as f64) / 2.0) };
        self.scale_const * shape
    }

    /// Horizon for radius `r`: `t_safety·t_ref` rounded up to a whole
    /// number of steps, so horizons of different safety factors share a grid.
    pub fn t_max(&self, r: f64) -> f64 {
        let step = self.delta.step(r);
        (self.t_safety * self.t_ref(r) / step).ceil().max(1.0) * step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults_and_comments() {
        let c = ExperimentConfig::parse("# sweep\nd = 5\nr = 0.1, 0.2 # radii\nn_trials=3\ndelta = 0.01\n").unwrap();
        assert_eq!(c.d, 5);
        assert_eq!(c.r, vec![0.1, 0.2]);
        assert_eq!(c.n_trials, 3);
        assert_eq!(c.delta, StepRule::Fixed(0.01));
        assert_eq!(c.lambda, 1.0);
        assert_eq!(c.model, ScalingModel::PowerLaw);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "d = 5\nr = 0.1\nbogus = 1\n",
            "d = 5\nr = 0.1\nr = 0.2\n",
            "d = 5\n",
            "d = 5\nr = 1.5\n",
            "d = 5\nr = 0.1\nbox_side = 3\n",
            "d = 5\nr = 0.1\nlambda = 0\n",
            "d = 5\nr = 0.1\nn_trials = 0\n",
            "d = 5\nr = 0.1\nmodel = cubic\n",
            "d = 5\nr = abc\n",
            "d = 5\nr = 0.1\nnonsense line\n",
        ] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn horizon_on_step_grid() {
        let mut c = ExperimentConfig::new(5, vec![0.2]);
        c.delta = StepRule::Fixed(0.03);
        let t = c.t_max(0.2);
        assert!(t >= 8.0 * 0.2f64.powf(-0.5));
        assert!(((t / 0.03) - (t / 0.03).round()).abs() < 1e-9);
    }
}
