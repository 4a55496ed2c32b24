use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassIndex, ClassSpec};
use crate::capacity::{cap_hitting, GreenKernel, HittingParams, SausageTarget};
use crate::error::{config, Error, Result};
use crate::geometry::{Aabb, PointD};
use crate::percolation::{connection_time, Sausage};
use crate::stats::quantile;
use crate::stochastic::{sample_brownian, sample_poisson_cloud, BrownianPath, RngStream};

/// Offspring means beyond the last sampled type: `amp·(i+1)^α·e^{−rate·j}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub alpha: f64,
    pub amp: f64,
    pub rate: f64,
}

impl TailModel {
    pub const NONE: TailModel = TailModel { alpha: 0.0, amp: 0.0, rate: 1.0 };

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if self.amp == 0.0 {
            return 0.0;
        }
        self.amp * ((i + 1) as f64).powf(self.alpha) * (-self.rate * j as f64).exp()
    }

    /// `Σ_{j ≥ first} entry(i, j)`.
    pub fn mass_from(&self, i: usize, first: usize) -> f64 {
        if self.amp == 0.0 {
            return 0.0;
        }
        self.entry(i, first) / -(-self.rate).exp_m1()
    }
}

/// Mean offspring matrix over types `0..n_types` plus an analytic tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringKernel {
    pub n_types: usize,
    /// Row-major `K(i, j)`.
    pub entries: Vec<f64>,
    pub tail: TailModel,
    /// Quantile taken over outer samples (1 for hand-built kernels).
    pub quantile: f64,
    /// Outer samples that landed in each row.
    pub samples: Vec<u64>,
    /// Row had fewer samples than requested and may be borrowed from a
    /// neighboring row.
    pub unreliable: Vec<bool>,
    /// Mean over outer samples of the neighbor counts.
    pub mean: Vec<f64>,
}

impl OffspringKernel {
    pub fn new(n_types: usize, entries: Vec<f64>, tail: TailModel) -> Result<Self> {
        let k = Self {
            n_types,
            mean: entries.clone(),
            entries,
            tail,
            quantile: 1.0,
            samples: vec![0; n_types],
            unreliable: vec![false; n_types],
        };
        k.validate()?;
        Ok(k)
    }

    /// One type with Poisson(`mu`) offspring.
    pub fn single(mu: f64) -> Result<Self> {
        Self::new(1, vec![mu], TailModel::NONE)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_types;
        if n == 0 {
            return config("kernel needs at least one type");
        }
        if self.entries.len() != n * n
            || self.mean.len() != n * n
            || self.samples.len() != n
            || self.unreliable.len() != n
        {
            return config("kernel arrays do not match the number of types");
        }
        if self.entries.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return config("kernel entries must be finite and nonnegative");
        }
        let t = &self.tail;
        if !(t.rate > 0.0) || !(t.amp >= 0.0) || !t.amp.is_finite() || !t.alpha.is_finite() {
            return config("tail needs a positive rate and finite nonnegative amplitude");
        }
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n_types + j]
    }

    /// Matrix with all types beyond the sampled ones merged into one extra
    /// type `n_types`, whose own row repeats the last sampled row.
    pub fn extended(&self) -> (usize, Vec<f64>) {
        let n = self.n_types;
        let m = n + 1;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            let src = i.min(n - 1);
            for j in 0..n {
                out[i * m + j] = self.get(src, j);
            }
            out[i * m + n] = self.tail.mass_from(i, n);
        }
        (m, out)
    }

    /// Long-format CSV `field,i,j,value`; floats are written in shortest
    /// round-trip form so reading gives the identical kernel.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("field,i,j,value\n");
        let _ = writeln!(s, "n_types,,,{}", self.n_types);
        let _ = writeln!(s, "quantile,,,{}", self.quantile);
        let _ = writeln!(s, "tail_alpha,,,{}", self.tail.alpha);
        let _ = writeln!(s, "tail_amp,,,{}", self.tail.amp);
        let _ = writeln!(s, "tail_rate,,,{}", self.tail.rate);
        for i in 0..self.n_types {
            let _ = writeln!(s, "samples,{i},,{}", self.samples[i]);
            let _ = writeln!(s, "unreliable,{i},,{}", u8::from(self.unreliable[i]));
        }
        for (name, data) in [("k", &self.entries), ("mean", &self.mean)] {
            for i in 0..self.n_types {
                for j in 0..self.n_types {
                    let _ = writeln!(s, "{name},{i},{j},{}", data[i * self.n_types + j]);
                }
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, what: &str| Error::Parse(format!("kernel line {line}: {what}"));
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "field,i,j,value" => {}
            _ => return Err(Error::Parse("kernel CSV needs the header field,i,j,value".into())),
        }
        let mut scalars: BTreeMap<String, String> = BTreeMap::new();
        let mut cells: Vec<(String, usize, Option<usize>, String, usize)> = Vec::new();
        for (ln, line) in lines {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(bad(ln + 1, "expected 4 fields"));
            }
            let idx = |s: &str| -> Result<Option<usize>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(ln + 1, "bad index"))
                }
            };
            match (idx(parts[1])?, idx(parts[2])?) {
                (None, None) => {
                    scalars.insert(parts[0].to_string(), parts[3].to_string());
                }
                (Some(i), j) => cells.push((parts[0].to_string(), i, j, parts[3].to_string(), ln + 1)),
                _ => return Err(bad(ln + 1, "column index without row index")),
            }
        }
        let num = |key: &str| -> Result<f64> {
            scalars
                .get(key)
                .ok_or_else(|| Error::Parse(format!("kernel CSV lacks {key}")))?
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("kernel CSV: bad {key}")))
        };
        let n: usize = scalars
            .get("n_types")
            .ok_or_else(|| Error::Parse("kernel CSV lacks n_types".into()))?
            .parse()
            .map_err(|_| Error::Parse("kernel CSV: bad n_types".into()))?;
        if n == 0 || n > 1 << 16 {
            return Err(Error::Parse(format!("kernel CSV: unsupported n_types {n}")));
        }
        let mut k = Self {
            n_types: n,
            entries: vec![f64::NAN; n * n],
            tail: TailModel { alpha: num("tail_alpha")?, amp: num("tail_amp")?, rate: num("tail_rate")? },
            quantile: num("quantile")?,
            samples: vec![0; n],
            unreliable: vec![false; n],
            mean: vec![f64::NAN; n * n],
        };
        for (field, i, j, v, ln) in cells {
            if i >= n || j.is_some_and(|j| j >= n) {
                return Err(bad(ln, "index out of range"));
            }
            match (field.as_str(), j) {
                ("samples", None) => k.samples[i] = v.parse().map_err(|_| bad(ln, "bad count"))?,
                ("unreliable", None) => k.unreliable[i] = v == "1",
                ("k", Some(j)) => k.entries[i * n + j] = v.parse().map_err(|_| bad(ln, "bad value"))?,
                ("mean", Some(j)) => k.mean[i * n + j] = v.parse().map_err(|_| bad(ln, "bad value"))?,
                _ => return Err(bad(ln, "unknown field")),
            }
        }
        if k.mean.iter().any(|x| x.is_nan()) && k.entries.iter().all(|x| !x.is_nan()) {
            return Err(Error::Parse("kernel CSV: missing mean entries".into()));
        }
        k.validate().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lambda: f64,
    pub n_outer: usize,
    /// Fresh clouds per outer path; their counts are averaged.
    pub n_inner: usize,
    pub quantile: f64,
    /// Path step; `None` means `(r/4)²`.
    pub delta: Option<f64>,
    /// Paths that never move (the `t → 0` limit).
    pub frozen: bool,
    pub hitting: HittingParams,
    /// Rows with fewer outer samples are flagged.
    pub min_samples: usize,
    /// Clouds extend `√t·(√d + reach_sd)` beyond what a still path could
    /// touch.
    pub reach_sd: f64,
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            n_outer: 200,
            n_inner: 2,
            quantile: 0.95,
            delta: None,
            frozen: false,
            hitting: HittingParams::conditioned(1000),
            min_samples: 10,
            reach_sd: 3.0,
        }
    }
}

struct OuterSample {
    class: ClassIndex,
    neighbors: Vec<Vec<ClassIndex>>,
}

/// Empirical offspring kernel.
///
/// Each outer sample draws the path at the origin and types it; each inner
/// cloud is a Poisson cloud around it whose points are kept when their
/// sausage meets the origin's. `K(i, j)` is the `quantile` over outer samples
/// of type `i` of the mean count of type-`j` neighbors. Clouds for intensity
/// `λ` are unions of unit layers, the last thinned by a uniform mark, so a
/// larger intensity only ever adds points.
pub fn estimate_kernel(spec: &ClassSpec, params: &KernelParams, rng: &mut RngStream) -> Result<OffspringKernel> {
    if !(params.quantile > 0.5 && params.quantile < 1.0) {
        return config(format!("quantile must be in (0.5, 1), got {}", params.quantile));
    }
    if params.n_outer < 100 || params.n_inner == 0 {
        return config("need at least 100 outer samples and one inner cloud");
    }
    if !(params.lambda >= 0.0) || !params.lambda.is_finite() {
        return config("intensity must be nonnegative");
    }
    if !(spec.t > 0.0) || !(spec.r > 0.0) || !(4..=8).contains(&spec.d) {
        return config("typing needs t, r > 0 and 4 <= d <= 8");
    }
    let base = rng.next_u64();
    let kernel = GreenKernel::new(spec.d)?;
    let delta = params.delta.unwrap_or((spec.r / 4.0).powi(2));
    let outer: Vec<OuterSample> = (0..params.n_outer as u64)
        .into_par_iter()
        .map(|o| outer_sample(spec, params, &kernel, base, o, delta))
        .collect::<Result<_>>()?;

    let n_out = outer
        .iter()
        .flat_map(|s| std::iter::once(&s.class).chain(s.neighbors.iter().flatten()))
        .map(|c| match c {
            ClassIndex::CapOut(_, j2) => j2 + 1,
            ClassIndex::Cap(_) => 1,
        })
        .max()
        .unwrap_or(1);
    let n_types = outer
        .iter()
        .flat_map(|s| std::iter::once(&s.class).chain(s.neighbors.iter().flatten()))
        .map(|c| c.flatten(n_out) + 1)
        .max()
        .unwrap_or(1);

    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); n_types];
    for s in &outer {
        let mut counts = vec![0.0; n_types];
        for inner in &s.neighbors {
            for c in inner {
                counts[c.flatten(n_out)] += 1.0;
            }
        }
        counts.iter_mut().for_each(|c| *c /= params.n_inner as f64);
        rows[s.class.flatten(n_out)].push(counts);
    }
    let mut entries = vec![0.0; n_types * n_types];
    let mut mean = vec![0.0; n_types * n_types];
    let samples: Vec<u64> = rows.iter().map(|r| r.len() as u64).collect();
    let unreliable: Vec<bool> = rows.iter().map(|r| r.len() < params.min_samples).collect();
    for i in 0..n_types {
        let Some(src) = (0..=i).rev().chain(i + 1..n_types).find(|&k| !rows[k].is_empty()) else {
            continue;
        };
        for j in 0..n_types {
            let col: Vec<f64> = rows[src].iter().map(|c| c[j]).collect();
            entries[i * n_types + j] = quantile(&col, params.quantile);
            mean[i * n_types + j] = col.iter().sum::<f64>() / col.len() as f64;
        }
    }
    let tail = fit_tail(n_types, &entries, 0.5 * spec.t);
    let k = OffspringKernel { n_types, entries, tail, quantile: params.quantile, samples, unreliable, mean };
    k.validate()?;
    Ok(k)
}

fn outer_sample(
    spec: &ClassSpec,
    params: &KernelParams,
    kernel: &GreenKernel,
    base: u64,
    o: u64,
    delta: f64,
) -> Result<OuterSample> {
    let d = spec.d;
    let r = spec.r;
    let draw = |start: &PointD, parts: &[u64]| -> Result<BrownianPath> {
        if params.frozen {
            BrownianPath::frozen(*start, spec.t, delta)
        } else {
            sample_brownian(&mut RngStream::derive(base, parts), start, spec.t, delta)
        }
    };
    let typed = |path: &BrownianPath, parts: &[u64]| -> Result<ClassIndex> {
        let cap = if spec.needs_capacity() {
            let target = SausageTarget::new(path, spec.cap_radius_factor * r)?;
            cap_hitting(kernel, &target, &mut RngStream::derive(base, parts), &params.hitting)?.value
        } else {
            0.0
        };
        Ok(spec.classify(cap, path.max_excursion() + spec.out_radius_factor * r))
    };

    let path0 = draw(&PointD::origin(d), &[1, o])?;
    let class = typed(&path0, &[2, o])?;
    let s0 = Sausage::new(0, path0, r)?;
    let center = s0.path.bounds().center();
    let spread = (0..s0.path.len())
        .map(|k| crate::geometry::dist_sq(s0.path.coords(k), center.coords()))
        .fold(0.0, f64::max)
        .sqrt();
    let reach = if params.frozen { 0.0 } else { spec.t.sqrt() * ((d as f64).sqrt() + params.reach_sd) };
    let radius = spread + 2.0 * r + reach;
    let region = Aabb::new(
        center.add_scaled(&PointD::from_slice(&vec![1.0; d]), -radius),
        center.add_scaled(&PointD::from_slice(&vec![1.0; d]), radius),
    )?;
    let layers = params.lambda.ceil() as u64;

    let mut neighbors = Vec::with_capacity(params.n_inner);
    for inner in 0..params.n_inner as u64 {
        let mut found = Vec::new();
        for layer in 0..layers {
            let mut lr = RngStream::derive(base, &[3, o, inner, layer]);
            let cloud = sample_poisson_cloud(&mut lr, &region, 1.0)?;
            let marks: Vec<f64> = cloud.points.iter().map(|_| lr.uniform()).collect();
            for (k, (x, u)) in cloud.points.iter().zip(marks).enumerate() {
                if layer as f64 + u >= params.lambda || x.dist(&center) > radius {
                    continue;
                }
                let k = k as u64;
                let path = draw(x, &[4, o, inner, layer, k])?;
                let s = Sausage::new(1, path, r)?;
                if connection_time(&s0, &s)?.is_some() {
                    found.push(typed(&s.path, &[5, o, inner, layer, k])?);
                }
            }
        }
        neighbors.push(found);
    }
    Ok(OuterSample { class, neighbors })
}

/// Exponent and an upper-envelope amplitude of `K(i,j)·e^{rate·j}` against
/// `i + 1` over the upper half of the sampled columns.
fn fit_tail(n: usize, entries: &[f64], rate: f64) -> TailModel {
    let first = n / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..n {
        for j in first..n {
            let v = entries[i * n + j];
            if v > 0.0 {
                xs.push(((i + 1) as f64).ln());
                ys.push(v.ln() + rate * j as f64);
            }
        }
    }
    if xs.is_empty() {
        return TailModel { alpha: 0.0, amp: 0.0, rate };
    }
    let alpha = crate::stats::fit_line(&xs, &ys, None).map(|f| f.slope).filter(|a| a.is_finite()).unwrap_or(2.0);
    let amp = xs.iter().zip(&ys).map(|(x, y)| (y - alpha * x).exp()).fold(0.0, f64::max);
    TailModel { alpha, amp, rate }
}
