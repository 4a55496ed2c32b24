//! C ABI for the sausage-perc library.
//!
//! Objects cross the boundary as opaque handles returned through an out
//! pointer and released by the matching `*_free`. Every fallible call
//! returns an [`SpStatus`]; on failure the message is kept per thread and can
//! be read with [`sp_last_error_message`]. Output parameters are written only
//! on success.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sausage_perc::branching::{extinction_frequency, OffspringKernel};
use sausage_perc::capacity::{
    cap_energy_lower, cap_hitting, cap_zt_upper, CapSampler, EnergyParams, GreenKernel, SausageTarget, ZtParams,
};
use sausage_perc::harness::{run_experiment, ExperimentConfig, ExperimentResult};
use sausage_perc::percolation::{
    configuration_crossing_time, count_star_contours, sample_configuration, Configuration, PercolationParams,
};
use sausage_perc::stochastic::RngStream;
use sausage_perc::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Parse = 3,
    NotFound = 4,
    Singular = 5,
    Explosion = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// Capacity estimator selector for [`sp_sausage_capacity`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpCapMethod {
    Hitting = 0,
    EnergyLower = 1,
    ZtUpper = 2,
}

/// A sampled sausage configuration.
pub struct SpConfiguration {
    inner: Configuration,
}

/// A multi-type offspring kernel.
pub struct SpKernel {
    inner: OffspringKernel,
}

/// A finished threshold sweep.
pub struct SpExperiment {
    inner: ExperimentResult,
    summary_json: String,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> SpStatus {
    match e {
        Error::Config(_) => SpStatus::Config,
        Error::Parse(_) | Error::Json(_) => SpStatus::Parse,
        Error::NotFound(_) => SpStatus::NotFound,
        Error::Singularity => SpStatus::Singular,
        Error::Explosion(_) => SpStatus::Explosion,
        Error::Io(_) => SpStatus::Io,
    }
}

fn fail(code: SpStatus, msg: impl Into<String>) -> SpStatus {
    set_error(msg.into());
    code
}

fn guard<F: FnOnce() -> Result<(), SpStatus>>(f: F) -> SpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            SpStatus::Ok
        }
        Ok(Err(code)) => code,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(SpStatus::Panic, msg)
        }
    }
}

trait Lift<T> {
    fn lift(self) -> Result<T, SpStatus>;
}

impl<T> Lift<T> for sausage_perc::Result<T> {
    fn lift(self) -> Result<T, SpStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), SpStatus> {
    if p.is_null() {
        return Err(fail(SpStatus::NullPointer, format!("{what} is null")));
    }
    Ok(())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, SpStatus> {
    non_null(p, what)?;
    CStr::from_ptr(p).to_str().map_err(|_| fail(SpStatus::Parse, format!("{what} is not valid UTF-8")))
}

/// Copies `s` with a trailing NUL into `buf` of `cap` bytes. `needed`, if not
/// null, receives the size including the NUL even when `buf` is too small.
unsafe fn write_str(s: &str, buf: *mut c_char, cap: usize, needed: *mut usize) -> Result<(), SpStatus> {
    let n = s.len() + 1;
    if !needed.is_null() {
        *needed = n;
    }
    if buf.is_null() || cap < n {
        return Err(fail(SpStatus::BufferTooSmall, format!("buffer needs {n} bytes")));
    }
    ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    Ok(())
}

/// Length in bytes of the last error message on this thread, excluding the
/// NUL; 0 when the last call succeeded.
#[no_mangle]
pub extern "C" fn sp_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies the last error message on this thread into `buf`.
///
/// # Safety
/// `buf` must point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_last_error_message(buf: *mut c_char, cap: usize) -> SpStatus {
    let msg = LAST_ERROR.with(|e| e.borrow().clone());
    let n = msg.len() + 1;
    if buf.is_null() || cap < n {
        return SpStatus::BufferTooSmall;
    }
    ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, msg.len());
    *buf.add(msg.len()) = 0;
    SpStatus::Ok
}

/// Newtonian capacity of a ball of `radius` in dimension `d`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_ball_capacity(d: usize, radius: f64, out: *mut f64) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        if !(radius >= 0.0) {
            return Err(fail(SpStatus::Config, "radius must be nonnegative"));
        }
        *out = GreenKernel::new(d).lift()?.ball_capacity(radius);
        Ok(())
    })
}

/// Estimates the capacity of one Wiener sausage of duration `t` and radius
/// `r`, the path drawn from `seed`. `n` is the number of walks (hitting) or
/// pairs (energy); it is ignored by the upper bound, which needs `d = 4`.
///
/// # Safety
/// `value` and `std_error` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_sausage_capacity(
    d: usize,
    t: f64,
    r: f64,
    method: SpCapMethod,
    n: usize,
    seed: u64,
    value: *mut f64,
    std_error: *mut f64,
) -> SpStatus {
    guard(|| {
        non_null(value, "value")?;
        non_null(std_error, "std_error")?;
        let k = GreenKernel::new(d).lift()?;
        let smp = CapSampler::new(d, t, r, seed);
        let path = smp.path(0).lift()?;
        let mut rng = RngStream::derive(seed, &[0xca9, 0]);
        let est = match method {
            SpCapMethod::Hitting => {
                let mut p = smp.hitting;
                p.n_walks = n;
                cap_hitting(&k, &SausageTarget::new(&path, r).lift()?, &mut rng, &p)
            }
            SpCapMethod::EnergyLower => cap_energy_lower(&k, &path, r, &EnergyParams { n_pairs: n }, &mut rng),
            SpCapMethod::ZtUpper => cap_zt_upper(&k, &path, r, &ZtParams::default()),
        }
        .lift()?;
        *value = est.value;
        *std_error = est.std_error;
        Ok(())
    })
}

/// Samples a Poisson configuration of sausages in `[0, box_side]^d` with
/// starting points in the box inflated by `margin`. A nonpositive `delta`
/// selects the default path step.
///
/// # Safety
/// `out` must be a valid pointer; the handle written there is owned by the
/// caller and released with [`sp_configuration_free`].
#[no_mangle]
pub unsafe extern "C" fn sp_configuration_sample(
    d: usize,
    lambda: f64,
    t: f64,
    r: f64,
    delta: f64,
    box_side: f64,
    margin: f64,
    seed: u64,
    out: *mut *mut SpConfiguration,
) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = PercolationParams {
            d,
            lambda,
            t,
            r,
            delta: (delta > 0.0).then_some(delta),
            refine_levels: 0,
            box_side,
            margin,
        };
        let inner = sample_configuration(&params, seed, &[]).lift()?;
        *out = Box::into_raw(Box::new(SpConfiguration { inner }));
        Ok(())
    })
}

/// Number of sausages, or 0 for a null handle.
///
/// # Safety
/// `cfg` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_configuration_len(cfg: *const SpConfiguration) -> usize {
    cfg.as_ref().map_or(0, |c| c.inner.len())
}

/// First time the sausages connect the two faces orthogonal to the first
/// axis. `crossed` is set to false, and `tau` left untouched, when they never
/// do within the horizon.
///
/// # Safety
/// `cfg` must be a live handle; `tau` and `crossed` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sp_configuration_crossing_time(
    cfg: *const SpConfiguration,
    tau: *mut f64,
    crossed: *mut bool,
) -> SpStatus {
    guard(|| {
        non_null(cfg, "configuration")?;
        non_null(tau, "tau")?;
        non_null(crossed, "crossed")?;
        match configuration_crossing_time(&(*cfg).inner).lift()? {
            Some(v) => {
                *tau = v;
                *crossed = true;
            }
            None => *crossed = false,
        }
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_configuration_free(cfg: *mut SpConfiguration) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Single-type kernel with Poisson(`mu`) offspring.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_single(mu: f64, out: *mut *mut SpKernel) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        let inner = OffspringKernel::single(mu).lift()?;
        *out = Box::into_raw(Box::new(SpKernel { inner }));
        Ok(())
    })
}

/// Parses a kernel from its CSV text.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_from_csv(csv: *const c_char, out: *mut *mut SpKernel) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        let text = read_str(csv, "csv")?;
        let inner = OffspringKernel::from_csv(text).lift()?;
        *out = Box::into_raw(Box::new(SpKernel { inner }));
        Ok(())
    })
}

/// Serializes a kernel to CSV. Call with a null `buf` to learn the size.
///
/// # Safety
/// `kernel` must be a live handle and `buf` point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_to_csv(
    kernel: *const SpKernel,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SpStatus {
    guard(|| {
        non_null(kernel, "kernel")?;
        write_str(&(*kernel).inner.to_csv(), buf, cap, needed)
    })
}

/// Number of types, or 0 for a null handle.
///
/// # Safety
/// `kernel` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_n_types(kernel: *const SpKernel) -> usize {
    kernel.as_ref().map_or(0, |k| k.inner.n_types)
}

/// Runs `runs` Galton-Watson processes from one individual of `root_type`
/// for at most `max_gen` generations and counts those that die out.
///
/// # Safety
/// `kernel` must be a live handle and `extinct` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_extinction_count(
    kernel: *const SpKernel,
    root_type: usize,
    max_gen: usize,
    runs: u64,
    seed: u64,
    extinct: *mut u64,
) -> SpStatus {
    guard(|| {
        non_null(kernel, "kernel")?;
        non_null(extinct, "extinct")?;
        *extinct = extinction_frequency(&(*kernel).inner, root_type, max_gen, runs, seed).lift()?;
        Ok(())
    })
}

/// # Safety
/// `kernel` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_kernel_free(kernel: *mut SpKernel) {
    if !kernel.is_null() {
        drop(Box::from_raw(kernel));
    }
}

/// Number of *-contours of `n` sites around the origin, `4 ≤ n ≤ 9`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_count_star_contours(n: usize, out: *mut u64) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = count_star_contours(n).lift()?;
        Ok(())
    })
}

/// Runs a threshold sweep from the text of a key-value configuration file.
/// `workers == 0` uses the global thread pool.
///
/// # Safety
/// `config` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_run(
    config: *const c_char,
    workers: usize,
    out: *mut *mut SpExperiment,
) -> SpStatus {
    guard(|| {
        non_null(out, "out")?;
        let cfg = ExperimentConfig::parse(read_str(config, "config")?).lift()?;
        let inner = run_experiment(&cfg, (workers > 0).then_some(workers)).lift()?;
        let summary_json =
            serde_json::to_string_pretty(&inner.summary).map_err(|e| fail(SpStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(SpExperiment { inner, summary_json }));
        Ok(())
    })
}

/// Per-trial CSV of a sweep.
///
/// # Safety
/// `exp` must be a live handle and `buf` point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_csv(
    exp: *const SpExperiment,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SpStatus {
    guard(|| {
        non_null(exp, "experiment")?;
        write_str(&(*exp).inner.csv, buf, cap, needed)
    })
}

/// JSON summary of a sweep.
///
/// # Safety
/// `exp` must be a live handle and `buf` point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_summary_json(
    exp: *const SpExperiment,
    buf: *mut c_char,
    cap: usize,
    needed: *mut usize,
) -> SpStatus {
    guard(|| {
        non_null(exp, "experiment")?;
        write_str(&(*exp).summary_json, buf, cap, needed)
    })
}

/// Whether any cell of the sweep had too many trials without a crossing.
///
/// # Safety
/// `exp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_underpowered(exp: *const SpExperiment) -> bool {
    exp.as_ref().is_some_and(|e| e.inner.summary.underpowered)
}

/// # Safety
/// `exp` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sp_experiment_free(exp: *mut SpExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}
