use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sausage_perc_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; sp_last_error_length() + 1];
    assert_eq!(unsafe { sp_last_error_message(buf.as_mut_ptr(), buf.len()) }, SpStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn read_back(f: impl Fn(*mut std::ffi::c_char, usize, *mut usize) -> SpStatus) -> String {
    let mut need = 0usize;
    assert_eq!(f(ptr::null_mut(), 0, &mut need), SpStatus::BufferTooSmall);
    let mut buf = vec![0 as std::ffi::c_char; need];
    assert_eq!(f(buf.as_mut_ptr(), need, &mut need), SpStatus::Ok);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_string()
}

#[test]
fn ball_capacity_matches_closed_form() {
    let mut v = 0.0;
    assert_eq!(unsafe { sp_ball_capacity(4, 2.0, &mut v) }, SpStatus::Ok);
    assert!((v - 2.0 * std::f64::consts::PI.powi(2) * 4.0).abs() < 1e-9);
    assert_eq!(sp_last_error_length(), 0);
}

#[test]
fn error_codes_and_messages() {
    let mut v = 0.0;
    assert_eq!(unsafe { sp_ball_capacity(2, 1.0, &mut v) }, SpStatus::Config);
    assert!(last_error().contains("dimension") || !last_error().is_empty());
    assert_eq!(unsafe { sp_ball_capacity(4, 1.0, ptr::null_mut()) }, SpStatus::NullPointer);
    assert!(last_error().contains("null"));

    let bad = CString::new("field,i,j,value\nnonsense\n").unwrap();
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { sp_kernel_from_csv(bad.as_ptr(), &mut k) }, SpStatus::Parse);
    assert!(k.is_null());

    let mut n = 0u64;
    assert_eq!(unsafe { sp_count_star_contours(12, &mut n) }, SpStatus::Config);
    assert_eq!(unsafe { sp_count_star_contours(6, &mut n) }, SpStatus::Ok);
    assert_eq!(n, 30);
}

#[test]
fn kernel_csv_round_trip_through_handles() {
    let mut k = ptr::null_mut();
    assert_eq!(unsafe { sp_kernel_single(1.75, &mut k) }, SpStatus::Ok);
    assert_eq!(unsafe { sp_kernel_n_types(k) }, 1);
    let csv = read_back(|b, c, n| unsafe { sp_kernel_to_csv(k, b, c, n) });
    let text = CString::new(csv.clone()).unwrap();
    let mut k2 = ptr::null_mut();
    assert_eq!(unsafe { sp_kernel_from_csv(text.as_ptr(), &mut k2) }, SpStatus::Ok);
    assert_eq!(read_back(|b, c, n| unsafe { sp_kernel_to_csv(k2, b, c, n) }), csv);

    let mut extinct = 0;
    assert_eq!(unsafe { sp_kernel_extinction_count(k2, 0, 50, 200, 3, &mut extinct) }, SpStatus::Ok);
    assert!(extinct < 200);
    assert_eq!(unsafe { sp_kernel_extinction_count(k2, 5, 50, 10, 3, &mut extinct) }, SpStatus::Config);
    unsafe {
        sp_kernel_free(k);
        sp_kernel_free(k2);
        sp_kernel_free(ptr::null_mut());
    }
}

#[test]
fn configuration_crossing() {
    let mut cfg = ptr::null_mut();
    let st = unsafe { sp_configuration_sample(4, 1.0, 0.5, 0.5, 0.01, 3.0, 0.5, 11, &mut cfg) };
    assert_eq!(st, SpStatus::Ok);
    assert!(unsafe { sp_configuration_len(cfg) } > 0);
    let (mut tau, mut crossed) = (f64::NAN, false);
    assert_eq!(unsafe { sp_configuration_crossing_time(cfg, &mut tau, &mut crossed) }, SpStatus::Ok);
    if crossed {
        assert!((0.0..=0.5 + 1e-12).contains(&tau));
    }
    let mut again = ptr::null_mut();
    unsafe { sp_configuration_sample(4, 1.0, 0.5, 0.5, 0.01, 3.0, 0.5, 11, &mut again) };
    let (mut tau2, mut crossed2) = (f64::NAN, false);
    unsafe { sp_configuration_crossing_time(again, &mut tau2, &mut crossed2) };
    assert_eq!(crossed, crossed2);
    assert!(!crossed || tau.to_bits() == tau2.to_bits());
    unsafe {
        sp_configuration_free(cfg);
        sp_configuration_free(again);
    }
    let mut bad = ptr::null_mut();
    assert_eq!(unsafe { sp_configuration_sample(4, -1.0, 0.5, 0.5, 0.0, 3.0, 0.5, 1, &mut bad) }, SpStatus::Config);
    assert!(bad.is_null());
}

#[test]
fn sausage_capacity_bounds_bracket() {
    let (mut lo, mut hi, mut se) = (0.0, 0.0, 0.0);
    unsafe {
        assert_eq!(sp_sausage_capacity(4, 1.0, 0.5, SpCapMethod::EnergyLower, 2000, 4, &mut lo, &mut se), SpStatus::Ok);
        let st = sp_sausage_capacity(4, 1.0, 0.5, SpCapMethod::ZtUpper, 0, 4, &mut hi, &mut se);
        assert_eq!(st, SpStatus::Ok, "{}", last_error());
    }
    assert!(lo > 0.0 && lo <= hi * 1.05, "lo={lo} hi={hi}");
}

#[test]
fn experiment_from_config_text() {
    let text = "d = 5\nlambda = 1\nr = 0.4, 0.5, 0.6\nbox_side = 4\nn_trials = 3\nseed = 9\nscale_const = 0.25\ndelta = 0.01\nbootstrap = 50\n";
    let c = CString::new(text).unwrap();
    let mut exp = ptr::null_mut();
    let st = unsafe { sp_experiment_run(c.as_ptr(), 1, &mut exp) };
    assert_eq!(st, SpStatus::Ok, "{}", last_error());
    let csv = read_back(|b, cap, n| unsafe { sp_experiment_csv(exp, b, cap, n) });
    assert_eq!(csv.lines().count(), 1 + 9);
    let json = read_back(|b, cap, n| unsafe { sp_experiment_summary_json(exp, b, cap, n) });
    assert!(json.contains("schema_version"));
    let _ = unsafe { sp_experiment_underpowered(exp) };
    unsafe { sp_experiment_free(exp) };

    let c = CString::new("d = 5\nbogus = 1\n").unwrap();
    let mut exp = ptr::null_mut();
    assert_eq!(unsafe { sp_experiment_run(c.as_ptr(), 0, &mut exp) }, SpStatus::Config);
}

#[test]
fn header_declares_the_api() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let h = std::fs::read_to_string(dir.join("include/sausage_perc.h")).unwrap();
    for name in [
        "sp_last_error_message",
        "sp_ball_capacity",
        "sp_sausage_capacity",
        "sp_configuration_sample",
        "sp_configuration_crossing_time",
        "sp_kernel_from_csv",
        "sp_kernel_extinction_count",
        "sp_count_star_contours",
        "sp_experiment_run",
        "typedef struct SpKernel SpKernel",
        "SP_STATUS_BUFFER_TOO_SMALL = 8",
    ] {
        assert!(h.contains(name), "header lacks {name}");
    }
}

/// Compiles and runs the C smoke program against the static library when a C
/// compiler and the archive are available.
#[test]
fn c_program_links_and_runs() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap().to_path_buf();
    let lib = profile_dir.join("libsausage_perc_ffi.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no C compiler or static library at {}", lib.display());
        return;
    }
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("smoke");
    let status = Command::new("cc")
        .arg(dir.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(dir.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&out).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "ok");
}
