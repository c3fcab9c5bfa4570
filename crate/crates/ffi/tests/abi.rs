use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use eclipsewatch_ffi::*;

fn last_error() -> String {
    let p = ew_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn fast_config() -> EwDetectConfig {
    EwDetectConfig { quantile_paths: 2000, ..ew_detect_config_default() }
}

unsafe fn attack_sequence(seed: u64) -> *mut EwSequence {
    let victims = [0usize];
    let attackers = [18usize, 19];
    let mut seq = ptr::null_mut();
    let st = ew_simulate(20, 3, 120, 4, true, 70, victims.as_ptr(), 1, attackers.as_ptr(), 2, seed, &mut seq);
    assert_eq!(st, EwStatus::Ok, "{}", last_error());
    seq
}

#[test]
fn simulate_detect_and_read_report() {
    unsafe {
        let seq = attack_sequence(3);
        assert_eq!(ew_sequence_len(seq), 120);
        assert_eq!(ew_sequence_dim(seq), 80);

        let mut cfg = fast_config();
        cfg.jl_dim = 40;
        cfg.epsilon = 0.95;
        cfg.jl_seed = 5;
        let mut report = ptr::null_mut();
        assert_eq!(ew_detect(seq, &cfg, &mut report), EwStatus::Ok, "{}", last_error());
        assert!(ew_report_detected(report));
        let mut tau = 0usize;
        assert!(ew_report_tau_hat(report, &mut tau));
        assert!(tau.abs_diff(69) <= 10, "{tau}");
        assert!(ew_report_max_stat(report) >= ew_report_threshold(report));

        let len = ew_report_curve_len(report);
        let mut splits = vec![0usize; len];
        let mut scaled = vec![0f64; len];
        assert_eq!(ew_report_curve(report, splits.as_mut_ptr(), scaled.as_mut_ptr(), len), EwStatus::Ok);
        let best = scaled.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(best, ew_report_max_stat(report));
        assert!(splits.contains(&tau));
        assert_eq!(
            ew_report_curve(report, splits.as_mut_ptr(), scaled.as_mut_ptr(), len - 1),
            EwStatus::InvalidArgument
        );

        let mut json = ptr::null_mut();
        assert_eq!(ew_report_to_json(report, &mut json), EwStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(CStr::from_ptr(json).to_str().unwrap()).unwrap();
        assert_eq!(v["tau_hat"].as_u64(), Some(tau as u64));
        assert_eq!(v["config"]["projection"]["k"], 40);
        ew_string_free(json);
        ew_report_free(report);
        ew_sequence_free(seq);
    }
}

#[test]
fn null_config_uses_defaults_and_matches_rust() {
    unsafe {
        let seq = attack_sequence(8);
        let mut a = ptr::null_mut();
        let mut b = ptr::null_mut();
        assert_eq!(ew_detect(seq, ptr::null(), &mut a), EwStatus::Ok);
        let cfg = ew_detect_config_default();
        assert_eq!(ew_detect(seq, &cfg, &mut b), EwStatus::Ok);
        assert_eq!(ew_report_max_stat(a).to_bits(), ew_report_max_stat(b).to_bits());
        assert_eq!(ew_report_threshold(a).to_bits(), ew_report_threshold(b).to_bits());
        ew_report_free(a);
        ew_report_free(b);
        ew_sequence_free(seq);
    }
}

#[test]
fn save_load_and_noise() {
    let dir = tempfile::tempdir().unwrap();
    let file = CString::new(dir.path().join("s.txt").to_str().unwrap()).unwrap();
    unsafe {
        let seq = attack_sequence(4);
        assert_eq!(ew_sequence_save(seq, file.as_ptr()), EwStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(ew_sequence_load(file.as_ptr(), &mut back), EwStatus::Ok);
        assert_eq!(ew_sequence_len(back), 120);

        let mut clean = ptr::null_mut();
        assert_eq!(ew_sequence_apply_noise(back, f64::INFINITY, 1, &mut clean), EwStatus::Ok);
        let mut noisy = ptr::null_mut();
        assert_eq!(ew_sequence_apply_noise(back, 2.0, 1, &mut noisy), EwStatus::Ok);
        assert_eq!(ew_sequence_apply_noise(back, 0.5, 1, &mut noisy), EwStatus::InvalidArgument);

        let missing = CString::new(dir.path().join("nope.txt").to_str().unwrap()).unwrap();
        let mut none = ptr::null_mut();
        assert_eq!(ew_sequence_load(missing.as_ptr(), &mut none), EwStatus::IoError);
        assert!(none.is_null());
        for s in [seq, back, clean, noisy] {
            ew_sequence_free(s);
        }
    }
}

#[test]
fn from_entries_and_degenerate_sequence() {
    let row = [0u8, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 1, 0];
    let entries: Vec<u8> = row.iter().cycle().take(row.len() * 30).cloned().collect();
    unsafe {
        let mut seq = ptr::null_mut();
        assert_eq!(ew_sequence_from_entries(30, 4, 4, 1, entries.as_ptr(), &mut seq), EwStatus::Ok);
        let mut report = ptr::null_mut();
        let cfg = fast_config();
        assert_eq!(ew_detect(seq, &cfg, &mut report), EwStatus::DegenerateVariance);
        assert!(report.is_null());
        assert!(!last_error().is_empty());
        ew_sequence_free(seq);

        let bad = [2u8; 16];
        assert_eq!(ew_sequence_from_entries(1, 4, 4, 1, bad.as_ptr(), &mut seq), EwStatus::DataError);
        assert_eq!(ew_sequence_from_entries(1, 0, 4, 1, bad.as_ptr(), &mut seq), EwStatus::InvalidArgument);
    }
}

#[test]
fn null_pointers_are_rejected() {
    unsafe {
        let mut report = ptr::null_mut();
        assert_eq!(ew_detect(ptr::null(), ptr::null(), &mut report), EwStatus::NullPointer);
        assert!(last_error().contains("seq"));
        let seq = attack_sequence(1);
        assert_eq!(ew_detect(seq, ptr::null(), ptr::null_mut()), EwStatus::NullPointer);
        assert_eq!(ew_sequence_save(seq, ptr::null()), EwStatus::NullPointer);
        let mut out = ptr::null_mut();
        assert_eq!(
            ew_simulate(20, 3, 50, 4, true, 30, ptr::null(), 1, ptr::null(), 0, 1, &mut out),
            EwStatus::NullPointer
        );
        assert_eq!(ew_sequence_len(ptr::null()), 0);
        assert!(!ew_report_detected(ptr::null()));
        assert!(ew_report_max_stat(ptr::null()).is_nan());
        ew_sequence_free(ptr::null_mut());
        ew_report_free(ptr::null_mut());
        ew_string_free(ptr::null_mut());
        ew_sequence_free(seq);
    }
}

#[test]
fn quantile_and_distance() {
    unsafe {
        let mut q = 0.0;
        assert_eq!(ew_bridge_quantile(0.05, 0.1, 500, 2000, 7, &mut q), EwStatus::Ok);
        let direct = eclipsewatch::simulate_bridge_quantile(0.05, 0.1, 500, 2000, 7).unwrap().quantile;
        assert_eq!(q.to_bits(), direct.to_bits());
        assert_eq!(ew_bridge_quantile(1.5, 0.1, 500, 2000, 7, &mut q), EwStatus::InvalidArgument);

        let a = [1u8, 0, 1, 0, 0, 1];
        let b = [0u8, 0, 1, 1, 1, 1];
        let mut d = 0.0;
        assert_eq!(ew_frobenius_distance(a.as_ptr(), b.as_ptr(), 2, 3, &mut d), EwStatus::Ok);
        assert!((d - 3f64.sqrt()).abs() < 1e-15);
    }
}

#[test]
fn version_matches_core() {
    let v = unsafe { CStr::from_ptr(ew_version()) }.to_str().unwrap();
    assert_eq!(v, eclipsewatch::VERSION);
}

#[test]
fn header_is_valid_c_and_cxx() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("eclipsewatch.h")).unwrap();
    for name in ["ew_detect", "ew_sequence_free", "ew_last_error_message", "EW_STATUS_DEGENERATE_VARIANCE"] {
        assert!(header.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        "#include \"eclipsewatch.h\"\n\
         int main(void) {\n\
           EwDetectConfig c = ew_detect_config_default();\n\
           EwSequence *s = NULL; EwReport *r = NULL;\n\
           EwStatus st = ew_detect(s, &c, &r);\n\
           return st == EW_STATUS_NULL_POINTER ? 0 : 1;\n\
         }\n",
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Wextra", "-Werror", "-x", lang, "-I"])
            .arg(&include)
            .arg(&src)
            .output()
        else {
            eprintln!("{compiler} not available; header syntax check skipped");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
