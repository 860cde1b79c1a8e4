use std::ffi::{CStr, CString};
use std::ptr;

use autoadapt_ffi::*;

fn json_of(r: *const AaResult) -> serde_json::Value {
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { aa_result_to_json(r, &mut s) }, AaStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { aa_string_free(s) };
    serde_json::from_str(&text).unwrap()
}

#[test]
fn benchmark_model_round_trip() {
    let mut m = ptr::null_mut();
    let name = CString::new("litters").unwrap();
    assert_eq!(unsafe { aa_model_benchmark(name.as_ptr(), 3, 5, &mut m) }, AaStatus::Ok);
    assert_eq!(unsafe { aa_model_dim(m) }, 10);

    let cfg = CString::new(r#"{"outer": 3, "inner": 500}"#).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { aa_run_auto_adapt(m, cfg.as_ptr(), 11, &mut r) }, AaStatus::Ok);
    assert_eq!(unsafe { aa_result_iterations(r) }, 3);
    let eff = unsafe { aa_result_best_efficiency(r) };
    assert!(eff > 0.0);

    let doc = json_of(r);
    assert_eq!(doc["history"].as_array().unwrap().len(), 3);
    assert_eq!(doc["best_efficiency"].as_f64().unwrap(), eff);
    assert_eq!(doc["final_state"].as_object().unwrap().len(), 10);

    let mut r2 = ptr::null_mut();
    assert_eq!(unsafe { aa_run_auto_adapt(m, cfg.as_ptr(), 11, &mut r2) }, AaStatus::Ok);
    assert_eq!(json_of(r2), doc);

    unsafe {
        aa_result_free(r);
        aa_result_free(r2);
        aa_model_free(m);
    }
}

#[test]
fn model_text_and_bad_config() {
    let text = CString::new("mu ~ normal(0, 1)\ny ~ normal(mu, 1) data 0.5\n").unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { aa_model_parse(text.as_ptr(), &mut m) }, AaStatus::Ok);
    assert_eq!(unsafe { aa_model_dim(m) }, 1);

    let bad = CString::new(r#"{"outer": "many"}"#).unwrap();
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { aa_run_auto_adapt(m, bad.as_ptr(), 1, &mut r) }, AaStatus::Config);
    assert!(r.is_null());
    let msg = unsafe { CStr::from_ptr(aa_last_error()) }.to_str().unwrap();
    assert!(!msg.is_empty());

    let unknown = CString::new("nosuch").unwrap();
    assert_eq!(unsafe { aa_model_benchmark(unknown.as_ptr(), 0, 0, &mut m) }, AaStatus::Config);
    unsafe { aa_model_free(m) };

    let missing = CString::new("/nonexistent/model.txt").unwrap();
    let mut m2 = ptr::null_mut();
    assert_eq!(unsafe { aa_model_from_file(missing.as_ptr(), &mut m2) }, AaStatus::Io);
}

#[test]
fn iact_of_white_noise_is_near_one() {
    let xs: Vec<f64> = (0..2000u64).map(|i| ((i.wrapping_mul(2654435761) % 1000) as f64) / 1000.0).collect();
    let mut tau = 0.0;
    assert_eq!(unsafe { aa_iact(xs.as_ptr(), xs.len(), &mut tau) }, AaStatus::Ok);
    assert!(tau >= 1.0 && tau < 3.0, "{tau}");
    assert_eq!(unsafe { aa_iact(xs.as_ptr(), 10, &mut tau) }, AaStatus::Diagnostics);
    assert_eq!(unsafe { aa_iact(ptr::null(), 0, &mut tau) }, AaStatus::NullPointer);
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/autoadapt.h")).unwrap();
    for sym in ["aa_model_parse", "aa_run_auto_adapt", "aa_result_to_json", "aa_string_free", "aa_iact", "AA_STATUS_OK", "typedef struct AaModel AaModel"] {
        assert!(h.contains(sym), "{sym} missing from header");
    }
}
