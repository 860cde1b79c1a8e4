//! C ABI for building models, running the adaptive kernel search and
//! computing chain diagnostics.
//!
//! Every fallible call returns an [`AaStatus`]; on failure the message is
//! available from [`aa_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use autoadapt::bench::BenchModel;
use autoadapt::diagnostics::iact;
use autoadapt::engine::{run_auto_adapt, AutoAdaptConfig, AutoAdaptResult};
use autoadapt::model::{parse_model, ModelGraph};
use autoadapt::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Model = 4,
    Config = 5,
    Sampler = 6,
    Diagnostics = 7,
    Io = 8,
    Panic = 9,
}

/// A compiled model graph.
pub struct AaModel {
    graph: ModelGraph,
}

/// Outcome of an adaptive search.
pub struct AaResult {
    graph_names: Vec<String>,
    best_kernel: Vec<String>,
    inner: AutoAdaptResult,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> AaStatus {
    match e {
        Error::Model(_) => AaStatus::Model,
        Error::Sampler(_) | Error::InvalidKernel(_) => AaStatus::Sampler,
        Error::Diagnostics(_) | Error::Blocking(_) => AaStatus::Diagnostics,
        Error::Config(_) | Error::Json(_) => AaStatus::Config,
        Error::Io(_) | Error::Csv(_) => AaStatus::Io,
    }
}

/// Run `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (AaStatus, String)>) -> AaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AaStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AaStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (AaStatus, String) {
    (status_of(&e), e.to_string())
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (AaStatus, String)> {
    if p.is_null() {
        return Err((AaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (AaStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

fn check_out<T>(out: *mut *mut T) -> Result<(), (AaStatus, String)> {
    if out.is_null() {
        Err((AaStatus::NullPointer, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn aa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parse a model from its text description.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aa_model_parse(text: *const c_char, out: *mut *mut AaModel) -> AaStatus {
    guard(|| {
        check_out(out)?;
        let text = read_str(text, "text")?;
        let graph = parse_model(text).map_err(|e| lib_err(e.into()))?;
        *out = Box::into_raw(Box::new(AaModel { graph }));
        Ok(())
    })
}

/// Read and parse a model file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aa_model_from_file(path: *const c_char, out: *mut *mut AaModel) -> AaStatus {
    guard(|| {
        check_out(out)?;
        let path = read_str(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|e| lib_err(e.into()))?;
        let graph = parse_model(&text).map_err(|e| lib_err(e.into()))?;
        *out = Box::into_raw(Box::new(AaModel { graph }));
        Ok(())
    })
}

/// Build a benchmark model (`litters`, `glmm` or `spatial`) with data
/// simulated from `data_seed`. `size` 0 selects the model's default.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aa_model_benchmark(
    name: *const c_char,
    size: usize,
    data_seed: u64,
    out: *mut *mut AaModel,
) -> AaStatus {
    guard(|| {
        check_out(out)?;
        let model: BenchModel = read_str(name, "name")?.parse().map_err(lib_err)?;
        let size = if size == 0 { model.default_size() } else { size };
        let graph = model.build(size, data_seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AaModel { graph }));
        Ok(())
    })
}

/// Number of sampled dimensions; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn aa_model_dim(model: *const AaModel) -> usize {
    model.as_ref().map_or(0, |m| m.graph.dim())
}

/// # Safety
/// `model` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn aa_model_free(model: *mut AaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Run the adaptive kernel search. `config_json` may be null for the
/// defaults; otherwise it is a JSON object with any of `outer`, `inner`,
/// `candidates`, `trigger`, `cut_heights`, `keep_probability`, `time`,
/// `retain_traces`.
///
/// # Safety
/// `model` must be a live handle, `config_json` null or NUL-terminated,
/// `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aa_run_auto_adapt(
    model: *const AaModel,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut AaResult,
) -> AaStatus {
    guard(|| {
        check_out(out)?;
        let model = model
            .as_ref()
            .ok_or((AaStatus::NullPointer, "model is null".to_string()))?;
        let config: AutoAdaptConfig = if config_json.is_null() {
            AutoAdaptConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?).map_err(|e| lib_err(e.into()))?
        };
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = run_auto_adapt(&model.graph, &config, rng).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(AaResult {
            graph_names: model.graph.dim_names(),
            best_kernel: inner.best.describe(&model.graph),
            inner,
        }));
        Ok(())
    })
}

/// Best measured efficiency; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aa_result_best_efficiency(result: *const AaResult) -> f64 {
    result.as_ref().map_or(f64::NAN, |r| r.inner.best_efficiency)
}

/// Number of outer iterations run; 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aa_result_iterations(result: *const AaResult) -> usize {
    result.as_ref().map_or(0, |r| r.inner.history.len())
}

/// Serialise the best kernel, history and final state to JSON. The
/// string must be released with [`aa_string_free`].
///
/// # Safety
/// `result` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aa_result_to_json(result: *const AaResult, out: *mut *mut c_char) -> AaStatus {
    guard(|| {
        check_out(out)?;
        let r = result
            .as_ref()
            .ok_or((AaStatus::NullPointer, "result is null".to_string()))?;
        let res = &r.inner;
        let state: serde_json::Map<String, serde_json::Value> = r
            .graph_names
            .iter()
            .zip(res.state.values())
            .map(|(n, v)| (n.clone(), serde_json::json!(v)))
            .collect();
        let doc = serde_json::json!({
            "best_kernel": r.best_kernel,
            "best_kernel_id": res.best.id_hex(),
            "best_efficiency": res.best_efficiency,
            "adapt_time": res.adapt_time,
            "clocks": res.clocks,
            "history": res.history,
            "final_state": state,
        });
        let text = serde_json::to_string_pretty(&doc).map_err(|e| lib_err(e.into()))?;
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a live handle, freed once.
#[no_mangle]
pub unsafe extern "C" fn aa_result_free(result: *mut AaResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be null or a string from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn aa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Integrated autocorrelation time of a chain of `n` values.
///
/// # Safety
/// `chain` must point to `n` readable doubles and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn aa_iact(chain: *const f64, n: usize, out: *mut f64) -> AaStatus {
    guard(|| {
        if chain.is_null() || out.is_null() {
            return Err((AaStatus::NullPointer, "chain or out is null".into()));
        }
        let xs = std::slice::from_raw_parts(chain, n);
        *out = iact(xs).map_err(|e| lib_err(e.into()))?;
        Ok(())
    })
}
