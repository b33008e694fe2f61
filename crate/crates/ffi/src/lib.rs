//! C ABI over `pelsurv`.
//!
//! Objects cross the boundary as opaque handles created by `pel_*_new`/`pel_*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns a [`PelStatus`]; on failure `pel_last_error_message` describes the
//! error for the calling thread. Strings returned through out-pointers are
//! owned by the caller and must be released with [`pel_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pelsurv::cli::bootstrap_sample;
use pelsurv::data::{parse_sample, SampleMeta, StratifiedSample};
use pelsurv::estimate::{estimate, EstimateReport};
use pelsurv::impute::{impute, ImputationMethod};
use pelsurv::model::{CategoryModel, ModelConfig, ModelParams, ProportionalOddsModel};
use pelsurv::optimize::SearchConfig;
use pelsurv::simulation::response_probability;
use pelsurv::{Error, ErrorKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PelStatus {
    Ok = 0,
    UsageError = 1,
    DataError = 2,
    EstimationError = 3,
    NullPointer = 4,
    InvalidString = 5,
    Panic = 6,
}

impl From<&Error> for PelStatus {
    fn from(e: &Error) -> Self {
        match e.kind() {
            ErrorKind::Usage => PelStatus::UsageError,
            ErrorKind::Data => PelStatus::DataError,
            ErrorKind::Estimation => PelStatus::EstimationError,
        }
    }
}

/// A parsed stratified sample.
pub struct PelSample(StratifiedSample);

/// A category model.
pub struct PelModel(ProportionalOddsModel);

/// A fitted model with its point estimates.
pub struct PelFit(EstimateReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Lib(Error),
    Null(&'static str),
    Utf8(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> PelStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PelStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            let status = PelStatus::from(&e);
            set_error(e.to_string());
            status
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            PelStatus::NullPointer
        }
        Ok(Err(Failure::Utf8(what))) => {
            set_error(format!("{what} is not valid UTF-8"));
            PelStatus::InvalidString
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            PelStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Utf8(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Null("output pointer"));
    }
    *out = CString::new(s).expect("generated text has no nul").into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pel_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pel_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a `stratum,weight,z,y` CSV document against stratum metadata JSON.
///
/// # Safety
/// `csv` and `meta_json` must be nul-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_sample_from_csv(
    csv: *const c_char,
    meta_json: *const c_char,
    out: *mut *mut PelSample,
) -> PelStatus {
    guard(|| {
        let csv = str_arg(csv, "csv")?;
        let meta = SampleMeta::from_json(str_arg(meta_json, "meta_json")?)?;
        put(out, PelSample(parse_sample(csv.as_bytes(), &meta)?))
    })
}

/// # Safety
/// `sample` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pel_sample_free(sample: *mut PelSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Number of units, or 0 for a null handle.
///
/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pel_sample_len(sample: *const PelSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.len())
}

/// # Safety
/// `sample` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pel_sample_respondents(sample: *const PelSample) -> usize {
    sample.as_ref().map_or(0, |s| s.0.total_respondents())
}

/// Proportional odds with fixed cutpoints `1..categories-1`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_model_standard(categories: usize, out: *mut *mut PelModel) -> PelStatus {
    guard(|| put(out, PelModel(ProportionalOddsModel::standard(categories)?)))
}

/// Builds a model from its JSON description for `categories` categories.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_model_from_json(
    json: *const c_char,
    categories: usize,
    out: *mut *mut PelModel,
) -> PelStatus {
    guard(|| {
        let config = ModelConfig::from_json(str_arg(json, "json")?)?;
        put(out, PelModel(config.build(categories)?))
    })
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pel_model_free(model: *mut PelModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of model parameters, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pel_model_param_dim(model: *const PelModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.param_dim())
}

fn search_for(model: &PelModel) -> SearchConfig {
    SearchConfig::default().fitted_to(model.0.param_dim())
}

/// Fits the model and computes the point estimates.
///
/// # Safety
/// `sample` and `model` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_estimate(
    sample: *const PelSample,
    model: *const PelModel,
    out: *mut *mut PelFit,
) -> PelStatus {
    guard(|| {
        let sample = handle(sample, "sample")?;
        let model = handle(model, "model")?;
        put(out, PelFit(estimate(&sample.0, &model.0, &search_for(model))?))
    })
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pel_fit_free(fit: *mut PelFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Copies up to `len` fitted parameters into `values`; `written` receives the
/// full parameter count.
///
/// # Safety
/// `fit` must be a live handle; `values` must hold `len` doubles; `written`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_fit_params(
    fit: *const PelFit,
    values: *mut f64,
    len: usize,
    written: *mut usize,
) -> PelStatus {
    guard(|| {
        let fit = handle(fit, "fit")?;
        let params: &ModelParams = &fit.0.beta_hat;
        if written.is_null() || (values.is_null() && len > 0) {
            return Err(Failure::Null("output pointer"));
        }
        let n = len.min(params.dim());
        if n > 0 {
            ptr::copy_nonoverlapping(params.as_slice().as_ptr(), values, n);
        }
        *written = params.dim();
        Ok(())
    })
}

/// The estimated overall mean.
///
/// # Safety
/// `fit` must be a live handle; `mean` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pel_fit_mean(fit: *const PelFit, mean: *mut f64) -> PelStatus {
    guard(|| {
        let fit = handle(fit, "fit")?;
        if mean.is_null() {
            return Err(Failure::Null("output pointer"));
        }
        *mean = fit.0.y_bar_hat;
        Ok(())
    })
}

/// The estimate report as JSON.
///
/// # Safety
/// `fit` must be a live handle; `out` must be writable. Free the result with
/// [`pel_string_free`].
#[no_mangle]
pub unsafe extern "C" fn pel_fit_report_json(fit: *const PelFit, out: *mut *mut c_char) -> PelStatus {
    guard(|| {
        let fit = handle(fit, "fit")?;
        put_string(out, fit.0.to_json_value().to_string())
    })
}

fn parse_methods(list: &str) -> FfiResult<Vec<ImputationMethod>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<ImputationMethod>().map_err(Failure::from))
        .collect()
}

/// Bootstrap variances and intervals as JSON. `methods` is null or a
/// comma-separated list of imputation methods to include.
///
/// # Safety
/// `sample` and `model` must be live handles; `methods` null or a
/// nul-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pel_bootstrap_json(
    sample: *const PelSample,
    model: *const PelModel,
    replicates: usize,
    seed: u64,
    methods: *const c_char,
    out: *mut *mut c_char,
) -> PelStatus {
    guard(|| {
        let sample = handle(sample, "sample")?;
        let model = handle(model, "model")?;
        let methods = if methods.is_null() { Vec::new() } else { parse_methods(str_arg(methods, "methods")?)? };
        if replicates < 2 {
            return Err(Error::InvalidConfig("at least two bootstrap replicates are needed".into()).into());
        }
        let result = bootstrap_sample(&sample.0, &model.0, &search_for(model), &methods, replicates, seed)?;
        put_string(out, result.to_json_value().to_string())
    })
}

/// Imputes missing values and returns the filled CSV with an `imputed` column.
/// `model` may be null for the simple methods.
///
/// # Safety
/// `sample` must be a live handle; `model` null or live; `method` a
/// nul-terminated string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pel_impute_csv(
    sample: *const PelSample,
    model: *const PelModel,
    method: *const c_char,
    seed: u64,
    out: *mut *mut c_char,
) -> PelStatus {
    guard(|| {
        let sample = handle(sample, "sample")?;
        let method: ImputationMethod = str_arg(method, "method")?.parse()?;
        sample.0.check_respondents()?;
        let imputed = if method.uses_model() {
            let model = handle(model, "model")?;
            let fit = pelsurv::estimate::fit_mpele(&sample.0, &model.0, &search_for(model))?;
            impute(method, &sample.0, Some((&model.0, &fit.params, &fit.weights)), seed)?
        } else {
            impute(method, &sample.0, None, seed)?
        };
        let mut buf = Vec::new();
        imputed.write_csv(&mut buf)?;
        put_string(out, String::from_utf8(buf).expect("csv output is UTF-8"))
    })
}

/// `P(δ = 1 | Z = j) = logistic(-0.1 + γ j)` for 1-based `j`.
#[no_mangle]
pub extern "C" fn pel_response_probability(gamma: f64, j: usize) -> f64 {
    response_probability(gamma, j)
}
