//! C ABI over the tabformer engine.
//!
//! Every fallible function returns a `TfStatus`. On failure the message is
//! kept per thread and can be copied out with [`tf_last_error`]. Handles
//! are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tabformer::cli::{cmd_cv, RunConfig};
use tabformer::data::{Dataset, LoadOptions, RawTable};
use tabformer::eval::{average_precision, confusion_metrics, CvReport};
use tabformer::model::{load_checkpoint, predict_proba, CheckpointManifest, Model};
use tabformer::Error;

/// Status codes. Non-zero values match the command-line exit codes where
/// one exists.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    /// Null pointer, bad UTF-8 or an undersized output buffer.
    InvalidArgument = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TfMetrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Report metric selector for [`tf_cv_report_metric`].
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfMetric {
    Accuracy = 0,
    Precision = 1,
    Recall = 2,
    F1 = 3,
    Auprc = 4,
}

/// A loaded dataset with raw (unstandardized) features.
pub struct TfDataset {
    inner: Dataset,
}

/// A model checkpoint together with its schema and statistics.
pub struct TfModel {
    model: Model,
    manifest: CheckpointManifest,
}

pub struct TfCvReport {
    inner: CvReport,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(TfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e.exit_code() {
            2 => TfStatus::Config,
            3 => TfStatus::Data,
            _ => TfStatus::Numeric,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(TfStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(invalid(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| invalid(format!("{what} is null")))
}

fn check_binary(raw: &[u8]) -> Result<(), Failure> {
    match raw.iter().find(|&&y| y > 1) {
        Some(y) => Err(invalid(format!("label {y} is not 0 or 1"))),
        None => Ok(()),
    }
}

/// Copies the calling thread's last error message into `buf` (always
/// NUL-terminated when `len > 0`) and returns the full message length
/// excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Loads a CSV with `target` as the 0/1 label column.
///
/// # Safety
/// `path` and `target` must be NUL-terminated strings; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    out: *mut *mut TfDataset,
) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let target = str_arg(target, "target")?;
        let table = RawTable::read_csv(&path)?;
        let inner = Dataset::from_raw(&table, target, &LoadOptions::default())?;
        *out = Box::into_raw(Box::new(TfDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_n_rows(ds: *const TfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n_rows())
}

/// # Safety
/// `ds` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_n_features(ds: *const TfDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.inner.n_features())
}

/// Copies the labels into `out` (capacity `len`, at least the row count).
///
/// # Safety
/// `ds` must be a live handle; `out` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_labels(ds: *const TfDataset, out: *mut u8, len: usize) -> TfStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| invalid("dataset is null"))?;
        let labels = ds.inner.labels();
        if len < labels.len() || (out.is_null() && !labels.is_empty()) {
            return Err(invalid(format!("label buffer holds {len}, need {}", labels.len())));
        }
        ptr::copy_nonoverlapping(labels.as_ptr(), out, labels.len());
        Ok(())
    })
}

/// # Safety
/// `ds` must be a handle from [`tf_dataset_load_csv`] or null; it must not
/// be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tf_dataset_free(ds: *mut TfDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Loads a checkpoint manifest (and its sibling `.bin`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_model_load(path: *const c_char, out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let path = PathBuf::from(str_arg(path, "path")?);
        let (model, manifest) = load_checkpoint(&path)?;
        *out = Box::into_raw(Box::new(TfModel { model, manifest }));
        Ok(())
    })
}

/// Number of input features the model expects.
///
/// # Safety
/// `model` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn tf_model_n_features(model: *const TfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.layout().len())
}

/// Positive-class probabilities for every row of `ds`, standardized with
/// the checkpoint's statistics. The dataset schema must match the
/// checkpoint's.
///
/// # Safety
/// Handles must be live; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tf_model_predict(
    model: *const TfModel,
    ds: *const TfDataset,
    out: *mut f64,
    len: usize,
) -> TfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let ds = ds.as_ref().ok_or_else(|| invalid("dataset is null"))?;
        if ds.inner.schema().fingerprint() != m.manifest.schema_fingerprint {
            return Err(Error::Data("dataset schema does not match the checkpoint".into()).into());
        }
        let n = ds.inner.n_rows();
        if len < n || (out.is_null() && n > 0) {
            return Err(invalid(format!("output buffer holds {len}, need {n}")));
        }
        let standardized = m.manifest.standardizer().apply(&ds.inner)?;
        let probs = predict_proba(&m.model, &standardized)?;
        ptr::copy_nonoverlapping(probs.as_ptr(), out, n);
        Ok(())
    })
}

/// Probabilities for `n_rows` raw rows laid out row-major. Categorical
/// cells hold vocabulary indices (the vocabulary length means unknown).
///
/// # Safety
/// `x` must point to `n_rows * tf_model_n_features(model)` doubles and
/// `out` to `n_rows` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tf_model_predict_rows(
    model: *const TfModel,
    x: *const f64,
    n_rows: usize,
    out: *mut f64,
) -> TfStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| invalid("model is null"))?;
        let d = m.model.layout().len();
        let x = slice_arg(x, n_rows * d, "x")?;
        if out.is_null() && n_rows > 0 {
            return Err(invalid("out is null"));
        }
        let raw = Dataset::new(x.to_vec(), vec![0; n_rows], m.manifest.schema.clone())?;
        let standardized = m.manifest.standardizer().apply(&raw)?;
        let probs = predict_proba(&m.model, &standardized)?;
        ptr::copy_nonoverlapping(probs.as_ptr(), out, n_rows);
        Ok(())
    })
}

/// # Safety
/// `model` must be a handle from [`tf_model_load`] or null; it must not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Runs cross-validation from a JSON run config (same document as the
/// command line's `--config`), writing all artifacts to its `out`
/// directory.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_cv_run(config_json: *const c_char, out: *mut *mut TfCvReport) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(config_json, "config_json")?;
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let inner = cmd_cv(&cfg.resolve()?)?;
        *out = Box::into_raw(Box::new(TfCvReport { inner }));
        Ok(())
    })
}

/// Mean and sample standard deviation of one metric across folds.
///
/// # Safety
/// `report` must be a live handle; `mean` and `std` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn tf_cv_report_metric(
    report: *const TfCvReport,
    metric: TfMetric,
    mean: *mut f64,
    std: *mut f64,
) -> TfStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| invalid("report is null"))?.inner;
        let s = match metric {
            TfMetric::Accuracy => r.accuracy,
            TfMetric::Precision => r.precision,
            TfMetric::Recall => r.recall,
            TfMetric::F1 => r.f1,
            TfMetric::Auprc => r.auprc,
        };
        *out_arg(mean, "mean")? = s.mean;
        *out_arg(std, "std")? = s.std;
        Ok(())
    })
}

/// The report as JSON, identical to `cv_report.json`. Release with
/// [`tf_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tf_cv_report_json(report: *const TfCvReport, out: *mut *mut c_char) -> TfStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let r = &report.as_ref().ok_or_else(|| invalid("report is null"))?.inner;
        let mut text = serde_json::to_string_pretty(r).map_err(Error::from)?;
        text.push('\n');
        *out = CString::new(text).map_err(|_| invalid("report contains NUL"))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be a handle from [`tf_cv_run`] or null.
#[no_mangle]
pub unsafe extern "C" fn tf_cv_report_free(report: *mut TfCvReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn tf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Average precision of `scores` against 0/1 `labels`.
///
/// # Safety
/// `scores` and `labels` must each point to `n` elements; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tf_auprc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> TfStatus {
    guard(|| {
        let scores = slice_arg(scores, n, "scores")?;
        let labels = slice_arg(labels, n, "labels")?;
        check_binary(labels)?;
        *out_arg(out, "out")? = average_precision(scores, labels)?;
        Ok(())
    })
}

/// Confusion counts and positive-class metrics of hard 0/1 predictions.
///
/// # Safety
/// `predictions` and `labels` must each point to `n` bytes; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tf_confusion_metrics(
    predictions: *const u8,
    labels: *const u8,
    n: usize,
    out: *mut TfMetrics,
) -> TfStatus {
    guard(|| {
        let preds = slice_arg(predictions, n, "predictions")?;
        let labels = slice_arg(labels, n, "labels")?;
        check_binary(preds)?;
        check_binary(labels)?;
        let m = confusion_metrics(preds, labels)?;
        *out_arg(out, "out")? = TfMetrics {
            true_pos: m.tp,
            false_pos: m.fp,
            true_neg: m.tn,
            false_neg: m.fn_,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        };
        Ok(())
    })
}
