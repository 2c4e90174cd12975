//! C ABI for the travmetric library.
//!
//! A trained checkpoint is loaded into an opaque [`TmModel`] handle and used to
//! segment raw `xyz` buffers. Metrics can be computed on caller-owned arrays.
//! Every fallible call returns a [`TmStatus`]; on failure a message is kept
//! per thread and can be read with [`tm_last_error`]. The caller owns every
//! buffer passed in. Handles must be released with [`tm_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use travmetric::checkpoint::Checkpoint;
use travmetric::eval::{infer_scene, tpe_from_counts, Confusion, IouScores, TpeVariant};
use travmetric::pointcloud::{Label, Point, Scene, SceneKind};
use travmetric::Error;

/// Label codes accepted by [`tm_evaluate`].
pub const TM_LABEL_NEGATIVE: u8 = 0;
pub const TM_LABEL_POSITIVE: u8 = 1;
pub const TM_LABEL_UNLABELED: u8 = 2;

/// TPE weighting codes accepted by [`tm_evaluate`].
/// False positives weigh `1 - t`, the formula as printed.
pub const TM_TPE_AS_PRINTED: u32 = 0;
/// False positives weigh `t`.
pub const TM_TPE_TRAVERSABILITY_WEIGHTED: u32 = 1;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument value is out of range (bad label code, non-UTF-8 path, ...).
    InvalidArgument = 2,
    /// File could not be read.
    Io = 3,
    /// File content is malformed.
    Parse = 4,
    /// Data violates a precondition (too few points, dimension mismatch, ...).
    Data = 5,
    /// Configuration rejected.
    Config = 6,
    /// Non-finite values during computation.
    Numeric = 7,
    /// Internal error; the library caught a panic.
    Internal = 8,
}

impl From<&Error> for TmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => TmStatus::Io,
            Error::Parse { .. } => TmStatus::Parse,
            Error::Data(_) => TmStatus::Data,
            Error::Config(_) => TmStatus::Config,
            Error::Numeric(_) => TmStatus::Numeric,
        }
    }
}

/// Opaque handle to a loaded checkpoint.
pub struct TmModel {
    checkpoint: Checkpoint,
}

/// Pooled evaluation over one array of points. IoU fields are NaN when the
/// class is absent from the labels.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TmMetrics {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tpe: f64,
    pub iou_positive: f64,
    pub iou_negative: f64,
    pub miou: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: TmStatus, msg: impl Into<String>) -> TmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> TmStatus {
    fail(TmStatus::from(&e), e.to_string())
}

/// Runs `f`, converting a panic into [`TmStatus::Internal`].
fn guarded(f: impl FnOnce() -> TmStatus) -> TmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let what = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(TmStatus::Internal, format!("internal error: {what}"))
        }
    }
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn tm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tm_model_load(path: *const c_char, out: *mut *mut TmModel) -> TmStatus {
    guarded(|| {
        if path.is_null() || out.is_null() {
            return fail(TmStatus::NullPointer, "path and out must be non-null");
        }
        // SAFETY: non-null and NUL-terminated per the contract.
        let Ok(path) = unsafe { CStr::from_ptr(path) }.to_str() else {
            return fail(TmStatus::InvalidArgument, "path is not valid UTF-8");
        };
        match Checkpoint::load(Path::new(path)) {
            Ok(checkpoint) => {
                // SAFETY: `out` is valid per the contract.
                unsafe { *out = Box::into_raw(Box::new(TmModel { checkpoint })) };
                TmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`tm_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn tm_model_free(model: *mut TmModel) {
    if !model.is_null() {
        // SAFETY: allocated by `tm_model_load` per the contract.
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Embedding dimension, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_embed_dim(model: *const TmModel) -> usize {
    // SAFETY: null or live per the contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.checkpoint.model.embed_dim())
}

/// Proxies per class, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_proxies(model: *const TmModel) -> usize {
    // SAFETY: null or live per the contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.checkpoint.bank.k())
}

/// Neighbourhood size the encoder needs; clouds must hold at least this many points.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tm_model_min_points(model: *const TmModel) -> usize {
    // SAFETY: null or live per the contract.
    unsafe { model.as_ref() }.map_or(0, |m| m.checkpoint.model.shape.k_enc)
}

/// Segments a point cloud given as `n_points` interleaved `x y z` triples.
///
/// Writes per point: `out_s` 1 traversable / 0 not, `out_t` the regressed
/// traversability in (0,1), and, if `out_masked` is non-null, `t * s`.
///
/// # Safety
/// `xyz` must hold `3 * n_points` doubles; `out_s` and `out_t` (and
/// `out_masked` when non-null) must hold `n_points` elements.
#[no_mangle]
pub unsafe extern "C" fn tm_model_infer(
    model: *const TmModel,
    xyz: *const f64,
    n_points: usize,
    out_s: *mut u8,
    out_t: *mut f64,
    out_masked: *mut f64,
) -> TmStatus {
    guarded(|| {
        // SAFETY: null or live per the contract.
        let Some(model) = (unsafe { model.as_ref() }) else {
            return fail(TmStatus::NullPointer, "model is null");
        };
        if xyz.is_null() || out_s.is_null() || out_t.is_null() {
            return fail(
                TmStatus::NullPointer,
                "xyz, out_s and out_t must be non-null",
            );
        }
        // SAFETY: sizes per the contract.
        let coords = unsafe { std::slice::from_raw_parts(xyz, 3 * n_points) };
        let points: Vec<Point> = coords.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        let scene = match Scene::new(
            SceneKind::Eval,
            points,
            vec![Label::Unlabeled; n_points],
            vec![None; n_points],
        ) {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let ck = &model.checkpoint;
        let pred = match infer_scene(&ck.model, &ck.bank, &scene, ck.mode) {
            Ok(p) => p,
            Err(e) => return from_error(e),
        };
        // SAFETY: sizes per the contract.
        let (s, t) = unsafe {
            (
                std::slice::from_raw_parts_mut(out_s, n_points),
                std::slice::from_raw_parts_mut(out_t, n_points),
            )
        };
        for i in 0..n_points {
            s[i] = u8::from(pred.s[i]);
            t[i] = pred.t[i];
        }
        if !out_masked.is_null() {
            // SAFETY: size per the contract.
            let m = unsafe { std::slice::from_raw_parts_mut(out_masked, n_points) };
            m.copy_from_slice(&pred.t_masked);
        }
        TmStatus::Ok
    })
}

/// Computes TPE and IoU for `n` points. `s` holds 0/1 decisions, `t`
/// traversability, `labels` the `TM_LABEL_*` codes; unlabeled points are
/// ignored. `variant` is one of the `TM_TPE_*` codes.
///
/// # Safety
/// `s`, `t` and `labels` must hold `n` elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tm_evaluate(
    s: *const u8,
    t: *const f64,
    labels: *const u8,
    n: usize,
    variant: u32,
    out: *mut TmMetrics,
) -> TmStatus {
    guarded(|| {
        if s.is_null() || t.is_null() || labels.is_null() || out.is_null() {
            return fail(
                TmStatus::NullPointer,
                "s, t, labels and out must be non-null",
            );
        }
        let variant = match variant {
            TM_TPE_AS_PRINTED => TpeVariant::AsPrinted,
            TM_TPE_TRAVERSABILITY_WEIGHTED => TpeVariant::TraversabilityWeighted,
            v => {
                return fail(
                    TmStatus::InvalidArgument,
                    format!("unknown TPE variant {v}"),
                )
            }
        };
        // SAFETY: sizes per the contract.
        let (s, t, labels) = unsafe {
            (
                std::slice::from_raw_parts(s, n),
                std::slice::from_raw_parts(t, n),
                std::slice::from_raw_parts(labels, n),
            )
        };
        let mut gt = Vec::with_capacity(n);
        for (i, &l) in labels.iter().enumerate() {
            gt.push(match l {
                TM_LABEL_NEGATIVE => Label::Negative,
                TM_LABEL_POSITIVE => Label::Positive,
                TM_LABEL_UNLABELED => Label::Unlabeled,
                v => {
                    return fail(
                        TmStatus::InvalidArgument,
                        format!("label code {v} at index {i}"),
                    )
                }
            });
        }
        if let Some(i) = s.iter().position(|&v| v > 1) {
            return fail(
                TmStatus::InvalidArgument,
                format!("decision {} at index {i} is not 0 or 1", s[i]),
            );
        }
        if let Some(i) = t.iter().position(|v| !v.is_finite()) {
            return fail(
                TmStatus::InvalidArgument,
                format!("non-finite traversability at index {i}"),
            );
        }
        let decisions: Vec<bool> = s.iter().map(|&v| v == 1).collect();
        let c = Confusion::from_predictions(&decisions, t, &gt);
        let iou = IouScores::from_counts(&c);
        let metrics = TmMetrics {
            tp: c.tp,
            tn: c.tn,
            fp: c.fp,
            fn_: c.fn_,
            tpe: tpe_from_counts(&c, variant),
            iou_positive: iou.positive.unwrap_or(f64::NAN),
            iou_negative: iou.negative.unwrap_or(f64::NAN),
            miou: iou.miou.unwrap_or(f64::NAN),
        };
        // SAFETY: valid per the contract.
        unsafe { *out = metrics };
        TmStatus::Ok
    })
}
