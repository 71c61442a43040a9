//! C interface to the hgrl model.
//!
//! Every function returns an [`HgrlStatus`]; on failure a message is
//! available from [`hgrl_last_error`] on the same thread. Handles are owned
//! by the caller and released with [`hgrl_model_free`].

use hgrl::cli::input_shape;
use hgrl::config::RunConfig;
use hgrl::dsp::{featurize, load_wav, FeatureConfig};
use hgrl::model::{InputShape, Model, ModelConfig, Variant};
use hgrl::taxonomy::{N_COARSE, N_FINE};
use hgrl::tensor::{Tape, Tensor};
use hgrl::weights::{self, WeightsError};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HgrlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    ShapeMismatch = 5,
    Internal = 6,
}

/// Opaque model handle.
pub struct HgrlModel {
    model: Model<f32>,
    features: FeatureConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(msg).expect("nul bytes removed")));
}

struct Fail(HgrlStatus, String);

type FfiResult = Result<(), Fail>;

fn fail(status: HgrlStatus, msg: impl std::fmt::Display) -> Fail {
    Fail(status, msg.to_string())
}

fn guard(f: impl FnOnce() -> FfiResult) -> HgrlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            HgrlStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            HgrlStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(fail(HgrlStatus::NullPointer, format!("{what} is null")));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(HgrlStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *mut HgrlModel) -> Result<&'a mut HgrlModel, Fail> {
    // SAFETY: non-null handles come from hgrl_model_new / hgrl_model_from_config.
    unsafe { m.as_mut() }.ok_or_else(|| fail(HgrlStatus::NullPointer, "model handle is null"))
}

fn weights_fail(e: WeightsError) -> Fail {
    let status = match e {
        WeightsError::Io { .. } => HgrlStatus::Io,
        WeightsError::Shape { .. } | WeightsError::Missing(_) | WeightsError::Unexpected(_) => {
            HgrlStatus::ShapeMismatch
        }
        _ => HgrlStatus::Format,
    };
    fail(status, e)
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn hgrl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hgrl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model with default settings for `variant` ("fAR", "fcAR-UL",
/// "fcAR-SL", "dnn" or "cnn") and log-mel inputs of `frames x n_mels`.
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_new(
    variant: *const c_char,
    frames: usize,
    n_mels: usize,
    seed: u64,
    out: *mut *mut HgrlModel,
) -> HgrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "out is null"));
        }
        let v: Variant = unsafe { str_arg(variant, "variant") }?
            .parse()
            .map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let model = Model::new(ModelConfig::new(v), InputShape { frames, n_mels }, seed)
            .map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let features = FeatureConfig {
            n_mels,
            ..FeatureConfig::default()
        };
        // SAFETY: checked non-null above.
        unsafe { *out = Box::into_raw(Box::new(HgrlModel { model, features })) };
        Ok(())
    })
}

/// Builds the model described by a TOML run config.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_from_config(
    path: *const c_char,
    out: *mut *mut HgrlModel,
) -> HgrlStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "out is null"));
        }
        let path = PathBuf::from(unsafe { str_arg(path, "path") }?);
        let cfg = RunConfig::load(&path).map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        cfg.validate()
            .map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let input = input_shape(&cfg).map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let model = Model::new(cfg.model(), input, cfg.seed)
            .map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        // SAFETY: checked non-null above.
        unsafe {
            *out = Box::into_raw(Box::new(HgrlModel {
                model,
                features: cfg.features,
            }))
        };
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_free(m: *mut HgrlModel) {
    if !m.is_null() {
        // SAFETY: handle was created by Box::into_raw.
        drop(unsafe { Box::from_raw(m) });
    }
}

/// # Safety
/// `m` must be a live handle; the out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_input_shape(
    m: *mut HgrlModel,
    frames: *mut usize,
    n_mels: *mut usize,
) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        if frames.is_null() || n_mels.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "output pointer is null"));
        }
        let s = h.model.input();
        // SAFETY: checked non-null above.
        unsafe {
            *frames = s.frames;
            *n_mels = s.n_mels;
        }
        Ok(())
    })
}

/// Number of trainable scalars.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_num_params(m: *mut HgrlModel, out: *mut usize) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        if out.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "out is null"));
        }
        // SAFETY: checked non-null above.
        unsafe { *out = h.model.store.num_params() };
        Ok(())
    })
}

/// Non-zero when the model has coarse outputs.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_has_coarse(m: *mut HgrlModel, out: *mut i32) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        if out.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "out is null"));
        }
        // SAFETY: checked non-null above.
        unsafe { *out = i32::from(h.model.variant().has_coarse()) };
        Ok(())
    })
}

/// Loads an HGRLW1 file. With `allow_partial` non-zero only conv-block
/// entries are read; otherwise names and shapes must match exactly.
///
/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_load_weights(
    m: *mut HgrlModel,
    path: *const c_char,
    allow_partial: i32,
) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        let path = PathBuf::from(unsafe { str_arg(path, "path") }?);
        let entries = weights::read_file(&path).map_err(weights_fail)?;
        weights::import_into(&mut h.model.store, entries, allow_partial != 0)
            .map_err(weights_fail)?;
        Ok(())
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_save_weights(
    m: *mut HgrlModel,
    path: *const c_char,
) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        let path = PathBuf::from(unsafe { str_arg(path, "path") }?);
        weights::write_file(&path, &weights::encode_store(&h.model.store)).map_err(weights_fail)
    })
}

/// Flattened fAE, cAE and AR outputs.
type Scores = (Vec<f32>, Option<Vec<f32>>, Vec<f32>);

fn predict(h: &mut HgrlModel, x: Tensor<f32>) -> Result<Scores, Fail> {
    let tape = Tape::new();
    let xv = tape.constant(x);
    let (p, _) = h
        .model
        .forward(&tape, xv, false, 0, None)
        .map_err(|e| fail(HgrlStatus::ShapeMismatch, e))?;
    let read = |v| tape.value(v).data().to_vec();
    Ok((read(p.fae), p.cae.map(read), read(p.ar)))
}

unsafe fn write_out(dst: *mut f32, src: &[f32]) {
    if !dst.is_null() {
        // SAFETY: caller sized `dst` for `src`.
        unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    }
}

/// Eval-mode predictions for `batch` log-mel inputs stored row-major as
/// `batch x frames x n_mels`.
///
/// Writes `batch x 24` event probabilities to `fae`, `batch x 7` coarse
/// probabilities to `cae` (skipped when null or when the model has none) and
/// `batch` ratings to `ar`. Null output pointers are skipped.
///
/// # Safety
/// `features` must hold `batch * frames * n_mels` floats and each non-null
/// output must have room for its values.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_predict(
    m: *mut HgrlModel,
    features: *const f32,
    batch: usize,
    fae: *mut f32,
    cae: *mut f32,
    ar: *mut f32,
) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        if features.is_null() {
            return Err(fail(HgrlStatus::NullPointer, "features is null"));
        }
        if batch == 0 {
            return Err(fail(HgrlStatus::InvalidArgument, "batch must be positive"));
        }
        let s = h.model.input();
        let n = batch * s.frames * s.n_mels;
        // SAFETY: caller guarantees `n` readable floats.
        let data = unsafe { std::slice::from_raw_parts(features, n) }.to_vec();
        let x = Tensor::new(&[batch, 1, s.frames, s.n_mels], data)
            .map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let (pf, pc, pa) = predict(h, x)?;
        debug_assert_eq!(pf.len(), batch * N_FINE);
        unsafe {
            write_out(fae, &pf);
            if let Some(c) = pc {
                debug_assert_eq!(c.len(), batch * N_COARSE);
                write_out(cae, &c);
            }
            write_out(ar, &pa);
        }
        Ok(())
    })
}

/// Featurizes a WAV file with the model's feature settings and predicts it.
/// Outputs are as for [`hgrl_model_predict`] with a batch of one.
///
/// # Safety
/// `m` must be a live handle, `path` a NUL-terminated string and each
/// non-null output large enough.
#[no_mangle]
pub unsafe extern "C" fn hgrl_model_predict_wav(
    m: *mut HgrlModel,
    path: *const c_char,
    fae: *mut f32,
    cae: *mut f32,
    ar: *mut f32,
) -> HgrlStatus {
    guard(|| {
        let h = unsafe { model_arg(m) }?;
        let path = PathBuf::from(unsafe { str_arg(path, "path") }?);
        let clip = load_wav(&path).map_err(|e| fail(HgrlStatus::Io, e))?;
        let spec =
            featurize(&clip, &h.features).map_err(|e| fail(HgrlStatus::InvalidArgument, e))?;
        let s = h.model.input();
        if spec.frames() != s.frames || spec.n_mels() != s.n_mels {
            return Err(fail(
                HgrlStatus::ShapeMismatch,
                format!(
                    "clip gives {}x{} features, model expects {}x{}",
                    spec.frames(),
                    spec.n_mels(),
                    s.frames,
                    s.n_mels
                ),
            ));
        }
        let x = Tensor::new(&[1, 1, s.frames, s.n_mels], spec.values().to_vec())
            .map_err(|e| fail(HgrlStatus::Internal, e))?;
        let (pf, pc, pa) = predict(h, x)?;
        unsafe {
            write_out(fae, &pf);
            if let Some(c) = pc {
                write_out(cae, &c);
            }
            write_out(ar, &pa);
        }
        Ok(())
    })
}
