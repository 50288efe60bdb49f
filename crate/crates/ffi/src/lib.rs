//! C ABI over the `trajllm` crate.
//!
//! Objects cross the boundary as opaque handles that the caller frees with
//! the matching `*_free` function. Every fallible call returns a
//! [`TrajllmStatus`]; on failure [`trajllm_last_error`] describes the cause
//! until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use trajllm::scene::{generate_dataset, load_scenes, save_scenes, SceneSample, Template, FUTURE_STEPS};
use trajllm::training::{evaluate, load_checkpoint, save_checkpoint, train, Checkpoint, Predictor, TrainConfig};
use trajllm::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajllmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checkpoint = 5,
    Config = 6,
    Diverged = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

/// A loaded or trained model.
pub struct TrajllmModel {
    inner: Checkpoint,
}

/// An ordered set of scenes.
pub struct TrajllmScenes {
    inner: Vec<SceneSample>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrajllmMetrics {
    pub min_ade: f64,
    pub min_fde: f64,
    pub miss_rate: f64,
    pub sample_count: usize,
    pub k_modes: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(TrajllmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidInput(_) | Error::Shape(_) | Error::NonFinite(_) => TrajllmStatus::InvalidArgument,
            Error::SchemaVersion { .. } | Error::MalformedRecord { .. } | Error::Archive { .. } => TrajllmStatus::Format,
            Error::Checkpoint(_) => TrajllmStatus::Checkpoint,
            Error::Config(_) => TrajllmStatus::Config,
            Error::Diverged { .. } => TrajllmStatus::Diverged,
            Error::Io { .. } => TrajllmStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TrajllmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TrajllmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TrajllmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            TrajllmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(TrajllmStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn trajllm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Number of predicted future steps per trajectory.
#[no_mangle]
pub extern "C" fn trajllm_future_steps() -> usize {
    FUTURE_STEPS
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn trajllm_model_load(path: *const c_char, out: *mut *mut TrajllmModel) -> TrajllmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, TrajllmModel { inner: load_checkpoint(path)? })
    })
}

/// Trains a model from a TOML configuration document. `val` may be null.
///
/// # Safety
/// `config_toml` must be a nul-terminated string, `train_scenes` and `val`
/// handles from this library (or null for `val`), `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_model_train(
    config_toml: *const c_char,
    train_scenes: *const TrajllmScenes,
    val: *const TrajllmScenes,
    out: *mut *mut TrajllmModel,
) -> TrajllmStatus {
    guard(|| {
        let config = TrainConfig::from_toml(str_arg(config_toml, "config_toml")?)?;
        let train_scenes = ref_arg(train_scenes, "train_scenes")?;
        let val: &[SceneSample] = val.as_ref().map_or(&[], |v| &v.inner);
        let outcome = train(&config, &train_scenes.inner, val)?;
        put(out, TrajllmModel { inner: Checkpoint { model: outcome.best, predictor: Predictor::Model } })
    })
}

/// # Safety
/// `model` must be a handle from this library and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn trajllm_model_save(model: *const TrajllmModel, path: *const c_char) -> TrajllmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let path = str_arg(path, "path")?;
        if model.inner.predictor != Predictor::Model {
            return Err(Failure(TrajllmStatus::InvalidArgument, "debug checkpoints cannot be re-saved".into()));
        }
        Ok(save_checkpoint(&model.inner.model, path)?)
    })
}

/// # Safety
/// `model` must be a handle from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_model_k_modes(model: *const TrajllmModel, out: *mut usize) -> TrajllmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.inner.model.k_modes();
        Ok(())
    })
}

/// Frees a model handle; null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajllm_model_free(model: *mut TrajllmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reads a scene file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_scenes_load(path: *const c_char, out: *mut *mut TrajllmScenes) -> TrajllmStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        put(out, TrajllmScenes { inner: load_scenes(path)? })
    })
}

/// Generates `count` synthetic scenes. `templates` is a comma-separated list
/// of template names cycled over.
///
/// # Safety
/// `templates` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_scenes_synthesize(
    templates: *const c_char,
    count: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut TrajllmScenes,
) -> TrajllmStatus {
    guard(|| {
        let names = str_arg(templates, "templates")?;
        let templates = names.split(',').map(|t| t.trim().parse::<Template>()).collect::<Result<Vec<_>, _>>()?;
        if count == 0 {
            return Err(Failure(TrajllmStatus::InvalidArgument, "count must be at least 1".into()));
        }
        put(out, TrajllmScenes { inner: generate_dataset(&templates, count, noise, seed)? })
    })
}

/// # Safety
/// `scenes` must be a handle from this library and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn trajllm_scenes_save(scenes: *const TrajllmScenes, path: *const c_char) -> TrajllmStatus {
    guard(|| {
        let scenes = ref_arg(scenes, "scenes")?;
        Ok(save_scenes(&scenes.inner, str_arg(path, "path")?)?)
    })
}

/// # Safety
/// `scenes` must be a handle from this library and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_scenes_len(scenes: *const TrajllmScenes, out: *mut usize) -> TrajllmStatus {
    guard(|| {
        let scenes = ref_arg(scenes, "scenes")?;
        *out.as_mut().ok_or_else(|| null("out"))? = scenes.inner.len();
        Ok(())
    })
}

/// Frees a scene-set handle; null is ignored.
///
/// # Safety
/// `scenes` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn trajllm_scenes_free(scenes: *mut TrajllmScenes) {
    if !scenes.is_null() {
        drop(Box::from_raw(scenes));
    }
}

/// Predicts scene `index`. Writes K mode probabilities to `pi` and the
/// `K x steps x 2` mode locations, row-major, to `trajectories`. `scales`
/// may be null; otherwise it receives the Laplace scales in the same layout.
/// Returns `BufferTooSmall` if `pi_len < K` or a trajectory buffer holds
/// fewer than `K * steps * 2` values.
///
/// # Safety
/// Handles must come from this library; each buffer must be valid for its
/// stated length.
#[no_mangle]
pub unsafe extern "C" fn trajllm_predict(
    model: *const TrajllmModel,
    scenes: *const TrajllmScenes,
    index: usize,
    pi: *mut f64,
    pi_len: usize,
    trajectories: *mut f64,
    trajectories_len: usize,
    scales: *mut f64,
) -> TrajllmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let scenes = ref_arg(scenes, "scenes")?;
        let sample = scenes.inner.get(index).ok_or_else(|| {
            Failure(TrajllmStatus::InvalidArgument, format!("scene index {index} out of range ({} scenes)", scenes.inner.len()))
        })?;
        if pi.is_null() || trajectories.is_null() {
            return Err(null("output buffer"));
        }
        let k = model.inner.model.k_modes();
        let need = k * FUTURE_STEPS * 2;
        if pi_len < k || trajectories_len < need {
            return Err(Failure(TrajllmStatus::BufferTooSmall, format!("need {k} probabilities and {need} trajectory values")));
        }
        let mixture = model.inner.predict(sample)?;
        std::slice::from_raw_parts_mut(pi, k).copy_from_slice(&mixture.pi);
        std::slice::from_raw_parts_mut(trajectories, need).copy_from_slice(mixture.mu.data());
        if !scales.is_null() {
            std::slice::from_raw_parts_mut(scales, need).copy_from_slice(mixture.b.data());
        }
        Ok(())
    })
}

/// Evaluates a model on a scene set; `k_modes` must match the model.
///
/// # Safety
/// Handles must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn trajllm_evaluate(
    model: *const TrajllmModel,
    scenes: *const TrajllmScenes,
    k_modes: usize,
    out: *mut TrajllmMetrics,
) -> TrajllmStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let scenes = ref_arg(scenes, "scenes")?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = evaluate(&model.inner, &scenes.inner, k_modes)?;
        *out = TrajllmMetrics {
            min_ade: r.min_ade,
            min_fde: r.min_fde,
            miss_rate: r.miss_rate,
            sample_count: r.sample_count,
            k_modes: r.k_modes,
        };
        Ok(())
    })
}
