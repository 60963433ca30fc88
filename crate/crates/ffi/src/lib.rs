//! C interface to the `mcan` library.
//!
//! Objects cross the boundary as opaque pointers created by a
//! `*_generate`, `*_load` or `*_train` function and released with the
//! matching `*_free`. Every fallible function returns an [`McanStatus`];
//! on failure a description is available from [`mcan_last_error_message`]
//! on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use mcan::config::RunConfig;
use mcan::graphdata::{generate_synthetic, load_dataset, write_dataset, Dataset, DatasetPaths};
use mcan::mcan::{Checkpoint, Mcan, ModelData, Sample};
use mcan::trainer::{train_fold, Normalization};
use mcan::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum McanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Config = 5,
    MissingData = 6,
    NonFinite = 7,
    BufferTooSmall = 8,
    Internal = 9,
}

/// A road graph with its speed and context series.
pub struct McanDataset {
    inner: Dataset,
}

/// A trained model together with the normalization it expects.
pub struct McanModel {
    model: Mcan,
    normalization: Normalization,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    status: McanStatus,
    message: String,
}

impl Failure {
    fn new(status: McanStatus, message: impl Into<String>) -> Self {
        Failure {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => McanStatus::Io,
            Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => McanStatus::Parse,
            Error::Config { .. } => McanStatus::Config,
            Error::MissingData(_) | Error::InsufficientHistory { .. } => McanStatus::MissingData,
            Error::NonFinite(_) => McanStatus::NonFinite,
            Error::InvalidArgument(_) => McanStatus::InvalidArgument,
            Error::Shape { .. } => McanStatus::Internal,
        };
        Failure::new(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> McanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => McanStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(fail.message);
            fail.status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("internal error: {msg}"));
            McanStatus::Internal
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(McanStatus::NullPointer, format!("{what} is null")))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(McanStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(McanStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn run_config(toml: *const c_char) -> Result<RunConfig, Failure> {
    let body = if toml.is_null() { "" } else { text(toml, "config")? };
    let cfg = RunConfig::from_toml(body, &[], Path::new(""))?;
    cfg.validate()?;
    Ok(cfg)
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::new(McanStatus::NullPointer, "output pointer is null"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure::new(McanStatus::NullPointer, "output pointer is null"))
    } else {
        Ok(())
    }
}

/// Message of the most recent failure on this thread, or null if none.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn mcan_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mcan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Generate a synthetic dataset. `config_toml` is a run configuration whose
/// `[generate]` table is used; null or empty selects the defaults.
///
/// # Safety
/// `config_toml` must be null or a valid NUL-terminated string and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_generate(
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut McanDataset,
) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let cfg = run_config(config_toml)?;
        let inner = generate_synthetic(&cfg.generate, seed)?;
        store(out, McanDataset { inner })
    })
}

/// Load `graph.json`, `series.csv` and `context.csv` from `dir`.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_load(dir: *const c_char, out: *mut *mut McanDataset) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let dir = PathBuf::from(text(dir, "dir")?);
        let inner = load_dataset(&DatasetPaths::in_dir(dir))?;
        store(out, McanDataset { inner })
    })
}

/// Write the dataset files into the existing directory `dir`.
///
/// # Safety
/// `dataset` must come from this library and `dir` must be a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_save(dataset: *const McanDataset, dir: *const c_char) -> McanStatus {
    guard(|| {
        let ds = borrow(dataset, "dataset")?;
        let dir = PathBuf::from(text(dir, "dir")?);
        write_dataset(&ds.inner, &DatasetPaths::in_dir(dir))?;
        Ok(())
    })
}

/// Number of roads in the dataset.
///
/// # Safety
/// `dataset` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_road_count(dataset: *const McanDataset, out: *mut usize) -> McanStatus {
    guard(|| {
        check_out(out)?;
        *out = borrow(dataset, "dataset")?.inner.len();
        Ok(())
    })
}

/// Number of observations of the road at `road_index`.
///
/// # Safety
/// `dataset` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_series_len(
    dataset: *const McanDataset,
    road_index: usize,
    out: *mut usize,
) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let ds = &borrow(dataset, "dataset")?.inner;
        if road_index >= ds.len() {
            return Err(Failure::new(
                McanStatus::InvalidArgument,
                format!("road index {road_index} out of range for {} roads", ds.len()),
            ));
        }
        *out = ds.speeds(road_index).len();
        Ok(())
    })
}

/// Release a dataset. Null is ignored.
///
/// # Safety
/// `dataset` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mcan_dataset_free(dataset: *mut McanDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Train on the configured training fold of `dataset`. `config_toml` is a
/// run configuration whose `[model]` and `[train]` tables are used.
///
/// # Safety
/// `dataset` must come from this library, `config_toml` must be null or a
/// valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_train(
    dataset: *const McanDataset,
    config_toml: *const c_char,
    seed: u64,
    out: *mut *mut McanModel,
) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let ds = borrow(dataset, "dataset")?;
        let cfg = run_config(config_toml)?;
        let run = train_fold(&ds.inner, &cfg.model, &cfg.train, seed)?;
        let normalization = run.data.normalization().clone();
        store(
            out,
            McanModel {
                model: run.model,
                normalization,
            },
        )
    })
}

/// Load a model file written by [`mcan_model_save`] or the command line tool.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_load(path: *const c_char, out: *mut *mut McanModel) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let ck = Checkpoint::load(Path::new(text(path, "path")?))?;
        let model = ck.model()?;
        store(
            out,
            McanModel {
                model,
                normalization: ck.normalization,
            },
        )
    })
}

/// Write the model and its normalization as a JSON model file.
///
/// # Safety
/// `model` must come from this library and `path` must be a valid
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_save(model: *const McanModel, path: *const c_char) -> McanStatus {
    guard(|| {
        let m = borrow(model, "model")?;
        Checkpoint::new(&m.model, &m.normalization).save(Path::new(text(path, "path")?))?;
        Ok(())
    })
}

/// Number of future slots each prediction covers.
///
/// # Safety
/// `model` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_horizon(model: *const McanModel, out: *mut usize) -> McanStatus {
    guard(|| {
        check_out(out)?;
        *out = borrow(model, "model")?.model.config.horizon;
        Ok(())
    })
}

/// Number of scalar parameters.
///
/// # Safety
/// `model` must come from this library and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_param_count(model: *const McanModel, out: *mut usize) -> McanStatus {
    guard(|| {
        check_out(out)?;
        *out = borrow(model, "model")?.model.param_count();
        Ok(())
    })
}

/// Predict the speeds in km/h of road `road_index` at slots `t .. t + H`
/// into `out[0 .. H]`. Fails with `BufferTooSmall` when `out_len < H` and
/// with `InvalidArgument` when the road has too little history at `t`.
///
/// # Safety
/// `model` and `dataset` must come from this library and `out` must point
/// to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_predict(
    model: *const McanModel,
    dataset: *const McanDataset,
    road_index: usize,
    t: usize,
    out: *mut f64,
    out_len: usize,
) -> McanStatus {
    guard(|| {
        check_out(out)?;
        let m = borrow(model, "model")?;
        let ds = borrow(dataset, "dataset")?;
        let h = m.model.config.horizon;
        if out_len < h {
            return Err(Failure::new(
                McanStatus::BufferTooSmall,
                format!("output holds {out_len} values but the horizon is {h}"),
            ));
        }
        let data = ModelData::new(&ds.inner, &m.normalization, &m.model.config)?;
        let s = Sample { road: road_index, t };
        if !data.is_eligible(s) {
            return Err(Failure::new(
                McanStatus::InvalidArgument,
                format!("no prediction possible for road index {road_index} at t={t}"),
            ));
        }
        let pred = m.model.predict(&data.inputs(s)?)?;
        let kmh = data.to_kmh(road_index, &pred.speed);
        std::slice::from_raw_parts_mut(out, h).copy_from_slice(&kmh);
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn mcan_model_free(model: *mut McanModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_codes() {
        let f: Failure = Error::MissingData("x".into()).into();
        assert_eq!(f.status, McanStatus::MissingData);
        let f: Failure = Error::NonFinite("w".into()).into();
        assert_eq!(f.status, McanStatus::NonFinite);
    }

    #[test]
    fn panics_become_internal_errors() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, McanStatus::Internal);
        let msg = unsafe { CStr::from_ptr(mcan_last_error_message()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }

    #[test]
    fn null_output_rejected() {
        let status = unsafe { mcan_dataset_generate(ptr::null(), 1, ptr::null_mut()) };
        assert_eq!(status, McanStatus::NullPointer);
    }
}
