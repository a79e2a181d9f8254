//! C ABI for the ofpnet model.
//!
//! Models are opaque [`OfpModel`] handles created by [`ofp_model_new`] or
//! [`ofp_model_load`] and released with [`ofp_model_free`]. Every fallible
//! call returns an [`OfpStatus`]; on failure [`ofp_last_error`] describes the
//! most recent error on the calling thread.
//!
//! Light fields cross the boundary as dense `f32` luma buffers laid out
//! `(u, v, y, x)`, row-major, values in `[0, 1]`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ofpnet::eval::psnr_y;
use ofpnet::lightfield::LightField;
use ofpnet::model::{read_checkpoint, ModelConfig, OfpNet};
use ofpnet::Error;

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OfpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Checkpoint = 4,
    Size = 5,
    Panic = 6,
    Internal = 7,
}

/// Architecture preset for [`ofp_model_new`]: the full-size network.
pub const OFP_PRESET_FULL: u32 = 0;
/// Architecture preset for [`ofp_model_new`]: the small single-core network.
pub const OFP_PRESET_DESK: u32 = 1;

/// Opaque model handle.
pub struct OfpModel {
    net: OfpNet<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn fail(status: OfpStatus, msg: impl Into<String>) -> OfpStatus {
    set_error(msg);
    status
}

fn status_of(err: &Error) -> OfpStatus {
    match err {
        Error::Io(_) | Error::Image(_) | Error::MissingView { .. } => OfpStatus::Io,
        Error::Checkpoint(_) | Error::Json(_) => OfpStatus::Checkpoint,
        Error::Size(_) | Error::Bounds(_) | Error::Colorspace { .. } => OfpStatus::Size,
        Error::Config(_) | Error::Range(_) => OfpStatus::InvalidArgument,
        _ => OfpStatus::Internal,
    }
}

/// Clears the error slot, runs `f`, and converts errors and panics to codes.
fn guard(f: impl FnOnce() -> Result<(), OfpStatus>) -> OfpStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OfpStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            fail(OfpStatus::Panic, format!("panic: {msg}"))
        }
    }
}

fn lib_err(err: Error) -> OfpStatus {
    fail(status_of(&err), err.to_string())
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), OfpStatus> {
    if p.is_null() {
        Err(fail(OfpStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn volume(u: usize, v: usize, h: usize, w: usize) -> Result<usize, OfpStatus> {
    let n = [u, v, h, w]
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| fail(OfpStatus::InvalidArgument, "light field size overflows"))?;
    if n == 0 {
        return Err(fail(
            OfpStatus::InvalidArgument,
            "light field has a zero dimension",
        ));
    }
    Ok(n)
}

/// # Safety
/// `data` must point to `u * v * h * w` readable floats.
unsafe fn read_field(
    data: *const f32,
    u: usize,
    v: usize,
    h: usize,
    w: usize,
) -> Result<LightField, OfpStatus> {
    let n = volume(u, v, h, w)?;
    let values = std::slice::from_raw_parts(data, n).to_vec();
    LightField::from_luma((u, v), (h, w), values).map_err(lib_err)
}

/// Creates a freshly initialized model. `preset` is [`OFP_PRESET_FULL`] or
/// [`OFP_PRESET_DESK`]. A fresh model returns its input unchanged.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn ofp_model_new(
    preset: u32,
    seed: u64,
    out: *mut *mut OfpModel,
) -> OfpStatus {
    guard(|| {
        non_null(out, "out")?;
        let config = match preset {
            OFP_PRESET_FULL => ModelConfig::default(),
            OFP_PRESET_DESK => ModelConfig::desk(),
            other => {
                return Err(fail(
                    OfpStatus::InvalidArgument,
                    format!("unknown preset {other}"),
                ))
            }
        };
        let net = OfpNet::new(config, seed).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OfpModel { net }));
        Ok(())
    })
}

/// Loads the model stored in a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` as in [`ofp_model_new`].
#[no_mangle]
pub unsafe extern "C" fn ofp_model_load(path: *const c_char, out: *mut *mut OfpModel) -> OfpStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(OfpStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let ckpt = read_checkpoint(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(OfpModel { net: ckpt.model }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from this library that was not freed.
#[no_mangle]
pub unsafe extern "C" fn ofp_model_free(model: *mut OfpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of learnable scalars.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ofp_model_param_count(
    model: *const OfpModel,
    out: *mut usize,
) -> OfpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        *out = (*model).net.param_count();
        Ok(())
    })
}

/// Angular grid the model was built for.
///
/// # Safety
/// `model` must be a live handle; `u` and `v` writable.
#[no_mangle]
pub unsafe extern "C" fn ofp_model_angular_size(
    model: *const OfpModel,
    u: *mut usize,
    v: *mut usize,
) -> OfpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(u, "u")?;
        non_null(v, "v")?;
        let (au, av) = (*model).net.config().angular_size;
        *u = au;
        *v = av;
        Ok(())
    })
}

/// Super-resolves a bicubically upsampled luma field. `lr` and `sr` both
/// hold `u * v * h * w` floats; `h` and `w` must be multiples of 4 and
/// `(u, v)` must match the model. `sr_len` guards the output size.
///
/// # Safety
/// `model` must be a live handle, `lr` readable and `sr` writable for the
/// stated lengths. The buffers must not overlap.
#[no_mangle]
pub unsafe extern "C" fn ofp_model_forward(
    model: *const OfpModel,
    lr: *const f32,
    u: usize,
    v: usize,
    h: usize,
    w: usize,
    sr: *mut f32,
    sr_len: usize,
) -> OfpStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(lr, "lr")?;
        non_null(sr, "sr")?;
        let n = volume(u, v, h, w)?;
        if sr_len != n {
            return Err(fail(
                OfpStatus::Size,
                format!("sr holds {sr_len} floats, {n} needed"),
            ));
        }
        let input = read_field(lr, u, v, h, w)?;
        let output = (*model).net.forward(&input).map_err(lib_err)?;
        ptr::copy_nonoverlapping(output.as_slice().as_ptr(), sr, n);
        Ok(())
    })
}

/// Mean per-view PSNR in dB between two luma fields, peak 1.
///
/// # Safety
/// `sr` and `gt` must each hold `u * v * h * w` readable floats; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ofp_psnr_y(
    sr: *const f32,
    gt: *const f32,
    u: usize,
    v: usize,
    h: usize,
    w: usize,
    out: *mut f64,
) -> OfpStatus {
    guard(|| {
        non_null(sr, "sr")?;
        non_null(gt, "gt")?;
        non_null(out, "out")?;
        let a = read_field(sr, u, v, h, w)?;
        let b = read_field(gt, u, v, h, w)?;
        *out = psnr_y(&a, &b).map_err(lib_err)?;
        Ok(())
    })
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ofp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ofp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
