//! C ABI over `tcdtrack`.
//!
//! Objects cross the boundary as opaque handles created and released by this
//! library. Every fallible call returns a [`TtStatus`]; on failure the message
//! is kept per thread and read with [`tt_last_error_message`]. Outputs are
//! written only on success.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tcdtrack::geometry::{self, PointCloud};
use tcdtrack::infer::{self, InferenceConfig, TrackingResult};
use tcdtrack::optim::{load_checkpoint, TrainedModel};
use tcdtrack::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtStatus {
    Ok = 0,
    NullPointer = 1,
    /// Empty or non-finite input, bad sizes or an invalid config value.
    InvalidArgument = 2,
    /// Output buffer capacity is smaller than required.
    BufferTooSmall = 3,
    Io = 4,
    /// Malformed file contents.
    Format = 5,
    /// Latent size or frame layout does not match the model.
    Mismatch = 6,
    /// Wrong number of frames for the call.
    Protocol = 7,
    Panic = 8,
    Other = 9,
}

pub struct TtPointCloud(PointCloud);

pub struct TtModel(TrainedModel);

pub struct TtTrackingResult(TrackingResult);

/// Test-time latent fitting settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct TtInferConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Fail(TtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::EmptyCloud | Error::InvalidCoordinate(_) | Error::Config(_) | Error::SequenceTooShort { .. } => {
                TtStatus::InvalidArgument
            }
            Error::ConfigMismatch(_) | Error::Shape(_) => TtStatus::Mismatch,
            Error::Protocol(_) => TtStatus::Protocol,
            Error::Io { .. } | Error::MissingFrame { .. } => TtStatus::Io,
            Error::Format { .. } => TtStatus::Format,
            _ => TtStatus::Other,
        };
        Fail(status, e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(TtStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            TtStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a Path, Fail> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(TtStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn frames(frames: *const *const TtPointCloud, count: usize) -> Result<Vec<PointCloud>, Fail> {
    if frames.is_null() {
        return Err(null("frames"));
    }
    let handles = unsafe { std::slice::from_raw_parts(frames, count) };
    handles
        .iter()
        .enumerate()
        .map(|(i, &h)| unsafe { get(h, &format!("frame {i}")) }.map(|c| c.0.clone()))
        .collect()
}

fn write_slice<T: Copy>(src: &[T], dst: *mut T, capacity: usize) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    if capacity < src.len() {
        return Err(Fail(
            TtStatus::BufferTooSmall,
            format!("buffer holds {capacity} values, need {}", src.len()),
        ));
    }
    unsafe { ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len()) };
    Ok(())
}

fn boxed<T>(value: T, dst: &mut *mut T) {
    *dst = Box::into_raw(Box::new(value));
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null if none.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

#[no_mangle]
pub extern "C" fn tt_infer_config_default() -> TtInferConfig {
    let d = InferenceConfig::default();
    TtInferConfig {
        iterations: d.iterations,
        learning_rate: d.learning_rate,
        seed: d.seed,
    }
}

/// Builds a cloud from `count` points stored as `x0 y0 z0 x1 ...`.
///
/// # Safety
/// `xyz` must point to `3 * count` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_cloud_new(
    xyz: *const f64,
    count: usize,
    frame_index: usize,
    out: *mut *mut TtPointCloud,
) -> TtStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        if xyz.is_null() {
            return Err(null("xyz"));
        }
        let len = count
            .checked_mul(3)
            .ok_or_else(|| Fail(TtStatus::InvalidArgument, format!("{count} points overflow")))?;
        let flat = unsafe { std::slice::from_raw_parts(xyz, len) };
        let points = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        boxed(TtPointCloud(PointCloud::new(points, frame_index)?), dst);
        Ok(())
    })
}

/// Reads a whitespace-separated `.xyz` file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_cloud_read_xyz(
    path: *const c_char,
    frame_index: usize,
    out: *mut *mut TtPointCloud,
) -> TtStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        let cloud = geometry::io::read_xyz(unsafe { self::path(path) }?, frame_index)?;
        boxed(TtPointCloud(cloud), dst);
        Ok(())
    })
}

/// Number of points, or 0 for a null handle.
///
/// # Safety
/// `cloud` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_cloud_len(cloud: *const TtPointCloud) -> usize {
    unsafe { cloud.as_ref() }.map_or(0, |c| c.0.len())
}

/// Copies the coordinates into `xyz`, which holds `capacity` doubles.
///
/// # Safety
/// `cloud` must be a live handle and `xyz` must hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tt_cloud_copy_points(cloud: *const TtPointCloud, xyz: *mut f64, capacity: usize) -> TtStatus {
    guard(|| {
        let cloud = unsafe { get(cloud, "cloud") }?;
        let flat: Vec<f64> = cloud.0.points().iter().flatten().copied().collect();
        write_slice(&flat, xyz, capacity)
    })
}

/// # Safety
/// `cloud` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tt_cloud_free(cloud: *mut TtPointCloud) {
    if !cloud.is_null() {
        drop(unsafe { Box::from_raw(cloud) });
    }
}

/// Two-way Chamfer distance between `a` and `b`.
///
/// # Safety
/// `a` and `b` must be live handles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_chamfer(a: *const TtPointCloud, b: *const TtPointCloud, out: *mut f64) -> TtStatus {
    guard(|| {
        let (a, b, dst) = unsafe { (get(a, "a")?, get(b, "b")?, self::out(out, "out")?) };
        *dst = geometry::chamfer(&a.0, &b.0)?;
        Ok(())
    })
}

/// Gradient of the Chamfer distance w.r.t. the points of `a`, as `3 * len(a)` doubles.
///
/// # Safety
/// `a` and `b` must be live handles; `grad` must hold `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tt_chamfer_gradient(
    a: *const TtPointCloud,
    b: *const TtPointCloud,
    grad: *mut f64,
    capacity: usize,
) -> TtStatus {
    guard(|| {
        let (a, b) = unsafe { (get(a, "a")?, get(b, "b")?) };
        let g: Vec<f64> = geometry::chamfer_gradient(&a.0, &b.0)?.into_iter().flatten().collect();
        write_slice(&g, grad, capacity)
    })
}

/// Nearest point of `target` for each point of `transformed`.
///
/// # Safety
/// Handles must be live; `matches` must hold `capacity` writable entries.
#[no_mangle]
pub unsafe extern "C" fn tt_extract_correspondence(
    transformed: *const TtPointCloud,
    target: *const TtPointCloud,
    matches: *mut usize,
    capacity: usize,
) -> TtStatus {
    guard(|| {
        let (t, g) = unsafe { (get(transformed, "transformed")?, get(target, "target")?) };
        let map = geometry::extract_correspondence(&t.0, &g.0)?;
        write_slice(&map.matches, matches, capacity)
    })
}

/// Loads a `.ckpt` file written by training.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_model_load(path: *const c_char, out: *mut *mut TtModel) -> TtStatus {
    guard(|| {
        let dst = unsafe { self::out(out, "out") }?;
        boxed(TtModel(load_checkpoint(unsafe { self::path(path) }?)?), dst);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tt_model_free(model: *mut TtModel) {
    if !model.is_null() {
        drop(unsafe { Box::from_raw(model) });
    }
}

/// Latent state size, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_model_latent_dim(model: *const TtModel) -> usize {
    unsafe { model.as_ref() }.map_or(0, |m| m.0.decoder.dim())
}

/// Learned mixing weight, or NaN for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_model_omega(model: *const TtModel) -> f64 {
    unsafe { model.as_ref() }.map_or(f64::NAN, |m| m.0.omega)
}

fn inference(config: Option<&TtInferConfig>) -> InferenceConfig {
    let mut c = InferenceConfig::default();
    if let Some(t) = config {
        c.iterations = t.iterations;
        c.learning_rate = t.learning_rate;
        c.seed = t.seed;
    }
    c
}

/// Fits latent states to `count >= 2` frames and tracks each consecutive pair.
/// A null `config` uses the defaults.
///
/// # Safety
/// `model` must be live, `frames` must point to `count` live handles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_track(
    model: *const TtModel,
    frames: *const *const TtPointCloud,
    count: usize,
    config: *const TtInferConfig,
    out: *mut *mut TtTrackingResult,
) -> TtStatus {
    guard(|| {
        let m = unsafe { get(model, "model") }?;
        let dst = unsafe { self::out(out, "out") }?;
        let frames = unsafe { self::frames(frames, count) }?;
        let cfg = inference(unsafe { config.as_ref() });
        boxed(TtTrackingResult(infer::track(&m.0, &frames, &cfg)?), dst);
        Ok(())
    })
}

/// Predicts the frame after three observed frames.
///
/// # Safety
/// As for [`tt_track`]; `count` must be 3 or the call fails with `Protocol`.
#[no_mangle]
pub unsafe extern "C" fn tt_forecast(
    model: *const TtModel,
    frames: *const *const TtPointCloud,
    count: usize,
    config: *const TtInferConfig,
    out: *mut *mut TtPointCloud,
) -> TtStatus {
    guard(|| {
        let m = unsafe { get(model, "model") }?;
        let dst = unsafe { self::out(out, "out") }?;
        let frames = unsafe { self::frames(frames, count) }?;
        let cfg = inference(unsafe { config.as_ref() });
        boxed(TtPointCloud(infer::forecast(&m.0, &frames, &cfg)?), dst);
        Ok(())
    })
}

/// Number of tracked pairs, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tt_result_pairs(result: *const TtTrackingResult) -> usize {
    unsafe { result.as_ref() }.map_or(0, |r| r.0.maps.len())
}

fn pair_index(r: &TtTrackingResult, pair: usize) -> Result<usize, Fail> {
    if pair < r.0.maps.len() {
        Ok(pair)
    } else {
        Err(Fail(
            TtStatus::InvalidArgument,
            format!("pair {pair} out of range ({} pairs)", r.0.maps.len()),
        ))
    }
}

/// Chamfer distance of pair `pair` after displacement.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_result_chamfer(result: *const TtTrackingResult, pair: usize, out: *mut f64) -> TtStatus {
    guard(|| {
        let (r, dst) = unsafe { (get(result, "result")?, self::out(out, "out")?) };
        *dst = r.0.chamfer[pair_index(r, pair)?];
        Ok(())
    })
}

/// Correspondence indices of pair `pair` (one per source point).
///
/// # Safety
/// `result` must be live; `matches` must hold `capacity` writable entries.
#[no_mangle]
pub unsafe extern "C" fn tt_result_matches(
    result: *const TtTrackingResult,
    pair: usize,
    matches: *mut usize,
    capacity: usize,
) -> TtStatus {
    guard(|| {
        let r = unsafe { get(result, "result") }?;
        write_slice(&r.0.maps[pair_index(r, pair)?].matches, matches, capacity)
    })
}

/// A new cloud holding the displaced source of pair `pair`.
///
/// # Safety
/// `result` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tt_result_transformed(
    result: *const TtTrackingResult,
    pair: usize,
    out: *mut *mut TtPointCloud,
) -> TtStatus {
    guard(|| {
        let (r, dst) = unsafe { (get(result, "result")?, self::out(out, "out")?) };
        boxed(TtPointCloud(r.0.transformed[pair_index(r, pair)?].clone()), dst);
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tt_result_free(result: *mut TtTrackingResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_statuses() {
        let status = |e: Error| Fail::from(e).0;
        assert_eq!(status(Error::EmptyCloud), TtStatus::InvalidArgument);
        assert_eq!(status(Error::ConfigMismatch("d".into())), TtStatus::Mismatch);
        assert_eq!(status(Error::Protocol("3 frames".into())), TtStatus::Protocol);
        assert_eq!(status(Error::EmptyDataset), TtStatus::Other);
    }

    #[test]
    fn panics_become_a_status() {
        assert_eq!(guard(|| panic!("boom")), TtStatus::Panic);
        let msg = unsafe { CStr::from_ptr(tt_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }
}
