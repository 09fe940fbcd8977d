//! C interface to the reconstruction library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_read` or producer functions and released with the matching `*_free`.
//! Every fallible function returns a [`CslsmStatus`]; on failure the
//! message is available from [`cslsm_last_error`] on the same thread.
//! Panics never unwind into C; they surface as `CSLSM_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cslsm_core::admm::{reconstruct, SolverConfig};
use cslsm_core::denoise::{Denoiser, DenoiserKind};
use cslsm_core::forward::{encode, EncodeConfig};
use cslsm_core::io;
use cslsm_core::metrics;
use cslsm_core::phantom::{generate_phantom, PhantomSpec};
use cslsm_core::{Error, MaskSet, MeasurementSet, Volume};

/// Result codes. Configuration, divergence and I/O failures share their
/// numbers with the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CslsmStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Divergence = 3,
    Io = 4,
    Dimension = 5,
    Format = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CslsmDenoiser {
    Tikhonov = 0,
    Tv = 1,
    Bm3d = 2,
}

/// Solver settings. Zero `max_iters` or `rel_tol` selects the defaults for
/// the noise level of the measurements.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct CslsmSolverParams {
    pub denoiser: CslsmDenoiser,
    pub lambda: f64,
    pub rho: f64,
    pub gamma: f64,
    pub temporal: bool,
    pub max_iters: usize,
    pub rel_tol: f64,
}

pub struct CslsmVolume(Volume);
pub struct CslsmMasks(MaskSet);
pub struct CslsmMeasurements(MeasurementSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CslsmStatus {
    match e {
        Error::Config(_) | Error::Parse { .. } => CslsmStatus::Config,
        Error::Dimension(_) => CslsmStatus::Dimension,
        Error::Divergence { .. } | Error::NonFinite { .. } => CslsmStatus::Divergence,
        Error::Io { .. } => CslsmStatus::Io,
        Error::Denoiser { source, .. } => status_of(source),
        Error::BadMagic { .. }
        | Error::UnsupportedVersion(_)
        | Error::Truncated { .. }
        | Error::TrailingBytes { .. }
        | Error::InvalidMask { .. } => CslsmStatus::Format,
    }
}

struct Failure(CslsmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CslsmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CslsmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CslsmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            set_last_error(format!("panic: {msg}"));
            CslsmStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(CslsmStatus::Config, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cslsm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cslsm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a volume from `nx*ny*nz` voxels, slice-major and row-major.
///
/// # Safety
/// `voxels` must point to `nx*ny*nz` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_new(
    nx: usize,
    ny: usize,
    nz: usize,
    voxels: *const f64,
    out: *mut *mut CslsmVolume,
) -> CslsmStatus {
    guard(|| {
        if voxels.is_null() {
            return Err(null("voxels"));
        }
        let count = nx
            .checked_mul(ny)
            .and_then(|n| n.checked_mul(nz))
            .ok_or_else(|| Failure(CslsmStatus::Dimension, "volume size overflows".into()))?;
        let data = std::slice::from_raw_parts(voxels, count).to_vec();
        emit(out, CslsmVolume(Volume::new(nx, ny, nz, data)?))
    })
}

/// # Safety
/// `v` must be a live handle; each output pointer must be writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_dims(
    v: *const CslsmVolume,
    nx: *mut usize,
    ny: *mut usize,
    nz: *mut usize,
) -> CslsmStatus {
    guard(|| {
        let v = &handle(v, "volume")?.0;
        for (slot, value) in [(nx, v.nx()), (ny, v.ny()), (nz, v.nz())] {
            if !slot.is_null() {
                *slot = value;
            }
        }
        Ok(())
    })
}

/// Copies all voxels into `out`, which holds `len` doubles.
///
/// # Safety
/// `v` must be a live handle and `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_copy_voxels(
    v: *const CslsmVolume,
    out: *mut f64,
    len: usize,
) -> CslsmStatus {
    guard(|| {
        let v = &handle(v, "volume")?.0;
        if out.is_null() {
            return Err(null("output buffer"));
        }
        if len != v.voxels().len() {
            return Err(Failure(
                CslsmStatus::Dimension,
                format!("buffer holds {len} values, volume has {}", v.voxels().len()),
            ));
        }
        ptr::copy_nonoverlapping(v.voxels().as_ptr(), out, len);
        Ok(())
    })
}

/// # Safety
/// `v` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_free(v: *mut CslsmVolume) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_read(
    path: *const c_char,
    out: *mut *mut CslsmVolume,
) -> CslsmStatus {
    guard(|| {
        let path = path_arg(path)?;
        emit(out, CslsmVolume(io::read_volume(path)?))
    })
}

/// # Safety
/// `v` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cslsm_volume_write(
    v: *const CslsmVolume,
    path: *const c_char,
) -> CslsmStatus {
    guard(|| {
        let v = &handle(v, "volume")?.0;
        io::write_volume(v, path_arg(path)?)?;
        Ok(())
    })
}

/// Renders the synthetic heart phantom.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_phantom_generate(
    nx: usize,
    ny: usize,
    nz: usize,
    nuclei: usize,
    seed: u64,
    out: *mut *mut CslsmVolume,
) -> CslsmStatus {
    guard(|| {
        let spec = PhantomSpec::with_dims(nx, ny, nz, nuclei, seed);
        emit(out, CslsmVolume(generate_phantom(&spec)?.volume))
    })
}

/// Encodes `v` into shots with `ratio` masks per shot.
///
/// # Safety
/// `v` must be a live handle; both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_encode(
    v: *const CslsmVolume,
    ratio: usize,
    mask_density: f64,
    mask_seed: u64,
    noise_variance: f64,
    noise_seed: u64,
    out_measurements: *mut *mut CslsmMeasurements,
    out_masks: *mut *mut CslsmMasks,
) -> CslsmStatus {
    guard(|| {
        let v = &handle(v, "volume")?.0;
        if out_measurements.is_null() || out_masks.is_null() {
            return Err(null("output pointer"));
        }
        let cfg = EncodeConfig {
            ratio,
            mask_density,
            mask_seed,
            noise_variance,
            noise_seed,
        };
        let (ms, masks) = encode(v, &cfg)?;
        emit(out_measurements, CslsmMeasurements(ms))?;
        emit(out_masks, CslsmMasks(masks))
    })
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslsm_measurements_free(m: *mut CslsmMeasurements) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cslsm_masks_free(m: *mut CslsmMasks) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_measurements_read(
    path: *const c_char,
    out: *mut *mut CslsmMeasurements,
) -> CslsmStatus {
    guard(|| {
        let path = path_arg(path)?;
        emit(out, CslsmMeasurements(io::read_measurements(path)?))
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cslsm_measurements_write(
    m: *const CslsmMeasurements,
    path: *const c_char,
) -> CslsmStatus {
    guard(|| {
        let m = &handle(m, "measurements")?.0;
        io::write_measurements(m, path_arg(path)?)?;
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_masks_read(
    path: *const c_char,
    out: *mut *mut CslsmMasks,
) -> CslsmStatus {
    guard(|| {
        let path = path_arg(path)?;
        emit(out, CslsmMasks(io::read_masks(path)?))
    })
}

/// # Safety
/// `m` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cslsm_masks_write(
    m: *const CslsmMasks,
    path: *const c_char,
) -> CslsmStatus {
    guard(|| {
        let m = &handle(m, "masks")?.0;
        io::write_masks(m, path_arg(path)?)?;
        Ok(())
    })
}

/// Runs the ADMM reconstruction. `iterations` may be NULL.
///
/// # Safety
/// Handles must be live, `params` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_reconstruct(
    measurements: *const CslsmMeasurements,
    masks: *const CslsmMasks,
    params: *const CslsmSolverParams,
    out: *mut *mut CslsmVolume,
    iterations: *mut usize,
) -> CslsmStatus {
    guard(|| {
        let ms = &handle(measurements, "measurements")?.0;
        let masks = &handle(masks, "masks")?.0;
        let p = *handle(params, "params")?;
        let kind = match p.denoiser {
            CslsmDenoiser::Tikhonov => DenoiserKind::Tikhonov,
            CslsmDenoiser::Tv => DenoiserKind::Tv,
            CslsmDenoiser::Bm3d => DenoiserKind::Bm3d,
        };
        let denoiser = Denoiser::with_defaults(kind);
        let mut cfg = if ms.noise_variance() > 0.0 {
            SolverConfig::noisy(denoiser, p.lambda, p.rho)
        } else {
            SolverConfig::noise_free(denoiser, p.lambda, p.rho)
        };
        if p.temporal {
            cfg = cfg.with_temporal(p.gamma);
        } else if p.gamma != 0.0 {
            return Err(Failure(
                CslsmStatus::Config,
                "gamma requires temporal = true".into(),
            ));
        }
        if p.max_iters > 0 {
            cfg.max_iters = p.max_iters;
        }
        if p.rel_tol > 0.0 {
            cfg.rel_tol = p.rel_tol;
        }
        let rec = reconstruct(ms, masks, &cfg)?;
        if !iterations.is_null() {
            *iterations = rec.iterations();
        }
        emit(out, CslsmVolume(rec.volume))
    })
}

/// PSNR in dB; identical volumes give +infinity.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_psnr(
    reference: *const CslsmVolume,
    test: *const CslsmVolume,
    peak: f64,
    out: *mut f64,
) -> CslsmStatus {
    guard(|| {
        let a = &handle(reference, "reference")?.0;
        let b = &handle(test, "test")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = metrics::psnr(a, b, peak)?;
        Ok(())
    })
}

/// Mean 3D SSIM.
///
/// # Safety
/// Handles must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cslsm_ssim3d(
    reference: *const CslsmVolume,
    test: *const CslsmVolume,
    out: *mut f64,
) -> CslsmStatus {
    guard(|| {
        let a = &handle(reference, "reference")?.0;
        let b = &handle(test, "test")?.0;
        if out.is_null() {
            return Err(null("output pointer"));
        }
        *out = metrics::ssim3d(a, b)?;
        Ok(())
    })
}
