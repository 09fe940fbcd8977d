use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use cslsm::*;

fn last_error() -> String {
    let p = cslsm_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn phantom(nz: usize) -> *mut CslsmVolume {
    let mut v = ptr::null_mut();
    let status = unsafe { cslsm_phantom_generate(32, 32, nz, 10, 4, &mut v) };
    assert_eq!(status, CslsmStatus::Ok);
    v
}

#[test]
fn version_is_static_text() {
    let v = unsafe { CStr::from_ptr(cslsm_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn volume_round_trip_through_handles_and_files() {
    let data: Vec<f64> = (0..24).map(|i| i as f64 / 24.0).collect();
    let mut v = ptr::null_mut();
    unsafe {
        assert_eq!(
            cslsm_volume_new(4, 3, 2, data.as_ptr(), &mut v),
            CslsmStatus::Ok
        );
        let (mut nx, mut ny, mut nz) = (0, 0, 0);
        assert_eq!(
            cslsm_volume_dims(v, &mut nx, &mut ny, &mut nz),
            CslsmStatus::Ok
        );
        assert_eq!((nx, ny, nz), (4, 3, 2));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("v.cslv").to_str().unwrap()).unwrap();
        assert_eq!(cslsm_volume_write(v, path.as_ptr()), CslsmStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(cslsm_volume_read(path.as_ptr(), &mut back), CslsmStatus::Ok);
        let mut out = vec![0.0; 24];
        assert_eq!(
            cslsm_volume_copy_voxels(back, out.as_mut_ptr(), 24),
            CslsmStatus::Ok
        );
        // Files store binary32.
        for (a, b) in data.iter().zip(&out) {
            assert_eq!(*a as f32 as f64, *b);
        }
        assert_eq!(
            cslsm_volume_copy_voxels(back, out.as_mut_ptr(), 23),
            CslsmStatus::Dimension
        );
        cslsm_volume_free(back);
        cslsm_volume_free(v);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut v = ptr::null_mut();
        assert_eq!(
            cslsm_volume_new(2, 2, 1, ptr::null(), &mut v),
            CslsmStatus::NullPointer
        );
        assert!(last_error().contains("voxels"));

        let nan = [f64::NAN, 0.0, 0.0, 0.0];
        assert_ne!(
            cslsm_volume_new(2, 2, 1, nan.as_ptr(), &mut v),
            CslsmStatus::Ok
        );
        assert!(v.is_null());

        let missing = CString::new("/nonexistent/dir/v.cslv").unwrap();
        assert_eq!(cslsm_volume_read(missing.as_ptr(), &mut v), CslsmStatus::Io);
        assert!(last_error().contains("/nonexistent/dir/v.cslv"));

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.cslv");
        std::fs::write(&junk, b"XXXX\x01").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(
            cslsm_volume_read(junk.as_ptr(), &mut v),
            CslsmStatus::Format
        );

        let vol = phantom(20);
        let (mut ms, mut masks) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            cslsm_encode(vol, 3, 0.5, 1, 0.0, 1, &mut ms, &mut masks),
            CslsmStatus::Config
        );
        assert!(last_error().contains("divisible"));
        cslsm_volume_free(vol);

        cslsm_volume_free(ptr::null_mut());
        cslsm_masks_free(ptr::null_mut());
        cslsm_measurements_free(ptr::null_mut());
    }
}

#[test]
fn encode_reconstruct_evaluate() {
    unsafe {
        let truth = phantom(20);
        let (mut ms, mut masks) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            cslsm_encode(truth, 4, 0.5, 2, 0.0, 3, &mut ms, &mut masks),
            CslsmStatus::Ok
        );
        let params = CslsmSolverParams {
            denoiser: CslsmDenoiser::Tv,
            lambda: 0.01,
            rho: 0.1,
            gamma: 0.01,
            temporal: true,
            max_iters: 10,
            rel_tol: 0.0,
        };
        let mut recon = ptr::null_mut();
        let mut iters = 0;
        assert_eq!(
            cslsm_reconstruct(ms, masks, &params, &mut recon, &mut iters),
            CslsmStatus::Ok
        );
        assert!(iters >= 1 && iters <= 10);

        let (mut p, mut s) = (0.0, 0.0);
        assert_eq!(cslsm_psnr(truth, recon, 1.0, &mut p), CslsmStatus::Ok);
        assert_eq!(cslsm_ssim3d(truth, recon, &mut s), CslsmStatus::Ok);
        assert!(p > 15.0 && p.is_finite(), "{p}");
        assert!(s > 0.5 && s <= 1.0, "{s}");
        assert_eq!(cslsm_psnr(truth, truth, 1.0, &mut p), CslsmStatus::Ok);
        assert_eq!(p, f64::INFINITY);

        let slice_params = CslsmSolverParams {
            temporal: false,
            ..params
        };
        let mut other = ptr::null_mut();
        assert_eq!(
            cslsm_reconstruct(ms, masks, &slice_params, &mut other, ptr::null_mut()),
            CslsmStatus::Config
        );
        assert!(last_error().contains("gamma"));

        cslsm_volume_free(recon);
        cslsm_measurements_free(ms);
        cslsm_masks_free(masks);
        cslsm_volume_free(truth);
    }
}

#[test]
fn header_declares_the_interface() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/cslsm.h")).unwrap();
    for name in [
        "cslsm_last_error",
        "cslsm_volume_new",
        "cslsm_encode",
        "cslsm_reconstruct",
        "cslsm_ssim3d",
        "typedef struct CslsmVolume CslsmVolume;",
        "CSLSM_STATUS_DIVERGENCE = 3",
    ] {
        assert!(header.contains(name), "{name}");
    }
}

/// Compiles and runs a small C program against the header and static library.
#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|p| p.parent()).unwrap();
    let lib = profile_dir.join("libcslsm.a");
    if !lib.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!(
            "skipping: no C compiler or static library at {}",
            lib.display()
        );
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include "cslsm.h"
int main(void) {
    CslsmVolume *v = NULL;
    if (cslsm_phantom_generate(32, 32, 20, 10, 1, &v) != CSLSM_STATUS_OK) return 1;
    double p = 0.0;
    if (cslsm_psnr(v, v, 1.0, &p) != CSLSM_STATUS_OK) return 2;
    CslsmVolume *bad = NULL;
    if (cslsm_volume_read("/nonexistent.cslv", &bad) != CSLSM_STATUS_IO) return 3;
    printf("%s %g\n", cslsm_version(), p);
    cslsm_volume_free(v);
    return 0;
}
"#,
    )
    .unwrap();
    let bin: PathBuf = dir.path().join("main");
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success(), "{:?}", out);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        format!("{} inf", env!("CARGO_PKG_VERSION"))
    );
}
