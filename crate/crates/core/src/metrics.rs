//! Reconstruction quality: PSNR and Gaussian-window SSIM.
//!
//! SSIM uses an 11-tap Gaussian window (σ = 1.5) per axis, constants
//! `c1 = 0.01²` and `c2 = 0.03²` for a unit dynamic range, and half-sample
//! symmetric padding (`c b a | a b c`). The score is averaged over every
//! voxel, borders included.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::{Slice, Volume};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D and 3D windows are outer products.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Maps any integer index into `0..n` by half-sample symmetric reflection.
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// PSNR in dB over all values, `10·log10(count·V² / SSE)`.
///
/// Identical inputs give `f64::INFINITY`.
pub fn psnr_values(reference: &[f64], test: &[f64], peak: f64) -> Result<f64> {
    if reference.len() != test.len() {
        return Err(Error::dims(format!(
            "{} reference values vs {} test values",
            reference.len(),
            test.len()
        )));
    }
    if !(peak > 0.0) {
        return Err(Error::config(format!("peak must be positive, got {peak}")));
    }
    let sse: f64 = reference
        .iter()
        .zip(test)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (reference.len() as f64 * peak * peak / sse).log10())
}

pub fn psnr(reference: &Volume, test: &Volume, peak: f64) -> Result<f64> {
    if !reference.same_dims(test) {
        return Err(Error::dims(format!(
            "volumes are {:?} and {:?}",
            reference.dims(),
            test.dims()
        )));
    }
    psnr_values(reference.voxels(), test.voxels(), peak)
}

pub fn psnr2d(reference: &Slice, test: &Slice, peak: f64) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::dims("slices differ in shape"));
    }
    psnr_values(reference.values(), test.values(), peak)
}

/// Filters `data` (dims `nx × ny × nz`, x fastest) along one axis.
fn filter_axis(data: &[f64], dims: [usize; 3], axis: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let [nx, ny, _] = dims;
    let half = (SSIM_WINDOW / 2) as isize;
    let n = dims[axis];
    let step = [1, nx, nx * ny][axis];
    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(nx * ny)
        .enumerate()
        .for_each(|(z, plane)| {
            for y in 0..ny {
                for x in 0..nx {
                    let pos = [x, y, z][axis] as isize;
                    let base = z * nx * ny + y * nx + x - pos as usize * step;
                    let mut acc = 0.0;
                    for (k, wk) in w.iter().enumerate() {
                        let j = reflect(pos + k as isize - half, n);
                        acc += wk * data[base + j * step];
                    }
                    plane[y * nx + x] = acc;
                }
            }
        });
    out
}

fn smooth(data: &[f64], dims: [usize; 3], axes: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let mut cur = filter_axis(data, dims, 0, w);
    for axis in 1..axes {
        cur = filter_axis(&cur, dims, axis, w);
    }
    cur
}

fn ssim_core(a: &[f64], b: &[f64], dims: [usize; 3], axes: usize) -> f64 {
    let w = gaussian_window();
    let squares =
        |f: fn(f64, f64) -> f64| -> Vec<f64> { a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect() };
    let mx = smooth(a, dims, axes, &w);
    let my = smooth(b, dims, axes, &w);
    let exx = smooth(&squares(|x, _| x * x), dims, axes, &w);
    let eyy = smooth(&squares(|_, y| y * y), dims, axes, &w);
    let exy = smooth(&squares(|x, y| x * y), dims, axes, &w);
    let local: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| local_ssim(mx[i], my[i], exx[i], eyy[i], exy[i]))
        .collect();
    local.iter().sum::<f64>() / a.len() as f64
}

/// SSIM from weighted first and second moments at one position.
pub fn local_ssim(mx: f64, my: f64, exx: f64, eyy: f64, exy: f64) -> f64 {
    let vx = exx - mx * mx;
    let vy = eyy - my * my;
    let cov = exy - mx * my;
    ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
}

/// Mean SSIM over the volume with an 11×11×11 window.
pub fn ssim3d(reference: &Volume, test: &Volume) -> Result<f64> {
    if !reference.same_dims(test) {
        return Err(Error::dims(format!(
            "volumes are {:?} and {:?}",
            reference.dims(),
            test.dims()
        )));
    }
    let (nx, ny, nz) = reference.dims();
    Ok(ssim_core(
        reference.voxels(),
        test.voxels(),
        [nx, ny, nz],
        3,
    ))
}

/// Mean SSIM over the slice with an 11×11 window.
pub fn ssim2d(reference: &Slice, test: &Slice) -> Result<f64> {
    if !reference.same_shape(test) {
        return Err(Error::dims("slices differ in shape"));
    }
    let dims = [reference.width(), reference.height(), 1];
    Ok(ssim_core(reference.values(), test.values(), dims, 2))
}

/// Quality and cost of one reconstruction run.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub method_label: String,
    pub compression_ratio: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub iterations: usize,
    pub wall_seconds: f64,
}

impl MetricsReport {
    pub fn evaluate(
        method_label: impl Into<String>,
        compression_ratio: usize,
        truth: &Volume,
        recon: &Volume,
        iterations: usize,
        wall_seconds: f64,
    ) -> Result<Self> {
        Ok(Self {
            method_label: method_label.into(),
            compression_ratio,
            psnr_db: psnr(truth, recon, 1.0)?,
            ssim: ssim3d(truth, recon)?,
            iterations,
            wall_seconds,
        })
    }
}

/// Decimal text for a metric, `inf` for the identical-input sentinel.
pub fn format_metric(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{x}")
    }
}

pub fn parse_metric(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" => Some(f64::INFINITY),
        other => other.parse().ok(),
    }
}
