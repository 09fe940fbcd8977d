#![allow(dead_code)]

use cslsm_core::Volume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_volume(seed: u64, nx: usize, ny: usize, nz: usize) -> Volume {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..nx * ny * nz).map(|_| rng.gen_range(0.0..1.0)).collect();
    Volume::new(nx, ny, nz, v).unwrap()
}

/// SSIM by direct summation over the full 11×11×11 window at every voxel.
/// Half-sample symmetric padding; assumes every axis is longer than 5.
pub fn brute_force_ssim(a: &Volume, b: &Volume) -> f64 {
    let sigma: f64 = 1.5;
    let raw: Vec<f64> = (-5i64..=5)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let fold = |i: i64, n: usize| -> usize {
        let n = n as i64;
        let j = if i < 0 {
            -i - 1
        } else if i >= n {
            2 * n - i - 1
        } else {
            i
        };
        j as usize
    };
    let (nx, ny, nz) = a.dims();
    let (c1, c2) = (0.0001, 0.0009);
    let mut acc = 0.0;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (k, wk) in w.iter().enumerate() {
                    let zz = fold(z as i64 + k as i64 - 5, nz);
                    for (j, wj) in w.iter().enumerate() {
                        let yj = fold(y as i64 + j as i64 - 5, ny);
                        for (i, wi) in w.iter().enumerate() {
                            let xi = fold(x as i64 + i as i64 - 5, nx);
                            let weight = wi * wj * wk;
                            let p = a.get(xi, yj, zz);
                            let q = b.get(xi, yj, zz);
                            mx += weight * p;
                            my += weight * q;
                            xx += weight * p * p;
                            yy += weight * q * q;
                            xy += weight * p * q;
                        }
                    }
                }
                let vx = xx - mx * mx;
                let vy = yy - my * my;
                let cov = xy - mx * my;
                acc += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
            }
        }
    }
    acc / (nx * ny * nz) as f64
}

/// Minimizes a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-11 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
