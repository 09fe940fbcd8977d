//! Isotropic total-variation denoising by Chambolle's dual projection.
//!
//! Solves `argmin_u w·TV(u) + ½‖u − g‖²` through the dual variable
//! `p = (p_x, p_y)`, `|p| ≤ 1`, with `u = g − w·div p`. Gradients are
//! forward differences with a replicate (Neumann) boundary, so the last
//! column/row has zero gradient; `div` is the negative adjoint.

use crate::error::{Error, Result};
use crate::volume::Slice;

pub const TV_STEP: f64 = 0.248;

#[derive(Clone, Debug, PartialEq)]
pub struct TvParams {
    pub inner_iters: usize,
    /// Stop once the largest dual update falls to this value.
    pub inner_tol: f64,
}

impl Default for TvParams {
    fn default() -> Self {
        Self {
            inner_iters: 50,
            inner_tol: 1e-4,
        }
    }
}

impl TvParams {
    pub fn validate(&self) -> Result<()> {
        if self.inner_iters == 0 || !(self.inner_tol > 0.0) {
            return Err(Error::config("TV needs inner_iters > 0 and inner_tol > 0"));
        }
        Ok(())
    }
}

fn gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            gx[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

fn divergence(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            let i = row + x;
            let mut d = 0.0;
            if x + 1 < w {
                d += px[i];
            }
            if x > 0 {
                d -= px[i - 1];
            }
            if y + 1 < h {
                d += py[i];
            }
            if y > 0 {
                d -= py[i - w];
            }
            out[i] = d;
        }
    }
}

/// Isotropic TV: `Σ sqrt(∂x² + ∂y²)`.
pub fn total_variation(u: &Slice) -> f64 {
    let (w, h) = (u.width(), u.height());
    let mut gx = vec![0.0; u.len()];
    let mut gy = vec![0.0; u.len()];
    gradient(u.values(), w, h, &mut gx, &mut gy);
    gx.iter()
        .zip(&gy)
        .map(|(a, b)| (a * a + b * b).sqrt())
        .sum()
}

/// `w·TV(u) + ½‖u − g‖²`.
pub fn tv_objective(u: &Slice, g: &Slice, weight: f64) -> f64 {
    let fidelity: f64 = u
        .values()
        .iter()
        .zip(g.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    weight * total_variation(u) + 0.5 * fidelity
}

pub fn denoise_tv(g: &Slice, weight: f64, params: &TvParams) -> Slice {
    if weight <= 0.0 {
        return g.clone();
    }
    let (w, h) = (g.width(), g.height());
    let n = g.len();
    let gv = g.values();
    let inv_w = 1.0 / weight;
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut gx = vec![0.0; n];
    let mut gy = vec![0.0; n];
    let mut field = vec![0.0; n];

    for _ in 0..params.inner_iters {
        divergence(&px, &py, w, h, &mut div);
        for i in 0..n {
            field[i] = div[i] - gv[i] * inv_w;
        }
        gradient(&field, w, h, &mut gx, &mut gy);
        let mut max_change = 0.0f64;
        for i in 0..n {
            let norm = (gx[i] * gx[i] + gy[i] * gy[i]).sqrt();
            let scale = 1.0 / (1.0 + TV_STEP * norm);
            let nx = (px[i] + TV_STEP * gx[i]) * scale;
            let ny = (py[i] + TV_STEP * gy[i]) * scale;
            max_change = max_change.max((nx - px[i]).abs()).max((ny - py[i]).abs());
            px[i] = nx;
            py[i] = ny;
        }
        if max_change <= params.inner_tol {
            break;
        }
    }

    divergence(&px, &py, w, h, &mut div);
    let out = gv.iter().zip(&div).map(|(g, d)| g - weight * d).collect();
    Slice::from_raw(w, h, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_slice(seed: u64, w: usize, h: usize) -> Slice {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Slice::new(w, h, (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_weight_is_identity() {
        let g = random_slice(1, 9, 7);
        assert_eq!(denoise_tv(&g, 0.0, &TvParams::default()), g);
    }

    #[test]
    fn constant_is_fixed() {
        let g = Slice::filled(12, 10, 0.37);
        for w in [0.01, 0.5, 10.0] {
            let out = denoise_tv(&g, w, &TvParams::default());
            assert!(out.values().iter().all(|&v| (v - 0.37).abs() <= 1e-15));
        }
    }

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let (w, h) = (6, 5);
        let u = random_slice(2, w, h);
        let px = random_slice(3, w, h);
        let py = random_slice(4, w, h);
        let mut gx = vec![0.0; w * h];
        let mut gy = vec![0.0; w * h];
        gradient(u.values(), w, h, &mut gx, &mut gy);
        let mut div = vec![0.0; w * h];
        divergence(px.values(), py.values(), w, h, &mut div);
        let lhs: f64 = (0..w * h)
            .map(|i| gx[i] * px.values()[i] + gy[i] * py.values()[i])
            .sum();
        let rhs: f64 = -(0..w * h).map(|i| u.values()[i] * div[i]).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn objective_matches_long_run() {
        let g = random_slice(16, 16, 16);
        let weight = 0.1;
        let out = denoise_tv(&g, weight, &TvParams::default());
        let reference = denoise_tv(
            &g,
            weight,
            &TvParams {
                inner_iters: 10_000,
                inner_tol: 1e-14,
            },
        );
        let f_out = tv_objective(&out, &g, weight);
        let f_ref = tv_objective(&reference, &g, weight);
        assert!(f_out <= tv_objective(&g, &g, weight));
        assert!(f_out <= 1.01 * f_ref, "{f_out} vs long run {f_ref}");
    }

    #[test]
    fn descent_over_weights() {
        for seed in 0..10 {
            let g = random_slice(seed, 11, 13);
            for w in [0.01, 0.1, 1.0] {
                let out = denoise_tv(&g, w, &TvParams::default());
                assert!(tv_objective(&out, &g, w) <= tv_objective(&g, &g, w));
            }
        }
    }
}
