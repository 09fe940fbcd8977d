//! Library results checked against independent reference computations.

mod common;

use cslsm_core::admm::{u_update_slice, v_update_shot};
use cslsm_core::denoise::{
    denoise_bm3d, denoise_tikhonov, denoise_tv, tv_objective, Bm3dParams, Denoiser, DenoiserKind,
    TvParams,
};
use cslsm_core::forward::{adjoint_shot, forward_shot, generate_masks};
use cslsm_core::metrics::{psnr, psnr2d, ssim3d};
use cslsm_core::phantom::{generate_phantom, PhantomSpec};
use cslsm_core::{Slice, Volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_force_ssim, golden_section, random_volume};

#[test]
fn ssim_matches_direct_summation() {
    for seed in [1, 2] {
        let a = random_volume(seed, 16, 16, 16);
        let b = random_volume(seed + 100, 16, 16, 16);
        let fast = ssim3d(&a, &b).unwrap();
        let slow = brute_force_ssim(&a, &b);
        assert!((fast - slow).abs() <= 1e-10, "{fast} vs {slow}");
    }
}

#[test]
fn ssim_matches_direct_summation_on_structured_pair() {
    let truth = generate_phantom(&PhantomSpec::with_dims(24, 24, 20, 4, 3))
        .unwrap()
        .volume;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noisy: Vec<f64> = truth
        .voxels()
        .iter()
        .map(|v| v + rng.gen_range(-0.05..0.05))
        .collect();
    let noisy = Volume::new(24, 24, 20, noisy).unwrap();
    let fast = ssim3d(&truth, &noisy).unwrap();
    assert!((fast - brute_force_ssim(&truth, &noisy)).abs() <= 1e-10);
}

#[test]
fn psnr_falls_as_noise_grows() {
    let truth = random_volume(7, 12, 12, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let base: Vec<f64> = (0..truth.voxels().len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let mut last = f64::INFINITY;
    for sigma in [0.01, 0.03, 0.1] {
        let test: Vec<f64> = truth
            .voxels()
            .iter()
            .zip(&base)
            .map(|(t, n)| t + sigma * n)
            .collect();
        let p = psnr(&truth, &Volume::new(12, 12, 6, test).unwrap(), 1.0).unwrap();
        assert!(p < last);
        last = p;
    }
}

#[test]
fn forward_and_adjoint_are_transposes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (nx, ny, ratio) = (9, 7, 5);
    let len = nx * ny;
    let masks = generate_masks(nx, ny, ratio, 0.4, 12).unwrap();
    let v: Vec<f64> = (0..len * ratio).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut fv = vec![0.0; len];
    let mut atb = vec![0.0; len * ratio];
    forward_shot(&masks, &v, &mut fv);
    adjoint_shot(&masks, &b, &mut atb);
    let lhs: f64 = fv.iter().zip(&b).map(|(x, y)| x * y).sum();
    let rhs: f64 = v.iter().zip(&atb).map(|(x, y)| x * y).sum();
    assert!((lhs - rhs).abs() < 1e-12);
}

/// The v-update satisfies its normal equations `(ΦᵀΦ + ρI)v = Φᵀb + ρg`.
#[test]
fn v_update_satisfies_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (nx, ny, ratio, rho) = (6, 5, 4, 0.3);
    let len = nx * ny;
    let masks = generate_masks(nx, ny, ratio, 0.5, 14).unwrap();
    let b = Slice::new(nx, ny, (0..len).map(|_| rng.gen_range(0.0..3.0)).collect()).unwrap();
    let g: Vec<Slice> = (0..ratio)
        .map(|_| Slice::new(nx, ny, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let v = v_update_shot(&b, &g, &masks, rho).unwrap();
    let flat: Vec<f64> = v.iter().flat_map(|s| s.values().iter().copied()).collect();
    let mut fv = vec![0.0; len];
    forward_shot(&masks, &flat, &mut fv);
    let mut lhs = vec![0.0; len * ratio];
    adjoint_shot(&masks, &fv, &mut lhs);
    let mut atb = vec![0.0; len * ratio];
    adjoint_shot(&masks, b.values(), &mut atb);
    for r in 0..ratio {
        for p in 0..len {
            let i = r * len + p;
            let residual = lhs[i] + rho * flat[i] - atb[i] - rho * g[r].values()[p];
            assert!(residual.abs() < 1e-12);
        }
    }
}

/// Tikhonov prox: the gradient `2λu + ρ(u − g)` vanishes.
#[test]
fn tikhonov_first_order_condition() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let lambda = rng.gen_range(0.0..5.0);
        let rho = rng.gen_range(0.01..5.0);
        let g = Slice::new(3, 2, (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let u = denoise_tikhonov(&g, lambda, rho);
        for (uv, gv) in u.values().iter().zip(g.values()) {
            assert!((2.0 * lambda * uv + rho * (uv - gv)).abs() <= 1e-12);
        }
    }
}

#[test]
fn temporal_tikhonov_matches_golden_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let den = Denoiser::with_defaults(DenoiserKind::Tikhonov);
    let mut draw = || {
        (0..16)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let (v, d, prev, next) = (draw(), draw(), draw(), draw());
    for (lambda, rho, gamma) in [(0.1, 1.0, 0.5), (2.0, 0.01, 0.3), (0.0, 0.2, 1.0)] {
        let u = u_update_slice(&v, &d, &prev, &next, (4, 4), lambda, rho, gamma, &den).unwrap();
        for p in 0..16 {
            let f = |x: f64| {
                lambda * x * x
                    + 0.5 * rho * (x - v[p] - d[p]).powi(2)
                    + 0.5 * gamma * ((x - prev[p]).powi(2) + (x - next[p]).powi(2))
            };
            let best = golden_section(f, -10.0, 10.0);
            assert!((u.values()[p] - best).abs() <= 1e-6);
        }
    }
}

#[test]
fn tv_output_beats_nearby_points() {
    let truth = generate_phantom(&PhantomSpec::with_dims(24, 24, 20, 6, 2))
        .unwrap()
        .volume
        .slice(10);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = Slice::new(
        24,
        24,
        truth
            .values()
            .iter()
            .map(|v| v + rng.gen_range(-0.1..0.1))
            .collect(),
    )
    .unwrap();
    let weight = 0.05;
    let params = TvParams {
        inner_iters: 500,
        inner_tol: 1e-8,
    };
    let u = denoise_tv(&g, weight, &params);
    let best = tv_objective(&u, &g, weight);
    assert!(best < tv_objective(&g, &g, weight));
    for scale in [1e-2, 1e-3] {
        for _ in 0..5 {
            let nearby = Slice::new(
                24,
                24,
                u.values()
                    .iter()
                    .map(|v| v + scale * rng.gen_range(-1.0..1.0))
                    .collect(),
            )
            .unwrap();
            assert!(best <= tv_objective(&nearby, &g, weight) + 1e-9);
        }
    }
}

#[test]
fn bm3d_improves_a_noisy_slice() {
    let truth = generate_phantom(&PhantomSpec::with_dims(32, 32, 20, 12, 5))
        .unwrap()
        .volume
        .slice(10);
    let sigma = 15.0 / 255.0;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let noisy: Vec<f64> = truth
        .values()
        .iter()
        .map(|v| v + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let noisy = Slice::new(32, 32, noisy).unwrap();
    let out = denoise_bm3d(&noisy, 15.0, &Bm3dParams::default()).unwrap();
    let before = psnr2d(&truth, &noisy, 1.0).unwrap();
    let after = psnr2d(&truth, &out, 1.0).unwrap();
    assert!(after >= before + 2.0, "{before:.2} -> {after:.2}");
}
