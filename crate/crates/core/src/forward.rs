//! Mask generation and the coded-exposure forward model.
//!
//! Shot `j` integrates `R` consecutive slices, each multiplied element-wise
//! by its mask: `b_j = Σ_r φ_r ⊙ v_{jR + r}` (0-based). The same `R` masks
//! are used for every shot.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::KeyedStream;
use crate::volume::{MaskSet, MeasurementSet, Volume};

pub const DEFAULT_MASK_DENSITY: f64 = 0.5;
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.001;

#[derive(Clone, Debug, PartialEq)]
pub struct EncodeConfig {
    pub ratio: usize,
    pub mask_density: f64,
    pub mask_seed: u64,
    pub noise_variance: f64,
    pub noise_seed: u64,
}

impl EncodeConfig {
    pub fn noise_free(ratio: usize, mask_seed: u64) -> Self {
        Self {
            ratio,
            mask_density: DEFAULT_MASK_DENSITY,
            mask_seed,
            noise_variance: 0.0,
            noise_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratio == 0 {
            return Err(Error::config("compression ratio must be at least 1"));
        }
        check_density(self.mask_density)?;
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::config(format!(
                "noise variance must be finite and non-negative, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }
}

fn check_density(density: f64) -> Result<()> {
    if density > 0.0 && density < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "mask density must lie strictly inside (0, 1), got {density}"
        )))
    }
}

/// Bernoulli(`density`) masks. Element `(r, p)` is one when the keyed
/// SplitMix64 draw for stream `r`, counter `p` falls below `density`.
pub fn generate_masks(
    nx: usize,
    ny: usize,
    count: usize,
    density: f64,
    seed: u64,
) -> Result<MaskSet> {
    if nx == 0 || ny == 0 || count == 0 {
        return Err(Error::config("mask dimensions and count must be positive"));
    }
    check_density(density)?;
    let stream = KeyedStream::new(seed);
    let len = nx * ny;
    let bits = (0..count * len)
        .map(|i| {
            let (r, p) = (i / len, i % len);
            (stream.uniform(r as u64, p as u64) < density) as u8
        })
        .collect();
    MaskSet::new(nx, ny, count, seed, bits)
}

fn check_masks(nx: usize, ny: usize, masks: &MaskSet) -> Result<()> {
    if masks.nx() != nx || masks.ny() != ny {
        return Err(Error::dims(format!(
            "masks are {}x{}, data is {nx}x{ny}",
            masks.nx(),
            masks.ny()
        )));
    }
    Ok(())
}

/// `Σ_r φ_r ⊙ slices[r]` for one shot. `slices` holds `R` consecutive
/// slices back to back.
pub fn forward_shot(masks: &MaskSet, slices: &[f64], out: &mut [f64]) {
    let len = out.len();
    debug_assert_eq!(slices.len(), len * masks.count());
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..masks.count() {
        let m = masks.mask(r);
        let s = &slices[r * len..(r + 1) * len];
        for p in 0..len {
            if m[p] != 0 {
                out[p] += s[p];
            }
        }
    }
}

/// Adjoint of [`forward_shot`]: slice `r` of the output is `φ_r ⊙ b`.
pub fn adjoint_shot(masks: &MaskSet, shot: &[f64], out: &mut [f64]) {
    let len = shot.len();
    debug_assert_eq!(out.len(), len * masks.count());
    for r in 0..masks.count() {
        let m = masks.mask(r);
        let o = &mut out[r * len..(r + 1) * len];
        for p in 0..len {
            o[p] = if m[p] != 0 { shot[p] } else { 0.0 };
        }
    }
}

/// Applies the forward operator to a whole volume, one shot per `R` slices.
pub fn forward_volume(v: &Volume, masks: &MaskSet) -> Result<Vec<f64>> {
    check_masks(v.nx(), v.ny(), masks)?;
    let ratio = masks.count();
    if !v.nz().is_multiple_of(ratio) {
        return Err(Error::config(format!(
            "volume depth {} is not divisible by the compression ratio {ratio}",
            v.nz()
        )));
    }
    let len = v.slice_len();
    let mut out = vec![0.0; v.nz() / ratio * len];
    out.par_chunks_mut(len).enumerate().for_each(|(j, shot)| {
        forward_shot(
            masks,
            &v.voxels()[j * ratio * len..(j + 1) * ratio * len],
            shot,
        );
    });
    Ok(out)
}

/// Encodes `v` with the given masks. With a positive noise variance each
/// shot is normalized by `R`, perturbed by N(0, σ²) drawn from stream `j`
/// at counter `pixel`, and scaled back by `R`.
pub fn encode_with_masks(
    v: &Volume,
    masks: &MaskSet,
    noise_variance: f64,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    let ratio = masks.count();
    let mut data = forward_volume(v, masks)?;
    if noise_variance > 0.0 {
        let stream = KeyedStream::new(noise_seed);
        let sigma = noise_variance.sqrt();
        let r = ratio as f64;
        data.par_chunks_mut(v.slice_len())
            .enumerate()
            .for_each(|(j, shot)| {
                for (p, b) in shot.iter_mut().enumerate() {
                    let normalized = *b / r + sigma * stream.normal(j as u64, p as u64);
                    *b = normalized * r;
                }
            });
    }
    MeasurementSet::new(
        v.nx(),
        v.ny(),
        ratio,
        noise_variance,
        noise_seed,
        masks.seed(),
        data,
    )
}

/// Generates masks per `cfg` and encodes `v`.
pub fn encode(v: &Volume, cfg: &EncodeConfig) -> Result<(MeasurementSet, MaskSet)> {
    cfg.validate()?;
    if !v.nz().is_multiple_of(cfg.ratio) {
        return Err(Error::config(format!(
            "volume depth {} is not divisible by the compression ratio {}",
            v.nz(),
            cfg.ratio
        )));
    }
    let masks = generate_masks(v.nx(), v.ny(), cfg.ratio, cfg.mask_density, cfg.mask_seed)?;
    let ms = encode_with_masks(v, &masks, cfg.noise_variance, cfg.noise_seed)?;
    Ok((ms, masks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) const DEFAULT_SEED: u64 = 2024;

    #[test]
    fn mask_density_and_distinctness() {
        let m = generate_masks(64, 64, 4, 0.5, DEFAULT_SEED).unwrap();
        // Frozen after generation: densities 0.5005, 0.5122, 0.5088, 0.5090.
        for r in 0..4 {
            let d = m.density(r);
            assert!((0.4..=0.6).contains(&d), "mask {r} density {d}");
        }
        for r in 1..4 {
            assert_ne!(m.mask(0), m.mask(r));
        }
        assert_eq!(m, generate_masks(64, 64, 4, 0.5, DEFAULT_SEED).unwrap());
        assert_ne!(m, generate_masks(64, 64, 4, 0.5, DEFAULT_SEED + 1).unwrap());
    }

    #[test]
    fn density_bounds() {
        assert!(generate_masks(4, 4, 1, 0.0, 1).is_err());
        assert!(generate_masks(4, 4, 1, 1.0, 1).is_err());
        assert!(generate_masks(4, 4, 0, 0.5, 1).is_err());
    }

    #[test]
    fn identity_encoding() {
        let v = Volume::new(2, 2, 3, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
        let ones = MaskSet::new(2, 2, 1, 0, vec![1; 4]).unwrap();
        let ms = encode_with_masks(&v, &ones, 0.0, 0).unwrap();
        assert_eq!(ms.data(), v.voxels());
        assert_eq!(ms.shots(), 3);

        let zero = Volume::zeros(8, 8, 4);
        let (ms, _) = encode(&zero, &EncodeConfig::noise_free(2, 5)).unwrap();
        assert!(ms.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn hand_evaluated_shot() {
        let masks = MaskSet::new(2, 2, 2, 0, vec![1, 0, 0, 1, 0, 1, 1, 0]).unwrap();
        let v = Volume::new(2, 2, 2, vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();
        let ms = encode_with_masks(&v, &masks, 0.0, 0).unwrap();
        assert_eq!(ms.data(), &[1., 6., 7., 4.]);
    }

    #[test]
    fn depth_must_divide() {
        let v = Volume::zeros(4, 4, 6);
        assert!(matches!(
            encode(&v, &EncodeConfig::noise_free(4, 1)),
            Err(Error::Config(_))
        ));
    }

    fn random_volume(rng: &mut ChaCha8Rng, nx: usize, ny: usize, nz: usize) -> Volume {
        Volume::new(
            nx,
            ny,
            nz,
            (0..nx * ny * nz)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let masks = generate_masks(8, 8, 3, 0.5, 9).unwrap();
        for _ in 0..10 {
            let a = random_volume(&mut rng, 8, 8, 6);
            let b = random_volume(&mut rng, 8, 8, 6);
            let (alpha, beta) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let combo: Vec<f64> = a
                .voxels()
                .iter()
                .zip(b.voxels())
                .map(|(x, y)| alpha * x + beta * y)
                .collect();
            let combo = Volume::new(8, 8, 6, combo).unwrap();
            let lhs = forward_volume(&combo, &masks).unwrap();
            let fa = forward_volume(&a, &masks).unwrap();
            let fb = forward_volume(&b, &masks).unwrap();
            for i in 0..lhs.len() {
                assert!((lhs[i] - (alpha * fa[i] + beta * fb[i])).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for ratio in 1..5 {
            let masks = generate_masks(7, 5, ratio, 0.5, ratio as u64).unwrap();
            let len = 35;
            let v: Vec<f64> = (0..len * ratio).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut fv = vec![0.0; len];
            forward_shot(&masks, &v, &mut fv);
            let mut ftb = vec![0.0; len * ratio];
            adjoint_shot(&masks, &b, &mut ftb);
            let lhs: f64 = fv.iter().zip(&b).map(|(x, y)| x * y).sum();
            let rhs: f64 = v.iter().zip(&ftb).map(|(x, y)| x * y).sum();
            assert!((lhs - rhs).abs() <= 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn noise_statistics() {
        let ratio = 4;
        let v = Volume::zeros(128, 128, 8 * ratio);
        let cfg = EncodeConfig {
            ratio,
            mask_density: 0.5,
            mask_seed: 3,
            noise_variance: 0.001,
            noise_seed: 17,
        };
        let (ms, _) = encode(&v, &cfg).unwrap();
        let s: Vec<f64> = ms.data().iter().map(|b| b / ratio as f64).collect();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64;
        assert!((0.0009..=0.0011).contains(&var), "variance {var}");

        let (again, _) = encode(&v, &cfg).unwrap();
        assert_eq!(ms, again);
    }

    #[test]
    fn noise_free_matches_clean_encoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_volume(&mut rng, 6, 6, 4);
        let masks = generate_masks(6, 6, 2, 0.5, 1).unwrap();
        let clean = forward_volume(&v, &masks).unwrap();
        assert_eq!(
            encode_with_masks(&v, &masks, 0.0, 99).unwrap().data(),
            &clean[..]
        );
        assert_ne!(
            encode_with_masks(&v, &masks, 0.001, 99).unwrap().data(),
            &clean[..]
        );
    }
}
