//! Denoisers used as the prior step of the ADMM iteration.
//!
//! Each denoiser approximately solves
//! `argmin_u λ·ψ(u) + (ρ_eff/2)·‖u − g‖²` for its own regularizer `ψ`.
//! The BM3D-style filter has no explicit `ψ`; it reads `λ` as the noise
//! standard deviation on a 0–255 intensity scale and ignores `ρ_eff`.

mod bm3d;
mod tikhonov;
mod transform;
mod tv;

pub use bm3d::{denoise_bm3d, Bm3dParams};
pub use tikhonov::denoise_tikhonov;
pub use tv::{denoise_tv, total_variation, tv_objective, TvParams};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::volume::Slice;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DenoiserKind {
    Tikhonov,
    Tv,
    Bm3d,
}

impl DenoiserKind {
    pub const ALL: [DenoiserKind; 3] =
        [DenoiserKind::Tikhonov, DenoiserKind::Tv, DenoiserKind::Bm3d];

    pub fn name(self) -> &'static str {
        match self {
            DenoiserKind::Tikhonov => "tikhonov",
            DenoiserKind::Tv => "tv",
            DenoiserKind::Bm3d => "bm3d",
        }
    }
}

impl fmt::Display for DenoiserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DenoiserKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tikhonov" | "tik" => Ok(DenoiserKind::Tikhonov),
            "tv" => Ok(DenoiserKind::Tv),
            "bm3d" => Ok(DenoiserKind::Bm3d),
            other => Err(Error::config(format!(
                "unknown denoiser {other:?} (expected tikhonov, tv or bm3d)"
            ))),
        }
    }
}

/// A denoiser together with its kind-specific parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Denoiser {
    Tikhonov,
    Tv(TvParams),
    Bm3d(Bm3dParams),
}

impl Denoiser {
    pub fn with_defaults(kind: DenoiserKind) -> Self {
        match kind {
            DenoiserKind::Tikhonov => Denoiser::Tikhonov,
            DenoiserKind::Tv => Denoiser::Tv(TvParams::default()),
            DenoiserKind::Bm3d => Denoiser::Bm3d(Bm3dParams::default()),
        }
    }

    pub fn kind(&self) -> DenoiserKind {
        match self {
            Denoiser::Tikhonov => DenoiserKind::Tikhonov,
            Denoiser::Tv(_) => DenoiserKind::Tv,
            Denoiser::Bm3d(_) => DenoiserKind::Bm3d,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Denoiser::Tikhonov => Ok(()),
            Denoiser::Tv(p) => p.validate(),
            Denoiser::Bm3d(p) => p.validate(),
        }
    }

    /// Denoises `g` with regularization weight `lambda` against penalty
    /// `rho_eff`.
    pub fn apply(&self, g: &Slice, lambda: f64, rho_eff: f64) -> Result<Slice> {
        if !(lambda >= 0.0) || !(rho_eff > 0.0) {
            return Err(Error::config(format!(
                "denoiser needs lambda >= 0 and rho_eff > 0, got {lambda} and {rho_eff}"
            )));
        }
        match self {
            Denoiser::Tikhonov => Ok(denoise_tikhonov(g, lambda, rho_eff)),
            Denoiser::Tv(p) => Ok(denoise_tv(g, lambda / rho_eff, p)),
            Denoiser::Bm3d(p) => denoise_bm3d(g, lambda, p),
        }
    }

    /// `ψ(u)` when the prior has an explicit form.
    pub fn prior_value(&self, u: &Slice) -> Option<f64> {
        match self {
            Denoiser::Tikhonov => Some(u.values().iter().map(|v| v * v).sum()),
            Denoiser::Tv(_) => Some(total_variation(u)),
            Denoiser::Bm3d(_) => None,
        }
    }
}
