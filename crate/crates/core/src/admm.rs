//! Plug-and-play ADMM reconstruction.
//!
//! The solver minimizes
//!
//! ```text
//! ½ Σ_j ‖b_j − Σ_r φ_r v_{jR+r}‖² + λ Σ_n ψ(v_n) + (γ/2) Σ_n ‖v_n − v_{n−1}‖²
//! ```
//!
//! with a circular slice index, by splitting `v = u` and iterating
//!
//! 1. `v ← (ΦᵀΦ + ρI)⁻¹(Φᵀb + ρ(u − d))`, one shot at a time. The masks
//!    are diagonal, so the inverse reduces to a per-pixel formula through
//!    the Woodbury identity (see [`v_update_shot`]).
//! 2. `u_n ← denoise((ρ(v_n + d_n) + γ(u_{n−1} + u_{n+1})) / (ρ + 2γ))`.
//!    In temporal mode this is a Gauss–Seidel sweep in ascending `n` that
//!    reads the already updated `u_{n−1}` and the previous iterate of
//!    `u_{n+1}`; in slice mode (`γ = 0`) slices are independent.
//! 3. `d ← d + v − u`.

use std::time::Instant;

use rayon::prelude::*;

use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::forward::forward_shot;
use crate::volume::{MaskSet, MeasurementSet, Slice, Volume};

/// Floor for the denominator of the relative-change stopping test.
pub const REL_CHANGE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `v⁰ = u⁰ = Φᵀb / R`, `d⁰ = 0`.
    Adjoint,
    Zeros,
}

impl std::str::FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adjoint" => Ok(Init::Adjoint),
            "zeros" => Ok(Init::Zeros),
            other => Err(Error::config(format!(
                "unknown init {other:?} (expected adjoint or zeros)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub rho: f64,
    /// Axial coupling weight; only used when `temporal` is set.
    pub gamma: f64,
    /// Gauss–Seidel sweep with axial coupling instead of independent slices.
    pub temporal: bool,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub denoiser: Denoiser,
    pub init: Init,
}

impl SolverConfig {
    /// 100 iterations, relative tolerance 0.001.
    pub fn noise_free(denoiser: Denoiser, lambda: f64, rho: f64) -> Self {
        Self {
            lambda,
            rho,
            gamma: 0.0,
            temporal: false,
            max_iters: 100,
            rel_tol: 1e-3,
            denoiser,
            init: Init::Adjoint,
        }
    }

    /// 200 iterations, relative tolerance 0.01.
    pub fn noisy(denoiser: Denoiser, lambda: f64, rho: f64) -> Self {
        Self {
            max_iters: 200,
            rel_tol: 1e-2,
            ..Self::noise_free(denoiser, lambda, rho)
        }
    }

    /// Switches to the temporal sweep with coupling weight `gamma`.
    pub fn with_temporal(mut self, gamma: f64) -> Self {
        self.temporal = true;
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!(
                "gamma must be non-negative, got {}",
                self.gamma
            )));
        }
        if !self.temporal && self.gamma != 0.0 {
            return Err(Error::config("gamma > 0 requires the temporal mode"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::config("rel_tol must be positive"));
        }
        self.denoiser.validate()
    }
}

/// Per-iteration diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration number.
    pub iter: usize,
    /// `‖vᵏ⁺¹ − vᵏ‖ / max(‖vᵏ‖, ε)`.
    pub rel_change: f64,
    /// `‖v − u‖`.
    pub primal_residual: f64,
    /// `‖Φv − b‖`.
    pub data_misfit: f64,
    /// Wall time since the solver was created.
    pub seconds: f64,
}

/// The ADMM iterate triple as flat slice-major stacks.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub nx: usize,
    pub ny: usize,
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub d: Vec<f64>,
    pub history: Vec<IterationRecord>,
}

impl SolverState {
    /// Iteration counter `k`.
    pub fn k(&self) -> usize {
        self.history.len()
    }

    pub fn slices(&self) -> usize {
        self.v.len() / (self.nx * self.ny)
    }

    pub fn v_volume(&self) -> Volume {
        Volume::new(self.nx, self.ny, self.slices(), self.v.clone())
            .expect("solver iterates are finite")
    }

    pub fn u_volume(&self) -> Volume {
        Volume::new(self.nx, self.ny, self.slices(), self.u.clone())
            .expect("solver iterates are finite")
    }
}

/// Closed-form `v`-update for one shot, per pixel `p`:
///
/// ```text
/// v_r = m_r·b/(ρ + s) + g_r − m_r·h/(ρ + s),   s = Σ_r m_r,  h = Σ_r m_r·g_r
/// ```
///
/// which equals `(ΦᵀΦ + ρI)⁻¹(Φᵀb + ρg)` for binary masks. `g` and `out`
/// hold `R` slices back to back.
pub fn v_update_shot_into(b: &[f64], g: &[f64], masks: &MaskSet, rho: f64, out: &mut [f64]) {
    let len = b.len();
    let ratio = masks.count();
    debug_assert_eq!(g.len(), len * ratio);
    debug_assert_eq!(out.len(), len * ratio);
    for p in 0..len {
        let mut s = 0.0;
        let mut h = 0.0;
        for r in 0..ratio {
            if masks.mask(r)[p] != 0 {
                s += 1.0;
                h += g[r * len + p];
            }
        }
        let inv = 1.0 / (rho + s);
        let data = b[p] * inv;
        let prior = h * inv;
        for r in 0..ratio {
            let i = r * len + p;
            out[i] = if masks.mask(r)[p] != 0 {
                data + g[i] - prior
            } else {
                g[i]
            };
        }
    }
}

/// Slice-typed wrapper around [`v_update_shot_into`].
pub fn v_update_shot(b: &Slice, g: &[Slice], masks: &MaskSet, rho: f64) -> Result<Vec<Slice>> {
    if g.len() != masks.count() {
        return Err(Error::dims(format!(
            "{} prior slices for {} masks",
            g.len(),
            masks.count()
        )));
    }
    if b.width() != masks.nx() || b.height() != masks.ny() || g.iter().any(|s| !s.same_shape(b)) {
        return Err(Error::dims(
            "shot, prior slices and masks must share dimensions",
        ));
    }
    if !(rho > 0.0) {
        return Err(Error::config("rho must be positive"));
    }
    let flat: Vec<f64> = g.iter().flat_map(|s| s.values().iter().copied()).collect();
    let mut out = vec![0.0; flat.len()];
    v_update_shot_into(b.values(), &flat, masks, rho, &mut out);
    Ok(out
        .chunks_exact(b.len())
        .map(|c| Slice::from_raw(b.width(), b.height(), c.to_vec()))
        .collect())
}

/// One prior step: denoises
/// `g = (ρ(v + d) + γ(u_prev + u_next)) / (ρ + 2γ)` against `ρ + 2γ`.
///
/// `g` is evaluated as `(v + d) + γ/(ρ + 2γ)·(u_prev + u_next − 2(v + d))`,
/// which is exactly `v + d` when `γ = 0`.
#[allow(clippy::too_many_arguments)]
pub fn u_update_slice(
    v: &[f64],
    d: &[f64],
    u_prev: &[f64],
    u_next: &[f64],
    shape: (usize, usize),
    lambda: f64,
    rho: f64,
    gamma: f64,
    denoiser: &Denoiser,
) -> Result<Slice> {
    let rho_eff = rho + 2.0 * gamma;
    let c = gamma / rho_eff;
    let g: Vec<f64> = (0..v.len())
        .map(|i| {
            let data = v[i] + d[i];
            data + c * (u_prev[i] + u_next[i] - 2.0 * data)
        })
        .collect();
    denoiser.apply(&Slice::from_raw(shape.0, shape.1, g), lambda, rho_eff)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// `‖Φv − b‖` over all shots.
pub fn data_misfit(v: &[f64], ms: &MeasurementSet, masks: &MaskSet) -> f64 {
    let len = ms.nx() * ms.ny();
    let ratio = masks.count();
    let per_shot: Vec<f64> = (0..ms.shots())
        .into_par_iter()
        .map(|j| {
            let mut fv = vec![0.0; len];
            forward_shot(masks, &v[j * ratio * len..(j + 1) * ratio * len], &mut fv);
            fv.iter()
                .zip(ms.shot(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    per_shot.iter().sum::<f64>().sqrt()
}

/// Stepwise ADMM driver. [`reconstruct`] runs it to completion.
pub struct Solver<'a> {
    ms: &'a MeasurementSet,
    masks: &'a MaskSet,
    cfg: SolverConfig,
    state: SolverState,
    started: Instant,
}

impl<'a> Solver<'a> {
    pub fn new(ms: &'a MeasurementSet, masks: &'a MaskSet, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        if ms.nx() != masks.nx() || ms.ny() != masks.ny() {
            return Err(Error::dims(format!(
                "measurements are {}x{}, masks are {}x{}",
                ms.nx(),
                ms.ny(),
                masks.nx(),
                masks.ny()
            )));
        }
        if ms.ratio() != masks.count() {
            return Err(Error::dims(format!(
                "measurements use ratio {}, mask set has {} masks",
                ms.ratio(),
                masks.count()
            )));
        }
        let len = ms.nx() * ms.ny();
        let ratio = masks.count();
        let total = ms.total_slices() * len;
        let v = match cfg.init {
            Init::Zeros => vec![0.0; total],
            Init::Adjoint => {
                let mut v = vec![0.0; total];
                let scale = 1.0 / ratio as f64;
                v.par_chunks_mut(ratio * len)
                    .enumerate()
                    .for_each(|(j, out)| {
                        let shot = ms.shot(j);
                        for r in 0..ratio {
                            let m = masks.mask(r);
                            for p in 0..len {
                                if m[p] != 0 {
                                    out[r * len + p] = shot[p] * scale;
                                }
                            }
                        }
                    });
                v
            }
        };
        let state = SolverState {
            nx: ms.nx(),
            ny: ms.ny(),
            u: v.clone(),
            d: vec![0.0; total],
            v,
            history: Vec::new(),
        };
        Ok(Self {
            ms,
            masks,
            cfg,
            state,
            started: Instant::now(),
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn into_state(self) -> SolverState {
        self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    /// Runs one full ADMM iteration and returns its record.
    pub fn step(&mut self) -> Result<&IterationRecord> {
        let len = self.state.nx * self.state.ny;
        let shape = (self.state.nx, self.state.ny);
        let ratio = self.masks.count();
        let nslices = self.state.slices();
        let iteration = self.state.k() + 1;
        let SolverConfig {
            lambda,
            rho,
            gamma,
            temporal,
            ref denoiser,
            ..
        } = self.cfg;

        // v-update, independent per shot.
        let previous = std::mem::take(&mut self.state.v);
        let mut v = vec![0.0; previous.len()];
        {
            let (u, d) = (&self.state.u, &self.state.d);
            let (ms, masks) = (self.ms, self.masks);
            v.par_chunks_mut(ratio * len)
                .enumerate()
                .for_each(|(j, out)| {
                    let range = j * ratio * len..(j + 1) * ratio * len;
                    let g: Vec<f64> = u[range.clone()]
                        .iter()
                        .zip(&d[range])
                        .map(|(u, d)| u - d)
                        .collect();
                    v_update_shot_into(ms.shot(j), &g, masks, rho, out);
                });
        }

        // u-update.
        let with_slice = |n: usize, e: Error| Error::Denoiser {
            slice: n + 1,
            source: Box::new(e),
        };
        if temporal {
            let u = &mut self.state.u;
            let d = &self.state.d;
            let first_old = u[..len].to_vec();
            for n in 0..nslices {
                let prev_idx = (n + nslices - 1) % nslices;
                let next_idx = (n + 1) % nslices;
                let u_prev = u[prev_idx * len..(prev_idx + 1) * len].to_vec();
                let u_next: Vec<f64> = if next_idx == 0 {
                    first_old.clone()
                } else {
                    u[next_idx * len..(next_idx + 1) * len].to_vec()
                };
                let range = n * len..(n + 1) * len;
                let out = u_update_slice(
                    &v[range.clone()],
                    &d[range.clone()],
                    &u_prev,
                    &u_next,
                    shape,
                    lambda,
                    rho,
                    gamma,
                    denoiser,
                )
                .map_err(|e| with_slice(n, e))?;
                u[range].copy_from_slice(out.values());
            }
        } else {
            let d = &self.state.d;
            let zeros = vec![0.0; len];
            let updated: Vec<Result<Slice>> = (0..nslices)
                .into_par_iter()
                .map(|n| {
                    let range = n * len..(n + 1) * len;
                    u_update_slice(
                        &v[range.clone()],
                        &d[range],
                        &zeros,
                        &zeros,
                        shape,
                        lambda,
                        rho,
                        0.0,
                        denoiser,
                    )
                    .map_err(|e| with_slice(n, e))
                })
                .collect();
            for (n, s) in updated.into_iter().enumerate() {
                self.state.u[n * len..(n + 1) * len].copy_from_slice(s?.values());
            }
        }

        // Dual ascent.
        for ((d, &v), &u) in self.state.d.iter_mut().zip(&v).zip(&self.state.u) {
            *d += v - u;
        }

        let finite = |x: &[f64]| x.iter().all(|v| v.is_finite());
        if !finite(&v) || !finite(&self.state.u) || !finite(&self.state.d) {
            self.state.v = v;
            return Err(Error::Divergence { iteration });
        }

        let rel_change = diff_norm(&v, &previous) / norm(&previous).max(REL_CHANGE_EPS);
        let record = IterationRecord {
            iter: iteration,
            rel_change,
            primal_residual: diff_norm(&v, &self.state.u),
            data_misfit: data_misfit(&v, self.ms, self.masks),
            seconds: self.started.elapsed().as_secs_f64(),
        };
        self.state.v = v;
        self.state.history.push(record);
        Ok(self.state.history.last().unwrap())
    }

    /// True once the iteration cap or the relative tolerance is reached.
    pub fn finished(&self) -> bool {
        match self.state.history.last() {
            None => false,
            Some(r) => r.iter >= self.cfg.max_iters || r.rel_change <= self.cfg.rel_tol,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub volume: Volume,
    pub state: SolverState,
}

impl Reconstruction {
    pub fn iterations(&self) -> usize {
        self.state.k()
    }

    /// Whether the last iteration met the relative tolerance.
    pub fn converged(&self, rel_tol: f64) -> bool {
        self.state
            .history
            .last()
            .is_some_and(|r| r.rel_change <= rel_tol)
    }
}

/// Runs ADMM until the relative change of `v` drops to `rel_tol` or
/// `max_iters` iterations have run.
pub fn reconstruct(
    ms: &MeasurementSet,
    masks: &MaskSet,
    cfg: &SolverConfig,
) -> Result<Reconstruction> {
    let mut solver = Solver::new(ms, masks, cfg.clone())?;
    while !solver.finished() {
        solver.step()?;
    }
    let state = solver.into_state();
    Ok(Reconstruction {
        volume: state.v_volume(),
        state,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub value: f64,
    /// False when the denoiser has no explicit prior; `value` then holds the
    /// data and axial terms only.
    pub prior_included: bool,
}

/// `½Σ_j‖b_j − Φv‖² + λΣψ(v_n) + (γ/2)Σ_n ‖v_n − v_{n−1}‖²` with a circular
/// axial sum of exactly `NR` terms.
pub fn objective_value(
    v: &Volume,
    ms: &MeasurementSet,
    masks: &MaskSet,
    lambda: f64,
    gamma: f64,
    denoiser: &Denoiser,
) -> Result<Objective> {
    if v.nx() != ms.nx() || v.ny() != ms.ny() || v.nz() != ms.total_slices() {
        return Err(Error::dims("volume does not match the measurement set"));
    }
    let misfit = data_misfit(v.voxels(), ms, masks);
    let mut value = 0.5 * misfit * misfit;
    let mut prior_included = true;
    if lambda != 0.0 {
        let mut prior = 0.0;
        for n in 0..v.nz() {
            match denoiser.prior_value(&v.slice(n)) {
                Some(p) => prior += p,
                None => {
                    prior_included = false;
                    break;
                }
            }
        }
        if prior_included {
            value += lambda * prior;
        }
    } else if denoiser.prior_value(&Slice::zeros(1, 1)).is_none() {
        prior_included = false;
    }
    if gamma != 0.0 {
        let nz = v.nz();
        let axial: f64 = (0..nz)
            .map(|n| {
                let prev = (n + nz - 1) % nz;
                diff_norm(v.slice_values(n), v.slice_values(prev)).powi(2)
            })
            .sum();
        value += 0.5 * gamma * axial;
    }
    Ok(Objective {
        value,
        prior_included,
    })
}
