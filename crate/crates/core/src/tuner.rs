//! Bayesian optimization of solver parameters against reconstruction PSNR.
//!
//! The first evaluations come from a Latin hypercube in normalized
//! coordinates (log-scaled where the parameter is). After that a Gaussian
//! process with a squared-exponential kernel models the objective and the
//! next point maximizes expected improvement over a fresh batch of random
//! candidates. When that winner sits on top of an already evaluated point,
//! the candidate with the largest posterior variance is taken instead so the
//! search keeps exploring.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::admm::{reconstruct, Reconstruction, SolverConfig};
use crate::denoise::DenoiserKind;
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::volume::{MaskSet, MeasurementSet, Volume};

pub const DEFAULT_BUDGET: usize = 50;
pub const CANDIDATES: usize = 1024;
pub const LENGTH_SCALES: [f64; 3] = [0.1, 0.3, 1.0];
pub const OBSERVATION_NOISE: f64 = 1e-6;
/// Normalized L∞ radius inside which an EI winner counts as a repeat.
pub const REPEAT_RADIUS: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dimension {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn log(name: &'static str, lower: f64, upper: f64) -> Self {
        Self {
            name,
            lower,
            upper,
            scale: Scale::Log,
        }
    }

    pub fn linear(name: &'static str, lower: f64, upper: f64) -> Self {
        Self {
            name,
            lower,
            upper,
            scale: Scale::Linear,
        }
    }

    /// Maps `t ∈ [0, 1]` into the parameter range.
    pub fn denormalize(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.lower;
        }
        if t >= 1.0 {
            return self.upper;
        }
        let x = match self.scale {
            Scale::Linear => self.lower + t * (self.upper - self.lower),
            Scale::Log => (self.lower.ln() + t * (self.upper.ln() - self.lower.ln())).exp(),
        };
        x.clamp(self.lower, self.upper)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => (x - self.lower) / (self.upper - self.lower),
            Scale::Log => (x.ln() - self.lower.ln()) / (self.upper.ln() - self.lower.ln()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
    pub budget: usize,
    pub seed: u64,
}

impl SearchSpace {
    /// λ and ρ, plus γ in temporal mode. λ is log-scaled on
    /// `[1e-3, 1e2]` for Tikhonov and TV and linear on `[1, 50]` for BM3D.
    pub fn for_solver(kind: DenoiserKind, temporal: bool, budget: usize, seed: u64) -> Self {
        let lambda = match kind {
            DenoiserKind::Bm3d => Dimension::linear("lambda", 1.0, 50.0),
            _ => Dimension::log("lambda", 1e-3, 1e2),
        };
        let mut dims = vec![lambda, Dimension::log("rho", 1e-3, 1.0)];
        if temporal {
            dims.push(Dimension::log("gamma", 1e-3, 1.0));
        }
        Self { dims, budget, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::config("search space has no dimensions"));
        }
        if self.budget < 3 {
            return Err(Error::config(format!(
                "budget must be at least 3, got {}",
                self.budget
            )));
        }
        for d in &self.dims {
            let ok = d.lower < d.upper && d.lower.is_finite() && d.upper.is_finite();
            if !ok || (d.scale == Scale::Log && d.lower <= 0.0) {
                return Err(Error::config(format!(
                    "invalid bounds [{}, {}] for {}",
                    d.lower, d.upper, d.name
                )));
            }
        }
        Ok(())
    }

    /// Size of the space-filling first phase.
    pub fn initial_samples(&self) -> usize {
        self.budget.div_ceil(4).max(3).min(self.budget)
    }

    fn denormalize(&self, t: &[f64]) -> Vec<f64> {
        self.dims
            .iter()
            .zip(t)
            .map(|(d, &t)| d.denormalize(t))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub params: Vec<f64>,
    /// Objective value; `-inf` when the objective was not finite.
    pub value: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub best_params: Vec<f64>,
    pub best_value: f64,
    pub trace: Vec<Evaluation>,
}

impl TuneResult {
    /// Best value after each evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.trace
            .iter()
            .map(|e| {
                best = best.max(e.value);
                best
            })
            .collect()
    }
}

/// `n` points of a Latin hypercube in `[0, 1]^dims`.
pub fn latin_hypercube(n: usize, dims: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        for (p, s) in points.iter_mut().zip(strata) {
            p[d] = (s as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    points
}

struct Gp {
    x: Vec<Vec<f64>>,
    scales: Vec<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    alpha: DVector<f64>,
}

fn kernel(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(scales)
        .map(|((a, b), l)| ((a - b) / l).powi(2))
        .sum();
    (-0.5 * r2).exp()
}

impl Gp {
    /// Fits a unit-variance GP to standardized targets, returning the fit and
    /// its log marginal likelihood.
    fn fit(x: &[Vec<f64>], y: &DVector<f64>, scales: &[f64]) -> Option<(Self, f64)> {
        let n = x.len();
        let k = DMatrix::from_fn(n, n, |i, j| {
            kernel(&x[i], &x[j], scales) + if i == j { OBSERVATION_NOISE } else { 0.0 }
        });
        let chol = k.cholesky()?;
        let alpha = chol.solve(y);
        let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
        let lml = -0.5 * y.dot(&alpha)
            - 0.5 * log_det
            - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Some((
            Self {
                x: x.to_vec(),
                scales: scales.to_vec(),
                chol,
                alpha,
            },
            lml,
        ))
    }

    /// Posterior mean and variance at `t`.
    fn predict(&self, t: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(
            self.x.len(),
            self.x.iter().map(|x| kernel(x, t, &self.scales)),
        );
        let mean = ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(0.0);
        (mean, var)
    }
}

/// Fits length scales per dimension over the grid by marginal likelihood.
fn fit_best(x: &[Vec<f64>], y: &DVector<f64>) -> Option<Gp> {
    let dims = x[0].len();
    let combos = LENGTH_SCALES.len().pow(dims as u32);
    let mut best: Option<(Gp, f64)> = None;
    for c in 0..combos {
        let mut code = c;
        let scales: Vec<f64> = (0..dims)
            .map(|_| {
                let s = LENGTH_SCALES[code % LENGTH_SCALES.len()];
                code /= LENGTH_SCALES.len();
                s
            })
            .collect();
        if let Some((gp, lml)) = Gp::fit(x, y, &scales) {
            if best.as_ref().map_or(true, |(_, b)| lml > *b) {
                best = Some((gp, lml));
            }
        }
    }
    best.map(|(gp, _)| gp)
}

/// Expected improvement over `best` for a maximization problem.
pub fn expected_improvement(mean: f64, var: f64, best: f64) -> f64 {
    let sd = var.sqrt();
    if sd <= 0.0 {
        return (mean - best).max(0.0);
    }
    let z = (mean - best) / sd;
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (mean - best) * n.cdf(z) + sd * n.pdf(z)
}

/// Maximizes `objective` over the space within the evaluation budget.
pub fn tune<F>(mut objective: F, space: &SearchSpace) -> Result<TuneResult>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    space.validate()?;
    let dims = space.dims.len();
    let mut rng = ChaCha8Rng::seed_from_u64(space.seed);
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut trace: Vec<Evaluation> = Vec::new();

    let mut evaluate =
        |t: Vec<f64>, points: &mut Vec<Vec<f64>>, trace: &mut Vec<Evaluation>| -> Result<()> {
            let params = space.denormalize(&t);
            let started = Instant::now();
            let value = objective(&params)?;
            let value = if value.is_finite() {
                value
            } else {
                f64::NEG_INFINITY
            };
            log::info!("eval {}: {:?} -> {value}", trace.len() + 1, params);
            trace.push(Evaluation {
                params,
                value,
                seconds: started.elapsed().as_secs_f64(),
            });
            points.push(t);
            Ok(())
        };

    for t in latin_hypercube(space.initial_samples(), dims, &mut rng) {
        evaluate(t, &mut points, &mut trace)?;
    }

    while trace.len() < space.budget {
        let candidates = latin_hypercube(CANDIDATES, dims, &mut rng);
        let next = propose(&points, &trace, &candidates).unwrap_or_else(|| candidates[0].clone());
        evaluate(next, &mut points, &mut trace)?;
    }

    let (best_idx, best) =
        trace
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, e)| {
                if e.value > bv {
                    (i, e.value)
                } else {
                    (bi, bv)
                }
            });
    Ok(TuneResult {
        best_params: trace[best_idx].params.clone(),
        best_value: best,
        trace,
    })
}

/// Picks the next normalized point, or `None` when nothing can be modelled.
fn propose(points: &[Vec<f64>], trace: &[Evaluation], candidates: &[Vec<f64>]) -> Option<Vec<f64>> {
    let finite: Vec<f64> = trace
        .iter()
        .map(|e| e.value)
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return None;
    }
    let floor = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = finite.iter().sum::<f64>() / finite.len() as f64;
    let var = finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / finite.len() as f64;
    let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
    // Failed evaluations are modelled as the worst finite outcome.
    let y = DVector::from_iterator(
        trace.len(),
        trace
            .iter()
            .map(|e| (if e.value.is_finite() { e.value } else { floor } - mean) / sd),
    );
    let best = y.max();
    let gp = fit_best(points, &y)?;

    let predictions: Vec<(f64, f64)> = candidates.iter().map(|c| gp.predict(c)).collect();
    let mut winner = 0;
    let mut winner_ei = f64::NEG_INFINITY;
    for (i, &(m, v)) in predictions.iter().enumerate() {
        let ei = expected_improvement(m, v, best);
        if ei > winner_ei {
            winner = i;
            winner_ei = ei;
        }
    }
    let repeats = points.iter().any(|p| {
        p.iter()
            .zip(&candidates[winner])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            < REPEAT_RADIUS
    });
    if repeats {
        let mut widest = 0;
        for (i, p) in predictions.iter().enumerate() {
            if p.1 > predictions[widest].1 {
                widest = i;
            }
        }
        winner = widest;
    }
    Some(candidates[winner].clone())
}

/// Parameters found for a solver and the full-length re-run with them.
#[derive(Clone, Debug)]
pub struct SolverTuning {
    pub result: TuneResult,
    pub config: SolverConfig,
    pub reconstruction: Reconstruction,
    pub psnr_db: f64,
}

/// Applies a parameter vector from [`SearchSpace::for_solver`] to `base`.
pub fn apply_params(base: &SolverConfig, params: &[f64]) -> SolverConfig {
    let mut cfg = base.clone();
    cfg.lambda = params[0];
    cfg.rho = params[1];
    if cfg.temporal {
        cfg.gamma = params[2];
    }
    cfg
}

/// Tunes λ, ρ (and γ in temporal mode) for PSNR against `truth`.
///
/// Evaluations run half of `base.max_iters`; diverging runs score `-inf`.
/// The winner is re-run with the full configuration.
pub fn tune_solver(
    ms: &MeasurementSet,
    masks: &MaskSet,
    truth: &Volume,
    base: &SolverConfig,
    budget: usize,
    seed: u64,
) -> Result<SolverTuning> {
    let space = SearchSpace::for_solver(base.denoiser.kind(), base.temporal, budget, seed);
    let objective = |params: &[f64]| -> Result<f64> {
        let mut cfg = apply_params(base, params);
        cfg.max_iters = (base.max_iters / 2).max(1);
        match reconstruct(ms, masks, &cfg) {
            Ok(r) => psnr(truth, &r.volume, 1.0),
            Err(Error::Divergence { .. }) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };
    let result = tune(objective, &space)?;
    let config = apply_params(base, &result.best_params);
    let reconstruction = reconstruct(ms, masks, &config)?;
    let psnr_db = psnr(truth, &reconstruction.volume, 1.0)?;
    Ok(SolverTuning {
        result,
        config,
        reconstruction,
        psnr_db,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_space(budget: usize, seed: u64) -> SearchSpace {
        SearchSpace {
            dims: vec![Dimension::linear("x", 0.0, 1.0)],
            budget,
            seed,
        }
    }

    #[test]
    fn log_dimension_round_trip() {
        let d = Dimension::log("rho", 1e-3, 1.0);
        assert!((d.denormalize(0.5) - 10f64.powf(-1.5)).abs() < 1e-15);
        assert_eq!(d.denormalize(0.0), 1e-3);
        assert_eq!(d.denormalize(1.0), 1.0);
        assert!((d.normalize(d.denormalize(0.37)) - 0.37).abs() < 1e-12);
    }

    #[test]
    fn hypercube_has_one_point_per_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = latin_hypercube(10, 3, &mut rng);
        for d in 0..3 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[d] * 10.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn phase_sizes() {
        assert_eq!(unit_space(3, 0).initial_samples(), 3);
        assert_eq!(unit_space(50, 0).initial_samples(), 13);
        assert_eq!(unit_space(30, 0).initial_samples(), 8);
        assert!(unit_space(2, 0).validate().is_err());
    }

    #[test]
    fn quadratic_optimum_found() {
        let r = tune(|p| Ok(-(p[0] - 0.3).powi(2)), &unit_space(30, 11)).unwrap();
        assert_eq!(r.trace.len(), 30);
        assert!(
            (r.best_params[0] - 0.3).abs() < 0.015,
            "{:?}",
            r.best_params
        );
        let best = r.best_so_far();
        assert!(best.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*best.last().unwrap(), r.best_value);
    }

    #[test]
    fn constant_and_failing_objectives() {
        let r = tune(|_| Ok(1.0), &unit_space(12, 1)).unwrap();
        assert_eq!(r.trace.len(), 12);
        assert_eq!(r.best_value, 1.0);
        let r = tune(
            |p| Ok(if p[0] < 0.5 { f64::NAN } else { p[0] }),
            &unit_space(10, 2),
        )
        .unwrap();
        assert!(r.trace.iter().any(|e| e.value == f64::NEG_INFINITY));
        assert!(r.best_value >= 0.5);
    }

    #[test]
    fn budget_three_is_all_phase_one() {
        let mut calls = 0;
        let r = tune(
            |p| {
                calls += 1;
                Ok(p[0])
            },
            &unit_space(3, 4),
        )
        .unwrap();
        assert_eq!(calls, 3);
        let mut strata: Vec<usize> = r
            .trace
            .iter()
            .map(|e| (e.params[0] * 3.0) as usize)
            .collect();
        strata.sort();
        assert_eq!(strata, [0, 1, 2]);
    }

    #[test]
    fn stays_inside_bounds() {
        let space = SearchSpace::for_solver(DenoiserKind::Tv, true, 15, 3);
        let r = tune(|p| Ok(-(p[0].ln() + 2.0).powi(2) - p[1] - p[2]), &space).unwrap();
        for e in &r.trace {
            for (x, d) in e.params.iter().zip(&space.dims) {
                assert!(*x >= d.lower && *x <= d.upper);
            }
        }
    }

    #[test]
    fn expected_improvement_limits() {
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 1.0);
        assert_eq!(expected_improvement(0.0, 0.0, 1.0), 0.0);
        // At the incumbent, EI = σ·φ(0).
        let ei = expected_improvement(1.0, 4.0, 1.0);
        assert!((ei - 2.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
