//! Experiment sweeps over denoisers, modes, compression ratios and noise.

mod config;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{parse_config, parse_config_str, KEYS};

use crate::admm::{reconstruct, SolverConfig};
use crate::denoise::{Denoiser, DenoiserKind};
use crate::error::{Error, Result};
use crate::forward::{encode, EncodeConfig, DEFAULT_MASK_DENSITY};
use crate::io::export_slice_pgm;
use crate::metrics::{format_metric, parse_metric, psnr, ssim3d};
use crate::phantom::{generate_phantom, select_frames, PhantomSpec, DEFAULT_FRAME_COUNT};
use crate::tuner::tune_solver;
use crate::volume::{MaskSet, MeasurementSet, Volume};

pub const RESULTS_FILE: &str = "results.csv";
pub const CSV_HEADER: [&str; 15] = [
    "method",
    "mode",
    "ratio",
    "noise_variance",
    "lambda",
    "rho",
    "gamma",
    "psnr_db",
    "ssim",
    "iterations",
    "seconds",
    "status",
    "phantom_seed",
    "mask_seed",
    "noise_seed",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Method {
    pub kind: DenoiserKind,
    pub temporal: bool,
}

impl Method {
    pub fn all() -> Vec<Method> {
        DenoiserKind::ALL
            .into_iter()
            .flat_map(|kind| [false, true].map(|temporal| Method { kind, temporal }))
            .collect()
    }

    pub fn mode(&self) -> &'static str {
        if self.temporal {
            "temporal"
        } else {
            "slice"
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind, self.mode())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MethodParams {
    pub lambda: f64,
    pub rho: f64,
    /// Used by the temporal mode only.
    pub gamma: f64,
}

/// Fixed parameters per denoiser for `params = explicit`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExplicitParams {
    pub tikhonov: MethodParams,
    pub tv: MethodParams,
    pub bm3d: MethodParams,
}

impl Default for ExplicitParams {
    fn default() -> Self {
        Self {
            tikhonov: MethodParams {
                lambda: 0.01,
                rho: 0.1,
                gamma: 0.01,
            },
            tv: MethodParams {
                lambda: 0.01,
                rho: 0.1,
                gamma: 0.01,
            },
            bm3d: MethodParams {
                lambda: 10.0,
                rho: 0.1,
                gamma: 0.01,
            },
        }
    }
}

impl ExplicitParams {
    pub fn get(&self, kind: DenoiserKind) -> &MethodParams {
        match kind {
            DenoiserKind::Tikhonov => &self.tikhonov,
            DenoiserKind::Tv => &self.tv,
            DenoiserKind::Bm3d => &self.bm3d,
        }
    }

    pub fn get_mut(&mut self, kind: DenoiserKind) -> &mut MethodParams {
        match kind {
            DenoiserKind::Tikhonov => &mut self.tikhonov,
            DenoiserKind::Tv => &mut self.tv,
            DenoiserKind::Bm3d => &mut self.bm3d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamSource {
    Explicit,
    /// Tune every cell against the phantom, then re-run with the winner.
    Tuned {
        budget: usize,
        seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhantomScale {
    /// 64×64×40, deepened when more frames are requested.
    Desk,
    /// 200×200×150, subsampled to the frame count.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub phantom_scale: PhantomScale,
    pub phantom_seed: u64,
    pub mask_seed: u64,
    pub noise_seed: u64,
    pub frames: usize,
    pub mask_density: f64,
    pub methods: Vec<Method>,
    pub ratios: Vec<usize>,
    pub noise: Vec<f64>,
    pub params: ParamSource,
    pub explicit: ExplicitParams,
    pub output_dir: PathBuf,
    /// 1-based slice exported as PGM for every cell.
    pub export_slice: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            phantom_scale: PhantomScale::Desk,
            phantom_seed: 1,
            mask_seed: 2,
            noise_seed: 3,
            frames: DEFAULT_FRAME_COUNT,
            mask_density: DEFAULT_MASK_DENSITY,
            methods: Method::all(),
            ratios: vec![2, 4, 10, 20],
            noise: vec![0.0, 0.001],
            params: ParamSource::Explicit,
            explicit: ExplicitParams::default(),
            output_dir: PathBuf::from("results"),
            export_slice: 17,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::config("methods must not be empty"));
        }
        if self.ratios.is_empty() {
            return Err(Error::config("ratios must not be empty"));
        }
        for &r in &self.ratios {
            if r == 0 || !self.frames.is_multiple_of(r) {
                return Err(Error::config(format!(
                    "ratios: {r} does not divide the frame count {}",
                    self.frames
                )));
            }
        }
        if self.noise.is_empty() || self.noise.iter().any(|&n| !(n >= 0.0 && n.is_finite())) {
            return Err(Error::config("noise must list non-negative variances"));
        }
        if self.frames == 0 || (self.phantom_scale == PhantomScale::Full && self.frames > 150) {
            return Err(Error::config(format!(
                "frames out of range: {}",
                self.frames
            )));
        }
        if self.export_slice == 0 || self.export_slice > self.frames {
            return Err(Error::config(format!(
                "export_slice must lie in 1..={}, got {}",
                self.frames, self.export_slice
            )));
        }
        if !(self.mask_density > 0.0 && self.mask_density <= 1.0) {
            return Err(Error::config("mask_density must lie in (0, 1]"));
        }
        for kind in DenoiserKind::ALL {
            let p = self.explicit.get(kind);
            if !(p.rho > 0.0 && p.lambda >= 0.0 && p.gamma >= 0.0) {
                return Err(Error::config(format!(
                    "invalid explicit parameters for {kind}"
                )));
            }
        }
        Ok(())
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        match self.phantom_scale {
            PhantomScale::Desk => {
                let desk = PhantomSpec::desk(self.phantom_seed);
                // Shorter sweeps subsample the standard depth.
                let nz = self.frames.max(desk.nz);
                PhantomSpec::with_dims(desk.nx, desk.ny, nz, desk.nuclei_count, desk.seed)
            }
            PhantomScale::Full => PhantomSpec::full_scale(self.phantom_seed),
        }
    }

    /// The ground-truth volume with `frames` slices.
    pub fn truth(&self) -> Result<Volume> {
        let volume = generate_phantom(&self.phantom_spec())?.volume;
        if volume.nz() == self.frames {
            Ok(volume)
        } else {
            select_frames(&volume, self.frames)
        }
    }

    pub fn solver_config(
        &self,
        method: Method,
        noise_variance: f64,
        params: MethodParams,
    ) -> SolverConfig {
        let denoiser = Denoiser::with_defaults(method.kind);
        let cfg = if noise_variance > 0.0 {
            SolverConfig::noisy(denoiser, params.lambda, params.rho)
        } else {
            SolverConfig::noise_free(denoiser, params.lambda, params.rho)
        };
        if method.temporal {
            cfg.with_temporal(params.gamma)
        } else {
            cfg
        }
    }
}

/// One consolidated CSV line.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub method: Method,
    pub ratio: usize,
    pub noise_variance: f64,
    pub lambda: f64,
    pub rho: f64,
    pub gamma: f64,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
    /// `ok`, or the error that stopped the cell.
    pub status: String,
    pub phantom_seed: u64,
    pub mask_seed: u64,
    pub noise_seed: u64,
}

impl SweepRow {
    fn key(&self) -> (String, String, String) {
        (
            self.method.to_string(),
            self.ratio.to_string(),
            format!("{}", self.noise_variance),
        )
    }

    fn record(&self) -> Vec<String> {
        let opt = |x: Option<f64>| x.map(format_metric).unwrap_or_default();
        vec![
            self.method.kind.to_string(),
            self.method.mode().to_string(),
            self.ratio.to_string(),
            format!("{}", self.noise_variance),
            format!("{}", self.lambda),
            format!("{}", self.rho),
            format!("{}", self.gamma),
            opt(self.psnr_db),
            opt(self.ssim),
            self.iterations.to_string(),
            format!("{}", self.seconds),
            self.status.clone(),
            self.phantom_seed.to_string(),
            self.mask_seed.to_string(),
            self.noise_seed.to_string(),
        ]
    }

    fn from_record(r: &csv::StringRecord) -> Option<Self> {
        let f = |i: usize| r.get(i).map(str::to_string).unwrap_or_default();
        let num = |i: usize| f(i).parse::<f64>().ok();
        let metric = |i: usize| {
            let s = f(i);
            if s.is_empty() {
                Some(None)
            } else {
                parse_metric(&s).map(Some)
            }
        };
        let temporal = match f(1).as_str() {
            "slice" => false,
            "temporal" => true,
            _ => return None,
        };
        Some(Self {
            method: Method {
                kind: f(0).parse().ok()?,
                temporal,
            },
            ratio: f(2).parse().ok()?,
            noise_variance: num(3)?,
            lambda: num(4)?,
            rho: num(5)?,
            gamma: num(6)?,
            psnr_db: metric(7)?,
            ssim: metric(8)?,
            iterations: f(9).parse().ok()?,
            seconds: num(10)?,
            status: f(11),
            phantom_seed: f(12).parse().ok()?,
            mask_seed: f(13).parse().ok()?,
            noise_seed: f(14).parse().ok()?,
        })
    }
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<SweepRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::config(format!(
            "{} has an unexpected header",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(SweepRow::from_record(&rec).ok_or_else(|| Error::Parse {
            line: i + 2,
            message: format!("malformed row in {}", path.display()),
        })?);
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::config(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `rows` into `path`, replacing rows with the same method, mode,
/// ratio and noise and keeping the rest.
pub fn merge_results(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut merged: Vec<SweepRow> = if path.exists() {
        match read_results(path) {
            Ok(existing) => existing,
            Err(e) => {
                log::warn!("replacing unreadable {}: {e}", path.display());
                Vec::new()
            }
        }
    } else {
        Vec::new()
    };
    for row in rows {
        match merged.iter_mut().find(|r| r.key() == row.key()) {
            Some(slot) => *slot = row.clone(),
            None => merged.push(row.clone()),
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for row in &merged {
        writer
            .write_record(row.record())
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
    /// Cells that failed, with their errors.
    pub failures: Vec<(String, Error)>,
}

/// Measurements shared by every cell with the same seeds, ratio and noise.
#[derive(Default)]
pub struct MeasurementCache {
    entries: HashMap<(u64, u64, u64, usize, u64), (MeasurementSet, MaskSet)>,
    misses: usize,
}

impl MeasurementCache {
    pub fn get(
        &mut self,
        truth: &Volume,
        plan: &ExperimentPlan,
        ratio: usize,
        noise: f64,
    ) -> Result<&(MeasurementSet, MaskSet)> {
        let key = (
            plan.phantom_seed,
            plan.mask_seed,
            plan.noise_seed,
            ratio,
            noise.to_bits(),
        );
        if !self.entries.contains_key(&key) {
            let cfg = EncodeConfig {
                ratio,
                mask_density: plan.mask_density,
                mask_seed: plan.mask_seed,
                noise_variance: noise,
                noise_seed: plan.noise_seed,
            };
            self.entries.insert(key, encode(truth, &cfg)?);
            self.misses += 1;
        }
        Ok(&self.entries[&key])
    }

    /// Number of encodings performed so far.
    pub fn misses(&self) -> usize {
        self.misses
    }
}

fn slice_file(method: Method, ratio: usize, noise: f64) -> String {
    format!("{method}_r{ratio}_n{noise}.pgm")
}

/// Runs every (method, ratio, noise) cell of the plan.
///
/// A failing cell is recorded with its error and the sweep continues. The
/// consolidated CSV is merged into `output_dir/results.csv` at the end.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutcome> {
    plan.validate()?;
    let slices_dir = plan.output_dir.join("slices");
    fs::create_dir_all(&slices_dir).map_err(|e| Error::io(&slices_dir, e))?;
    let truth = plan.truth()?;
    export_slice_pgm(
        &truth.slice(plan.export_slice - 1),
        slices_dir.join(format!("truth_s{}.pgm", plan.export_slice)),
    )?;

    let mut cache = MeasurementCache::default();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &method in &plan.methods {
        for &noise in &plan.noise {
            for &ratio in &plan.ratios {
                let label = format!("{method} R={ratio} noise={noise}");
                log::info!("running {label}");
                let (ms, masks) = cache.get(&truth, plan, ratio, noise)?;
                let started = Instant::now();
                let explicit = *plan.explicit.get(method.kind);
                let base = plan.solver_config(method, noise, explicit);
                let run = match plan.params {
                    ParamSource::Explicit => {
                        reconstruct(ms, masks, &base).map(|r| (base.clone(), r))
                    }
                    ParamSource::Tuned { budget, seed } => {
                        tune_solver(ms, masks, &truth, &base, budget, seed)
                            .map(|t| (t.config, t.reconstruction))
                    }
                };
                let seconds = started.elapsed().as_secs_f64();
                let mut row = SweepRow {
                    method,
                    ratio,
                    noise_variance: noise,
                    lambda: base.lambda,
                    rho: base.rho,
                    gamma: base.gamma,
                    psnr_db: None,
                    ssim: None,
                    iterations: 0,
                    seconds,
                    status: "ok".to_string(),
                    phantom_seed: plan.phantom_seed,
                    mask_seed: plan.mask_seed,
                    noise_seed: plan.noise_seed,
                };
                match run {
                    Ok((cfg, recon)) => {
                        row.lambda = cfg.lambda;
                        row.rho = cfg.rho;
                        row.gamma = cfg.gamma;
                        row.iterations = recon.iterations();
                        row.psnr_db = Some(psnr(&truth, &recon.volume, 1.0)?);
                        row.ssim = Some(ssim3d(&truth, &recon.volume)?);
                        export_slice_pgm(
                            &recon.volume.slice(plan.export_slice - 1),
                            slices_dir.join(slice_file(method, ratio, noise)),
                        )?;
                    }
                    Err(e) => {
                        log::error!("{label} failed: {e}");
                        row.status = format!("error: {e}");
                        failures.push((label, e));
                    }
                }
                rows.push(row);
            }
        }
    }
    let csv_path = plan.output_dir.join(RESULTS_FILE);
    merge_results(&csv_path, &rows)?;
    Ok(ExperimentOutcome {
        rows,
        csv_path,
        failures,
    })
}
