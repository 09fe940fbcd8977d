use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use cslsm_core::admm::{reconstruct, Init, SolverConfig};
use cslsm_core::denoise::{Bm3dParams, Denoiser, DenoiserKind, TvParams};
use cslsm_core::forward::{encode, EncodeConfig, DEFAULT_MASK_DENSITY};
use cslsm_core::harness::{parse_config, run_experiment, ExperimentPlan};
use cslsm_core::io::{
    read_masks, read_measurements, read_volume, write_centers, write_masks, write_measurements,
    write_volume,
};
use cslsm_core::metrics::{format_metric, MetricsReport};
use cslsm_core::phantom::{generate_phantom, PhantomSpec};
use cslsm_core::tuner::{tune_solver, DEFAULT_BUDGET};
use cslsm_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "cslsm",
    about = "Compressive light-sheet reconstruction toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic heart phantom.
    Phantom(PhantomArgs),
    /// Encode a volume into mask-coded shots.
    Encode(EncodeArgs),
    /// Reconstruct a volume from shots and masks.
    Reconstruct(ReconstructArgs),
    /// Compare a reconstruction against the ground truth.
    Evaluate(EvaluateArgs),
    /// Search λ, ρ and γ for the best PSNR.
    Tune(TuneArgs),
    /// Run an experiment plan.
    Sweep(SweepArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
    #[arg(long, default_value_t = 40)]
    nz: usize,
    #[arg(long, default_value_t = 60)]
    nuclei: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write nucleus centers, one `x y z` line each.
    #[arg(long)]
    centers: Option<PathBuf>,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    ratio: usize,
    #[arg(long, default_value_t = DEFAULT_MASK_DENSITY)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    mask_seed: u64,
    #[arg(long, default_value_t = 0.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    masks: PathBuf,
}

#[derive(Args)]
struct DenoiserArgs {
    #[arg(long)]
    denoiser: DenoiserKind,
    /// TV dual iterations per prior step.
    #[arg(long)]
    tv_inner_iters: Option<usize>,
    /// Add the Wiener stage to the BM3D filter.
    #[arg(long)]
    bm3d_two_stage: bool,
}

impl DenoiserArgs {
    fn build(&self) -> Denoiser {
        match self.denoiser {
            DenoiserKind::Tikhonov => Denoiser::Tikhonov,
            DenoiserKind::Tv => {
                let mut p = TvParams::default();
                if let Some(n) = self.tv_inner_iters {
                    p.inner_iters = n;
                }
                Denoiser::Tv(p)
            }
            DenoiserKind::Bm3d => Denoiser::Bm3d(Bm3dParams {
                two_stage: self.bm3d_two_stage,
                ..Bm3dParams::default()
            }),
        }
    }
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[command(flatten)]
    denoiser: DenoiserArgs,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    rho: f64,
    /// Axial coupling; a positive value selects the temporal sweep.
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Use the temporal sweep even with γ = 0.
    #[arg(long)]
    temporal: bool,
    /// Defaults to 100 for noise-free shots and 200 otherwise.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Defaults to 0.001 for noise-free shots and 0.01 otherwise.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value = "adjoint")]
    init: Init,
    #[arg(long)]
    out: PathBuf,
    /// Per-iteration history CSV.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "recon")]
    method: String,
    /// Compression ratio recorded in the report.
    #[arg(long, default_value_t = 0)]
    ratio: usize,
    /// History CSV from `reconstruct`, for the iteration count and time.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    meas: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[command(flatten)]
    denoiser: DenoiserArgs,
    #[arg(long)]
    temporal: bool,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also write the re-run reconstruction with the best parameters.
    #[arg(long)]
    recon: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Plan file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    export_slice: Option<usize>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::config(format!("{}: {other:?}", path.display())),
    }
}

fn phantom(a: PhantomArgs) -> Result<()> {
    let spec = PhantomSpec::with_dims(a.nx, a.ny, a.nz, a.nuclei, a.seed);
    let p = generate_phantom(&spec)?;
    write_volume(&p.volume, &a.out)?;
    if let Some(path) = a.centers {
        write_centers(&p.centers, path)?;
    }
    log::info!(
        "wrote {}x{}x{} phantom to {}",
        a.nx,
        a.ny,
        a.nz,
        a.out.display()
    );
    Ok(())
}

fn encode_cmd(a: EncodeArgs) -> Result<()> {
    let volume = read_volume(&a.input)?;
    let cfg = EncodeConfig {
        ratio: a.ratio,
        mask_density: a.density,
        mask_seed: a.mask_seed,
        noise_variance: a.noise_var,
        noise_seed: a.noise_seed,
    };
    let (ms, masks) = encode(&volume, &cfg)?;
    write_measurements(&ms, &a.out)?;
    write_masks(&masks, &a.masks)
}

fn reconstruct_cmd(a: ReconstructArgs) -> Result<()> {
    let ms = read_measurements(&a.meas)?;
    let masks = read_masks(&a.masks)?;
    let denoiser = a.denoiser.build();
    let mut cfg = if ms.noise_variance() > 0.0 {
        SolverConfig::noisy(denoiser, a.lambda, a.rho)
    } else {
        SolverConfig::noise_free(denoiser, a.lambda, a.rho)
    };
    if a.temporal || a.gamma > 0.0 {
        cfg = cfg.with_temporal(a.gamma);
    }
    if let Some(n) = a.max_iters {
        cfg.max_iters = n;
    }
    if let Some(t) = a.tol {
        cfg.rel_tol = t;
    }
    cfg.init = a.init;
    let rec = reconstruct(&ms, &masks, &cfg)?;
    write_volume(&rec.volume, &a.out)?;
    if let Some(path) = a.log {
        let mut w = csv_writer(&path)?;
        w.write_record([
            "iter",
            "rel_change",
            "primal_residual",
            "data_misfit",
            "seconds",
        ])
        .map_err(csv_err(&path))?;
        for r in &rec.state.history {
            w.write_record([
                r.iter.to_string(),
                r.rel_change.to_string(),
                r.primal_residual.to_string(),
                r.data_misfit.to_string(),
                r.seconds.to_string(),
            ])
            .map_err(csv_err(&path))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    log::info!("{} iterations", rec.iterations());
    Ok(())
}

/// Last `(iter, seconds)` of a history CSV.
fn history_tail(path: &Path) -> Result<(usize, f64)> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut last = (0, 0.0);
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let bad = || Error::Parse {
            line: i + 2,
            message: format!("malformed history row in {}", path.display()),
        };
        let iter = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let seconds = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        last = (iter, seconds);
    }
    Ok(last)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let truth = read_volume(&a.reference)?;
    let test = read_volume(&a.test)?;
    let (iterations, seconds) = match &a.history {
        Some(p) => history_tail(p)?,
        None => (0, 0.0),
    };
    let report = MetricsReport::evaluate(a.method, a.ratio, &truth, &test, iterations, seconds)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record([
        "method",
        "ratio",
        "psnr_db",
        "ssim",
        "iterations",
        "seconds",
    ])
    .map_err(csv_err(&a.out))?;
    w.write_record([
        report.method_label.clone(),
        report.compression_ratio.to_string(),
        format_metric(report.psnr_db),
        format_metric(report.ssim),
        report.iterations.to_string(),
        report.wall_seconds.to_string(),
    ])
    .map_err(csv_err(&a.out))?;
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    println!(
        "psnr {} dB, ssim {}",
        format_metric(report.psnr_db),
        format_metric(report.ssim)
    );
    Ok(())
}

fn tune_cmd(a: TuneArgs) -> Result<()> {
    let ms = read_measurements(&a.meas)?;
    let masks = read_masks(&a.masks)?;
    let truth = read_volume(&a.truth)?;
    let denoiser = a.denoiser.build();
    // λ and ρ are placeholders; the tuner overwrites them.
    let mut base = if ms.noise_variance() > 0.0 {
        SolverConfig::noisy(denoiser, 1.0, 0.1)
    } else {
        SolverConfig::noise_free(denoiser, 1.0, 0.1)
    };
    if a.temporal {
        base = base.with_temporal(0.1);
    }
    let started = Instant::now();
    let tuning = tune_solver(&ms, &masks, &truth, &base, a.budget, a.seed)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["eval", "lambda", "rho", "gamma", "psnr_db", "seconds"])
        .map_err(csv_err(&a.out))?;
    for (i, e) in tuning.result.trace.iter().enumerate() {
        let gamma = e.params.get(2).copied().unwrap_or(0.0);
        w.write_record([
            (i + 1).to_string(),
            e.params[0].to_string(),
            e.params[1].to_string(),
            gamma.to_string(),
            format_metric(e.value),
            e.seconds.to_string(),
        ])
        .map_err(csv_err(&a.out))?;
    }
    w.flush().map_err(|e| Error::io(&a.out, e))?;
    if let Some(path) = a.recon {
        write_volume(&tuning.reconstruction.volume, path)?;
    }
    let c = &tuning.config;
    println!(
        "best lambda {} rho {} gamma {}: {} dB after re-run ({:.1} s)",
        c.lambda,
        c.rho,
        c.gamma,
        format_metric(tuning.psnr_db),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn sweep_cmd(a: SweepArgs) -> Result<()> {
    let mut plan = match &a.config {
        Some(path) => parse_config(path)?,
        None => ExperimentPlan::default(),
    };
    if let Some(dir) = a.output_dir {
        plan.output_dir = dir;
    }
    if let Some(n) = a.export_slice {
        plan.export_slice = n;
    }
    let outcome = run_experiment(&plan)?;
    for row in &outcome.rows {
        println!(
            "{:<18} R={:<3} noise={:<6} psnr {:>8} ssim {:>7} iters {:>3} {:.1}s",
            row.method.to_string(),
            row.ratio,
            row.noise_variance,
            row.psnr_db.map_or("-".into(), |p| format!("{p:.3}")),
            row.ssim.map_or("-".into(), |s| format!("{s:.4}")),
            row.iterations,
            row.seconds
        );
    }
    println!("results in {}", outcome.csv_path.display());
    match outcome.failures.into_iter().next() {
        Some((_, e)) => Err(e),
        None => Ok(()),
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("CSLSM_THREADS") else {
        return Ok(());
    };
    let n: usize = value.trim().parse().map_err(|_| {
        Error::config(format!(
            "CSLSM_THREADS must be a thread count, got {value:?}"
        ))
    })?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Tune(a) => tune_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Version => {
            println!("cslsm {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
