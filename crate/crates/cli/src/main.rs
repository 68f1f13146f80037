use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sepdd_core::baseline2d::{aggregate_surface, estimate_2d};
use sepdd_core::batching::make_batches;
use sepdd_core::harness::{run_localize, run_sweep, EstimatorSettings, LocalizeDemo, SweepSpec, SweepTable};
use sepdd_core::projection::prepare_batches;
use sepdd_core::scene::{generate_waveform, synthesize_node, NodeSignals, SceneConfig};
use sepdd_core::separable::estimate_separable;
use sepdd_core::signal_io::{read_signal, write_signal};
use sepdd_core::{par, Execution};

/// Passive radar delay-Doppler estimation: baseline 2-D search versus the
/// separable delay / phase-regression estimator.
#[derive(Parser)]
#[command(name = "sepdd", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scene into reference and surveillance signal files.
    Simulate {
        /// Scene JSON.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Estimate delay and Doppler from signal files written by `simulate`.
    Estimate {
        /// Directory holding reference.bin and surveillance.bin.
        #[arg(long)]
        signals: PathBuf,
        /// Estimator settings JSON; the clutter order defaults to the
        /// reference pre-roll.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = MethodArg::Both)]
        method: MethodArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Batch-count sweep with the batch length fixed.
    SweepBatches(SweepArgs),
    /// Doppler sweep with the record length fixed.
    SweepDoppler(SweepArgs),
    /// Multi-node localization from transmitted delay profiles.
    Localize {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Sweep JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    #[value(name = "2d")]
    TwoD,
    Sep,
    Both,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = SceneConfig::from_json(&text).with_context(|| format!("invalid scene {}", config.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let waveform = generate_waveform(cfg.n_samples + cfg.clutter_order(), cfg.seed)?;
    let node = synthesize_node(&cfg, &waveform)?;
    fs::create_dir_all(out)?;
    write_signal(&out.join("reference.bin"), &node.reference)?;
    write_signal(&out.join("surveillance.bin"), &node.surveillance)?;
    write_json(&out.join("scene.json"), &cfg)?;
    println!("{}", json!({ "reference": node.reference.len(), "surveillance": node.surveillance.len(), "out": out }));
    Ok(())
}

fn estimator_settings(config: Option<&Path>, pre_roll: usize) -> Result<EstimatorSettings> {
    let Some(path) = config else {
        return Ok(EstimatorSettings { order: pre_roll, ..Default::default() });
    };
    let value: serde_json::Value = read_json(path)?;
    let has_order = value.get("order").is_some();
    let mut est: EstimatorSettings =
        serde_json::from_value(value).with_context(|| format!("invalid estimator settings {}", path.display()))?;
    if !has_order {
        est.order = pre_roll;
    }
    Ok(est)
}

fn estimate(signals: &Path, config: Option<&Path>, method: MethodArg, out: &Path, exec: Execution) -> Result<()> {
    let reference = read_signal(&signals.join("reference.bin"))?;
    let surveillance = read_signal(&signals.join("surveillance.bin"))?;
    let node = NodeSignals::new(reference, surveillance)?;
    let est = estimator_settings(config, node.pre_roll)?;
    let prepared = prepare_batches(make_batches(&node, est.batches, est.order)?, exec)?;
    fs::create_dir_all(out)?;
    let mut report = serde_json::Map::new();
    if method != MethodArg::TwoD {
        let sep = estimate_separable(&prepared, &est.separable, exec)?;
        let bytes = sep.delay.profile.write_csv(fs::File::create(out.join("profile.csv"))?)?;
        report.insert(
            "separable".into(),
            json!({
                "tau_hat": sep.tau_hat(),
                "omega_hat": sep.omega_hat(),
                "approximation_warning": sep.fit.approximation_warning,
                "profile_bytes": bytes,
            }),
        );
    }
    if method != MethodArg::Sep {
        let search = est.search_box(&prepared);
        let q = prepared[0].batch.len();
        let (tg, wg) = est.baseline.grids(&search, q, prepared[0].batch.dt());
        let surface = aggregate_surface(&prepared, &tg, &wg, exec)?;
        let bytes = surface.write_csv(fs::File::create(out.join("surface.csv"))?)?;
        let (t, w, _) = surface.argmax();
        let e = estimate_2d(&prepared, &search, Some((t, w)), &est.baseline, exec)?;
        report.insert(
            "baseline2d".into(),
            json!({
                "tau_hat": e.tau_hat,
                "omega_hat": e.omega_hat,
                "converged": e.converged,
                "surface_bytes": bytes,
            }),
        );
    }
    let report = serde_json::Value::Object(report);
    write_json(&out.join("estimates.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn sweep(args: &SweepArgs, default: SweepSpec, name: &str, exec: Execution) -> Result<SweepTable> {
    let mut spec = match &args.config {
        Some(p) => read_json::<SweepSpec>(p)?,
        None => default,
    };
    if let Some(t) = args.trials {
        spec.trials = t;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    spec.validate()?;
    let table = run_sweep(&spec, exec)?;
    fs::create_dir_all(&args.out)?;
    let csv = format!("{name}.csv");
    fs::write(args.out.join(&csv), table.to_csv())?;
    fs::write(args.out.join(format!("{name}.gp")), table.gnuplot_script(&csv))?;
    print!("{}", table.to_csv());
    Ok(table)
}

fn localize(config: Option<&Path>, seed: u64, out: &Path, exec: Execution) -> Result<()> {
    let demo = match config {
        Some(p) => read_json::<LocalizeDemo>(p)?,
        None => LocalizeDemo::default(),
    };
    let report = run_localize(&demo, seed, exec)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("localize.json"), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let exec = Execution::default();
    match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Estimate { signals, config, method, out } => estimate(&signals, config.as_deref(), method, &out, exec),
        Command::SweepBatches(a) => sweep(&a, SweepSpec::batches_default(), "sweep_batches", exec).map(drop),
        Command::SweepDoppler(a) => sweep(&a, SweepSpec::doppler_default(), "sweep_doppler", exec).map(drop),
        Command::Localize { config, seed, out } => localize(config.as_deref(), seed, &out, exec),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = if cli.threads == Some(0) {
        Err(anyhow!("--threads must be at least 1"))
    } else {
        par::with_threads(cli.threads, || run(cli))
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
