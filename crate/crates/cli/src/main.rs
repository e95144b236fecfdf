use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use rayon::prelude::*;

use csit_sim::scheduler::SchedulerKind;
use csit_sim::sim::{preset, run_lanes, write_csv, PredictorKind, RunOutput, ScenarioConfig, PRESET_NAMES};

/// Multiuser MIMO downlink simulation with predicted channel feedback.
///
/// Writes `metrics.csv` and `summary.json` to the output directory. With
/// several schedulers or runs, each gets its own subdirectory
/// (`<scheduler>/` and `seed_<n>/`).
#[derive(Debug, Parser)]
#[command(name = "simulate", version)]
struct Args {
    /// Named scenario to start from.
    #[arg(long, default_value = "table5")]
    preset: String,

    /// TOML scenario file; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Comma-separated schedulers (pfs, mpfs, hfs) or `all`. Several
    /// schedulers share one channel realization.
    #[arg(long)]
    scheduler: Option<String>,

    /// esprit or wiener.
    #[arg(long)]
    predictor: Option<PredictorKind>,

    #[arg(long)]
    seed: Option<u64>,

    /// Independent runs with consecutive seeds, executed in parallel.
    #[arg(long, default_value_t = 1)]
    runs: u64,

    /// Scheduled symbols after warm-up.
    #[arg(long)]
    horizon_symbols: Option<usize>,

    #[arg(long)]
    snr_db: Option<f64>,

    #[arg(long)]
    pilot_snr_db: Option<f64>,

    /// Evaluation subcarriers.
    #[arg(long)]
    subcarriers: Option<usize>,

    /// Print the resolved scenario as TOML and exit.
    #[arg(long)]
    dump_config: bool,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn schedulers(arg: Option<&str>, default: SchedulerKind) -> Result<Vec<SchedulerKind>> {
    match arg {
        None => Ok(vec![default]),
        Some("all") => Ok(SchedulerKind::ALL.to_vec()),
        Some(list) => list.split(',').map(|s| s.trim().parse().map_err(Into::into)).collect(),
    }
}

fn resolve(args: &Args) -> Result<ScenarioConfig> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_toml_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => preset(&args.preset).with_context(|| format!("known presets: {}", PRESET_NAMES.join(", ")))?,
    };
    if let Some(p) = args.predictor {
        cfg.predictor = p;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(h) = args.horizon_symbols {
        cfg.horizon_symbols = h;
    }
    if let Some(x) = args.snr_db {
        cfg.snr_db = x;
    }
    if let Some(x) = args.pilot_snr_db {
        cfg.pilot_snr_db = x;
    }
    if let Some(n) = args.subcarriers {
        cfg.eval_subcarriers = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_output(dir: &Path, output: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(&output.records, BufWriter::new(File::create(dir.join("metrics.csv"))?))?;
    let json = serde_json::to_string_pretty(&output.summary)?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let cfg = resolve(&args)?;
    if args.dump_config {
        print!("{}", cfg.to_toml_string()?);
        return Ok(());
    }
    let kinds = schedulers(args.scheduler.as_deref(), cfg.scheduler)?;
    if args.runs == 0 {
        bail!("--runs must be at least 1");
    }

    let seeds: Vec<u64> = (0..args.runs).map(|i| cfg.seed + i).collect();
    let results: Vec<(u64, Vec<RunOutput>)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig { seed, ..cfg.clone() };
            log::info!("running seed {seed}");
            run_lanes(&cfg, &kinds).map(|o| (seed, o)).map_err(anyhow::Error::from)
        })
        .collect::<Result<_>>()?;

    for (seed, outputs) in &results {
        let seed_dir = if args.runs > 1 { args.out.join(format!("seed_{seed}")) } else { args.out.clone() };
        for output in outputs {
            let dir = if kinds.len() > 1 { seed_dir.join(output.summary.scheduler.name()) } else { seed_dir.clone() };
            write_output(&dir, output)?;
            let s = &output.summary;
            println!(
                "seed {seed} {:<4} sum {:.4} sum-log {:.4} activity {}",
                s.scheduler.name(),
                s.sum_throughput,
                s.sum_log_throughput,
                s.activity.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>().join(" ")
            );
        }
    }
    Ok(())
}
