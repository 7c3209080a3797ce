//! Experiment orchestrator CLI: declarative config in, report bundle out.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shillab::experiment::{run_experiment, run_grid, ExperimentConfig, GridAxis};

#[derive(Parser)]
#[command(
    name = "shillab",
    about = "Shilling-attack laboratory: train attackers, inject profiles, retrain victims, evaluate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment end to end.
    Run(RunArgs),
    /// Run a hyper-parameter grid (cross product of --axis values).
    Grid(GridArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML, or JSON starting with '{'). Omit for the
    /// built-in defaults. Any key is overridable via SHILLAB_* env vars.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the experiment seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `out`, else runs/<stamp>-<hash>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue a partially completed run, reusing finished stages.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated attack methods, overriding the config; "none" runs
    /// the clean baseline only.
    #[arg(long)]
    attack: Option<String>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Axis as key=v1,v2,... (repeatable). Keys: lr, weight-decay, lda-lr,
    /// lda-weight-decay, steps, beta (min:max pairs), layers.
    #[arg(long = "axis")]
    axes: Vec<String>,
}

fn load_config(common: &CommonArgs) -> Result<ExperimentConfig, shillab::Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            // Defaults still honor environment overrides.
            ExperimentConfig::from_str_with_env(
                &ExperimentConfig::default().to_toml_string(),
                std::env::vars(),
            )?
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn resolve_out(common: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &common.out {
        return out.clone();
    }
    if let Some(out) = &cfg.out {
        return PathBuf::from(out);
    }
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    PathBuf::from("runs").join(format!("{stamp}-{}", &cfg.config_hash()[..8]))
}

fn parse_axes(raw: &[String]) -> Result<Vec<GridAxis>, shillab::Error> {
    raw.iter()
        .map(|spec| {
            let (key, values) = spec.split_once('=').ok_or_else(|| {
                shillab::Error::Config(format!("axis {spec:?} must look like key=v1,v2"))
            })?;
            Ok(GridAxis {
                key: key.trim().to_string(),
                values: values.split(',').map(|v| v.trim().to_string()).collect(),
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), shillab::Error> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = load_config(&args.common)?;
            if let Some(spec) = &args.attack {
                cfg.attack.methods = if spec == "none" {
                    Vec::new()
                } else {
                    spec.split(',').map(|m| m.trim().to_string()).collect()
                };
                cfg.validate()?;
            }
            let out = resolve_out(&args.common, &cfg);
            let report = run_experiment(&cfg, &out, args.common.resume)?;
            println!("run complete: {}", out.join("reports").display());
            for (kind, vr) in &report.victims {
                println!(
                    "  {kind} clean: recall@{} {:.4}, target HR {:.4}",
                    cfg.eval.top_k, vr.clean_utility.recall, vr.clean_attack.hit_ratio
                );
                for (method, mr) in &vr.attacks {
                    println!(
                        "  {kind} {method}: HR {:.4}, MRR {:.4}",
                        mr.attack.hit_ratio, mr.attack.mrr
                    );
                }
            }
            Ok(())
        }
        Command::Grid(args) => {
            let cfg = load_config(&args.common)?;
            let axes = parse_axes(&args.axes)?;
            let out = resolve_out(&args.common, &cfg);
            let summary = run_grid(&cfg, &axes, &out, args.common.resume)?;
            println!(
                "grid complete: {} cells, summary at {}",
                summary.cells.len(),
                out.join("grid-summary.csv").display()
            );
            for (kind, &best) in &summary.best {
                println!("  best cell for {kind}: {best}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
