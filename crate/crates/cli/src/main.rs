//! `pho`: drives the full pipeline — scene generation, radar sensing,
//! dataset export, federated training, personalisation, handover
//! evaluation, the percent-shift sweep, and the two-SBS demo trace.

mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use config::RunConfig;
use stages::{Runner, Stage};

#[derive(Parser, Debug)]
#[command(
    name = "pho",
    about = "Radar-aided blockage prediction and proactive-handover simulation pipeline"
)]
struct Args {
    /// Pipeline stage to run (`all` chains every stage in order).
    #[arg(value_enum)]
    stage: Stage,

    /// Run configuration (JSON). Defaults to the built-in six-SBS setup.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Replace the configured root seed.
    #[arg(long)]
    seed_override: Option<u64>,

    /// Override the feature source (oracle | radar).
    #[arg(long)]
    features_from: Option<String>,

    /// Override the global percent shift (fraction in [0, 1)).
    #[arg(long)]
    p_shift: Option<f64>,
}

fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref(), args.seed_override)?;
    if let Some(src) = &args.features_from {
        cfg.features.features_from = match src.as_str() {
            "oracle" => pho_core::dataset::FeatureSource::Oracle,
            "radar" => pho_core::dataset::FeatureSource::Radar,
            other => anyhow::bail!("--features-from must be `oracle` or `radar`, got `{other}`"),
        };
    }
    if let Some(p) = args.p_shift {
        anyhow::ensure!((0.0..1.0).contains(&p), "--p-shift must lie in [0, 1)");
        cfg.pho.p_shift = p;
        for v in cfg.pho.p_shift_per_sbs.values_mut() {
            *v = p;
        }
    }
    cfg.validate()?;
    Runner::new(cfg, args.out)?.run(args.stage)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
