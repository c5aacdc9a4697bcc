//! `polyanchor`: config-driven pipeline from mortality projection to
//! life-years gained.

mod commands;
mod config;
mod error;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::output::Output;

#[derive(Parser)]
#[command(name = "polyanchor", version, about = "Anchored polyhazard survival extrapolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Fit Lee-Carter models, project rates and synthesize the external cohort.
    ProjectMortality,
    /// Synthesize the external cohort from projected-rate files.
    Synthesize,
    /// Sample the joint posterior.
    Fit,
    /// Extend fitted curves beyond follow-up.
    Extrapolate,
    /// Mean survival, restricted mean and life years gained.
    Estimands,
    /// Kaplan-Meier curves and kernel hazards of the input data.
    Km,
    /// Individual records from a digitised survival curve.
    ReconstructIpd,
    /// Survival data drawn from the model at given parameters.
    Simulate,
    /// Information-criteria table across fit reports.
    Compare,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::ProjectMortality => "project-mortality",
            Command::Synthesize => "synthesize",
            Command::Fit => "fit",
            Command::Extrapolate => "extrapolate",
            Command::Estimands => "estimands",
            Command::Km => "km",
            Command::ReconstructIpd => "reconstruct-ipd",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text =
        fs::read_to_string(&config_path).map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let mut cfg = RunConfig::from_json(&text)
        .map_err(|e| CliError::Config(format!("{}: {}", config_path.display(), e.message())))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.sampler.seed = cfg.seed;
    if let Some(m) = &mut cfg.mortality {
        m.lee_carter.seed = cfg.seed;
    }
    cfg.validate()?;
    let base = config_path.parent().map(Path::to_path_buf).unwrap_or_default();
    let dir = match (cli.out, &cfg.output_dir) {
        (Some(d), _) => d,
        (None, Some(d)) => resolve(&base, d),
        (None, None) => base.join("out"),
    };
    let out = Output::create(dir, cfg.fingerprint(), cli.command.name(), cfg.seed, cli.quiet)?;
    let ctx = Ctx { cfg, base, out };
    match cli.command {
        Command::ProjectMortality => commands::project_mortality(&ctx),
        Command::Synthesize => commands::synthesize(&ctx),
        Command::Fit => commands::fit_command(&ctx),
        Command::Extrapolate => commands::extrapolate_command(&ctx),
        Command::Estimands => commands::estimands_command(&ctx),
        Command::Km => commands::km_command(&ctx),
        Command::ReconstructIpd => commands::reconstruct_ipd_command(&ctx),
        Command::Simulate => commands::simulate_command(&ctx),
        Command::Compare => commands::compare_command(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
