mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use livsic_core::livsic::RecoveryMethod;
use livsic_core::WeightVariant;

use crate::commands::{Outcome, Run};
use crate::config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(
    name = "livsic",
    version,
    about = "Transfer-operator experiments for cohomological equations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Weight variant of the expansion criterion.
    #[arg(long, global = true)]
    variant: Option<VariantArg>,

    /// Recovery method.
    #[arg(long, global = true)]
    method: Option<MethodArg>,

    /// Also write the assembled operator matrix as CSV.
    #[arg(long, global = true)]
    dump_operator: bool,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Invariant density, leading eigenvalue and spectral gap.
    Density,
    /// Leading eigenvalue of the twisted family over the t grid.
    LambdaCurve,
    /// Coboundary verdict from drift, variance and the λ-curve.
    Detect,
    /// Transfer function of a coboundary.
    Recover,
    /// Birkhoff sums over periodic orbits.
    Periodic,
    /// Virtual-expansion certificate.
    VexpCertify,
    /// Run the full property suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Self::Density => "density",
            Self::LambdaCurve => "lambda-curve",
            Self::Detect => "detect",
            Self::Recover => "recover",
            Self::Periodic => "periodic",
            Self::VexpCertify => "vexp-certify",
            Self::Selftest => "selftest",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum VariantArg {
    Printed,
    Reciprocal,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MethodArg {
    Cauchy,
    Resolvent,
}

fn init_logging() {
    let level = match std::env::var("LIVSIC_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Off,
        Ok("debug") => log::LevelFilter::Debug,
        _ => log::LevelFilter::Info,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
}

fn main() -> ExitCode {
    init_logging();
    let cli = Cli::parse();
    let Some(path) = cli.config.as_deref() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(v) = cli.variant {
        cfg.variant = match v {
            VariantArg::Printed => WeightVariant::Printed,
            VariantArg::Reciprocal => WeightVariant::ReciprocalPullback,
        };
    }
    if let Some(m) = cli.method {
        cfg.method = match m {
            MethodArg::Cauchy => RecoveryMethod::Cauchy,
            MethodArg::Resolvent => RecoveryMethod::Resolvent,
        };
    }
    if let Some(out) = cli.out {
        cfg.out = Some(out);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(2);
    }
    let run = Run::new(cli.command.name(), cfg, cli.threads, cli.dump_operator);
    let result = match cli.command {
        Command::Density => commands::density(run),
        Command::LambdaCurve => commands::lambda_curve(run),
        Command::Detect => commands::detect(run),
        Command::Recover => commands::recover(run),
        Command::Periodic => commands::periodic(run),
        Command::VexpCertify => commands::vexp_certify(run),
        Command::Selftest => commands::selftest(run),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
