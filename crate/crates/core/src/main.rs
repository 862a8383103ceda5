use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qdm::acceptance;
use qdm::config::ExperimentConfig;
use qdm::scenario::{self, OutputFormat, RunOptions, Step};
use qdm::QdmError;

const EXIT_SCHEMA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "qdm", version, about = "Quantum diamond microscope simulator")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "qdm-out")]
    out: PathBuf,
    /// Exit with status 4 if any check fails.
    #[arg(long, global = true)]
    check: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads (default: all cores).
    #[arg(long, env = "QDM_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Bin,
    Svg,
}

#[derive(Subcommand)]
enum Command {
    /// Render the projected field map of the configured sources.
    SimulateField,
    /// Simulate a stack of camera frames (DU).
    SimulateFrames,
    /// Run the analysis for the scenario kind, optionally on a stored stack.
    Analyze {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// NLM against matched Gaussian smoothing.
    Denoise {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// P1 bath transitions and DEER spectrum.
    Spectrum,
    /// Acquisition and wall-clock timing.
    Timing,
    /// Run the acceptance suite.
    Check {
        /// Run only these criteria (1-13).
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..=13))]
        criterion: Vec<u32>,
    },
    /// Run the whole scenario described by the config.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    if let Command::Check { criterion } = &cli.command {
        let mut all = true;
        for (id, _, _) in acceptance::CRITERIA {
            if !criterion.is_empty() && !criterion.contains(&id) {
                continue;
            }
            let r = acceptance::run_criterion(id);
            println!("{r}");
            all &= r.passed;
        }
        return if all {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(EXIT_CHECK)
        };
    }

    let cfg = match &cli.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(match e {
                    QdmError::Io(_) => EXIT_RUNTIME,
                    _ => EXIT_SCHEMA,
                });
            }
        },
        None => ExperimentConfig::default(),
    };
    let (step, input) = match cli.command {
        Command::SimulateField => (Step::SimulateField, None),
        Command::SimulateFrames => (Step::SimulateFrames, None),
        Command::Analyze { input } => (Step::Analyze, input),
        Command::Denoise { input } => (Step::Denoise, input),
        Command::Spectrum => (Step::Spectrum, None),
        Command::Timing => (Step::Timing, None),
        Command::Report => (Step::Full, None),
        Command::Check { .. } => unreachable!(),
    };
    let opts = RunOptions {
        out: cli.out,
        format: match cli.format {
            Format::Csv => OutputFormat::Csv,
            Format::Bin => OutputFormat::Bin,
            Format::Svg => OutputFormat::Svg,
        },
        seed: cli.seed,
        input,
    };
    match scenario::run(&cfg, step, &opts) {
        Ok(o) => {
            for (k, v) in &o.report {
                println!("{k}: {v}");
            }
            for c in &o.checks {
                println!("check {}: {} ({})", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
            }
            if cli.check && !o.all_passed() {
                ExitCode::from(EXIT_CHECK)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                QdmError::Config(_) => EXIT_SCHEMA,
                _ => EXIT_RUNTIME,
            })
        }
    }
}
