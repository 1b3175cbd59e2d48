//! `mia-audit`: membership-inference audits over score bundles.
//!
//! Exit status is 0 on success, 1 when a bundle or computation fails and 2
//! on a usage error.

mod commands;
mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mia_audit::reproducibility::{GapKind, DEFAULT_SUBSET_SEED};
use mia_audit::{load_bundle, CalibrationSource, RunSet, Variant};

use crate::commands::{AttackOptions, ReproOptions};
use crate::report::ReportTable;

#[derive(Parser)]
#[command(name = "mia-audit", version, about = "Likelihood-ratio membership-inference audits over score bundles")]
struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "MIA_AUDIT_THREADS", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a bundle against every format invariant.
    Validate { bundle: PathBuf },

    /// Attack every model as the target and report mean/std metrics.
    Attack {
        bundle: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "online", value_parser = parse_variant)]
        variant: Vec<Variant>,
        #[arg(long, value_enum, default_value_t = Source::Shadow)]
        calibration: Source,
        #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-3", value_parser = parse_rate)]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5", value_parser = parse_rate)]
        prior: Vec<f64>,
        /// Benchmark label for the report (defaults to the bundle's run id).
        #[arg(long)]
        benchmark: Option<String>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Compare vulnerable sets and gap rankings across independent runs.
    Repro {
        #[arg(required = true, num_args = 2..)]
        bundles: Vec<PathBuf>,
        #[arg(long, default_value = "online", value_parser = parse_variant)]
        variant: Variant,
        #[arg(long, value_enum, default_value_t = Source::Shadow)]
        calibration: Source,
        #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-3", value_parser = parse_rate)]
        alpha: Vec<f64>,
        /// Minimum number of targets that must flag a sample as a member.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        support_x: u32,
        /// Drop samples flagged while a non-member in any target.
        #[arg(long)]
        zero_fp: bool,
        /// Tail sizes in percent.
        #[arg(long, value_delimiter = ',', default_value = "0.1,1,10", value_parser = parse_percent)]
        top_q: Vec<f64>,
        /// Rank-displacement slack in percentage points.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10", value_parser = parse_delta)]
        delta: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Gap::Median)]
        gap: Gap,
        /// Seed for subset sampling when k-wise enumeration is capped.
        #[arg(long, default_value_t = DEFAULT_SUBSET_SEED)]
        seed: u64,
        #[arg(long)]
        benchmark: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Generate a synthetic bundle from a preset name or a JSON spec file.
    Simulate {
        scenario: String,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed; the run id gets a matching suffix.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        run_id: Option<String>,
    },

    /// Test/train loss ratios from the bundle's model statistics.
    Lossratio {
        bundle: PathBuf,
        /// Also report each model's TPR at 0.1% FPR under this variant.
        #[arg(long, value_parser = parse_variant)]
        with_attack: Option<Variant>,
        #[arg(long)]
        benchmark: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Target,
    Shadow,
}

impl From<Source> for CalibrationSource {
    fn from(s: Source) -> Self {
        match s {
            Source::Target => CalibrationSource::Target,
            Source::Shadow => CalibrationSource::Shadow,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Gap {
    Median,
    Mean,
}

impl From<Gap> for GapKind {
    fn from(g: Gap) -> Self {
        match g {
            Gap::Median => GapKind::MedianGap,
            Gap::Mean => GapKind::MeanGap,
        }
    }
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse::<Variant>().map_err(|e| e.to_string())
}

fn parse_number(s: &str) -> Result<f64, String> {
    s.trim().parse::<f64>().map_err(|_| format!("{s:?} is not a number"))
}

/// A value strictly between 0 and 1.
fn parse_rate(s: &str) -> Result<f64, String> {
    let x = parse_number(s)?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err(format!("{s} must lie strictly between 0 and 1"))
    }
}

fn parse_percent(s: &str) -> Result<f64, String> {
    let x = parse_number(s)?;
    if x > 0.0 && x <= 100.0 {
        Ok(x)
    } else {
        Err(format!("{s} must lie in (0, 100]"))
    }
}

fn parse_delta(s: &str) -> Result<f64, String> {
    let x = parse_number(s)?;
    if (0.0..=100.0).contains(&x) {
        Ok(x)
    } else {
        Err(format!("{s} must lie in [0, 100]"))
    }
}

fn emit(table: &ReportTable, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
            let mut w = BufWriter::new(file);
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        None => table.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(n))
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Validate { bundle } => {
            let msg = commands::validate(&bundle).with_context(|| format!("invalid bundle {}", bundle.display()))?;
            println!("{msg}");
        }
        Command::Attack {
            bundle,
            variant,
            calibration,
            alpha,
            prior,
            benchmark,
            out,
        } => {
            let b = load_bundle(&bundle)?;
            let opts = AttackOptions {
                benchmark: benchmark.unwrap_or_else(|| b.run_id().to_string()),
                variants: variant,
                source: calibration.into(),
                alphas: alpha,
                priors: prior,
            };
            emit(&commands::attack(&b, &opts)?, out.as_deref())?;
        }
        Command::Repro {
            bundles,
            variant,
            calibration,
            alpha,
            support_x,
            zero_fp,
            top_q,
            delta,
            gap,
            seed,
            benchmark,
            out,
        } => {
            let loaded = bundles
                .iter()
                .map(|p| load_bundle(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let runs = RunSet::new(loaded)?;
            let opts = ReproOptions {
                benchmark: benchmark
                    .unwrap_or_else(|| runs.bundles().iter().map(|b| b.run_id()).collect::<Vec<_>>().join("+")),
                variant,
                source: calibration.into(),
                alphas: alpha,
                support_x,
                zero_fp,
                top_q,
                deltas: delta,
                gap: gap.into(),
                seed,
            };
            emit(&commands::repro(&runs, &opts)?, out.as_deref())?;
        }
        Command::Simulate {
            scenario,
            out,
            seed,
            run_id,
        } => {
            let spec = commands::resolve_spec(&scenario)?;
            println!("{}", commands::simulate(spec, seed, run_id, &out)?);
        }
        Command::Lossratio {
            bundle,
            with_attack,
            benchmark,
            out,
        } => {
            let b = load_bundle(&bundle)?;
            let bench = benchmark.unwrap_or_else(|| b.run_id().to_string());
            emit(&commands::loss_ratios(&b, &bench, with_attack)?, out.as_deref())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
