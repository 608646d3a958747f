//! `ergolab`: runs declarative experiments and summarizes their CSVs.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numeric failure
//! (partial CSV written), 4 I/O failure.

mod config;
mod error;
mod output;
mod report;
mod run;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::output::RunInfo;
use crate::run::Artifact;

#[derive(Parser)]
#[command(name = "ergolab", version, about = "Quantitative ergodic theory experiments", args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output path; overrides the config's `output`. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "ERGOLAB_THREADS")]
    threads: Option<usize>,
    /// Omit the `# generated` line.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Merge result CSVs into a JSON summary.
    Report(ReportArgs),
}

#[derive(Args)]
struct ReportArgs {
    /// Fit a power law to each statistic.
    #[arg(long)]
    fit: bool,
    /// Accept rows from different configs.
    #[arg(long)]
    allow_mixed: bool,
    /// A rates-calc JSON document with the predicted exponent.
    #[arg(long)]
    predicted: Option<PathBuf>,
    /// Which output of the predicted document to compare against.
    #[arg(long, default_value = "delta")]
    predicted_key: String,
    /// Output path for the summary. Defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(required = true)]
    csv: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Some(Command::Report(args)) => report_cmd(args),
        None => run_cmd(cli.run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ergolab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn sink(path: &Option<PathBuf>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(
            std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn run_cmd(args: RunArgs) -> CliResult<()> {
    let path = args.config.ok_or_else(|| CliError::Validation("--config is required".into()))?;
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let loaded = config::load(&path, args.seed)?;
    let cfg = &loaded.config;
    let out_path = args.out.or_else(|| cfg.output.clone());
    // validation happens inside run before any heavy work
    let artifact = run::run(cfg)?;
    match artifact {
        Artifact::Json(doc) => {
            let mut w = sink(&out_path)?;
            serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Io(e.to_string()))?;
            writeln!(w)?;
            w.flush()?;
            Ok(())
        }
        Artifact::Rows(outcome) => {
            let ts = (!args.no_timestamp).then(|| {
                let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
                format!("unix={secs}")
            });
            let info = RunInfo {
                experiment: cfg.experiment.label(),
                config_hash: &loaded.hash,
                seed: cfg.seed,
                system: run::system_label(cfg),
            };
            let partial = outcome.failure.as_ref().map(|e| e.to_string());
            output::write_rows(sink(&out_path)?, &info, &outcome.stats, ts.as_deref(), partial.as_deref())?;
            match outcome.failure {
                Some(e) => Err(e),
                None => Ok(()),
            }
        }
    }
}

fn report_cmd(args: ReportArgs) -> CliResult<()> {
    let runs = args.csv.iter().map(|p| report::read_run(p)).collect::<CliResult<Vec<_>>>()?;
    let predicted = match &args.predicted {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let opts = report::ReportOptions {
        fit: args.fit,
        allow_mixed: args.allow_mixed,
        predicted,
        predicted_key: args.predicted_key,
    };
    let summary = report::summarize(&runs, &opts)?;
    let mut w = sink(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &summary).map_err(|e| CliError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
