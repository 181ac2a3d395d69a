mod analysis;
mod live;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

/// Shared-space session server, scripted bots, network diagnostics and
/// questionnaire analysis.
#[derive(Debug, Parser)]
#[command(name = "copresence", version)]
struct Cli {
    /// Print one line of JSON on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a session server until interrupted.
    Serve(live::ServeArgs),
    /// Run one scripted participant against a server.
    Bot(live::BotArgs),
    /// Run several scripted participants concurrently.
    Ensemble(live::EnsembleArgs),
    /// Measure round trips to a server and apply the stability gate.
    Diag(live::DiagArgs),
    /// Score questionnaire exports.
    Score(ScoreArgs),
    /// Compare cohort MEQ30 factor scores with published studies.
    Compare(CompareArgs),
    /// Re-run a session log and check it reproduces.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Instrument {
    Meq30,
    Edi,
    Ics,
    Communitas,
}

#[derive(Debug, clap::Args)]
struct ScoreArgs {
    instrument: Instrument,
    /// CSV export with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Per-participant scores; written to stdout when absent and --json is off.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct CompareArgs {
    /// Factor scores as `participant_id,I,M,P,T`.
    #[arg(long)]
    scores: PathBuf,
    /// Reference table; the bundled one when absent.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Per-study, per-factor results.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ReplayArgs {
    /// JSON-lines session log written by `serve --log`.
    #[arg(long)]
    log: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default_level)))
        .with_writer(std::io::stderr)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let json = cli.json;
    match cli.command {
        Command::Score(a) => analysis::score(a.instrument, &a.input, a.out.as_deref(), json),
        Command::Compare(a) => analysis::compare(&a.scores, a.reference.as_deref(), a.alpha, a.out.as_deref(), json),
        Command::Replay(a) => live::replay(&a.log, json),
        Command::Serve(a) => runtime()?.block_on(live::serve(a, json)),
        Command::Bot(a) => runtime()?.block_on(live::bot(a, json)),
        Command::Ensemble(a) => runtime()?.block_on(live::ensemble(a, json)),
        Command::Diag(a) => runtime()?.block_on(live::diag(a)),
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

/// Prints a value as one line of JSON.
fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}
