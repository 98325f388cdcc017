use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod failure;
mod records;

use config::{Overrides, ToolConfig};
use failure::{OrFail, Outcome};

/// Chunked navigation toolkit: chunking, dataset building, simulation,
/// evaluation and a policy server.
#[derive(Parser, Debug)]
#[command(name = "chunknav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML file with any of the shared keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Chunk trajectories into one record per chunk.
    Chunk {
        /// Trajectory file, one JSON record per line.
        input: PathBuf,
        /// Output file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Build inverse-dynamics triplets, and optionally VLN samples.
    BuildIds {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write VLN samples here.
        #[arg(long)]
        vln_output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Chunk-size statistics of a trajectory file, or entropy profiles of an
    /// episode log with --entropy.
    Stats {
        input: PathBuf,
        /// Treat the input as an episode log and summarize query entropies.
        #[arg(long)]
        entropy: bool,
        /// JSON statistics, or the per-query entropy dump with --entropy.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Metric table for an episode log.
    Eval {
        input: PathBuf,
        /// JSON report per mode.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run episodes in process and print their metrics.
    Simulate {
        /// Episode log.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate oracle trajectories over generated worlds.
    Corpus {
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Serve policy queries over TCP until killed.
    Serve {
        #[command(flatten)]
        common: Common,
    },
    /// Run episodes against a server and print their metrics.
    Client {
        /// Episode log.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Raw request/response pairs; these carry client timestamps and
        /// server latencies.
        #[arg(long)]
        transcript: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name_and_common(&self) -> (&'static str, &Common) {
        match self {
            Command::Chunk { common, .. } => ("chunk", common),
            Command::BuildIds { common, .. } => ("build-ids", common),
            Command::Stats { common, .. } => ("stats", common),
            Command::Eval { common, .. } => ("eval", common),
            Command::Simulate { common, .. } => ("simulate", common),
            Command::Corpus { common, .. } => ("corpus", common),
            Command::Serve { common, .. } => ("serve", common),
            Command::Client { common, .. } => ("client", common),
            Command::Config { common } => ("config", common),
        }
    }
}

fn run(cli: Cli) -> Outcome {
    let (name, common) = cli.command.name_and_common();
    let cfg = ToolConfig::load(common.config.as_deref(), &common.overrides).usage()?;
    eprintln!("chunknav {name}: seed={} rng={}", cfg.seed, cfg.rng);
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .runtime()?;
    }
    match &cli.command {
        Command::Chunk { input, output, .. } => commands::chunk(&cfg, input, output.as_deref()),
        Command::BuildIds {
            input,
            output,
            vln_output,
            ..
        } => commands::build_ids(&cfg, input, output.as_deref(), vln_output.as_deref()),
        Command::Stats {
            input, entropy, output, ..
        } => {
            if *entropy {
                commands::entropy_stats(input, output.as_deref())
            } else {
                commands::stats(&cfg, input, output.as_deref())
            }
        }
        Command::Eval { input, output, .. } => commands::eval(&cfg, input, output.as_deref()),
        Command::Simulate { output, .. } => commands::simulate(&cfg, output.as_deref()),
        Command::Corpus { output, .. } => commands::corpus(&cfg, output.as_deref()),
        Command::Serve { .. } => commands::serve(&cfg),
        Command::Client {
            output, transcript, ..
        } => commands::client(&cfg, output.as_deref(), transcript.as_deref()),
        Command::Config { .. } => records::emit(None, &cfg.to_toml()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { failure::USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
