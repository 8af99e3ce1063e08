mod backend;
mod eval;
mod repl;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harmony_core::agent::ScenarioRegistry;
use harmony_core::llm::BackendSpec;
use harmony_core::{assets, load_home, HomeState};

#[derive(Parser)]
#[command(name = "harmony", version, about = "Local smart-home assistant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand that runs the pipeline.
#[derive(clap::Args, Clone)]
pub struct PipelineArgs {
    /// Home definition (JSON); the bundled seven-room home when omitted.
    #[arg(long)]
    pub home: Option<PathBuf>,
    /// Scenario registry (JSON); the bundled presets when omitted.
    #[arg(long)]
    pub scenarios: Option<PathBuf>,
    /// scripted:PATH or http:URL
    #[arg(long)]
    pub backend: BackendSpec,
    /// Model name sent to an HTTP backend.
    #[arg(long, default_value = "llama3:8b")]
    pub model: String,
    /// HTTP backend timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout_secs: u64,
}

impl PipelineArgs {
    pub fn load_home(&self) -> anyhow::Result<HomeState> {
        match &self.home {
            None => Ok(assets::bundled_home()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
                Ok(load_home(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?)
            }
        }
    }

    pub fn load_scenarios(&self) -> anyhow::Result<ScenarioRegistry> {
        match &self.scenarios {
            None => Ok(assets::bundled_scenarios()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
                Ok(ScenarioRegistry::load(&text)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API and event stream.
    Serve(serve::ServeArgs),
    /// Score the assistant on a routine corpus.
    Eval(eval::EvalArgs),
    /// Line-oriented interactive session on stdin.
    Repl(repl::ReplArgs),
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("HARMONY_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve(args) => serve::run(args),
        Command::Eval(args) => eval::run(args),
        Command::Repl(args) => repl::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
