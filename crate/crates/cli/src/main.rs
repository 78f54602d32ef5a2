//! Command-line driver: validates and runs experiment configs and pretty
//! prints run manifests.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use spinlab::experiment::{self, ExperimentConfig, Manifest, OUTPUT_ROOT_VARIABLE};
use spinlab::{Error, Result};

#[derive(Parser)]
#[command(name = "spinlab", version, about = "Lattice spin-system laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config and write its
    /// artifacts plus a manifest.
    Run { config: PathBuf },
    /// Check a JSON config against the schema and the capacity guards
    /// without running it.
    Validate { config: PathBuf },
    /// Print the contents of a run manifest as a table.
    Report { manifest: PathBuf },
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    experiment::parse_config(&text)
}

/// The output directory: the config's `output`, placed under the
/// environment override root when that is set.
fn output_dir(config: &ExperimentConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VARIABLE) {
        Some(root) => PathBuf::from(root).join(&config.output),
        None => PathBuf::from(&config.output),
    }
}

fn run(path: &Path) -> Result<()> {
    let config = load_config(path)?;
    let out_dir = output_dir(&config);
    let manifest = experiment::run(&config, &out_dir)?;
    writeln!(
        std::io::stdout(),
        "wrote {} artifact(s) and manifest.json to {}",
        manifest.artifacts.len(),
        out_dir.display()
    )?;
    Ok(())
}

fn validate(path: &Path) -> Result<()> {
    let config = load_config(path)?;
    experiment::validate(&config)?;
    writeln!(
        std::io::stdout(),
        "config is valid: {} experiment",
        config.experiment.name()
    )?;
    Ok(())
}

fn report(path: &Path) -> Result<()> {
    let text = std::fs::read_to_string(path)?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{} {} | experiment {} | seed {} | {:.3}s",
        manifest.package,
        manifest.version,
        manifest.experiment,
        manifest.seed,
        manifest.wall_seconds
    )?;
    let name_width = manifest
        .artifacts
        .iter()
        .map(|a| a.name.len())
        .chain(std::iter::once("artifact".len()))
        .max()
        .unwrap_or(8);
    writeln!(out, "{:<name_width$}  {:>10}  sha256", "artifact", "bytes")?;
    for artifact in &manifest.artifacts {
        writeln!(
            out,
            "{:<name_width$}  {:>10}  {}",
            artifact.name, artifact.bytes, artifact.sha256
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { config } => run(config),
        Command::Validate { config } => validate(config),
        Command::Report { manifest } => report(manifest),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(error)) if error.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(experiment::exit_code(&error))
        }
    }
}
