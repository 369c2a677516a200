//! Command-line driver: generate a benchmark, pretrain, self-train,
//! evaluate, audit pseudo-labels and sweep momentum rates.
//!
//! Exit codes: 0 success, 1 invalid input (configuration, data or missing
//! artifacts), 2 runtime failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pseudorel::error::Error;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "pseudorel", version, about = "Pseudo-label self-training on a synthetic long-tailed relation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the benchmark splits and a manifest
    Gen(Common),
    /// Train the classifier with unannotated triplets as background
    Pretrain(Common),
    /// Self-train from the pretrained checkpoint under a threshold policy
    Selftrain(Common),
    /// Report R@K, mR@K and F@K of a checkpoint against hidden labels
    Eval(Common),
    /// Score logged pseudo-labels against hidden labels
    Audit(Common),
    /// Grid over both momentum rates, one self-training run per cell
    Sweep(Common),
    /// Print the resolved configuration
    Config(Common),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Library defaults
    Default,
    /// The committed benchmark used by the acceptance suite
    Benchmark,
}

#[derive(Args)]
struct Common {
    /// Starting configuration before the file and overrides are applied
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Any configuration key as `--kebab-case-key VALUE`, e.g. `--alpha-inc 0.4`
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

impl Common {
    /// Preset, then file, then overrides. `--preset` and `--config` are also
    /// honoured when they appear among the trailing overrides.
    fn resolve(&self) -> pseudorel::Result<RunConfig> {
        let mut preset = self.preset;
        let mut file = self.config.clone();
        let mut rest = Vec::new();
        let mut it = self.overrides.iter();
        while let Some(arg) = it.next() {
            let (key, inline) = match arg.split_once('=') {
                Some((k, v)) => (k, Some(v.to_string())),
                None => (arg.as_str(), None),
            };
            if key != "--preset" && key != "--config" {
                rest.push(arg.clone());
                continue;
            }
            let value = inline
                .or_else(|| it.next().cloned())
                .ok_or_else(|| Error::config(&key[2..], "missing value"))?;
            if key == "--config" {
                file = Some(value.into());
            } else {
                preset = Preset::from_str(&value, false).map_err(|e| Error::config("preset", e))?;
            }
        }
        let mut c = match preset {
            Preset::Default => RunConfig::default(),
            Preset::Benchmark => RunConfig::benchmark(),
        };
        if let Some(path) = &file {
            c.apply_file(path)?;
        }
        c.apply_overrides(&rest)?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config { .. } | Error::Validation(_) | Error::MissingArtifact(_) | Error::Parse { .. } => 1,
        Error::Numeric(_) | Error::Io(_) | Error::Json(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (common, command): (&Common, fn(&RunConfig) -> pseudorel::Result<()>) = match &cli.command {
        Command::Gen(c) => (c, commands::gen),
        Command::Pretrain(c) => (c, commands::pretrain_cmd),
        Command::Selftrain(c) => (c, commands::selftrain_cmd),
        Command::Eval(c) => (c, commands::eval_cmd),
        Command::Audit(c) => (c, commands::audit_cmd),
        Command::Sweep(c) => (c, commands::sweep_cmd),
        Command::Config(c) => (c, commands::show_config),
    };
    match common.resolve().and_then(|c| command(&c)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
