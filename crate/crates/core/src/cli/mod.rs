//! Command-line front end.
//!
//! Every subcommand reads an optional JSON config (`--config PATH`), applies
//! trailing `--dotted.key value` overrides, and can dump the resolved config
//! with `--print-config`.

mod commands;
mod config;
mod protocol;

pub use commands::{
    cmd_encode, cmd_evaluate, cmd_gradcheck, cmd_sample, cmd_synth, cmd_train_rec, cmd_train_rep, evaluate,
    extract_features, load_extractor, load_prepared, matrix_csv, n_labeled_range, run_gradchecks, train_representation,
    GradCheckLine, GRADCHECK_LOSSES, GRADCHECK_TOLERANCE,
};
pub use config::{
    ExperimentConfig, FeatureKind, GenmodelSection, RecognizerSection, SampleSection, SplitSection, TrainingSection,
    WindowedSection,
};
pub use protocol::{
    encode_dataset, evaluate_plan, mean_std, predict_split, results_csv, run_split, split_seed, summary_csv, train_split,
    FeatureTable, SplitResult,
};

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "surgrec", version, about = "Unsupervised representations for surgical activity recognition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON experiment config; defaults apply to absent keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    pub print_config: bool,
    /// Overrides as `--key value`, with dotted keys for nested sections.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset (manifest plus CSVs).
    Synth(ConfigArgs),
    /// Train a representation model on unlabeled kinematics.
    TrainRep(ConfigArgs),
    /// Write per-frame features for every trial.
    Encode(ConfigArgs),
    /// Train one recognizer on labeled trials.
    TrainRec(ConfigArgs),
    /// Run the split protocol and write per-split results.
    Evaluate(ConfigArgs),
    /// Sample continuations of a trial prefix from a generative model.
    Sample(ConfigArgs),
    /// Check analytic gradients of every loss against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn resolve(args: &ConfigArgs, out: &mut dyn Write) -> Result<Option<ExperimentConfig>> {
    let cfg = ExperimentConfig::resolve(args.config.as_deref(), &args.overrides)?;
    if args.print_config {
        write!(out, "{}", cfg.to_json()).map_err(|e| Error::io("<stdout>", e))?;
        return Ok(None);
    }
    Ok(Some(cfg))
}

/// Runs one parsed command.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    type Cmd = fn(&ExperimentConfig, &mut dyn Write) -> Result<()>;
    let (args, cmd): (&ConfigArgs, Cmd) = match &cli.command {
        Command::Synth(a) => (a, cmd_synth),
        Command::TrainRep(a) => (a, cmd_train_rep),
        Command::Encode(a) => (a, cmd_encode),
        Command::TrainRec(a) => (a, cmd_train_rec),
        Command::Evaluate(a) => (a, cmd_evaluate),
        Command::Sample(a) => (a, cmd_sample),
        Command::Gradcheck { seed, inject_fault } => return cmd_gradcheck(*seed, inject_fault.as_deref(), out),
    };
    match resolve(args, out)? {
        Some(cfg) => cmd(&cfg, out),
        None => Ok(()),
    }
}

/// Parses `argv`, runs the command, and returns the process exit status.
pub fn main_with_args<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
