use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tempaug_cli::commands::{self, EvalSplit};
use tempaug_cli::pipeline::SplitName;
use tempaug_cli::CliError;

/// Dual-stream convolutional-recurrent sequence classifier.
#[derive(Parser)]
#[command(name = "tempaug", version)]
struct Cli {
    /// Run every computation sequentially on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Suppress per-epoch progress and the final report.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Score a saved checkpoint on one split of its data.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Data path to use instead of the one stored in the checkpoint.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare analytic gradients with central differences.
    Gradcheck {
        /// Restrict to one component.
        #[arg(long)]
        module: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Summarise a finished run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl From<SplitArg> for EvalSplit {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => EvalSplit::Part(SplitName::Train),
            SplitArg::Val => EvalSplit::Part(SplitName::Val),
            SplitArg::Test => EvalSplit::Part(SplitName::Test),
            SplitArg::All => EvalSplit::All,
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.sequential {
        temporal_augmenter::parallel::set_sequential(true);
    }
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            quiet,
        } => commands::train(&config, seed, &out, quiet),
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
        } => {
            let report =
                commands::eval(&checkpoint, data.as_deref(), split.into(), out.as_deref())?;
            commands::print_stdout(&format!("{}\n", report.to_text()));
            Ok(())
        }
        Command::Gradcheck {
            module,
            seed,
            corrupt,
        } => {
            let text = commands::gradcheck(module.as_deref(), seed, corrupt)?;
            commands::print_stdout(&text);
            Ok(())
        }
        Command::Report { run_dir, out } => {
            let text = commands::report(&run_dir, out.as_deref())?;
            commands::print_stdout(&text);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
