//! `sinmt`: generate a synthetic corpus, train, evaluate and probe.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sinmt::Mode;

use crate::config::ProbeScope;

#[derive(Parser, Debug)]
#[command(name = "sinmt", version, about = "Speaker-invariant multi-task spoofing detection on a synthetic corpus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Baseline,
    Spk,
    Ivspk,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => Mode::Baseline,
            ModeArg::Spk => Mode::SpeakerAware,
            ModeArg::Ivspk => Mode::SpeakerInvariant,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus (manifest and WAV files).
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing corpus.
        #[arg(long)]
        force: bool,
    },
    /// Train a model on the train split, selecting on dev.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Checkpoint to warm-start from.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Score full-length utterances and write the EER breakdown.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Speaker probe accuracy and silhouette of spoof-head embeddings.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        scope: Option<ProbeScope>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Write spoof-head embeddings as comma-separated rows.
    Export {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "eval")]
        split: ProbeScope,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen { config, out, force } => commands::gen(config.as_deref(), &out, force),
        Command::Train {
            config,
            corpus,
            out,
            mode,
            init,
            epochs,
            seed,
            force,
        } => commands::train(
            config.as_deref(),
            &corpus,
            &out,
            commands::TrainOverrides {
                mode: mode.map(Mode::from),
                init,
                epochs,
                seed,
            },
            force,
        ),
        Command::Eval {
            ckpt,
            corpus,
            out,
            config,
            force,
        } => commands::eval(&ckpt, &corpus, &out, config.as_deref(), force),
        Command::Probe {
            ckpt,
            corpus,
            config,
            scope,
            json,
        } => commands::probe(&ckpt, &corpus, config.as_deref(), scope, json.as_deref()),
        Command::Export {
            ckpt,
            corpus,
            out,
            split,
        } => commands::export(&ckpt, &corpus, &out, split),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
