use std::path::Path;

use serde::{Deserialize, Serialize};
use sinmt::evaluation::ProbeConfig;
use sinmt::model::ModelConfig;
use sinmt::synthdata::{CorpusConfig, Split};
use sinmt::training::TrainConfig;

use crate::exit::CliError;

/// Which utterances the separability probe sees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProbeScope {
    #[default]
    All,
    Train,
    Dev,
    Eval,
}

impl ProbeScope {
    pub fn splits(self) -> Vec<Split> {
        match self {
            ProbeScope::All => Split::ALL.to_vec(),
            ProbeScope::Train => vec![Split::Train],
            ProbeScope::Dev => vec![Split::Dev],
            ProbeScope::Eval => vec![Split::Eval],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Split scored by `eval`.
    pub split: Split,
    pub probe_scope: ProbeScope,
    pub probe: ProbeConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: Split::Eval,
            probe_scope: ProbeScope::All,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {}", e.message())))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(ExperimentConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                ExperimentConfig::parse(&text).map_err(|e| CliError::config(format!("{}: {}", p.display(), e.message)))
            }
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
