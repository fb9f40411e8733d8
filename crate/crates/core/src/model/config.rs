use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayerSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Shape of the convolutional encoder plus Transformer context network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub conv_layers: Vec<ConvLayerSpec>,
    pub model_dim: usize,
    pub n_transformer_layers: usize,
    pub n_attention_heads: usize,
    pub ffn_dim: usize,
    pub max_frames: usize,
    /// First-order pre-emphasis `x[n] - a x[n-1]` applied to the input; 0
    /// disables it.
    pub pre_emphasis: f64,
    /// Scale each waveform to zero mean and unit variance before the convs.
    pub normalize_input: bool,
    /// Layer norm over channels on the conv output (stack layer 0).
    pub feature_norm: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        let conv = |channels, kernel, stride| ConvLayerSpec {
            channels,
            kernel,
            stride,
        };
        EncoderConfig {
            conv_layers: vec![conv(16, 8, 4), conv(32, 4, 2), conv(32, 4, 2)],
            model_dim: 32,
            n_transformer_layers: 2,
            n_attention_heads: 4,
            ffn_dim: 64,
            max_frames: 1024,
            pre_emphasis: 0.97,
            normalize_input: true,
            feature_norm: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.conv_layers.is_empty() {
            return bad("encoder needs at least one conv layer".into());
        }
        for (i, c) in self.conv_layers.iter().enumerate() {
            if c.channels == 0 || c.kernel == 0 || c.stride == 0 {
                return bad(format!("conv layer {i}: channels, kernel and stride must be positive"));
            }
            if c.kernel < c.stride {
                return bad(format!("conv layer {i}: kernel {} smaller than stride {}", c.kernel, c.stride));
            }
        }
        if self.model_dim == 0 || self.n_attention_heads == 0 || self.ffn_dim == 0 || self.max_frames == 0 {
            return bad("encoder dimensions must be positive".into());
        }
        if self.model_dim % self.n_attention_heads != 0 {
            return bad(format!(
                "model_dim {} is not divisible by n_attention_heads {}",
                self.model_dim, self.n_attention_heads
            ));
        }
        let last = self.conv_layers.last().expect("non-empty").channels;
        if last != self.model_dim {
            return bad(format!(
                "last conv layer has {last} channels but model_dim is {}",
                self.model_dim
            ));
        }
        Ok(())
    }

    /// Total downsampling factor.
    pub fn stride_product(&self) -> usize {
        self.conv_layers.iter().map(|c| c.stride).product()
    }

    /// Input samples seen by one output frame.
    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let mut jump = 1;
        for c in &self.conv_layers {
            field += (c.kernel - 1) * jump;
            jump *= c.stride;
        }
        field
    }

    pub fn min_samples(&self) -> usize {
        self.receptive_field().max(self.stride_product())
    }

    /// Frames produced from `samples` inputs: each conv layer floors by its
    /// stride.
    pub fn frames(&self, samples: usize) -> usize {
        self.conv_layers.iter().fold(samples, |len, c| len / c.stride)
    }

    /// Number of per-layer outputs exposed to the pooling heads.
    pub fn n_stack_layers(&self) -> usize {
        self.n_transformer_layers + 1
    }
}

/// Pooling-head hyperparameters shared by the spoof and speaker heads.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub n_heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub embedding_dim: usize,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            n_heads: 4,
            key_dim: 16,
            value_dim: 16,
            embedding_dim: 32,
        }
    }
}

impl HeadConfig {
    pub fn with_classes(&self, n_classes: usize) -> MHFAConfig {
        MHFAConfig {
            n_heads: self.n_heads,
            key_dim: self.key_dim,
            value_dim: self.value_dim,
            embedding_dim: self.embedding_dim,
            n_classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MHFAConfig {
    pub n_heads: usize,
    pub key_dim: usize,
    pub value_dim: usize,
    pub embedding_dim: usize,
    pub n_classes: usize,
}

impl MHFAConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0
            || self.key_dim == 0
            || self.value_dim == 0
            || self.embedding_dim == 0
            || self.n_classes == 0
        {
            return Err(Error::Config("MHFA dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn head(&self) -> HeadConfig {
        HeadConfig {
            n_heads: self.n_heads,
            key_dim: self.key_dim,
            value_dim: self.value_dim,
            embedding_dim: self.embedding_dim,
        }
    }
}

/// Experiment configuration of the multi-task network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Spoof head only.
    #[serde(rename = "baseline")]
    Baseline,
    /// Joint spoof and speaker training; the speaker gradient reaches the
    /// extractor unreversed (lambda = -1).
    #[serde(rename = "spk")]
    SpeakerAware,
    /// Adversarial speaker branch behind gradient reversal (lambda > 0).
    #[serde(rename = "ivspk")]
    SpeakerInvariant,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::SpeakerAware => "spk",
            Mode::SpeakerInvariant => "ivspk",
        }
    }

    pub fn default_lambda(self) -> f64 {
        match self {
            Mode::Baseline => 0.0,
            Mode::SpeakerAware => -1.0,
            Mode::SpeakerInvariant => 1.0,
        }
    }

    pub fn has_speaker_head(self) -> bool {
        self != Mode::Baseline
    }

    /// Checks the lambda invariant for this mode.
    pub fn check_lambda(self, lambda: f64) -> Result<()> {
        match self {
            Mode::Baseline => Ok(()),
            Mode::SpeakerAware if lambda == -1.0 => Ok(()),
            Mode::SpeakerAware => Err(Error::Config(format!(
                "mode spk requires lambda = -1, got {lambda}"
            ))),
            Mode::SpeakerInvariant if lambda > 0.0 => Ok(()),
            Mode::SpeakerInvariant => Err(Error::Config(format!(
                "mode ivspk requires lambda > 0, got {lambda}"
            ))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "spk" | "speaker_aware" => Ok(Mode::SpeakerAware),
            "ivspk" | "speaker_invariant" => Ok(Mode::SpeakerInvariant),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}
