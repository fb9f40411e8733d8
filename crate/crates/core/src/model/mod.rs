//! Feature extractor, MHFA heads and the joint network.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod mhfa;
pub mod network;

pub use checkpoint::{checkpoint_bytes, copy_parameters, load_checkpoint, network_from_bytes, save_checkpoint, FORMAT_VERSION};
pub use config::{ConvLayerSpec, EncoderConfig, HeadConfig, MHFAConfig, Mode};
pub use encoder::{encode, LayerStack};
pub use mhfa::{mhfa_pool, PoolOutput};
pub use network::{
    ForwardOutput, Inference, ModelConfig, SInMTNetwork, SpeakerBranch, BONAFIDE_CLASS, SPOOF_CLASS,
};
