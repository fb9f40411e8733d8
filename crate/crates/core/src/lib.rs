//! Speaker-invariant multi-task spoofing detection.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: tensors, a recording tape, gradient reversal, optimizers.
//! - [`model`]: a small CNN + Transformer feature extractor with two
//!   multi-head factorised attention (MHFA) pooling heads.
//! - [`synthdata`]: a deterministic synthetic spoofing corpus.
//! - [`training`]: the joint spoof/speaker objective and training loop.
//! - [`evaluation`]: EER scoring, breakdown reports, separability analysis.

pub mod autodiff;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod rng;
pub mod synthdata;
pub mod training;

pub use autodiff::{ParamGroup, ParameterSet, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use model::{Mode, SInMTNetwork};

