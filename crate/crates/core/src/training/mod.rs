//! Joint spoof/speaker objective, update step and training loop.

pub mod config;
pub mod loss;
pub mod step;
pub mod trainer;

pub use config::{Selection, TrainConfig};
pub use loss::{combined_loss, mean_cross_entropy, weighted_cross_entropy, LossParts};
pub use step::{compute_gradients, train_step, Batch, StepConfig, StepRecord};
pub use trainer::{
    build_network, dev_metrics, history_to_text, parse_history, train, train_from_corpus, DevMetrics, Example,
    LossRecord, TrainData, TrainOutcome,
};
