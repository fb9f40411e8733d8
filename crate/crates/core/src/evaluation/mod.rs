//! EER scoring, per-attack reports, speaker separability and exports.

pub mod eer;
pub mod export;
pub mod report;
pub mod separability;

pub use eer::{compute_eer, EerResult};
pub use export::{export_embeddings, score_split, separability, EmbeddingRow, EmbeddingSet};
pub use report::{
    breakdown_report, breakdown_report_expecting, mean_eer, relative_reduction, ConditionResult, EvalReport, ScoreSet,
    Trial,
};
pub use separability::{silhouette, speaker_probe, ProbeConfig, ProbeResult, SeparabilityReport};
