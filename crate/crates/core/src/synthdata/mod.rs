//! Deterministic synthetic spoofing corpus: speaker profiles, bona fide
//! synthesis, attacks, augmentations and the on-disk manifest.

pub mod attack;
pub mod augment;
pub mod corpus;
pub mod dsp;
pub mod speaker;
pub mod wavfile;

pub use attack::{apply_attack, AttackKind, AttackSpec, BONAFIDE_ID};
pub use augment::{apply_augmentation, augment, crop_or_pad, mix_at_snr, plan_augmentation, sample_augmentation, AugmentKind, AugmentPlan, CropMode};
pub use corpus::{
    generate_corpus, generate_in_memory, generate_utterance, CorpusConfig, CorpusManifest, Label, Split,
    SplitFractions, UttRecord, Utterance,
};
pub use speaker::{synthesize_bonafide, SpeakerProfile};
