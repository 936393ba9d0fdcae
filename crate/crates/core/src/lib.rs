//! Cross-lingual extractive question answering.
//!
//! The crate covers the whole fine-tuning pipeline for a small transformer
//! QA model: dataset ingestion and stratified splitting, word-piece
//! tokenization with character offsets, translation/transliteration
//! augmentation with answer relocation, sliding-window features, a
//! from-scratch encoder with exact gradients, the task and multilingual
//! contrastive losses, the training loop, and Jaccard evaluation.

pub mod augment;
pub mod checkpoint;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod features;
pub mod losses;
pub mod optim;
pub mod rng;
pub mod synthetic;
pub mod tokenizer;
pub mod trainer;

pub use augment::{AugmentReport, TextTransformer, TransformKind, TranslationGroup};
pub use corpus::{DatasetSplit, QaRecord};
pub use encoder::{EncoderConfig, EncoderParams};
pub use eval::{DecodeConfig, JaccardReport};
pub use features::{Feature, FeatureConfig};
pub use losses::LossBreakdown;
pub use tokenizer::{Encoding, Vocab};
pub use trainer::{TrainConfig, TrainState};
