//! Augmentation of sparse HTTP/API request corpora with a masked language
//! model, and a random-forest anomaly detector trained on the result.
//!
//! The pipeline, stage by stage:
//!
//! 1. [`ingest`]: load and normalize requests, split them into entity tokens,
//!    stratified train/test split.
//! 2. [`lexicon`]: token frequency table and the reserved (never masked)
//!    structural tokens.
//! 3. [`lm`]: byte-level BPE tokenizer and a small transformer encoder trained
//!    with whole-word masking.
//! 4. [`augment`]: mask each request's least contextual token, fill it with the
//!    language model, keep fills the discriminator is confident about.
//! 5. [`detect`]: features from a normal-only language model, random forest,
//!    percentile-calibrated threshold.
//! 6. [`metrics`]: BLEU, embedding similarity scores, classification metrics.
//!
//! [`pipeline`] strings the stages together behind one config file.

pub mod augment;
pub mod detect;
pub mod error;
pub mod ingest;
pub mod lexicon;
pub mod lm;
pub mod metrics;
pub mod pipeline;
pub mod rng;

pub use error::{Error, ErrorCategory, Result};
pub use ingest::{EntityToken, Label, RawRequestRecord, RequestCorpus};
pub use lexicon::{ReservedTokenSet, TokenFrequencyTable};
pub use lm::{BbpeTokenizer, LanguageModel, LmConfig};
pub use augment::{AugmentedDatastore, CandidateSample, Discriminator, MaskedRequest};
pub use detect::{DetectorModel, ForestConfig, RandomForest, Verdict};
pub use metrics::{ConfusionMatrix, SimilarityReport};
