//! Datastore generation: mask each request's outlier token, fill it with the
//! language model, and keep fills a discriminator judges realistic.

mod datastore;
mod discriminator;
mod generate;
mod masking;

pub use datastore::{assemble_datastore, build_datastore, AugmentStats, AugmentedDatastore};
pub use discriminator::{
    accept, train_discriminator, train_discriminator_with_report, uncertainty, Discriminator, DiscriminatorConfig,
    DiscriminatorReport, CLASS_REAL, CLASS_SYNTHETIC,
};
pub use generate::{
    augment_record, generate_candidate, generate_candidates, is_viable_fill, novel_fills, synthetic_id,
    CandidateSample, FillStrategy, GenerationStats,
};
pub use masking::{cosine_similarity, find_outlier_token, mask_at, outlier_index, MaskedRequest};
