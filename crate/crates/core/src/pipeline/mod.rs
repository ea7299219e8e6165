//! End-to-end orchestration driven by one [`PipelineConfig`].

mod commands;
mod config;
mod manifest;
pub mod stages;

pub use commands::{
    cmd_ablate, cmd_augment, cmd_detect, cmd_evaluate, cmd_ingest, cmd_train_detector, render_ablation,
    write_verdicts, AblationRow, BASELINE_DIR, CORPUS_FILE, DATASTORE_FILE, DETECTOR_DIR, GENERATOR_DIR,
    RESERVED_FILE, TEST_FILE, TRAIN_FILE, VERDICTS_FILE,
};
pub use config::{AugmentConfig, DataConfig, LexiconConfig, PipelineConfig, Profile, Seeds, CONFIG_ENV};
pub use manifest::{sha256_file, RunManifest};
