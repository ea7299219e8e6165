//! Byte-level BPE tokenizer and a small transformer masked language model.

mod config;
mod io;
mod model;
pub mod network;
pub mod tensor;
mod tokenizer;
mod train;

pub use config::LmConfig;
pub use io::{read_weights, write_weights};
pub use model::{encode_entities, EncodedRequest, LanguageModel, RequestEmbeddings};
pub use tokenizer::{
    byte_to_unicode, chunks, train_bbpe, train_bbpe_on, BbpeTokenizer, BASE_VOCAB, BYTE_OFFSET, CLS, CLS_ID, IGN,
    IGN_ID, MASK, MASK_ID, PAD, PAD_ID, SEP, SEP_ID, SPECIALS, UNK, UNK_ID,
};
pub use train::{scheduled_lr, train_mlm, train_mlm_with_report, TrainReport};

pub(crate) use train::{accumulate, AdamW};
