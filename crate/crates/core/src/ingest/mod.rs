//! Corpus loading, request normalization, entity splitting and train/test
//! splits.

mod corpus;
mod entity;
mod normalize;
mod smoke;
mod split;

pub use corpus::{
    load_corpus, load_corpus_with_stats, read_canonical, write_canonical, CorpusFormat, Label, LoadStats,
    RawRequestRecord, RequestCorpus, Split,
};
pub use entity::{tokenize_entities, EntitySequence, EntityToken, TokenKind};
pub use normalize::{is_request_line, normalize_request, normalize_request_with, percent_decode, NormalizeOptions};
pub use smoke::smoke_corpus;
pub use split::{split_corpus, CorpusSplit, SplitSpec};
