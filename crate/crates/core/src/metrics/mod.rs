//! Text similarity (BLEU, greedy embedding match, word mover) and
//! classification metrics with abnormal as the positive class.

mod bleu;
mod classification;
mod emd;
mod report;
mod similarity;

pub use bleu::{bleu, corpus_bleu};
pub use classification::{
    classification_report, confusion, confusion_from_labels, f1, mcc, precision, recall, ClassificationReport,
    ConfusionMatrix,
};
pub use emd::emd;
pub use report::{render_tsv, write_report, MetricRow};
pub use similarity::{
    bert_score, bert_score_from_embeddings, mover_score, mover_score_from_embeddings, similarity_report, IdfTable,
    SimilarityReport,
};
