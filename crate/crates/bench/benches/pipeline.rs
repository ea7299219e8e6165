use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use reqsynth::detect::train_forest;
use reqsynth::ingest::smoke_corpus;
use reqsynth::lexicon::build_frequency_table;
use reqsynth::lm::{train_bbpe, LanguageModel};
use reqsynth::metrics::{bleu, emd};
use reqsynth::{ForestConfig, Label, LmConfig};

fn tokenizer(c: &mut Criterion) {
    let corpus = smoke_corpus(200, 1);
    let tok = train_bbpe(&corpus, 2048).unwrap();
    let text = corpus.records[0].raw.clone();
    c.bench_function("bbpe_train_200", |b| b.iter(|| train_bbpe(black_box(&corpus), 2048).unwrap()));
    c.bench_function("bbpe_encode", |b| b.iter(|| tok.encode(black_box(&text))));
    c.bench_function("frequency_table_200", |b| b.iter(|| build_frequency_table(black_box(&corpus)).unwrap()));
}

fn encoder(c: &mut Criterion) {
    let corpus = smoke_corpus(50, 2);
    let tok = train_bbpe(&corpus, 2048).unwrap();
    let model = LanguageModel::init(tok, LmConfig::desk()).unwrap();
    let record = &corpus.records[0];
    c.bench_function("desk_embeddings", |b| b.iter(|| model.embeddings(black_box(record)).unwrap()));
    c.bench_function("desk_token_nll", |b| b.iter(|| model.token_nll(black_box(record)).unwrap()));
}

fn forest(c: &mut Criterion) {
    let n = 300;
    let x: Vec<Vec<f64>> = (0..n).map(|i| (0..20).map(|j| ((i * 31 + j * 17) % 97) as f64 / 97.0).collect()).collect();
    let y: Vec<Label> = (0..n).map(|i| if x[i][0] + x[i][3] > 1.0 { Label::Abnormal } else { Label::Normal }).collect();
    let config = ForestConfig { n_trees: 20, ..ForestConfig::default() };
    c.bench_function("forest_train_300x20", |b| b.iter(|| train_forest(black_box(&x), &y, &config).unwrap()));
    let f = train_forest(&x, &y, &config).unwrap();
    c.bench_function("forest_probability", |b| b.iter(|| f.probability(black_box(&x[7]))));
}

fn metrics(c: &mut Criterion) {
    let n = 30;
    let supply = vec![1.0 / n as f64; n];
    let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0).collect()).collect();
    c.bench_function("emd_30x30", |b| b.iter(|| emd(black_box(&supply), &supply, &cost).unwrap()));
    let cand: Vec<&str> = "get /tienda1/publico/anadir.jsp ? id = 3 & nombre = miel".split(' ').collect();
    let refr: Vec<&str> = "get /tienda1/publico/anadir.jsp ? id = 4 & nombre = miel".split(' ').collect();
    c.bench_function("bleu_4", |b| b.iter(|| bleu(black_box(&cand), &refr, 4).unwrap()));
}

criterion_group!(benches, tokenizer, encoder, forest, metrics);
criterion_main!(benches);
