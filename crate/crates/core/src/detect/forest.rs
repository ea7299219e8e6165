//! CART trees with Gini splits, bagged into a random forest.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(dim))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: None, min_leaf: 1, features_per_split: None, bootstrap: true, seed: 0 }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidConfig("min_leaf must be at least 1".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidConfig("features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mtry(&self, dim: usize) -> usize {
        self.features_per_split.unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize).clamp(1, dim.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    Leaf { class: Label },
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    /// Samples with `x[feature] <= threshold` go left.
    pub fn predict(&self, x: &[f64]) -> Label {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { class } => return *class,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_features: usize,
    /// Class order of the probability output: `[normal, abnormal]`.
    pub classes: [Label; 2],
    pub trees: Vec<Node>,
}

impl RandomForest {
    /// Fraction of trees voting abnormal.
    pub fn probability(&self, x: &[f64]) -> f64 {
        let votes = self.trees.iter().filter(|t| t.predict(x) == Label::Abnormal).count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        if self.probability(x) > 0.5 {
            Label::Abnormal
        } else {
            Label::Normal
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (counts[0] as f64 / n, counts[1] as f64 / n);
    1.0 - a * a - b * b
}

fn majority(counts: [usize; 2]) -> Label {
    if counts[1] > counts[0] {
        Label::Abnormal
    } else {
        Label::Normal
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    config: &'a ForestConfig,
    mtry: usize,
    rng: rng::Rng,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [usize; 2] {
        let mut c = [0, 0];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_on(&self, idx: &[usize], feature: usize, total: [usize; 2]) -> Option<BestSplit> {
        let mut sorted: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x[i][feature], self.y[i])).collect();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = sorted.len();
        let min_leaf = self.config.min_leaf;
        let mut left = [0usize, 0];
        let mut best: Option<BestSplit> = None;
        for i in 0..n - 1 {
            left[sorted[i].1] += 1;
            let (lo, hi) = (sorted[i].0, sorted[i + 1].0);
            if lo == hi || i + 1 < min_leaf || n - i - 1 < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let score = (nl * gini(left) + nr * gini(right)) / n as f64;
            if best.as_ref().is_none_or(|b| score < b.score) {
                let mid = lo + (hi - lo) / 2.0;
                let threshold = if mid < hi { mid } else { lo };
                best = Some(BestSplit { feature, threshold, score });
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> Node {
        let counts = self.counts(&idx);
        let pure = counts[0] == 0 || counts[1] == 0;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * self.config.min_leaf {
            return Node::Leaf { class: majority(counts) };
        }
        let dim = self.x[0].len();
        let mut features: Vec<usize> = (0..dim).collect();
        features.shuffle(&mut self.rng);
        let mut best: Option<BestSplit> = None;
        // like CART implementations, keep drawing past mtry while every
        // examined feature was constant on this node
        for (k, &f) in features.iter().enumerate() {
            if k >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_on(&idx, f, counts) {
                if best.as_ref().is_none_or(|b| s.score < b.score || (s.score == b.score && s.feature < b.feature)) {
                    best = Some(s);
                }
            }
        }
        let Some(split) = best else {
            return Node::Leaf { class: majority(counts) };
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| self.x[i][split.feature] <= split.threshold);
        let left = Box::new(self.grow(l, depth + 1));
        let right = Box::new(self.grow(r, depth + 1));
        Node::Split { feature: split.feature, threshold: split.threshold, left, right }
    }
}

/// Tree `i` uses its own stream derived from the master seed, so a forest's
/// first `m` trees match a smaller forest trained with the same seed.
pub fn train_forest(features: &[Vec<f64>], labels: &[Label], config: &ForestConfig) -> Result<RandomForest> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(features.len(), labels.len()));
    }
    if features.is_empty() {
        return Err(Error::EmptyInput("forest training set"));
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch(dim, bad.len()));
    }
    let y: Vec<usize> = labels.iter().map(|l| l.index()).collect();
    if !y.contains(&0) || !y.contains(&1) {
        return Err(Error::SingleClassInput);
    }
    let mtry = config.mtry(dim);
    let n = features.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::seeded(rng::derive_indexed(config.seed, t as u64));
            let idx: Vec<usize> =
                if config.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            let mut b = Builder { x: features, y: &y, config, mtry, rng };
            b.grow(idx, 0)
        })
        .collect();
    Ok(RandomForest { n_features: dim, classes: Label::ALL, trees })
}
