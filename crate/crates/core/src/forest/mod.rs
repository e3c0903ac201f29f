//! Random-forest FAST/SLOW classifier.
//!
//! Trees are grown on bootstrap samples with weighted Gini impurity (FAST
//! samples weighted by `class_weight_fast`, SLOW by 1) and a random subset of
//! features examined at each node. The forest's score is the fraction of
//! trees voting SLOW.

mod persist;
pub mod tree;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Encoders, FeatureVector, SpeedLabel};
use crate::sub_seed;
pub use persist::FORMAT_VERSION;
pub use tree::{DecisionTree, Node, SplitTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Gini weight of FAST samples; SLOW samples weigh 1.
    pub class_weight_fast: f64,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub min_samples_leaf: usize,
    pub rng_seed: u64,
    /// Compute the out-of-bag accuracy after training.
    pub compute_oob: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 90,
            class_weight_fast: 0.3,
            features_per_split: 3,
            bootstrap: true,
            min_samples_leaf: 1,
            rng_seed: 0,
            compute_oob: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        let bad = |m: &str| Err(ForestError::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if !(self.class_weight_fast > 0.0 && self.class_weight_fast <= 1.0) {
            return bad("class_weight_fast must be in (0, 1]");
        }
        if self.features_per_split == 0 {
            return bad("features_per_split must be at least 1");
        }
        if self.min_samples_leaf == 0 {
            return bad("min_samples_leaf must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    Empty,
    #[error("training set has only {0:?} samples; both classes are required")]
    SingleClass(SpeedLabel),
    #[error("{x} feature vectors but {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("not a model file")]
    BadMagic,
    #[error("unsupported model format version {0} (this build reads version {FORMAT_VERSION})")]
    UnsupportedVersion(u16),
    #[error("model file is truncated")]
    Truncated,
    #[error("model file checksum mismatch")]
    Checksum,
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n: u64,
    pub n_fast: u64,
    pub n_slow: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub params: ForestParams,
    pub trees: Vec<DecisionTree>,
    pub encoders: Encoders,
    pub summary: TrainingSummary,
    pub oob_accuracy: Option<f64>,
}

fn bootstrap_counts(n: usize, seed: u64, bootstrap: bool) -> (Vec<u32>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if !bootstrap {
        return (vec![1; n], rng);
    }
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    (counts, rng)
}

/// Trains a forest. Tree `i` uses seed `sub_seed(params.rng_seed, i)`, so the
/// result does not depend on the thread count.
pub fn train(
    x: &[FeatureVector],
    y: &[SpeedLabel],
    encoders: Encoders,
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    params.validate()?;
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.is_empty() {
        return Err(ForestError::Empty);
    }
    let n_slow = y.iter().filter(|l| **l == SpeedLabel::Slow).count() as u64;
    let n = x.len() as u64;
    if n_slow == 0 {
        return Err(ForestError::SingleClass(SpeedLabel::Fast));
    }
    if n_slow == n {
        return Err(ForestError::SingleClass(SpeedLabel::Slow));
    }
    let data = tree::TrainData::new(x, y);
    let trees: Vec<DecisionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let (counts, mut rng) = bootstrap_counts(
                data.n,
                sub_seed(params.rng_seed, i as u64),
                params.bootstrap,
            );
            tree::grow(&data, &counts, params, &mut rng)
        })
        .collect();

    let oob_accuracy = (params.compute_oob && params.bootstrap)
        .then(|| oob_accuracy(&data, x, &trees, params))
        .flatten();
    Ok(ForestModel {
        params: params.clone(),
        trees,
        encoders,
        summary: TrainingSummary {
            n,
            n_fast: n - n_slow,
            n_slow,
        },
        oob_accuracy,
    })
}

fn oob_accuracy(
    data: &tree::TrainData,
    x: &[FeatureVector],
    trees: &[DecisionTree],
    params: &ForestParams,
) -> Option<f64> {
    let mut votes = vec![(0u32, 0u32); data.n];
    for (i, t) in trees.iter().enumerate() {
        let (counts, _) = bootstrap_counts(data.n, sub_seed(params.rng_seed, i as u64), true);
        for (row, c) in counts.iter().enumerate() {
            if *c == 0 {
                votes[row].0 += 1;
                votes[row].1 += (t.vote(&x[row]) == SpeedLabel::Slow) as u32;
            }
        }
    }
    let (mut seen, mut correct) = (0u64, 0u64);
    for (row, (n, slow)) in votes.iter().enumerate() {
        if *n > 0 {
            seen += 1;
            let predicted_slow = 2 * slow >= *n;
            correct += (predicted_slow == data.is_slow(row)) as u64;
        }
    }
    (seen > 0).then(|| correct as f64 / seen as f64)
}

impl ForestModel {
    /// Fraction of trees voting SLOW.
    pub fn score(&self, fv: &FeatureVector) -> f64 {
        let slow = self
            .trees
            .iter()
            .filter(|t| t.vote(fv) == SpeedLabel::Slow)
            .count();
        slow as f64 / self.trees.len() as f64
    }

    /// Majority vote; a tie goes to SLOW.
    pub fn predict(&self, fv: &FeatureVector) -> (SpeedLabel, f64) {
        self.predict_with_threshold(fv, 0.5)
    }

    /// SLOW when the SLOW vote share reaches `threshold`.
    pub fn predict_with_threshold(&self, fv: &FeatureVector, threshold: f64) -> (SpeedLabel, f64) {
        let s = self.score(fv);
        (
            if s >= threshold {
                SpeedLabel::Slow
            } else {
                SpeedLabel::Fast
            },
            s,
        )
    }

    pub fn max_depth(&self) -> usize {
        self.trees
            .iter()
            .map(DecisionTree::depth)
            .max()
            .unwrap_or(0)
    }
}

/// Rows are the true class, columns the predicted class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub fast_as_fast: u64,
    pub fast_as_slow: u64,
    pub slow_as_fast: u64,
    pub slow_as_slow: u64,
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: SpeedLabel, predicted: SpeedLabel) {
        match (truth, predicted) {
            (SpeedLabel::Fast, SpeedLabel::Fast) => self.fast_as_fast += 1,
            (SpeedLabel::Fast, SpeedLabel::Slow) => self.fast_as_slow += 1,
            (SpeedLabel::Slow, SpeedLabel::Fast) => self.slow_as_fast += 1,
            (SpeedLabel::Slow, SpeedLabel::Slow) => self.slow_as_slow += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.fast_as_fast + self.fast_as_slow + self.slow_as_fast + self.slow_as_slow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_test: u64,
    pub confusion: ConfusionMatrix,
    /// `None` where the denominator is zero.
    pub precision_fast: Option<f64>,
    pub recall_fast: Option<f64>,
    pub precision_slow: Option<f64>,
    pub recall_slow: Option<f64>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl MetricsReport {
    pub fn from_confusion(c: ConfusionMatrix) -> Self {
        MetricsReport {
            n_test: c.total(),
            confusion: c,
            precision_fast: ratio(c.fast_as_fast, c.fast_as_fast + c.slow_as_fast),
            recall_fast: ratio(c.fast_as_fast, c.fast_as_fast + c.fast_as_slow),
            precision_slow: ratio(c.slow_as_slow, c.slow_as_slow + c.fast_as_slow),
            recall_slow: ratio(c.slow_as_slow, c.slow_as_slow + c.slow_as_fast),
            accuracy: ratio(c.fast_as_fast + c.slow_as_slow, c.total()).unwrap_or(0.0),
        }
    }

    pub fn from_predictions(truth: &[SpeedLabel], predicted: &[SpeedLabel]) -> Self {
        let mut c = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            c.add(*t, *p);
        }
        MetricsReport::from_confusion(c)
    }
}

pub fn evaluate(model: &ForestModel, x: &[FeatureVector], y: &[SpeedLabel]) -> MetricsReport {
    evaluate_with_threshold(model, x, y, 0.5)
}

pub fn evaluate_with_threshold(
    model: &ForestModel,
    x: &[FeatureVector],
    y: &[SpeedLabel],
    threshold: f64,
) -> MetricsReport {
    let predicted: Vec<SpeedLabel> = x
        .par_iter()
        .map(|fv| model.predict_with_threshold(fv, threshold).0)
        .collect();
    MetricsReport::from_predictions(y, &predicted)
}
