use indexmap::IndexMap;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::tree::{grow_tree, GrowParams, Tree};
use crate::error::{Error, Result};
use crate::window::fingerprint_names;

const BASE_SCORE_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub num_trees: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub min_samples_leaf: usize,
    pub l2_leaf_regularization: f64,
    pub max_bins: usize,
    pub feature_subsample: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            num_trees: 200,
            learning_rate: 0.1,
            max_leaves: 31,
            min_samples_leaf: 20,
            l2_leaf_regularization: 1.0,
            max_bins: 255,
            feature_subsample: 1.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.num_trees < 1 {
            return bad("num_trees must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate must be in (0, 1], got {}", self.learning_rate));
        }
        if self.max_leaves < 2 {
            return bad(format!("max_leaves must be at least 2, got {}", self.max_leaves));
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1".into());
        }
        if !(self.l2_leaf_regularization >= 0.0 && self.l2_leaf_regularization.is_finite()) {
            return bad("l2_leaf_regularization must be finite and non-negative".into());
        }
        if !(2..=65535).contains(&self.max_bins) {
            return bad(format!("max_bins must be in [2, 65535], got {}", self.max_bins));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return bad(format!(
                "feature_subsample must be in (0, 1], got {}",
                self.feature_subsample
            ));
        }
        Ok(())
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            max_leaves: self.max_leaves,
            min_samples_leaf: self.min_samples_leaf,
            lambda: self.l2_leaf_regularization,
            learning_rate: self.learning_rate,
        }
    }
}

/// Row-major training matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: u8) -> Result<()> {
        if row.len() != self.cols() {
            return Err(Error::Schema(format!(
                "row has {} values, expected {}",
                row.len(),
                self.cols()
            )));
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn cols(&self) -> usize {
        self.feature_names.len()
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub schema_fingerprint: String,
    pub feature_names: Vec<String>,
    pub base_score: f64,
    pub hyperparams: Hyperparams,
    pub trees: Vec<Tree>,
    /// Accumulated split gain per feature index.
    pub feature_gain: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema_fingerprint: String,
    base_score: f64,
    hyperparams: Hyperparams,
    trees: Vec<Tree>,
    feature_gain: IndexMap<String, f64>,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Model {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn predict_raw(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.num_features() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.num_features(),
                values.len()
            )));
        }
        Ok(self.base_score + self.trees.iter().map(|t| t.predict(values)).sum::<f64>())
    }

    pub fn predict_proba(&self, values: &[f64]) -> Result<f64> {
        self.predict_raw(values).map(sigmoid)
    }

    /// Sum of every recorded split gain, in tree and node order.
    pub fn total_split_gain(&self) -> f64 {
        self.trees
            .iter()
            .flat_map(|t| t.split_gains())
            .map(|(_, g)| g)
            .sum()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            schema_fingerprint: self.schema_fingerprint.clone(),
            base_score: self.base_score,
            hyperparams: self.hyperparams.clone(),
            trees: self.trees.clone(),
            feature_gain: self
                .feature_names
                .iter()
                .cloned()
                .zip(self.feature_gain.iter().copied())
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::parse("model file", e))?;
        let (feature_names, feature_gain): (Vec<String>, Vec<f64>) =
            file.feature_gain.into_iter().unzip();
        if fingerprint_names(&feature_names) != file.schema_fingerprint {
            return Err(Error::Schema(
                "model feature names do not match its schema fingerprint".into(),
            ));
        }
        let n = feature_names.len();
        for tree in &file.trees {
            if tree.nodes.is_empty() {
                return Err(Error::parse("model file", "tree without nodes"));
            }
            for node in &tree.nodes {
                if let super::tree::Node::Split {
                    feature,
                    left,
                    right,
                    ..
                } = node
                {
                    let len = tree.nodes.len() as u32;
                    if *feature >= n || *left >= len || *right >= len {
                        return Err(Error::parse("model file", "split node out of range"));
                    }
                }
            }
        }
        Ok(Self {
            schema_fingerprint: file.schema_fingerprint,
            feature_names,
            base_score: file.base_score,
            hyperparams: file.hyperparams,
            trees: file.trees,
            feature_gain,
        })
    }
}

pub fn logloss(labels: &[u8], raw: &[f64]) -> f64 {
    let total: f64 = labels
        .iter()
        .zip(raw)
        .map(|(&y, &r)| {
            let p = sigmoid(r).clamp(1e-15, 1.0 - 1e-15);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / labels.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Training-set logloss after each boosting round.
    pub logloss: Vec<f64>,
}

/// Fits a logistic-loss boosted ensemble.
pub fn train(data: &Dataset, hp: &Hyperparams) -> Result<(Model, TrainLog)> {
    hp.validate()?;
    let rows = data.rows();
    let cols = data.cols();
    if rows < 2 {
        return Err(Error::Training(format!("need at least 2 rows, got {rows}")));
    }
    if cols == 0 {
        return Err(Error::Training("no feature columns".into()));
    }
    if let Some(pos) = data.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "non-finite value at row {} column {} ({})",
            pos / cols,
            pos % cols,
            data.feature_names[pos % cols]
        )));
    }
    if let Some(&bad) = data.labels.iter().find(|&&y| y > 1) {
        return Err(Error::Data(format!("labels must be 0 or 1, found {bad}")));
    }
    let positives = data.labels.iter().filter(|&&y| y == 1).count();
    let negatives = rows - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Training(
            "training data contains a single class".into(),
        ));
    }

    let base_score = (positives as f64 / negatives as f64)
        .ln()
        .clamp(-BASE_SCORE_CLIP, BASE_SCORE_CLIP);
    let binned = BinnedMatrix::build(&data.values, rows, cols, hp.max_bins);
    let params = hp.grow_params();
    let labels: Vec<f64> = data.labels.iter().map(|&y| f64::from(y)).collect();

    let mut raw = vec![base_score; rows];
    let mut grad = vec![0.0; rows];
    let mut hess = vec![0.0; rows];
    let mut trees = Vec::with_capacity(hp.num_trees);
    let mut feature_gain = vec![0.0; cols];
    let mut log = TrainLog::default();
    let all_features: Vec<usize> = (0..cols).collect();
    let subsample_count = ((hp.feature_subsample * cols as f64).ceil() as usize).clamp(1, cols);

    for round in 0..hp.num_trees {
        for i in 0..rows {
            let p = sigmoid(raw[i]);
            grad[i] = p - labels[i];
            hess[i] = p * (1.0 - p);
        }
        let features = if subsample_count == cols {
            all_features.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(
                hp.seed ^ (round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
            );
            let mut picked = sample(&mut rng, cols, subsample_count).into_vec();
            picked.sort_unstable();
            picked
        };

        let (tree, leaf_of_row) = grow_tree(&binned, &features, &grad, &hess, &params);
        for (i, &leaf) in leaf_of_row.iter().enumerate() {
            if let super::tree::Node::Leaf { value } = tree.nodes[leaf as usize] {
                raw[i] += value;
            }
        }
        for (f, g) in tree.split_gains() {
            feature_gain[f] += g;
        }
        trees.push(tree);
        log.logloss.push(logloss(&data.labels, &raw));
    }

    let model = Model {
        schema_fingerprint: fingerprint_names(&data.feature_names),
        feature_names: data.feature_names.clone(),
        base_score,
        hyperparams: hp.clone(),
        trees,
        feature_gain,
    };
    Ok((model, log))
}
