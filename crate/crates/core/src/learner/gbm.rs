//! Second-order gradient-boosted trees for binary classification.
//!
//! Each round fits a depth-limited regression tree to the logistic-loss
//! gradients `g = p - y` and hessians `h = p(1 - p)`. Splits maximize
//!
//! ```text
//! gain = 1/2 [ G_L^2/(H_L+λ) + G_R^2/(H_R+λ) - (G_L+G_R)^2/(H_L+H_R+λ) ]
//! ```
//!
//! over every boundary between distinct sorted feature values (exact greedy),
//! and leaves take the value `-G/(H+λ)`. Trees are grown level by level over
//! feature orders sorted once up front, so each level costs one pass per
//! feature regardless of the number of open nodes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tree::{midpoint, TreeNode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Recorded with the model. Exact greedy growth draws no random numbers.
    pub seed: u64,
    /// Search candidate features in parallel within each level.
    pub parallel: bool,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 4, learning_rate: 0.1, lambda: 1.0, seed: 0, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub format_version: u32,
    pub features: Vec<String>,
    pub schema_hash: String,
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub seed: u64,
    pub trees: Vec<TreeNode<f64>>,
}

pub fn schema_hash<S: AsRef<str>>(features: &[S]) -> String {
    let mut hasher = Sha256::new();
    for f in features {
        hasher.update(f.as_ref().as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Mean logistic loss of margins `z` against labels.
pub fn log_loss_from_margins(margins: &[f64], y: &[bool]) -> f64 {
    let total: f64 = margins.iter().zip(y).map(|(&z, &t)| if t { softplus(-z) } else { softplus(z) }).sum();
    total / margins.len().max(1) as f64
}

impl GbmModel {
    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.features.len() {
            return Err(Error::Schema(format!("row has {} values, model expects {}", row.len(), self.features.len())));
        }
        Ok(())
    }

    /// Raw log-odds: `base_score + η Σ leaf values`.
    pub fn margin(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        let sum: f64 = self.trees.iter().map(|t| *t.leaf_for(row)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }

    /// Probability of the positive class, kept strictly inside (0, 1).
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        let p = sigmoid(self.margin(row)?);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    pub fn margins(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.rows().map(|r| self.margin(r)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parse a model, checking the format version and that the stored hash
    /// matches the feature list.
    pub fn from_json(text: &str) -> Result<Self> {
        let model: GbmModel = serde_json::from_str(text)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                model.format_version
            )));
        }
        let expected = schema_hash(&model.features);
        if model.schema_hash != expected {
            return Err(Error::Schema("model schema hash does not match its feature list".into()));
        }
        Ok(model)
    }
}

pub fn train_gbm<S: AsRef<str>>(x: &Matrix, y: &[bool], features: &[S], cfg: &GbmConfig) -> Result<GbmModel> {
    train_gbm_traced(x, y, features, cfg).map(|(m, _)| m)
}

/// Train and also return the training log-loss after each round.
pub fn train_gbm_traced<S: AsRef<str>>(
    x: &Matrix,
    y: &[bool],
    features: &[S],
    cfg: &GbmConfig,
) -> Result<(GbmModel, Vec<f64>)> {
    if x.n_rows() != y.len() {
        return Err(Error::Schema(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if x.n_cols() != features.len() {
        return Err(Error::Schema(format!("{} columns but {} feature names", x.n_cols(), features.len())));
    }
    if !(cfg.lambda >= 0.0 && cfg.learning_rate >= 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::Config("learning rate and lambda must be non-negative".into()));
    }
    let positives = y.iter().filter(|t| **t).count();
    if positives == 0 || positives == y.len() {
        return Err(Error::DegenerateLabels("boosting needs both classes".into()));
    }
    let prior = positives as f64 / y.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let orders = presort(x);
    let n = x.n_rows();
    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut trace = Vec::with_capacity(cfg.n_trees);
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - if y[i] { 1.0 } else { 0.0 };
            hess[i] = p * (1.0 - p);
        }
        let grown = grow_tree(x, &orders, &grad, &hess, cfg);
        for (m, leaf) in margins.iter_mut().zip(&grown.row_values) {
            *m += cfg.learning_rate * leaf;
        }
        trees.push(grown.tree);
        trace.push(log_loss_from_margins(&margins, y));
    }

    let features: Vec<String> = features.iter().map(|s| s.as_ref().to_string()).collect();
    let model = GbmModel {
        format_version: MODEL_FORMAT_VERSION,
        schema_hash: schema_hash(&features),
        features,
        base_score,
        learning_rate: cfg.learning_rate,
        lambda: cfg.lambda,
        seed: cfg.seed,
        trees,
    };
    Ok((model, trace))
}

fn presort(x: &Matrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .map(|f| {
            let mut order: Vec<u32> = (0..x.n_rows() as u32).collect();
            order.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            order
        })
        .collect()
}

struct BuildNode {
    grad: f64,
    hess: f64,
    split: Option<(usize, f64, usize, usize)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
}

struct GrownTree {
    tree: TreeNode<f64>,
    /// Leaf value reached by each training row.
    row_values: Vec<f64>,
}

fn leaf_value(grad: f64, hess: f64, lambda: f64) -> f64 {
    -grad / (hess + lambda)
}

fn split_gain(gl: f64, hl: f64, gr: f64, hr: f64, lambda: f64) -> f64 {
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - (gl + gr).powi(2) / (hl + hr + lambda))
}

fn grow_tree(x: &Matrix, orders: &[Vec<u32>], grad: &[f64], hess: &[f64], cfg: &GbmConfig) -> GrownTree {
    let n = x.n_rows();
    let mut node_of = vec![0usize; n];
    let mut nodes = vec![BuildNode { grad: grad.iter().sum(), hess: hess.iter().sum(), split: None }];
    let mut frontier: Vec<usize> = vec![0];

    for _ in 0..cfg.max_depth {
        if frontier.is_empty() {
            break;
        }
        // Slot of each frontier node in the per-feature scratch arrays.
        let mut slot_of = vec![usize::MAX; nodes.len()];
        for (s, &id) in frontier.iter().enumerate() {
            slot_of[id] = s;
        }
        let totals: Vec<(f64, f64)> = frontier.iter().map(|&id| (nodes[id].grad, nodes[id].hess)).collect();

        let scan = |f: usize| scan_feature(x, &orders[f], f, grad, hess, &node_of, &slot_of, &totals, cfg.lambda);
        let per_feature: Vec<Vec<Option<Candidate>>> = if cfg.parallel {
            (0..x.n_cols()).into_par_iter().map(scan).collect()
        } else {
            (0..x.n_cols()).map(scan).collect()
        };

        let mut next = Vec::new();
        let mut split_of_slot: Vec<Option<(usize, f64)>> = vec![None; frontier.len()];
        for (s, best) in split_of_slot.iter_mut().enumerate() {
            let mut best_gain = 0.0;
            for (f, cands) in per_feature.iter().enumerate() {
                if let Some(c) = cands[s] {
                    if c.gain > best_gain {
                        best_gain = c.gain;
                        *best = Some((f, c.threshold));
                    }
                }
            }
        }
        let mut child_base = vec![usize::MAX; frontier.len()];
        for (s, &id) in frontier.iter().enumerate() {
            if let Some((f, thr)) = split_of_slot[s] {
                let left = nodes.len();
                let right = left + 1;
                for _ in 0..2 {
                    nodes.push(BuildNode { grad: 0.0, hess: 0.0, split: None });
                }
                nodes[id].split = Some((f, thr, left, right));
                child_base[s] = left;
                next.push(left);
                next.push(right);
            }
        }
        for r in 0..n {
            let s = slot_of[node_of[r]];
            if s == usize::MAX {
                continue;
            }
            if let Some((f, thr)) = split_of_slot[s] {
                let child = if x.get(r, f) <= thr { child_base[s] } else { child_base[s] + 1 };
                node_of[r] = child;
                nodes[child].grad += grad[r];
                nodes[child].hess += hess[r];
            }
        }
        frontier = next;
    }

    let values: Vec<f64> = nodes.iter().map(|nd| leaf_value(nd.grad, nd.hess, cfg.lambda)).collect();
    let row_values = node_of.iter().map(|&id| values[id]).collect();
    GrownTree { tree: assemble(&nodes, &values, 0), row_values }
}

#[allow(clippy::too_many_arguments)]
fn scan_feature(
    x: &Matrix,
    order: &[u32],
    f: usize,
    grad: &[f64],
    hess: &[f64],
    node_of: &[usize],
    slot_of: &[usize],
    totals: &[(f64, f64)],
    lambda: f64,
) -> Vec<Option<Candidate>> {
    let k = totals.len();
    let mut gl = vec![0.0; k];
    let mut hl = vec![0.0; k];
    let mut last: Vec<Option<f64>> = vec![None; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    for &r in order {
        let r = r as usize;
        let s = slot_of[node_of[r]];
        if s == usize::MAX {
            continue;
        }
        let v = x.get(r, f);
        if let Some(prev) = last[s] {
            if v > prev {
                let (g, h) = totals[s];
                let gain = split_gain(gl[s], hl[s], g - gl[s], h - hl[s], lambda);
                if best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(Candidate { gain, threshold: midpoint(prev, v) });
                }
            }
        }
        gl[s] += grad[r];
        hl[s] += hess[r];
        last[s] = Some(v);
    }
    best
}

fn assemble(nodes: &[BuildNode], values: &[f64], id: usize) -> TreeNode<f64> {
    match nodes[id].split {
        Some((feature, threshold, left, right)) => TreeNode::Split {
            feature,
            threshold,
            left: Box::new(assemble(nodes, values, left)),
            right: Box::new(assemble(nodes, values, right)),
        },
        None => TreeNode::Leaf { value: values[id] },
    }
}
