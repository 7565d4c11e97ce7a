//! Gini random forest for multi-class problems.
//!
//! Each tree is grown on a bootstrap sample of size n, examining a random
//! subset of `floor(sqrt(d))` features per split (more are drawn only when
//! none of those admits a split). Leaves carry the class distribution of
//! their bootstrap rows. Impurity decreases are accumulated per feature for
//! mean-decrease-in-impurity importance.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{midpoint, TreeNode};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 200, max_depth: 12, seed: 0, parallel: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub n_classes: usize,
    pub n_features: usize,
    pub trees: Vec<TreeNode<Vec<f64>>>,
    /// Per-tree normalized impurity decrease, averaged over trees.
    importances: Vec<f64>,
}

impl RandomForest {
    /// Averaged class distribution.
    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.n_classes];
        for t in &self.trees {
            for (a, p) in acc.iter_mut().zip(t.leaf_for(row)) {
                *a += p;
            }
        }
        let n = self.trees.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Most probable class; ties go to the lower class index.
    pub fn predict(&self, row: &[f64]) -> usize {
        argmax(&self.predict_proba(row))
    }

    /// Mean-decrease-in-impurity importances summing to 1, or all zeros when
    /// no tree ever split.
    pub fn feature_importances(&self) -> &[f64] {
        &self.importances
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Train a forest on class indices `y` (0-based).
pub fn train_rf(x: &Matrix, y: &[usize], cfg: &ForestConfig) -> Result<RandomForest> {
    if x.n_rows() != y.len() {
        return Err(Error::Schema(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if cfg.n_trees == 0 {
        return Err(Error::Config("forest needs at least one tree".into()));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut present = vec![false; n_classes];
    y.iter().for_each(|&c| present[c] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::DegenerateLabels("random forest needs at least two classes".into()));
    }

    let grow = |t: usize| grow_tree(x, y, n_classes, cfg, seed::derive(cfg.seed, t as u64));
    let grown: Vec<(TreeNode<Vec<f64>>, Vec<f64>)> = if cfg.parallel {
        (0..cfg.n_trees).into_par_iter().map(grow).collect()
    } else {
        (0..cfg.n_trees).map(grow).collect()
    };

    let d = x.n_cols();
    let mut importances = vec![0.0; d];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        let total: f64 = imp.iter().sum();
        if total > 0.0 {
            for (a, v) in importances.iter_mut().zip(&imp) {
                *a += v / total;
            }
        }
        trees.push(tree);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        importances.iter_mut().for_each(|v| *v /= total);
    }
    Ok(RandomForest { n_classes, n_features: d, trees, importances })
}

struct Grower<'a> {
    x: &'a Matrix,
    y: &'a [usize],
    n_classes: usize,
    max_depth: usize,
    mtry: usize,
    importance: Vec<f64>,
}

fn grow_tree(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    cfg: &ForestConfig,
    tree_seed: u64,
) -> (TreeNode<Vec<f64>>, Vec<f64>) {
    let mut rng = seed::rng(tree_seed);
    let n = x.n_rows();
    let mut sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let d = x.n_cols();
    let mut g = Grower {
        x,
        y,
        n_classes,
        max_depth: cfg.max_depth,
        mtry: ((d as f64).sqrt().floor() as usize).max(1),
        importance: vec![0.0; d],
    };
    let root = g.grow(&mut sample, 0, &mut rng);
    (root, g.importance)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Grower<'_> {
    fn histogram(&self, rows: &[usize]) -> Vec<usize> {
        let mut h = vec![0usize; self.n_classes];
        rows.iter().for_each(|&r| h[self.y[r]] += 1);
        h
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize, rng: &mut impl Rng) -> TreeNode<Vec<f64>> {
        let hist = self.histogram(rows);
        let pure = hist.iter().filter(|c| **c > 0).count() <= 1;
        if depth >= self.max_depth || pure || rows.len() < 2 {
            return leaf(&hist, rows.len());
        }
        let Some(best) = self.best_split(rows, &hist, rng) else {
            return leaf(&hist, rows.len());
        };
        self.importance[best.feature] += best.decrease;

        let mut cut = 0;
        for i in 0..rows.len() {
            if self.x.get(rows[i], best.feature) <= best.threshold {
                rows.swap(i, cut);
                cut += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(cut);
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn best_split(&self, rows: &[usize], hist: &[usize], rng: &mut impl Rng) -> Option<BestSplit> {
        let mut features: Vec<usize> = (0..self.x.n_cols()).collect();
        features.shuffle(rng);
        let n = rows.len() as f64;
        let parent_sq: f64 = hist.iter().map(|&c| (c * c) as f64).sum::<f64>() / n;

        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        let mut left = vec![0usize; self.n_classes];
        for (visited, &f) in features.iter().enumerate() {
            if visited >= self.mtry && best.is_some() {
                break;
            }
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)).then(a.cmp(&b)));
            left.iter_mut().for_each(|c| *c = 0);
            // Sums of squared class counts on each side, updated incrementally.
            let mut left_sq = 0.0f64;
            let mut right_sq: f64 = hist.iter().map(|&c| (c * c) as f64).sum();
            for i in 0..sorted.len() - 1 {
                let c = self.y[sorted[i]];
                let l = left[c] as f64;
                let r = (hist[c] - left[c]) as f64;
                left_sq += 2.0 * l + 1.0;
                right_sq -= 2.0 * r - 1.0;
                left[c] += 1;

                let lo = self.x.get(sorted[i], f);
                let hi = self.x.get(sorted[i + 1], f);
                if lo >= hi {
                    continue;
                }
                let n_left = (i + 1) as f64;
                let n_right = n - n_left;
                // Weighted Gini decrease: parent n*G minus children n_l*G_l + n_r*G_r.
                let decrease = left_sq / n_left + right_sq / n_right - parent_sq;
                if decrease > 1e-12 && best.as_ref().is_none_or(|b| decrease > b.decrease) {
                    best = Some(BestSplit { feature: f, threshold: midpoint(lo, hi), decrease });
                }
            }
        }
        best
    }
}

fn leaf(hist: &[usize], n: usize) -> TreeNode<Vec<f64>> {
    let n = n.max(1) as f64;
    TreeNode::Leaf { value: hist.iter().map(|&c| c as f64 / n).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Matrix, Vec<usize>) {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 7.0]).collect();
        let y = (0..40).map(|i| usize::from(i >= 20)).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = separable();
        let f = train_rf(&x, &y, &ForestConfig { n_trees: 25, ..Default::default() }).unwrap();
        let correct = (0..x.n_rows()).filter(|&i| f.predict(x.row(i)) == y[i]).count();
        assert_eq!(correct, x.n_rows());
        let imp = f.feature_importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(imp[1], 0.0);
    }

    #[test]
    fn depth_zero_predicts_majority() {
        let (x, _) = separable();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 30)).collect();
        let f = train_rf(&x, &y, &ForestConfig { n_trees: 15, max_depth: 0, ..Default::default() }).unwrap();
        assert!(f.trees.iter().all(|t| t.depth() == 0));
        assert!((0..x.n_rows()).all(|i| f.predict(x.row(i)) == 0));
    }

    #[test]
    fn deterministic_and_parallel_agnostic() {
        let (x, y) = separable();
        let cfg = ForestConfig { n_trees: 12, seed: 99, ..Default::default() };
        let a = train_rf(&x, &y, &cfg).unwrap();
        let b = train_rf(&x, &y, &ForestConfig { parallel: false, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_single_class() {
        let (x, _) = separable();
        let y = vec![0; x.n_rows()];
        assert!(matches!(train_rf(&x, &y, &ForestConfig::default()), Err(Error::DegenerateLabels(_))));
    }
}
