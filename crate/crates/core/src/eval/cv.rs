use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

/// Fold index per row. Each class is shuffled under `seed` and dealt
/// round-robin, so per-fold counts within a class differ by at most one.
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut assignment = vec![0usize; labels.len()];
    for (class, name) in [(true, "genuine"), (false, "imposter")] {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if rows.len() < k {
            return Err(Error::Stratify { class: name.into(), count: rows.len(), folds: k });
        }
        rows.shuffle(&mut seed::rng(seed::derive_label(seed, name)));
        for (pos, r) in rows.into_iter().enumerate() {
            assignment[r] = pos % k;
        }
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/test row indices for every fold, in ascending row order.
pub fn fold_plan(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let assignment = stratified_kfold(labels, k, seed)?;
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}
