//! Synthetic minority oversampling.
//!
//! A synthetic row is `x + u (x_nn - x)`: `x` is a minority row drawn
//! uniformly, `x_nn` one of its `k` nearest minority neighbors (Euclidean,
//! ties broken by row index) and `u ~ U[0, 1)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k: usize,
    /// Minority row count after oversampling.
    pub target: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    /// Only the synthetic rows; `target - minority.n_rows()` of them.
    pub rows: Matrix,
    pub warning: Option<String>,
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn neighbor_lists(minority: &Matrix, k: usize) -> Vec<Vec<usize>> {
    let m = minority.n_rows();
    (0..m)
        .map(|i| {
            let mut others: Vec<(f64, usize)> =
                (0..m).filter(|&j| j != i).map(|j| (squared_distance(minority.row(i), minority.row(j)), j)).collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

pub fn smote(minority: &Matrix, cfg: &SmoteConfig) -> Result<SmoteOutput> {
    let m = minority.n_rows();
    if cfg.k == 0 {
        return Err(Error::Config("SMOTE needs k >= 1".into()));
    }
    if m == 0 {
        return Err(Error::Config("SMOTE needs at least one minority row".into()));
    }
    if cfg.target < m {
        return Err(Error::Config(format!("SMOTE target {} is below the minority count {m}", cfg.target)));
    }
    let needed = cfg.target - m;
    let d = minority.n_cols();
    let mut rng = seed::rng(cfg.seed);
    let mut data = Vec::with_capacity(needed * d);

    if m == 1 {
        for _ in 0..needed {
            data.extend_from_slice(minority.row(0));
        }
        let warning = (needed > 0).then(|| "single minority row: duplicated instead of interpolated".to_string());
        return Ok(SmoteOutput { rows: Matrix::new(data, needed, d)?, warning });
    }

    let neighbors = neighbor_lists(minority, cfg.k);
    for _ in 0..needed {
        let i = rng.random_range(0..m);
        let nn = neighbors[i][rng.random_range(0..neighbors[i].len())];
        let u: f64 = rng.random();
        let (x, other) = (minority.row(i), minority.row(nn));
        data.extend(x.iter().zip(other).map(|(a, b)| a + u * (b - a)));
    }
    Ok(SmoteOutput { rows: Matrix::new(data, needed, d)?, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_rows_lie_on_the_segment() {
        let minority = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let out = smote(&minority, &SmoteConfig { k: 1, target: 50, seed: 3 }).unwrap();
        assert_eq!(out.rows.n_rows(), 48);
        for r in out.rows.rows() {
            assert_eq!(r[0], r[1]);
            assert!((0.0..=1.0).contains(&r[0]));
        }
    }

    #[test]
    fn identical_rows_stay_identical() {
        let minority = Matrix::from_rows(&[vec![2.5, -1.0], vec![2.5, -1.0]]).unwrap();
        let out = smote(&minority, &SmoteConfig { k: 5, target: 10, seed: 1 }).unwrap();
        assert!(out.rows.rows().all(|r| r == [2.5, -1.0]));
    }

    #[test]
    fn target_equal_to_count_adds_nothing() {
        let minority = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let out = smote(&minority, &SmoteConfig { k: 5, target: 3, seed: 1 }).unwrap();
        assert_eq!(out.rows.n_rows(), 0);
    }

    #[test]
    fn single_row_is_duplicated_with_warning() {
        let minority = Matrix::from_rows(&[vec![4.0, 5.0]]).unwrap();
        let out = smote(&minority, &SmoteConfig { k: 5, target: 4, seed: 1 }).unwrap();
        assert_eq!(out.rows.n_rows(), 3);
        assert!(out.warning.is_some());
        assert!(out.rows.rows().all(|r| r == [4.0, 5.0]));
    }

    #[test]
    fn nearest_neighbors_only() {
        // With k = 1 every synthetic point interpolates towards the closest
        // neighbor, so nothing lands strictly between 1 and 10.
        let minority = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![10.0], vec![11.0]]).unwrap();
        let out = smote(&minority, &SmoteConfig { k: 1, target: 200, seed: 5 }).unwrap();
        assert!(out.rows.rows().all(|r| r[0] <= 1.0 || r[0] >= 10.0));
    }

    #[test]
    fn deterministic_and_validated() {
        let minority = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let cfg = SmoteConfig { k: 2, target: 9, seed: 11 };
        assert_eq!(smote(&minority, &cfg).unwrap(), smote(&minority, &cfg).unwrap());
        assert!(matches!(smote(&minority, &SmoteConfig { target: 2, ..cfg }), Err(Error::Config(_))));
        assert!(matches!(smote(&minority, &SmoteConfig { k: 0, ..cfg }), Err(Error::Config(_))));
    }
}
