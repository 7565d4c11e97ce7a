//! Feature selection by multi-class random-forest importance.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{impute, Family, FeatureMatrix};
use crate::learner::{train_rf, ForestConfig};
use crate::seed;

/// Per-user 70/30 split of a feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub warnings: Vec<String>,
}

/// Rows destined for training out of `n`: `ceil(0.7 n)`, but always leaving
/// one test row when there are at least two.
pub fn train_count(n: usize) -> usize {
    let ceil = (7 * n).div_ceil(10);
    if n >= 2 {
        ceil.min(n - 1)
    } else {
        n
    }
}

/// Split every user's rows independently. Rows are ordered by window before
/// the seeded shuffle, so the split depends on row content, not row order.
pub fn split_70_30(matrix: &FeatureMatrix, seed: u64) -> Split {
    let sorted = matrix.sorted();
    let mut by_user: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in sorted.rows.iter().enumerate() {
        by_user.entry(r.user.as_str()).or_default().push(i);
    }
    let (mut train, mut test, mut warnings) = (Vec::new(), Vec::new(), Vec::new());
    for (user, mut rows) in by_user {
        if rows.len() == 1 {
            warnings.push(format!("user {user} has a single row; it goes to training only"));
        }
        rows.shuffle(&mut seed::rng(seed::derive_label(seed, user)));
        let cut = train_count(rows.len());
        train.extend_from_slice(&rows[..cut]);
        test.extend_from_slice(&rows[cut..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train: sorted.select_rows(&train), test: sorted.select_rows(&test), warnings }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SelectionPolicy {
    TopK { k: usize },
    CumulativeMass { p: f64 },
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        SelectionPolicy::CumulativeMass { p: 0.95 }
    }
}

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionPolicy::TopK { k } => write!(f, "top-k:{k}"),
            SelectionPolicy::CumulativeMass { p } => write!(f, "mass:{p}"),
        }
    }
}

impl std::str::FromStr for SelectionPolicy {
    type Err = Error;

    /// Accepts `top-k:<k>` or `mass:<p>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognized selection policy `{s}`; expected top-k:<k> or mass:<p>"));
        let (mode, arg) = s.split_once(':').ok_or_else(bad)?;
        match mode.trim().to_ascii_lowercase().as_str() {
            "top-k" | "topk" => Ok(SelectionPolicy::TopK { k: arg.trim().parse().map_err(|_| bad())? }),
            "mass" | "cumulative-mass" => {
                Ok(SelectionPolicy::CumulativeMass { p: arg.trim().parse().map_err(|_| bad())? })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub name: String,
    pub family: Family,
    pub importance: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub seed: u64,
    pub policy: Option<SelectionPolicy>,
    /// In schema order.
    pub features: Vec<FeatureImportance>,
    /// Selected features per family.
    pub family_counts: BTreeMap<String, usize>,
}

impl ImportanceReport {
    pub fn selected(&self) -> Vec<String> {
        self.features.iter().filter(|f| f.selected).map(|f| f.name.clone()).collect()
    }

    pub fn importances(&self) -> Vec<f64> {
        self.features.iter().map(|f| f.importance).collect()
    }

    /// Mark the features chosen by `policy` and refresh the family counts.
    pub fn apply(&mut self, policy: SelectionPolicy) -> Result<()> {
        let chosen = select_features(&self.importances(), policy)?;
        for (i, f) in self.features.iter_mut().enumerate() {
            f.selected = chosen.contains(&i);
        }
        self.policy = Some(policy);
        self.family_counts = family_counts(&self.features);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn family_counts(features: &[FeatureImportance]) -> BTreeMap<String, usize> {
    let mut counts: BTreeMap<String, usize> = Family::ALL.iter().map(|f| (f.as_str().to_string(), 0)).collect();
    for f in features.iter().filter(|f| f.selected) {
        *counts.get_mut(f.family.as_str()).expect("every family is present") += 1;
    }
    counts
}

/// Mean-decrease-in-impurity importance of every feature for telling users
/// apart. Missing values are mean-imputed from `train` itself; rows are
/// ordered by (user, device, window) first so the result ignores row order.
pub fn rf_importance(train: &FeatureMatrix, cfg: &ForestConfig) -> Result<ImportanceReport> {
    let sorted = train.sorted();
    let users = sorted.users();
    if users.len() < 2 {
        return Err(Error::DegenerateLabels(format!("importance needs at least 2 users, found {}", users.len())));
    }
    let (imputed, _) = impute(&sorted, None)?;
    let x = imputed.to_dense()?;
    let y: Vec<usize> =
        sorted.rows.iter().map(|r| users.binary_search(&r.user).expect("user list built from these rows")).collect();
    let forest = train_rf(&x, &y, cfg)?;
    let importances = forest.feature_importances();
    if importances.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateLabels("no feature separates any users".into()));
    }
    let features: Vec<FeatureImportance> = sorted
        .schema
        .names()
        .iter()
        .zip(sorted.schema.families())
        .zip(importances)
        .map(|((name, family), &importance)| FeatureImportance {
            name: name.clone(),
            family: *family,
            importance,
            selected: false,
        })
        .collect();
    let family_counts = family_counts(&features);
    Ok(ImportanceReport { seed: cfg.seed, policy: None, features, family_counts })
}

/// Indices chosen by `policy`, in descending importance. Ties keep schema
/// order.
pub fn select_features(importances: &[f64], policy: SelectionPolicy) -> Result<Vec<usize>> {
    let d = importances.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    let take = match policy {
        SelectionPolicy::TopK { k } => {
            if k == 0 || k > d {
                return Err(Error::Config(format!("top-k needs 1 <= k <= {d}, got {k}")));
            }
            k
        }
        SelectionPolicy::CumulativeMass { p } => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::Config(format!("cumulative mass must lie in (0, 1], got {p}")));
            }
            let mut mass = 0.0;
            let mut n = d;
            for (i, &j) in order.iter().enumerate() {
                mass += importances[j];
                // Tolerance absorbs rounding when p = 1 and the sum is 1 - ulp.
                if mass >= p - 1e-12 {
                    n = i + 1;
                    break;
                }
            }
            n
        }
    };
    order.truncate(take);
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSchema, FeatureVector};
    use crate::ingest::Device;

    fn matrix(users: &[(&str, usize)]) -> FeatureMatrix {
        let (schema, _) = FeatureSchema::full().subset(&["WPM", "Hold_mean", "F1_distance_1_LL"]).unwrap();
        let mut rows = Vec::new();
        for (u, (user, n)) in users.iter().enumerate() {
            for w in 0..*n {
                rows.push(FeatureVector {
                    user: user.to_string(),
                    device: Device::Desktop,
                    window: w,
                    values: vec![
                        Some(((w * 13 + u * 5) % 7) as f64),
                        Some(4.0),
                        Some(100.0 * u as f64 + w as f64 % 3.0),
                    ],
                });
            }
        }
        FeatureMatrix { schema, rows, imputation: None }
    }

    #[test]
    fn split_counts() {
        assert_eq!(train_count(10), 7);
        assert_eq!(train_count(3), 2);
        assert_eq!(train_count(2), 1);
        assert_eq!(train_count(1), 1);
        assert_eq!(train_count(100), 70);
        assert_eq!(train_count(11), 8);

        let s = split_70_30(&matrix(&[("a", 10), ("b", 3), ("c", 1)]), 4);
        let count = |m: &FeatureMatrix, u: &str| m.rows.iter().filter(|r| r.user == u).count();
        assert_eq!((count(&s.train, "a"), count(&s.test, "a")), (7, 3));
        assert_eq!((count(&s.train, "b"), count(&s.test, "b")), (2, 1));
        assert_eq!((count(&s.train, "c"), count(&s.test, "c")), (1, 0));
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn split_is_deterministic_and_order_free() {
        let m = matrix(&[("a", 10), ("b", 9)]);
        let mut reversed = m.clone();
        reversed.rows.reverse();
        assert_eq!(split_70_30(&m, 8), split_70_30(&reversed, 8));
        assert_ne!(split_70_30(&m, 8).train, split_70_30(&m, 9).train);
    }

    #[test]
    fn separating_feature_dominates() {
        let m = matrix(&[("a", 20), ("b", 20), ("c", 20)]);
        let r = rf_importance(&m, &ForestConfig { n_trees: 30, ..Default::default() }).unwrap();
        let imp = r.importances();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(imp[1], 0.0, "constant column");
        assert!(imp[2] > imp[0]);
    }

    #[test]
    fn single_user_is_degenerate() {
        let m = matrix(&[("a", 20)]);
        assert!(matches!(rf_importance(&m, &ForestConfig::default()), Err(Error::DegenerateLabels(_))));
    }

    #[test]
    fn policies() {
        let imp = [0.5, 0.3, 0.15, 0.05];
        assert_eq!(select_features(&imp, SelectionPolicy::CumulativeMass { p: 0.9 }).unwrap(), vec![0, 1, 2]);
        assert_eq!(select_features(&imp, SelectionPolicy::TopK { k: 2 }).unwrap(), vec![0, 1]);
        assert_eq!(select_features(&[0.2, 0.4, 0.4], SelectionPolicy::TopK { k: 2 }).unwrap(), vec![1, 2]);
        assert_eq!(select_features(&[0.4, 0.2, 0.4], SelectionPolicy::TopK { k: 1 }).unwrap(), vec![0]);
        assert_eq!(select_features(&imp, SelectionPolicy::CumulativeMass { p: 1.0 }).unwrap().len(), 4);
        for bad in [
            SelectionPolicy::TopK { k: 0 },
            SelectionPolicy::TopK { k: 5 },
            SelectionPolicy::CumulativeMass { p: 0.0 },
            SelectionPolicy::CumulativeMass { p: 1.2 },
        ] {
            assert!(matches!(select_features(&imp, bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn policy_strings() {
        assert_eq!("top-k:37".parse::<SelectionPolicy>().unwrap(), SelectionPolicy::TopK { k: 37 });
        assert_eq!("mass:0.95".parse::<SelectionPolicy>().unwrap(), SelectionPolicy::CumulativeMass { p: 0.95 });
        assert!("half".parse::<SelectionPolicy>().is_err());
        let p = SelectionPolicy::TopK { k: 3 };
        assert_eq!(p.to_string().parse::<SelectionPolicy>().unwrap(), p);
    }

    #[test]
    fn report_json_round_trip() {
        let m = matrix(&[("a", 12), ("b", 12)]);
        let mut r = rf_importance(&m, &ForestConfig { n_trees: 10, seed: 5, ..Default::default() }).unwrap();
        r.apply(SelectionPolicy::TopK { k: 1 }).unwrap();
        assert_eq!(r.selected(), vec!["F1_distance_1_LL".to_string()]);
        assert_eq!(r.family_counts["DEFT"], 1);
        assert_eq!(ImportanceReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
