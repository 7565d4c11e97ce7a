//! One-vs-rest authentication protocol.
//!
//! Every user gets a binary task: their windows are genuine, all other
//! users' windows are imposters. Rows are split by stratified k-fold; inside
//! each fold, imputation means and SMOTE are fit on the training rows only,
//! the genuine class is oversampled up to the imposter count, a boosted model
//! is trained, and the untouched test rows are scored.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cv::fold_plan;
use super::metrics::{auc, eer, point_metrics, roc_curve, RocCurve};
use crate::error::{Error, Result};
use crate::features::{impute, FeatureMatrix};
use crate::ingest::Device;
use crate::learner::gbm::sigmoid;
use crate::learner::{smote, train_gbm, GbmConfig, SmoteConfig};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub folds: usize,
    pub gbm: GbmConfig,
    pub smote_k: usize,
    /// Accept threshold on the genuine-class probability.
    pub threshold: f64,
    pub seed: u64,
    /// Number of evenly spaced FPR values for the averaged ROC.
    pub roc_grid_points: usize,
    /// Evaluate users in parallel.
    pub parallel: bool,
    /// Name reported in the `Model` column.
    pub label: String,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            gbm: GbmConfig { parallel: false, ..GbmConfig::default() },
            smote_k: 5,
            threshold: 0.5,
            seed: 0,
            roc_grid_points: 101,
            parallel: true,
            label: "model".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_genuine: usize,
    pub train_imposter: usize,
    pub synthetic: usize,
    pub test_genuine: usize,
    pub test_imposter: usize,
    pub accuracy: f64,
    pub eer: f64,
    pub f1: f64,
    pub auc: f64,
    #[serde(skip)]
    roc: Option<RocCurve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: MetricStats,
    pub eer: MetricStats,
    pub f1: MetricStats,
    pub auc: MetricStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEvalResult {
    pub user: String,
    pub folds: Vec<FoldResult>,
    /// Means and standard deviations over this user's folds.
    pub summary: MetricSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUser {
    pub user: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocAverage {
    pub fpr: f64,
    pub tpr_mean: f64,
    pub tpr_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub device: Device,
    pub model: String,
    pub features: Vec<String>,
    pub config: ProtocolConfig,
    pub users: Vec<UserEvalResult>,
    pub skipped: Vec<SkippedUser>,
    /// Unweighted mean over users; `std` is taken across the per-fold
    /// cross-user means.
    pub aggregate: MetricSummary,
    /// Vertically averaged ROC over every user and fold.
    pub roc: Vec<RocAverage>,
    pub notes: Vec<String>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn stats(v: &[f64]) -> MetricStats {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len().max(1) as f64;
    MetricStats { mean: m, std: var.sqrt() }
}

fn summarize(folds: &[&FoldResult]) -> MetricSummary {
    let pick = |f: fn(&FoldResult) -> f64| stats(&folds.iter().map(|r| f(r)).collect::<Vec<_>>());
    MetricSummary { accuracy: pick(|r| r.accuracy), eer: pick(|r| r.eer), f1: pick(|r| r.f1), auc: pick(|r| r.auc) }
}

/// Run the protocol over every user in `matrix`, restricted to `selected`
/// features.
pub fn run_protocol<S: AsRef<str> + Sync>(
    matrix: &FeatureMatrix,
    selected: &[S],
    cfg: &ProtocolConfig,
) -> Result<EvalReport> {
    if selected.is_empty() {
        return Err(Error::Config("no features selected".into()));
    }
    if cfg.roc_grid_points < 2 {
        return Err(Error::Config("ROC grid needs at least 2 points".into()));
    }
    let matrix = matrix.select_features(selected)?.sorted();
    let users = matrix.users();
    if users.len() < 2 {
        return Err(Error::Config(format!("need at least 2 users, found {}", users.len())));
    }
    let device = matrix.rows[0].device;
    if let Some(r) = matrix.rows.iter().find(|r| r.device != device) {
        return Err(Error::Config(format!("matrix mixes devices `{device}` and `{}`", r.device)));
    }

    let run = |user: &String| evaluate_user(&matrix, user, cfg);
    let outcomes: Vec<Result<UserEvalResult>> =
        if cfg.parallel { users.par_iter().map(run).collect() } else { users.iter().map(run).collect() };

    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (user, outcome) in users.iter().zip(outcomes) {
        match outcome {
            Ok(r) => results.push(r),
            Err(e @ (Error::Stratify { .. } | Error::DegenerateLabels(_))) => {
                skipped.push(SkippedUser { user: user.clone(), reason: e.to_string() })
            }
            Err(e) => return Err(e),
        }
    }
    if results.is_empty() {
        return Err(Error::NoData("every user was skipped".into()));
    }

    let aggregate = aggregate_summary(&results, cfg.folds);
    let roc = average_roc(&results, cfg.roc_grid_points);
    Ok(EvalReport {
        device,
        model: cfg.label.clone(),
        features: matrix.schema.names().to_vec(),
        config: cfg.clone(),
        users: results,
        skipped,
        aggregate,
        roc,
        notes: Vec::new(),
    })
}

fn evaluate_user(matrix: &FeatureMatrix, user: &str, cfg: &ProtocolConfig) -> Result<UserEvalResult> {
    let labels: Vec<bool> = matrix.rows.iter().map(|r| r.user == user).collect();
    let user_seed = seed::derive_label(cfg.seed, user);
    let plan = fold_plan(&labels, cfg.folds, seed::derive_label(user_seed, "folds"))?;
    let names = matrix.schema.names();

    let mut folds = Vec::with_capacity(plan.len());
    let mut warnings = Vec::new();
    for (k, fold) in plan.iter().enumerate() {
        debug_assert!(fold.train.iter().all(|r| !fold.test.contains(r)));
        // Everything fitted below sees training rows only.
        let (train, means) = impute(&matrix.select_rows(&fold.train), None)?;
        let (test, _) = impute(&matrix.select_rows(&fold.test), Some(means.as_slice()))?;
        let x_train = train.to_dense()?;
        let y_train: Vec<bool> = fold.train.iter().map(|&r| labels[r]).collect();
        let x_test = test.to_dense()?;
        let y_test: Vec<bool> = fold.test.iter().map(|&r| labels[r]).collect();

        let genuine_idx: Vec<usize> = (0..y_train.len()).filter(|&i| y_train[i]).collect();
        let train_genuine = genuine_idx.len();
        let train_imposter = y_train.len() - train_genuine;
        let oversampled = smote(
            &x_train.select_rows(&genuine_idx),
            &SmoteConfig {
                k: cfg.smote_k,
                target: train_genuine.max(train_imposter),
                seed: seed::derive(seed::derive_label(user_seed, "smote"), k as u64),
            },
        )?;
        if let Some(w) = oversampled.warning {
            warnings.push(format!("fold {k}: {w}"));
        }
        let synthetic = oversampled.rows.n_rows();
        let x_fit = x_train.vstack(&oversampled.rows)?;
        let mut y_fit = y_train.clone();
        y_fit.extend(std::iter::repeat_n(true, synthetic));

        let gbm_cfg = GbmConfig { seed: seed::derive(seed::derive_label(user_seed, "gbm"), k as u64), ..cfg.gbm };
        let model = train_gbm(&x_fit, &y_fit, names, &gbm_cfg)?;
        let margins = model.margins(&x_test)?;
        let probs: Vec<f64> = margins.iter().map(|&z| sigmoid(z)).collect();

        // Margins rank identically to probabilities without saturating.
        let curve = roc_curve(&margins, &y_test)?;
        let point = point_metrics(&probs, &y_test, cfg.threshold)?;
        let test_genuine = y_test.iter().filter(|t| **t).count();
        folds.push(FoldResult {
            fold: k,
            train_genuine,
            train_imposter,
            synthetic,
            test_genuine,
            test_imposter: y_test.len() - test_genuine,
            accuracy: point.accuracy,
            eer: eer(&curve),
            f1: point.f1,
            auc: auc(&curve),
            roc: Some(curve),
        });
    }
    let summary = summarize(&folds.iter().collect::<Vec<_>>());
    Ok(UserEvalResult { user: user.to_string(), folds, summary, warnings })
}

fn aggregate_summary(results: &[UserEvalResult], k: usize) -> MetricSummary {
    let user_means = |f: fn(&MetricSummary) -> f64| mean(&results.iter().map(|r| f(&r.summary)).collect::<Vec<_>>());
    let fold_means = |f: fn(&FoldResult) -> f64| -> Vec<f64> {
        (0..k).map(|j| mean(&results.iter().filter_map(|r| r.folds.get(j)).map(f).collect::<Vec<_>>())).collect()
    };
    let combine = |m: f64, per_fold: Vec<f64>| MetricStats { mean: m, std: stats(&per_fold).std };
    MetricSummary {
        accuracy: combine(user_means(|s| s.accuracy.mean), fold_means(|f| f.accuracy)),
        eer: combine(user_means(|s| s.eer.mean), fold_means(|f| f.eer)),
        f1: combine(user_means(|s| s.f1.mean), fold_means(|f| f.f1)),
        auc: combine(user_means(|s| s.auc.mean), fold_means(|f| f.auc)),
    }
}

fn average_roc(results: &[UserEvalResult], grid_points: usize) -> Vec<RocAverage> {
    let curves: Vec<&RocCurve> = results.iter().flat_map(|r| r.folds.iter().filter_map(|f| f.roc.as_ref())).collect();
    (0..grid_points)
        .map(|i| {
            let fpr = i as f64 / (grid_points - 1) as f64;
            let tprs: Vec<f64> = curves.iter().map(|c| c.tpr_at(fpr)).collect();
            let s = stats(&tprs);
            RocAverage { fpr, tpr_mean: s.mean, tpr_std: s.std }
        })
        .collect()
}

/// One row per report, in percent, mirroring the usual results table:
/// `Device,Model,Accuracy,Accuracy_std,EER,EER_std,F1,F1_std,AUC-ROC,AUC-ROC_std`.
pub fn write_summary_csv<W: Write>(out: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "Device",
        "Model",
        "Accuracy",
        "Accuracy_std",
        "EER",
        "EER_std",
        "F1",
        "F1_std",
        "AUC-ROC",
        "AUC-ROC_std",
    ])?;
    for r in reports {
        let a = &r.aggregate;
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        w.write_record([
            r.device.to_string(),
            r.model.clone(),
            pct(a.accuracy.mean),
            pct(a.accuracy.std),
            pct(a.eer.mean),
            pct(a.eer.std),
            pct(a.f1.mean),
            pct(a.f1.std),
            pct(a.auc.mean),
            pct(a.auc.std),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc_csv<W: Write>(out: W, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["fpr", "tpr_mean", "tpr_std"])?;
    for p in &report.roc {
        w.write_record([p.fpr.to_string(), p.tpr_mean.to_string(), p.tpr_std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureSchema, FeatureVector};

    /// Two features; user `a` sits far from the others on the first one.
    fn toy_matrix(separated: bool) -> FeatureMatrix {
        let (schema, _) = FeatureSchema::full().subset(&["WPM", "NegUD"]).unwrap();
        let mut rows = Vec::new();
        for (u, user) in ["a", "b", "c"].iter().enumerate() {
            for w in 0..12 {
                let shift = if separated && u == 0 { 50.0 } else { 0.0 };
                let jitter = ((w * 7 + u * 3) % 11) as f64;
                let second = if w % 5 == 0 { None } else { Some(jitter / 10.0) };
                rows.push(FeatureVector {
                    user: user.to_string(),
                    device: Device::Desktop,
                    window: w,
                    values: vec![Some(shift + jitter), second],
                });
            }
        }
        FeatureMatrix { schema, rows, imputation: None }
    }

    fn quick() -> ProtocolConfig {
        ProtocolConfig {
            folds: 3,
            gbm: GbmConfig { n_trees: 20, parallel: false, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn separated_user_is_recognized() {
        let report = run_protocol(&toy_matrix(true), &["WPM", "NegUD"], &quick()).unwrap();
        let a = report.users.iter().find(|u| u.user == "a").unwrap();
        assert_eq!(a.summary.auc.mean, 1.0);
        assert_eq!(a.summary.eer.mean, 0.0);
        assert_eq!(report.roc.len(), 101);
        assert_eq!(report.roc.last().unwrap().tpr_mean, 1.0);
    }

    #[test]
    fn folds_are_balanced_after_oversampling() {
        let report = run_protocol(&toy_matrix(true), &["WPM", "NegUD"], &quick()).unwrap();
        for u in &report.users {
            for f in &u.folds {
                assert_eq!(f.train_genuine + f.synthetic, f.train_imposter);
                assert!(f.test_genuine > 0 && f.test_imposter > 0);
            }
        }
    }

    #[test]
    fn aggregate_is_unweighted_user_mean() {
        let report = run_protocol(&toy_matrix(false), &["WPM", "NegUD"], &quick()).unwrap();
        let auc_mean = report.users.iter().map(|u| u.summary.auc.mean).sum::<f64>() / report.users.len() as f64;
        assert!((report.aggregate.auc.mean - auc_mean).abs() < 1e-12);
        let f1_mean = report.users.iter().map(|u| u.summary.f1.mean).sum::<f64>() / report.users.len() as f64;
        assert!((report.aggregate.f1.mean - f1_mean).abs() < 1e-12);
    }

    #[test]
    fn deterministic_serial_or_parallel() {
        let m = toy_matrix(false);
        let a = run_protocol(&m, &["WPM", "NegUD"], &quick()).unwrap();
        let b = run_protocol(&m, &["WPM", "NegUD"], &ProtocolConfig { parallel: false, ..quick() }).unwrap();
        assert_eq!(a.users, b.users);
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.roc, b.roc);
    }

    #[test]
    fn small_users_are_skipped() {
        let mut m = toy_matrix(true);
        m.rows.retain(|r| r.user != "c" || r.window < 2);
        let report = run_protocol(&m, &["WPM"], &quick()).unwrap();
        assert_eq!(report.skipped.len(), 1);
        assert_eq!(report.skipped[0].user, "c");
        assert_eq!(report.users.len(), 2);
    }

    #[test]
    fn rejects_unknown_features_and_single_user() {
        assert!(matches!(run_protocol(&toy_matrix(true), &["nope"], &quick()), Err(Error::Schema(_))));
        let mut m = toy_matrix(true);
        m.rows.retain(|r| r.user == "a");
        assert!(matches!(run_protocol(&m, &["WPM"], &quick()), Err(Error::Config(_))));
    }

    #[test]
    fn summary_csv_layout() {
        let report = run_protocol(&toy_matrix(true), &["WPM"], &quick()).unwrap();
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[report]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "Device,Model,Accuracy,Accuracy_std,EER,EER_std,F1,F1_std,AUC-ROC,AUC-ROC_std"
        );
        assert!(lines.next().unwrap().starts_with("desktop,model,"));
    }
}
