//! Per-user authentication protocol and biometric metrics.

pub mod cv;
pub mod metrics;
pub mod protocol;

pub use cv::{fold_plan, stratified_kfold, Fold};
pub use metrics::{auc, eer, point_metrics, roc_curve, PointMetrics, RocCurve, RocPoint};
pub use protocol::{
    run_protocol, write_roc_csv, write_summary_csv, EvalReport, FoldResult, MetricStats, MetricSummary, ProtocolConfig,
    RocAverage, SkippedUser, UserEvalResult,
};
