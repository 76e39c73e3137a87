//! Detection metrics, evaluation reports and robustness sweeps.

mod metrics;
mod report;
mod sweep;

pub use self::metrics::{
    accuracy_at_optimal_threshold, auroc, auroc_scores, average_precision, ranking_order, roc_curve,
    split_by_label, ScoredSample,
};
pub use self::report::{
    emit_report, emit_roc_svg, evaluate, parse_report, roc_svg, write_report, EvalReport, ReportFormat,
    RobustnessRow, SourceMetrics, REPORT_SCHEMA,
};
pub use self::sweep::{robustness_sweep, score_images, ConvScorer, FconvScorer, LabeledImage, Scorer};
