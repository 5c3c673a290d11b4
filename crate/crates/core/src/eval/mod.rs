//! Detection metrics, threshold search and run reports.

mod metrics;
mod report;

pub use metrics::{
    best_f1_threshold, best_f1_threshold_with, per_kind_metrics, prf1, prf1_with, DetectionMetrics, EvalOptions,
    KindMetrics, PerKindMetrics,
};
pub use report::{emit_report, overlay_svg, KlRow, MetricsFile, Overlay, RunArtifacts};
