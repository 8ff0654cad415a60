//! Metrics, the two-stage and three-class pipelines, grouped accuracy
//! sweeps, the detection-latency harness and the reports directory.

mod latency;
mod metrics;
mod pipeline;
mod report;
mod sweeps;

pub use latency::{
    detection_latency_sweep, sustained_detection, trace_latency_ms, window_decisions,
    LatencyRow, LatencySpec, LatencyTable, CONFIRM_WINDOWS,
};
pub use metrics::{
    accuracy_from_errors, compute_metrics, f1_score, ClassMetrics, ConfusionMatrix, MetricsReport,
};
pub use pipeline::{
    classify_three_class, classify_two_stage, decide_two_stage, label_from_three, TwoStageDecision,
};
pub use report::{evaluate_section, render_report, write_reports, EvalSection, Pipelines, REPORT_FILES};
pub use sweeps::{
    report_sweeps, SweepRecord, SweepRow, SweepTable, Sweeps, ATTACKER_AXIS, DISTANCE_AXIS,
    POWER_AXIS, USER_AXIS,
};
