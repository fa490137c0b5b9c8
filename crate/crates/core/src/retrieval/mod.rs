//! Descriptor database queries and precision–recall evaluation of loop
//! closure detection.

mod eval;
mod pipeline;

pub use eval::{
    evaluate_sequence, query_outcomes, query_top1, DbEntry, EvalConfig, PrCurve, PrPoint, QueryOutcome,
};
pub use pipeline::{describe_cloud, preprocess_eval, timing_report, DescribeConfig, TimingReport};
