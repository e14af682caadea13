//! Navigation metrics and the evaluation protocol: deterministic mean-action
//! rollouts, checkpoint selection on one split, reporting on another, and
//! seed-level aggregation.

mod metrics;
mod protocol;
mod run;

pub use metrics::{
    aggregate, effort_efficiency, effort_from_sum, ins, spl, summarize_seeds, Aggregate, MeanStd, MetricsRecord,
    SeedSummary, Termination, EFFORT_METRIC_LABEL, EFFORT_REFERENCE,
};
pub use protocol::{
    read_records_csv, select_best, select_checkpoint, write_records_csv, EvalProtocol, EvalSummary, Selection,
    SeedResult,
};
pub use run::{run_eval, EvalSetup};
