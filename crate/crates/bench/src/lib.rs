//! Evaluation harness for the team schedulers: a by-name registry, the
//! multi-round evaluation loop and pooled metric reports.

mod error;
pub mod eval;
pub mod registry;
pub mod report;

pub use error::BenchError;
pub use eval::{evaluate, worst_case_makespan, EvalConfig, EvalResult, RoundRecord};
pub use registry::{needs_checkpoint, Registry, METHODS};
pub use report::{report, render_table, ReportRow, RunSummary};
