//! Macro-F1 scoring, run reports and coloured mesh export.

mod export;
mod metrics;
mod report;

pub use export::{export_colored_mesh, Palette};
pub use metrics::{macro_f1, ClassScore, EvalResult};
pub use report::{EpochStats, ModelRun, ModelSummary, RunReport, SplitSummary};
