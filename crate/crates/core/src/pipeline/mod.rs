//! Stage orchestration: a declarative run configuration, content-hashed
//! stage manifests and the phantom → mesh → encoder → features → GNN →
//! evaluation → export chain.

mod config;
mod manifest;
mod stages;

pub use config::{EncoderStageConfig, ExportConfig, GnnStageConfig, MeshConfig, ModelSpec, RunConfig};
pub use manifest::{file_hash, require_stage, StageManifest, STAGE_MANIFEST};
pub use stages::{gray_dice, run_all, run_stage, EncoderTrainingLog, MeshReport, Outcome, Stage, REPORT_SPLITS};
