//! GraphSAGE and GAT node classifiers over hop-ordered subgraph batches, the
//! MLP baseline, prior fusion and the training loop.

mod batch;
mod layers;
mod model;
mod train;

pub use batch::{GraphBatch, LayerEdges};
pub use layers::{GatLayer, SageLayer};
pub use model::{Fusion, FusionInputs, GnnArch, GnnConfig, GnnModel, GraphLayer, InputDims, PriorFusionConfig, ResidualBlock};
pub use train::{
    center_logits, evaluate, load_gnn, model_subgraph, predict, prepare_batch, read_predictions, save_gnn, train_gnn, write_predictions,
    GnnSchedule, TrainedGnn,
};
