//! Minimal dense-tensor library with tape-based reverse-mode differentiation.
//!
//! Values live in [`Tensor`]s. Computation is recorded on a [`Tape`] through
//! [`Var`] handles; [`Tape::backward`] replays the record in reverse. Trainable
//! state lives in a [`ParamStore`] and is bound into a [`Session`] for one
//! forward/backward pass.

mod checkpoint;
mod error;
pub mod gradcheck;
pub mod layers;
mod ops;
pub mod optim;
mod params;
mod real;
mod session;
mod tape;
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use error::{AutodiffError, Result};
pub use layers::{Layer, LayerSpec, Padding};
pub use ops::conv::window_out;
pub use ops::norm::NormStats;
pub use optim::{Lars, Optimizer, OptimizerState, SgdNesterov};
pub use params::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use session::{Mode, ParamGrads, Session};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
