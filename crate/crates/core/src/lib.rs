//! Cytoarchitectonic area mapping on cortical midsurface graphs: section
//! stacks are turned into a midsurface mesh and graph, nodes receive
//! contrastively trained patch embeddings, and graph neural networks classify
//! nodes into areas, optionally fused with anatomical priors.

pub mod encoder;
pub mod error;
pub mod eval;
pub mod geom;
pub mod gnn;
pub mod graph;
pub mod image;
pub mod mesh;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
