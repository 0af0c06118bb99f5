//! Synthetic cortex phantom: a folded, layered band rendered as textured
//! sections with ground truth, plus synthetic atlas and coordinate priors.
//!
//! The texture model is invented for testing and is not histology.

mod io;
mod phantom;
mod priors;

pub use io::{read_dataset, write_dataset, PhantomManifest, SectionSidecar, MANIFEST};
pub use phantom::{
    generate_phantom, AreaTexture, PhantomConfig, PhantomDataset, PhantomSection, TextureLayer, BACKGROUND_LEVEL, DOT_LEVEL,
    NEUROPIL_LEVEL, WHITE_LEVEL,
};
pub use priors::{annotate_graph, canonical_coordinates, synth_priors, PriorConfig, PADDED_PRIOR_DIM};
