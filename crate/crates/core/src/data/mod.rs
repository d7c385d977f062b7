//! Matrix types, file formats, dataset manifests, split shorthand and
//! synthetic data.

pub mod container;
pub mod io;
pub mod manifest;
pub mod matrix;
pub mod split;
pub mod synth;

pub use container::Container;
pub use io::{read_matrix, write_matrix, MatrixFormat};
pub use manifest::{RunEntry, RunManifest};
pub use matrix::{TimeSeriesMatrix, DEFAULT_TR_SECONDS};
pub use split::DatasetSplit;
pub use synth::{generate_synthetic, Coverage, GroundTruth, ModelSpec, PlantedStates, SynthConfig, SynthDataset};
