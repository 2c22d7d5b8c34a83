//! Bug bundles on disk, splitting, feature-matrix CSV, and the synthetic
//! corpus generator.

pub mod bundle;
pub mod matrix;
pub mod split;
pub mod synth;

pub use bundle::{load_bug, load_corpus, read_manifest, write_bug, write_manifest, CorpusManifest};
pub use matrix::{read_matrix_file, write_matrix_file, FeatureMatrix, MatrixRow};
pub use split::{split, subsample, SplitSpec};
pub use synth::{generate_synthetic, write_synthetic, FaultModel, SynthSpec};
