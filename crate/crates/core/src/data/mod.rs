//! Domain types, file formats and seeded randomness.

pub mod io;
pub mod rng;
pub mod types;

pub use io::{
    load_activation_dataset, load_matrix, load_steered_corpus, save_matrix, MatrixFormat,
};
pub use rng::{derive_stream, RngStream};
pub use types::{
    ActivationDataset, CausalSample, FeatureMeta, Matrix, SaeGeometry, SteeredRecord, Vector,
};
