//! Self-explainable node classification: a graph encoder whose predictions
//! come from the K most similar labeled nodes under a node-plus-structure
//! similarity, with the matched edges serving as the explanation.

pub mod augment;
pub mod datagen;
pub mod autodiff;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod io;
pub mod optim;
pub mod similarity;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
