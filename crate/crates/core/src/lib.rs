//! Privacy-preserving record linkage over a shared reference set.
//!
//! Each party maps its records to vectors of edit distances against a public
//! reference set ("smashed" vectors), trains a local SVM on synthetic
//! corruptions of its own data, and classifies cross-party pairs from the
//! exchanged vectors alone.

pub mod datagen;
pub mod distance;
mod error;
pub mod eval;
pub mod linkage;
pub mod model;
pub mod protocol;
mod seed;
pub mod smashing;
pub mod svm;

pub use error::{Error, Result};
