//! Engine for collaboratively teaching concepts to models: local/global
//! model pairs, disagreement-driven example selection, generator-guided
//! sampling, interference regression tests, and a numerical verifier for the
//! min-norm linear-regression bounds.

pub mod chain;
pub mod concept;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod generator;
pub mod interference;
pub mod labeler;
pub mod minnorm;
pub mod model;
pub mod subspace;
pub mod util;

pub use error::{Error, Result};
