//! Multi-view subspace embeddings.
//!
//! Every method is phrased as a generalized trace-ratio problem over a
//! stacked projection `W = [W_1; …; W_V]`, built from per-view blocks of two
//! graph-embedding matrices `P` and `Q`. Linear, kernel (exact and random
//! Fourier feature) and neural variants share the same block assembly and
//! eigensolver.

pub mod data;
pub mod deep;
mod error;
pub mod eval;
pub mod graphs;
pub mod kernel;
pub mod linalg;
pub mod linear;
mod serial;

pub use error::{Error, Result};
