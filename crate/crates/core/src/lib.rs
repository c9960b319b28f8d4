//! Sparse source estimation for linear inverse problems on triangulated
//! surfaces, with sparsity enforced in a spectral graph wavelet domain.

pub mod error;
pub mod forward;
pub mod frame;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod metrics;
pub mod simulation;
pub mod solvers;

pub use error::{Error, Result};
