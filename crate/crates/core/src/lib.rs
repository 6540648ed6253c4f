//! Entanglement-assisted tomography of quantum operations.
//!
//! One half of an entangled pair `|psi>>` passes through an unknown
//! operation; joint tomography of the output recovers the operation matrix
//! (pure case) or its Choi matrix (general case). The optical instance uses
//! a twin beam and balanced homodyne detection on both modes.

pub mod error;
pub mod estimator;
pub mod linalg;
pub mod maps;
pub mod quorum;
pub mod random;
pub mod rng;
pub mod sampler;
pub mod special;

pub use error::{Error, Result};
pub use linalg::{BipartiteVector, ComplexMatrix};
pub use num_complex::Complex64;
