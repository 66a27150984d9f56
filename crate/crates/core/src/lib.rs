//! Synchronization of diffusively coupled discrete-time linear systems.
//!
//! Networks of `p` identical systems `x_i^+ = A x_i + u_i`, `y_i = C x_i`
//! exchange only weighted output differences over a row-stochastic topology.
//! When `A` is neutrally stable and `(C, A)` is detectable, a static output
//! feedback gain exists that makes every connected network synchronize; this
//! crate constructs one such gain, simulates the resulting closed loops, and
//! checks the supporting operator identities by brute force.
//!
//! Module map:
//! - [`numerics`]: dense-matrix primitives (Kronecker products, orthogonal
//!   projectors, spectral norms, the unit/stable spectral split).
//! - [`sysmodel`]: the system type and executable assumption checkers.
//! - [`topology`]: row-stochastic coupling matrices, connectivity, stationary
//!   vectors, geometric-decay constants.
//! - [`synthesis`]: the gain construction and the invariant-form solver.
//! - [`simulate`]: closed-loop steppers and trace collection.
//! - [`verify`]: enumeration-scale oracles for the projector-product algebra
//!   behind the convergence proof.
//! - [`corpus`]: seeded random generators for test and verification corpora.

pub mod corpus;
pub mod error;
pub mod numerics;
pub mod scalar;
pub mod simulate;
pub mod synthesis;
pub mod sysmodel;
pub mod topology;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Scalar;

// Consumers build against the same matrix types.
pub use nalgebra;

/// Dense double-precision matrix, the working type of the CLI.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense double-precision column vector.
pub type Col = nalgebra::DVector<f64>;
/// Single-precision counterparts for callers that trade accuracy for size.
pub type Mat32 = nalgebra::DMatrix<f32>;
pub type Col32 = nalgebra::DVector<f32>;
