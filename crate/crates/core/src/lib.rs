//! Block-preconditioned Shampoo with batched inverse-root solvers.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices, stacked blocks, counted products
//! * [`eigen`]: Jacobi eigendecomposition, EVD inverse roots and spectrum dampening
//! * [`spectral`]: Rayleigh quotients, multi-start power iteration, scale factors
//! * [`iterative`]: Coupled-Newton and Newton–Denman–Beavers iterations
//! * [`chebyshev`]: Chebyshev fitting and Clenshaw evaluation (scalar and matrix)
//! * [`solver`]: one entry point over all four root methods, scaling included
//! * [`blocking`]: layer partitioning, stack groups, norm-layer stacking
//! * [`shampoo`]: the optimizer with grafting and cached roots
//! * [`balance`]: greedy layer-to-worker assignment
//! * [`tasks`] and [`harness`]: synthetic training problems and the sweep/bench drivers

pub mod balance;
pub mod blocking;
pub mod chebyshev;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod iterative;
pub mod linalg;
pub mod random;
pub mod shampoo;
pub mod solver;
pub mod spectral;
pub mod tasks;

pub use error::{Error, Result};
pub use linalg::{bmm, frobenius_norm, matmul, symmetrize, BatchedTensor, Matrix, PrecisionMode};
