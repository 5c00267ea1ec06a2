//! Convex analysis on the manifold of positive-definite Hermitian matrices
//! and its boundary at infinity, applied to matrix scaling and to operator
//! scaling with marginals.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] dense complex kernels (square roots, positive RQ, subspace arithmetic)
//! * [`manifold`] the Riemannian geometry of `P_n`
//! * [`boundary`] weighted flags, the building inner product, Busemann functions
//! * [`recession`] ray probes for recession functions and finite halfspace tests
//! * [`matrix_scaling`] Sinkhorn, the flow test and the recession function of `f_A(s,t)`
//! * [`operator_scaling`] the Kempf–Ness potential, alternating scaling and certificates
//! * [`sublattice`] submodular functions on subspaces and their Lovász extensions
//! * [`io`] JSON schemas shared with the command-line front end

pub mod boundary;
pub mod error;
pub mod io;
pub mod manifold;
pub mod matrix_scaling;
pub mod numerics;
pub mod operator_scaling;
pub mod random;
pub mod recession;
pub mod sublattice;

pub use boundary::{BoundaryPoint, FormalSum};
pub use error::{Error, Result};
pub use manifold::{PdPoint, TangentVector};
pub use matrix_scaling::{DiagonalScaling, NonnegMatrixInstance};
pub use numerics::{CMat, SubspaceBasis, C64};
pub use operator_scaling::{Certificate, MarginalTarget, OperatorTuple, ScaleResult, Verdict};
pub use recession::{HalfspaceFamily, RayProbe, RecessionEstimate};
pub use sublattice::{LatticeFunction, SubspaceFamily};
