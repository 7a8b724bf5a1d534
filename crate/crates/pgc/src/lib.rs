//! Exact inference and learning for probabilistic generating circuits.
//!
//! A probability distribution over binary variables is represented by its
//! generating polynomial, encoded as a circuit of weighted sums, products and
//! variable leaves. Marginals and likelihoods are answered by evaluating the
//! circuit over a truncated univariate polynomial ring and reading off one
//! coefficient. Determinantal point processes and spanning-tree distributions
//! are realized as determinants over the same ring, and mixtures of
//! determinantal circuits are trained by maximum likelihood.
//!
//! Core math is generic over the scalar type; `f64` aliases are exported at
//! the crate root.

pub mod circuit;
pub mod compose;
pub mod data;
pub mod detring;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod num;
pub mod pc;
pub mod polyring;

pub use circuit::MarginalQuery;
pub use detring::{DetBackend, KernelKind};
pub use error::{Error, Result};
pub use num::Real;
pub use polyring::MulBackend;

/// Truncated real polynomial in the query indeterminate, at `f64` precision.
pub type Poly = polyring::GenPoly<f64>;
/// A generating circuit over `f64`.
pub type Circuit = circuit::Circuit<f64>;
/// A DPP kernel over `f64`.
pub type Kernel = detring::Kernel<f64>;
/// A dense `f64` matrix.
pub type Matrix = linalg::Matrix<f64>;
/// A weighted graph with `f64` edge weights.
pub type WeightedGraph = detring::WeightedGraph<f64>;
