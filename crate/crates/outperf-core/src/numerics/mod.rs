//! Self-contained numerical kernels shared by the solver modules: normal
//! CDF/quantile, a dense deterministic LP solver, scalar convex minimization,
//! Gaussian quadrature, and reproducible random-number streams.

pub mod lp;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod stats;
