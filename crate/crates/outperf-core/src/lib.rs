//! Maximal probabilities of outperforming a random benchmark under a capital
//! constraint, computed four ways: exact LP solvers for randomized and pure
//! hypothesis tests on finite probability spaces, closed-form quantile
//! hedging formulas for geometric Brownian motion markets with power and
//! leveraged-ETF benchmarks, quadrature and Monte Carlo evaluation of the
//! convex dual under a stochastic factor model, and a finite-difference
//! solver for the associated HJB equation.

pub mod dual;
pub mod error;
pub mod factor;
pub mod finite;
pub mod gbm;
pub mod hjb;
pub mod numerics;

pub use dual::{DualResult, EvalMode, LognormalSpec, MSpec, SampleSpec};
pub use error::{CoreError, Result};
pub use factor::{
    Coefficient, ComparisonResult, FactorBenchmark, FactorModel, Lambda, MmmRow, MmmScan,
    PathBatch, Psi, SimConfig, StepFn,
};
pub use finite::{
    DualCertificate, FiniteSpace, FiniteTestInstance, PureTest, PurifiedTest, RandomizedTest,
    Test, TestSolution,
};
pub use gbm::{EtfSpec, GbmDualSolution, GbmMarket, PowerBenchmark};
pub use hjb::{
    BenchmarkFn, HjbConfig, HjbDiagnostics, HjbGrid, HjbSolution, SuccessQuery, ValidationReport,
};
