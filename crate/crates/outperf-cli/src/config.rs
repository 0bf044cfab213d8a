//! Run configuration.
//!
//! Every invocation reads a single JSON document:
//!
//! ```text
//! {
//!   "command": "gbm-curve",
//!   "seed": 7,                // optional, default 0
//!   "input": "instance.json", // only finite-solve reads it
//!   "output": "curve.csv",
//!   "params": { ... }         // command-specific, see the param structs
//! }
//! ```
//!
//! `--seed` and `--output` on the command line override the corresponding
//! fields; everything else lives in the document so that a run is fully
//! described by one file. Identical config plus seed must produce
//! byte-identical artifacts.

use std::path::PathBuf;

use serde::Deserialize;

use outperf_core::dual::EvalMode;
use outperf_core::factor::{FactorBenchmark, FactorModel, Psi, StepFn};
use outperf_core::gbm::{GbmMarket, PowerBenchmark};
use outperf_core::hjb::{HjbConfig, SuccessQuery};
use outperf_core::{CoreError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub params: serde_json::Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FiniteSolve,
    GbmCurve,
    GbmBetaCurve,
    EtfSurface,
    DualEval,
    MmmScan,
    ComparisonCheck,
    HjbSolve,
    HjbQuery,
}

/// Grid of query points: either an explicit array or an inclusive linspace.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Linspace { min: f64, max: f64, n: usize },
}

impl Grid {
    pub fn points(&self, field: &str) -> Result<Vec<f64>> {
        let pts = match self {
            Grid::Points(v) => v.clone(),
            Grid::Linspace { min, max, n } => {
                if *n == 0 {
                    return Err(CoreError::InvalidInput(format!(
                        "{field}: linspace needs n >= 1"
                    )));
                }
                if !(min.is_finite() && max.is_finite() && min <= max) {
                    return Err(CoreError::InvalidInput(format!(
                        "{field}: linspace needs finite min <= max"
                    )));
                }
                if *n == 1 {
                    vec![*min]
                } else {
                    (0..*n)
                        .map(|i| min + (max - min) * i as f64 / (*n - 1) as f64)
                        .collect()
                }
            }
        };
        if pts.is_empty() {
            return Err(CoreError::InvalidInput(format!(
                "{field}: at least one point is required"
            )));
        }
        if let Some(bad) = pts.iter().find(|p| !p.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "{field}: points must be finite, got {bad}"
            )));
        }
        Ok(pts)
    }
}

/// Factor model by preset name or spelled out inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Preset { preset: String },
    Inline(Box<FactorModel>),
}

impl ModelSpec {
    pub fn build(&self) -> Result<FactorModel> {
        match self {
            ModelSpec::Preset { preset } => FactorModel::preset(preset),
            ModelSpec::Inline(model) => {
                model.validate()?;
                Ok((**model).clone())
            }
        }
    }
}

/// Reference law for dual-eval, mirroring the two built-in samplers.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MSpecParam {
    Lognormal { m: f64, s: f64 },
    GbmCall { market: GbmMarket, strike: f64 },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiniteSolveParams {
    /// Replaces the capital level stored in the instance file.
    #[serde(default)]
    pub x: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmCurveParams {
    pub market: GbmMarket,
    pub benchmark: PowerBenchmark,
    pub x_grid: Grid,
    /// Optional sweep over market price of risk; defaults to the market value.
    #[serde(default)]
    pub theta_grid: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbmBetaCurveParams {
    pub market: GbmMarket,
    pub benchmark: PowerBenchmark,
    pub x: f64,
    pub beta_grid: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtfSurfaceParams {
    pub market: GbmMarket,
    pub l0: f64,
    pub p_grid: Grid,
    pub x_grid: Grid,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualEvalParams {
    pub spec: MSpecParam,
    pub x: f64,
    pub mode: EvalMode,
    /// Monte Carlo path count; ignored by the deterministic modes.
    #[serde(default)]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmmScanParams {
    pub model: ModelSpec,
    pub x: f64,
    pub benchmark: FactorBenchmark,
    pub lambda_grid: Grid,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonCheckParams {
    pub rate_a: StepFn,
    pub rate_b: StepFn,
    pub psi: Psi,
    pub n_paths: usize,
    pub n_steps: usize,
    pub horizon: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbSolveParams {
    pub model: ModelSpec,
    pub config: HjbConfig,
    /// Time-slice indices to export; defaults to [0] (the initial time).
    #[serde(default)]
    pub slices: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjbQueryParams {
    pub model: ModelSpec,
    pub config: HjbConfig,
    pub queries: Vec<SuccessQuery>,
}
