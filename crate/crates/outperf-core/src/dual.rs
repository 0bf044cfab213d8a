//! Evaluation of the convex dual of the outperformance problem,
//!
//! ```text
//! V(x) = inf_{a >= 0} { x a + q(a) },    q(a) = E[(1 - a M)^+],
//! ```
//!
//! where M is the deflated benchmark Z_T F. Three evaluation modes: exact
//! two-term normal expression when M is lognormal, deterministic quadrature
//! that splits the integral at the kink of the positive part, and Monte
//! Carlo over sampled draws of M. The objective is a positive part of an
//! affine function of `a` under the expectation, hence convex, so a
//! geometrically expanded bracket plus golden-section search finds the
//! minimizer.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::gbm::GbmMarket;
use crate::numerics::normal::{norm_cdf, norm_pdf};
use crate::numerics::optimize::minimize_convex_1d;
use crate::numerics::quadrature::{gauss_legendre, integrate, GaussRule};
use crate::numerics::rng::RngStream;
use crate::numerics::stats::{kahan_sum, KahanSum, SampleStats};

/// M = exp(m + s N) with N standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalSpec {
    pub m: f64,
    pub s: f64,
}

impl LognormalSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.m.is_finite() {
            return Err(CoreError::InvalidInput(
                "lognormal log-mean must be finite".to_string(),
            ));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "lognormal log-std must be nonnegative, got {}",
                self.s
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        (self.m + 0.5 * self.s * self.s).exp()
    }
}

/// Batch sampler filling a buffer with nonnegative draws of M.
pub type Sampler = Arc<dyn Fn(&mut RngStream, &mut [f64]) + Send + Sync>;

/// Monte Carlo description of M: a sampler plus the full sampling
/// configuration, so results are reproducible for a fixed spec.
#[derive(Clone)]
pub struct SampleSpec {
    pub sampler: Sampler,
    pub n_paths: usize,
    pub seed: u64,
    pub stream: u64,
    /// Consecutive draws form antithetic pairs; pairs are averaged into
    /// single units before the standard error is estimated.
    pub pair_units: bool,
}

impl fmt::Debug for SampleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleSpec")
            .field("n_paths", &self.n_paths)
            .field("seed", &self.seed)
            .field("stream", &self.stream)
            .field("pair_units", &self.pair_units)
            .finish_non_exhaustive()
    }
}

impl SampleSpec {
    /// Antithetic lognormal sampler: each standard normal n yields the pair
    /// (exp(m + s n), exp(m - s n)). `n_paths` is rounded up to even.
    pub fn lognormal(spec: LognormalSpec, n_paths: usize, seed: u64, stream: u64) -> Result<Self> {
        spec.validate()?;
        if n_paths == 0 {
            return Err(CoreError::InvalidInput(
                "path count must be positive".to_string(),
            ));
        }
        let LognormalSpec { m, s } = spec;
        let sampler: Sampler = Arc::new(move |rng, buf| {
            for pair in buf.chunks_mut(2) {
                let n = rng.standard_normal();
                pair[0] = (m + s * n).exp();
                if pair.len() == 2 {
                    pair[1] = (m - s * n).exp();
                }
            }
        });
        Ok(Self {
            sampler,
            n_paths: n_paths + n_paths % 2,
            seed,
            stream,
            pair_units: true,
        })
    }

    /// Deflated call benchmark M = Z_T (S_T - strike)^+ in the complete GBM
    /// market, driven by a single terminal normal.
    pub fn gbm_call(
        market: &GbmMarket,
        strike: f64,
        n_paths: usize,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        market.validate()?;
        if !(strike >= 0.0 && strike.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "strike must be nonnegative, got {strike}"
            )));
        }
        if n_paths == 0 {
            return Err(CoreError::InvalidInput(
                "path count must be positive".to_string(),
            ));
        }
        let GbmMarket {
            s0,
            sigma,
            theta,
            horizon,
        } = *market;
        let sqrt_t = horizon.sqrt();
        let sampler: Sampler = Arc::new(move |rng, buf| {
            for slot in buf.iter_mut() {
                let w = sqrt_t * rng.standard_normal();
                let z = (-theta * w - 0.5 * theta * theta * horizon).exp();
                let st = s0 * ((sigma * theta - 0.5 * sigma * sigma) * horizon + sigma * w).exp();
                *slot = z * (st - strike).max(0.0);
            }
        });
        Ok(Self {
            sampler,
            n_paths,
            seed,
            stream,
            pair_units: false,
        })
    }

    fn draw(&self) -> Result<Vec<f64>> {
        if self.n_paths == 0 {
            return Err(CoreError::InvalidInput(
                "path count must be positive".to_string(),
            ));
        }
        let mut rng = RngStream::new(self.seed, self.stream);
        let mut buf = vec![0.0; self.n_paths];
        (self.sampler)(&mut rng, &mut buf);
        for (i, &v) in buf.iter().enumerate() {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CoreError::InvalidInput(format!(
                    "sampler produced an invalid draw {v} at index {i}; draws of M must be finite and nonnegative"
                )));
            }
        }
        Ok(buf)
    }
}

/// Distribution of the deflated benchmark M.
#[derive(Clone)]
pub enum MSpec {
    Lognormal(LognormalSpec),
    Sampled(SampleSpec),
}

impl fmt::Debug for MSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MSpec::Lognormal(s) => f.debug_tuple("Lognormal").field(s).finish(),
            MSpec::Sampled(s) => f.debug_tuple("Sampled").field(s).finish(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// Value and minimizer of the dual problem.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DualResult {
    pub v: f64,
    /// Dual minimizer; infinite at x = 0 when the infimum is only approached.
    pub a_hat: f64,
    pub q_at_a_hat: f64,
    /// Standard error of the value estimate (Monte Carlo mode only).
    pub std_error: Option<f64>,
}

/// Relative minimizer tolerances per mode (matched to the evaluation noise).
const TOL_DETERMINISTIC: f64 = 1e-8;
const TOL_MONTE_CARLO: f64 = 1e-4;

/// q(a) = Phi(d2) - a e^{m + s^2/2} Phi(d1) with d2 = (-ln a - m)/s and
/// d1 = d2 - s; the two-term expression from integrating up to the kink.
fn q_closed(spec: &LognormalSpec, a: f64) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    if spec.s == 0.0 {
        return (1.0 - a * spec.m.exp()).max(0.0);
    }
    let d2 = (-a.ln() - spec.m) / spec.s;
    let d1 = d2 - spec.s;
    norm_cdf(d2) - a * spec.mean() * norm_cdf(d1)
}

fn gl16() -> &'static GaussRule {
    static RULE: OnceLock<GaussRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16).expect("16-node rule"))
}

/// Composite Gauss-Legendre with panel widths at most `width_cap` and at
/// least 4 panels of 16 nodes, so every call uses 64+ nodes.
fn composite_gl(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, width_cap: f64) -> f64 {
    if !(hi > lo) {
        return 0.0;
    }
    let n_panels = (((hi - lo) / width_cap).ceil() as usize).clamp(4, 100_000);
    let w = (hi - lo) / n_panels as f64;
    let mut acc = KahanSum::new();
    for k in 0..n_panels {
        let a = lo + k as f64 * w;
        acc.add(integrate(&mut f, a, a + w, gl16()));
    }
    acc.value()
}

/// Normal tail beyond 13 standard deviations is below 1e-38, far under the
/// agreement tolerances, so the integration window is clipped there.
const NORMAL_CLIP: f64 = 13.0;

/// Deterministic quadrature for lognormal q: the integrand has a kink where
/// a e^{m + s n} = 1, so the integral runs only over the smooth region below
/// it and panels never straddle a nondifferentiable point.
fn q_quadrature(spec: &LognormalSpec, a: f64) -> f64 {
    if a == 0.0 {
        return 1.0;
    }
    if spec.s == 0.0 {
        return (1.0 - a * spec.m.exp()).max(0.0);
    }
    let kink = (-a.ln() - spec.m) / spec.s;
    let hi = kink.min(NORMAL_CLIP);
    if hi <= -NORMAL_CLIP {
        return 0.0;
    }
    let LognormalSpec { m, s } = *spec;
    let width_cap = (3.0 / (1.0 + s)).min(0.5);
    composite_gl(
        |n| (1.0 - a * (m + s * n).exp()) * norm_pdf(n),
        -NORMAL_CLIP,
        hi,
        width_cap,
    )
}

/// Per-unit Monte Carlo values of (1 - a M)^+: pair averages when the spec
/// is antithetic, single draws otherwise.
fn mc_unit_values(draws: &[f64], a: f64, pair_units: bool) -> Vec<f64> {
    if pair_units {
        draws
            .chunks(2)
            .map(|pair| {
                let sum: f64 = pair.iter().map(|&m| (1.0 - a * m).max(0.0)).sum();
                sum / pair.len() as f64
            })
            .collect()
    } else {
        draws.iter().map(|&m| (1.0 - a * m).max(0.0)).collect()
    }
}

/// Streaming mean of (1 - a M)^+ over the buffer (no allocation; used inside
/// the bracket search where only the mean matters).
fn mc_q_mean(draws: &[f64], a: f64, pair_units: bool) -> f64 {
    // Pair averaging and plain averaging have the same mean, so a single
    // compensated pass suffices here.
    let _ = pair_units;
    let mut acc = KahanSum::new();
    for &m in draws {
        acc.add((1.0 - a * m).max(0.0));
    }
    acc.value() / draws.len() as f64
}

/// One dual-objective evaluation q(a) = E[(1 - a M)^+].
///
/// Closed form and quadrature require a lognormal spec; Monte Carlo requires
/// a sample spec. Returns the value and, in Monte Carlo mode, its standard
/// error.
pub fn q_value(spec: &MSpec, a: f64, mode: EvalMode) -> Result<(f64, Option<f64>)> {
    if !(a >= 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "dual variable must be nonnegative, got {a}"
        )));
    }
    match (spec, mode) {
        (MSpec::Lognormal(ls), EvalMode::ClosedForm) => {
            ls.validate()?;
            Ok((q_closed(ls, a), None))
        }
        (MSpec::Lognormal(ls), EvalMode::Quadrature) => {
            ls.validate()?;
            Ok((q_quadrature(ls, a), None))
        }
        (MSpec::Sampled(ss), EvalMode::MonteCarlo) => {
            let draws = ss.draw()?;
            let stats = SampleStats::from_slice(&mc_unit_values(&draws, a, ss.pair_units));
            Ok((stats.mean, Some(stats.std_error)))
        }
        (MSpec::Lognormal(_), EvalMode::MonteCarlo) => Err(CoreError::InvalidInput(
            "monte_carlo mode needs a sample spec; build one with SampleSpec::lognormal"
                .to_string(),
        )),
        (MSpec::Sampled(_), _) => Err(CoreError::InvalidInput(
            "closed_form and quadrature modes require a lognormal spec".to_string(),
        )),
    }
}

/// Expand [0, a_max] geometrically until the convex objective turns upward,
/// then run golden-section search on the final bracket.
fn bracket_and_minimize(
    mut objective: impl FnMut(f64) -> f64,
    mean_m: f64,
    rel_tol: f64,
) -> Result<(f64, f64)> {
    let mut a_max = 4.0 / mean_m;
    let mut rounds = 0;
    while objective(a_max) <= objective(0.5 * a_max) {
        a_max *= 2.0;
        rounds += 1;
        if rounds > 200 {
            return Err(CoreError::Numerical(
                "dual bracket failed to turn upward".to_string(),
            ));
        }
    }
    minimize_convex_1d(objective, 0.0, a_max, rel_tol * a_max)
}

fn minimize_lognormal(spec: &LognormalSpec, x: f64, quadrature: bool) -> Result<DualResult> {
    if x == 0.0 {
        // V(0) = P{M = 0} = 0 for lognormal M; the infimum over a is
        // approached as a grows, not attained.
        return Ok(DualResult {
            v: 0.0,
            a_hat: f64::INFINITY,
            q_at_a_hat: 0.0,
            std_error: None,
        });
    }
    if x >= spec.mean() {
        // Slope at a = 0 is x - E[M] >= 0, so the minimum sits at a = 0.
        return Ok(DualResult {
            v: 1.0,
            a_hat: 0.0,
            q_at_a_hat: 1.0,
            std_error: None,
        });
    }
    let q = |a: f64| {
        if quadrature {
            q_quadrature(spec, a)
        } else {
            q_closed(spec, a)
        }
    };
    let (a_hat, v) = bracket_and_minimize(|a| x * a + q(a), spec.mean(), TOL_DETERMINISTIC)?;
    Ok(DualResult {
        v,
        a_hat,
        q_at_a_hat: q(a_hat),
        std_error: None,
    })
}

/// Minimize the sample-average objective x a + mean((1 - a M_i)^+) over a
/// fixed draw buffer. The sample objective is itself convex, so the search
/// runs on a deterministic function and is reproducible for fixed draws.
/// Shared by the Monte Carlo mode here and the factor-model scans, which
/// need common draws across scan points.
pub(crate) fn minimize_sampled(draws: &[f64], x: f64, pair_units: bool) -> Result<DualResult> {
    if !(x >= 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "capital must be nonnegative, got {x}"
        )));
    }
    if draws.is_empty() {
        return Err(CoreError::InvalidInput(
            "sample buffer is empty".to_string(),
        ));
    }
    if x == 0.0 {
        // V(0) = P{M = 0}: estimate the atom directly.
        let atoms: Vec<f64> = if pair_units {
            draws
                .chunks(2)
                .map(|p| p.iter().map(|&m| f64::from(m == 0.0)).sum::<f64>() / p.len() as f64)
                .collect()
        } else {
            draws.iter().map(|&m| f64::from(m == 0.0)).collect()
        };
        let stats = SampleStats::from_slice(&atoms);
        return Ok(DualResult {
            v: stats.mean,
            a_hat: f64::INFINITY,
            q_at_a_hat: stats.mean,
            std_error: Some(stats.std_error),
        });
    }
    let mean_m = kahan_sum(draws) / draws.len() as f64;
    if x >= mean_m {
        return Ok(DualResult {
            v: 1.0,
            a_hat: 0.0,
            q_at_a_hat: 1.0,
            std_error: Some(0.0),
        });
    }
    let (a_hat, v) = bracket_and_minimize(
        |a| x * a + mc_q_mean(draws, a, pair_units),
        mean_m,
        TOL_MONTE_CARLO,
    )?;
    let stats = SampleStats::from_slice(&mc_unit_values(draws, a_hat, pair_units));
    Ok(DualResult {
        v,
        a_hat,
        q_at_a_hat: stats.mean,
        std_error: Some(stats.std_error),
    })
}

/// Minimize x a + q(a) over a >= 0.
///
/// The bracket [0, a_max] starts at a_max = 4/E[M] and doubles until the
/// objective turns upward, which convexity guarantees encloses a minimizer.
/// Monte Carlo mode draws one fixed batch and minimizes the sample-average
/// objective, so the result is reproducible for a fixed spec.
pub fn minimize_dual(spec: &MSpec, x: f64, mode: EvalMode) -> Result<DualResult> {
    if !(x >= 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "capital must be nonnegative, got {x}"
        )));
    }
    match (spec, mode) {
        (MSpec::Lognormal(ls), EvalMode::ClosedForm) => {
            ls.validate()?;
            minimize_lognormal(ls, x, false)
        }
        (MSpec::Lognormal(ls), EvalMode::Quadrature) => {
            ls.validate()?;
            minimize_lognormal(ls, x, true)
        }
        (MSpec::Sampled(ss), EvalMode::MonteCarlo) => {
            let draws = ss.draw()?;
            minimize_sampled(&draws, x, ss.pair_units)
        }
        (MSpec::Lognormal(_), EvalMode::MonteCarlo) => Err(CoreError::InvalidInput(
            "monte_carlo mode needs a sample spec; build one with SampleSpec::lognormal"
                .to_string(),
        )),
        (MSpec::Sampled(_), _) => Err(CoreError::InvalidInput(
            "closed_form and quadrature modes require a lognormal spec".to_string(),
        )),
    }
}
