//! Closed-form outperformance probabilities in a complete geometric Brownian
//! motion market with power benchmarks.
//!
//! With stock dynamics dS = S (sigma theta dt + sigma dW), market price of
//! risk theta, and benchmark F = beta S_T^p, the super-hedge price is
//!
//! ```text
//! F0 = beta s0^p exp(sigma^2 p (p-1) T / 2)
//! ```
//!
//! and for initial capital x < F0 the maximal probability of ending above the
//! benchmark is
//!
//! ```text
//! V(x) = x a + Phi(d2(a)) - a F0 Phi(d1(a))   at   a = h(Phi^{-1}(x/F0)),
//! h(y) = exp(-y |z| sqrt(T) - z^2 T / 2 - ln F0),       z = p sigma - theta,
//! d1(a) = (-ln(a F0) - z^2 T/2) / (|z| sqrt(T)),   d2(a) = d1(a) + |z| sqrt(T).
//! ```
//!
//! The degenerate case p sigma = theta makes Z_T F constant and the value
//! linear: V(x) = x / F0. Everything here is exact up to the normal CDF, so
//! these routines double as oracles for the quadrature, Monte Carlo, and PDE
//! solvers.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::normal::{norm_cdf, norm_inv_cdf};

/// Complete-market parameters. `theta` is the Sharpe ratio of the stock, so
/// the drift under the physical measure is `sigma * theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmMarket {
    pub s0: f64,
    pub sigma: f64,
    pub theta: f64,
    pub horizon: f64,
}

impl GbmMarket {
    pub fn validate(&self) -> Result<()> {
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "initial price must be positive, got {}",
                self.s0
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "volatility must be positive, got {}",
                self.sigma
            )));
        }
        if !self.theta.is_finite() {
            return Err(CoreError::InvalidInput("theta must be finite".to_string()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }
}

/// Benchmark payoff beta * S_T^p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBenchmark {
    pub beta: f64,
    pub p: f64,
}

impl PowerBenchmark {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "benchmark scale must be nonnegative, got {}",
                self.beta
            )));
        }
        if !self.p.is_finite() {
            return Err(CoreError::InvalidInput(
                "benchmark power must be finite".to_string(),
            ));
        }
        Ok(())
    }
}

/// A constant-leverage fund: value L_0 today, holding `p` times its value in
/// the stock. Its terminal value is a power benchmark after the volatility
/// drag correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtfSpec {
    pub l0: f64,
    pub p: f64,
}

/// Value and minimizer data of the closed-form dual.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GbmDualSolution {
    /// Maximal success probability.
    pub v: f64,
    /// Dual minimizer; infinite when x = 0 (the infimum is approached, not
    /// attained) and 0 on the super-hedge branch x >= F0.
    pub a_hat: f64,
    pub d1: f64,
    pub d2: f64,
    /// Super-hedge price of the benchmark.
    pub f0: f64,
    /// Effective exponent p*sigma - theta.
    pub z: f64,
}

/// Detection threshold for the degenerate branch p*sigma = theta.
const Z_DEGENERATE: f64 = 1e-12;

/// Risk-neutral price of the benchmark: beta s0^p exp(sigma^2 p(p-1) T/2).
pub fn superhedge_price(market: &GbmMarket, bench: &PowerBenchmark) -> Result<f64> {
    market.validate()?;
    bench.validate()?;
    let GbmMarket {
        s0, sigma, horizon, ..
    } = *market;
    Ok(bench.beta * s0.powf(bench.p) * (0.5 * sigma * sigma * bench.p * (bench.p - 1.0) * horizon).exp())
}

/// Maximal probability of outperforming the benchmark with capital `x`.
pub fn success_probability(
    market: &GbmMarket,
    bench: &PowerBenchmark,
    x: f64,
) -> Result<GbmDualSolution> {
    if !(x >= 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "capital must be nonnegative, got {x}"
        )));
    }
    let f0 = superhedge_price(market, bench)?;
    let z = bench.p * market.sigma - market.theta;
    if x >= f0 {
        // Super-hedging branch: outperform with certainty.
        return Ok(GbmDualSolution {
            v: 1.0,
            a_hat: 0.0,
            d1: f64::INFINITY,
            d2: f64::INFINITY,
            f0,
            z,
        });
    }
    if z.abs() < Z_DEGENERATE {
        // Z_T F is a.s. constant equal to F0: the value is linear in x.
        return Ok(GbmDualSolution {
            v: x / f0,
            a_hat: 1.0 / f0,
            d1: 0.0,
            d2: 0.0,
            f0,
            z,
        });
    }
    if x == 0.0 {
        // V(0) = P{F = 0} = 0; the dual infimum is only approached as a
        // grows without bound.
        return Ok(GbmDualSolution {
            v: 0.0,
            a_hat: f64::INFINITY,
            d1: f64::NEG_INFINITY,
            d2: f64::NEG_INFINITY,
            f0,
            z,
        });
    }
    let sq = z.abs() * market.horizon.sqrt();
    let y = norm_inv_cdf(x / f0)?;
    let a_hat = (-y * sq - 0.5 * z * z * market.horizon - f0.ln()).exp();
    let d2 = (-(a_hat * f0).ln() + 0.5 * z * z * market.horizon) / sq;
    let d1 = d2 - sq;
    let v = x * a_hat + norm_cdf(d2) - a_hat * f0 * norm_cdf(d1);
    Ok(GbmDualSolution {
        v,
        a_hat,
        d1,
        d2,
        f0,
        z,
    })
}

/// Smallest capital whose success probability reaches `target`, by bisection
/// on the closed form (exact inverse x = target*F0 on the degenerate branch).
pub fn capital_for_probability(
    market: &GbmMarket,
    bench: &PowerBenchmark,
    target: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) {
        return Err(CoreError::InvalidInput(format!(
            "target probability must lie in [0,1], got {target}"
        )));
    }
    let f0 = superhedge_price(market, bench)?;
    if target == 0.0 || f0 == 0.0 {
        return Ok(0.0);
    }
    if target == 1.0 {
        return Ok(f0);
    }
    let z = bench.p * market.sigma - market.theta;
    if z.abs() < Z_DEGENERATE {
        return Ok(target * f0);
    }
    let (mut lo, mut hi) = (0.0f64, f0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if success_probability(market, bench, mid)?.v >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * f0.max(1.0) {
            break;
        }
    }
    Ok(hi)
}

/// Power-benchmark encoding of a constant-leverage fund: the drag-corrected
/// scale beta = l0 s0^{-p} exp(p(1-p) sigma^2 T/2), chosen so that the
/// super-hedge price of the resulting benchmark is exactly l0.
pub fn etf_benchmark(market: &GbmMarket, etf: &EtfSpec) -> Result<PowerBenchmark> {
    market.validate()?;
    if !(etf.l0 > 0.0 && etf.l0.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "fund value must be positive, got {}",
            etf.l0
        )));
    }
    if !etf.p.is_finite() {
        return Err(CoreError::InvalidInput(
            "leverage factor must be finite".to_string(),
        ));
    }
    let GbmMarket {
        s0, sigma, horizon, ..
    } = *market;
    let beta = etf.l0 * s0.powf(-etf.p) * (0.5 * sigma * sigma * etf.p * (1.0 - etf.p) * horizon).exp();
    Ok(PowerBenchmark { beta, p: etf.p })
}

/// Success probability against the rescaled benchmark `scale * F`: the
/// economy-of-scale diagnostic. Satisfies V(scale*x; scale) = V(x; 1), is
/// nonincreasing in `scale`, and equals 1 for scale <= x/F0.
pub fn vtilde_beta(
    market: &GbmMarket,
    bench: &PowerBenchmark,
    x: f64,
    scale: f64,
) -> Result<f64> {
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "benchmark scale must be nonnegative, got {scale}"
        )));
    }
    let scaled = PowerBenchmark {
        beta: bench.beta * scale,
        p: bench.p,
    };
    Ok(success_probability(market, &scaled, x)?.v)
}
