//! Gaussian quadrature rules and expectation helpers.
//!
//! Nodes and weights are generated by Newton iteration on the orthogonal
//! polynomial recurrences, so any order is available without tables.

use crate::error::{CoreError, Result};

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss-Legendre rule on [-1, 1], exact for polynomials of degree 2n - 1.
pub fn gauss_legendre(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(CoreError::InvalidInput(
            "quadrature order must be positive".to_string(),
        ));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess for the i-th root.
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: evaluates P_n(z) and its derivative.
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j as f64 + 1.0) * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    Ok(GaussRule { nodes, weights })
}

/// Gauss-Hermite rule with weight function exp(-x^2) on the real line.
pub fn gauss_hermite(n: usize) -> Result<GaussRule> {
    if n == 0 {
        return Err(CoreError::InvalidInput(
            "quadrature order must be positive".to_string(),
        ));
    }
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..m {
        // Empirical initial guesses for the largest roots, then extrapolation.
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Orthonormal Hermite recurrence.
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-14 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Center node of odd rules is exactly zero.
    if n % 2 == 1 {
        nodes[m - 1] = 0.0;
    }
    Ok(GaussRule { nodes, weights })
}

/// Integral of `f` over [lo, hi] by an affinely mapped Gauss-Legendre rule.
pub fn integrate(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, rule: &GaussRule) -> f64 {
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + half * t);
    }
    acc * half
}

/// E[f(Z)] for standard normal Z, by Gauss-Hermite with the change of
/// variables z = sqrt(2) t. Accurate only when `f` is smooth.
pub fn normal_expectation(mut f: impl FnMut(f64) -> f64, n: usize) -> Result<f64> {
    let rule = gauss_hermite(n)?;
    let mut acc = 0.0;
    for (&t, &w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(std::f64::consts::SQRT_2 * t);
    }
    Ok(acc / std::f64::consts::PI.sqrt())
}
