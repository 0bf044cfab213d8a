//! Exact composite hypothesis testing on finite probability spaces.
//!
//! A randomized test is a vector X with values in [0,1]. Given a polytope of
//! alternatives G (vertex list `g_vertices`), a polytope of null densities H
//! (vertex list `h_vertices`), and a budget x, the randomized value is
//!
//! ```text
//! V(x) = max { min_j E[G_j X] : 0 <= X <= 1, E[H_k X] <= x for all k }
//! ```
//!
//! and the pure value V1(x) restricts X to indicator functions. Both are
//! computed exactly: V by a small epigraph LP, V1 by exhaustive enumeration.
//! The dual representation
//!
//! ```text
//! V(x) = min_{a >= 0} { x a + min_{G, H} E[(G - a H)^+] }
//! ```
//!
//! is solved as a single companion LP whose multipliers recover the
//! certificate (a_hat, H_hat, G_hat). The optimal randomized test is a
//! threshold rule: 1 on {G_hat > a_hat H_hat}, a constant B0 on the tie set
//! {G_hat = a_hat H_hat}, 0 elsewhere.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::numerics::lp::{solve_lp, LpProblem, LpStatus, Sense};

/// Relative tolerance for classifying atoms as strict/boundary/zero under a
/// dual certificate.
const TIE_TOL: f64 = 1e-9;

/// A finite probability space with labeled atoms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteSpace {
    pub atoms: Vec<String>,
    pub probs: Vec<f64>,
}

impl FiniteSpace {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// E[Y] under the space's probabilities.
    pub fn expectation(&self, values: &[f64]) -> f64 {
        self.probs.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.probs.is_empty() {
            return Err(CoreError::InvalidInput("space has no atoms".to_string()));
        }
        if self.atoms.len() != self.probs.len() {
            return Err(CoreError::InvalidInput(format!(
                "{} labels for {} probabilities",
                self.atoms.len(),
                self.probs.len()
            )));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CoreError::InvalidInput(
                "probabilities must be finite and nonnegative".to_string(),
            ));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(CoreError::InvalidInput(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// A testing problem: maximize the worst-case detection probability over the
/// G-polytope subject to budget constraints from the H-polytope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiniteTestInstance {
    #[serde(flatten)]
    pub space: FiniteSpace,
    pub g_vertices: Vec<Vec<f64>>,
    pub h_vertices: Vec<Vec<f64>>,
    pub x: f64,
}

impl FiniteTestInstance {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        let n = self.space.len();
        for (name, family) in [("g_vertices", &self.g_vertices), ("h_vertices", &self.h_vertices)]
        {
            if family.is_empty() {
                return Err(CoreError::InvalidInput(format!("{name} is empty")));
            }
            for (i, v) in family.iter().enumerate() {
                if v.len() != n {
                    return Err(CoreError::InvalidInput(format!(
                        "{name}[{i}] has length {}, expected {n}",
                        v.len()
                    )));
                }
                if v.iter().any(|c| !c.is_finite() || *c < 0.0) {
                    return Err(CoreError::InvalidInput(format!(
                        "{name}[{i}] must be finite and nonnegative"
                    )));
                }
            }
        }
        if !self.x.is_finite() || self.x < 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "budget must be a nonnegative real, got {}",
                self.x
            )));
        }
        Ok(())
    }
}

/// A [0,1]-valued test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedTest {
    pub values: Vec<f64>,
}

/// An indicator test (acceptance region as a subset of atoms).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PureTest {
    pub indicator: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Test {
    Randomized(RandomizedTest),
    Pure(PureTest),
}

/// Dual certificate of the randomized problem: the minimizing multiplier
/// `a_hat`, the least favorable elements `h_hat` in co(H) and `g_hat` in
/// co(G), and the certified value `x a_hat + E[(g_hat - a_hat h_hat)^+]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualCertificate {
    pub value: f64,
    pub a_hat: f64,
    pub h_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
}

/// Solver output for one instance.
///
/// The certificate fields (`a_hat`, `h_hat`, `g_hat`, the masses, `b0`)
/// always describe the dual of the randomized problem, so for a
/// [`solve_randomized`] result `x*a_hat + E[(g_hat - a_hat*h_hat)^+]` equals
/// `value` (strong duality), while for a [`solve_pure`] result it is an upper
/// bound on `value` (the randomized relaxation).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestSolution {
    pub value: f64,
    pub test: Test,
    pub a_hat: f64,
    pub h_hat: Vec<f64>,
    pub g_hat: Vec<f64>,
    /// E[h_hat ; g_hat = a_hat h_hat] (tie atoms under the certificate).
    pub boundary_mass: f64,
    /// E[h_hat ; g_hat > a_hat h_hat].
    pub strict_mass: f64,
    /// Tie-set level of the optimal threshold test, when x lies in
    /// [strict_mass, strict_mass + boundary_mass].
    pub b0: Option<f64>,
}

/// Purified test on the product space Omega x [0,1]: with an independent
/// uniform U, the indicator 1{U < threshold(omega)} reproduces every moment
/// E[M X] of the randomized test exactly, since E[1{U < c}] = c.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurifiedTest {
    pub thresholds: Vec<f64>,
}

impl PurifiedTest {
    /// Evaluate the pure test at (atom, uniform draw).
    pub fn evaluate(&self, omega: usize, u: f64) -> bool {
        u < self.thresholds[omega]
    }
}

/// Maximal randomized testing value by the epigraph LP, with the dual
/// certificate attached.
pub fn solve_randomized(instance: &FiniteTestInstance) -> Result<TestSolution> {
    instance.validate()?;
    let n = instance.space.len();
    let p = &instance.space.probs;
    let n_g = instance.g_vertices.len();
    let n_h = instance.h_vertices.len();

    // Variables: X_0..X_{n-1}, t. Maximize t subject to
    //   t - E[G_j X] <= 0   for every G vertex,
    //   E[H_k X] <= x       for every H vertex.
    let mut rows = Vec::with_capacity(n_g + n_h);
    let mut senses = Vec::with_capacity(n_g + n_h);
    let mut rhs = Vec::with_capacity(n_g + n_h);
    for g in &instance.g_vertices {
        let mut row = vec![0.0; n + 1];
        for w in 0..n {
            row[w] = -p[w] * g[w];
        }
        row[n] = 1.0;
        rows.push(row);
        senses.push(Sense::Le);
        rhs.push(0.0);
    }
    for h in &instance.h_vertices {
        let mut row = vec![0.0; n + 1];
        for w in 0..n {
            row[w] = p[w] * h[w];
        }
        rows.push(row);
        senses.push(Sense::Le);
        rhs.push(instance.x);
    }
    let mut objective = vec![0.0; n + 1];
    objective[n] = 1.0;
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.push((0.0, f64::INFINITY));

    let lp = LpProblem {
        maximize: true,
        objective,
        rows,
        senses,
        rhs,
        bounds,
    };
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(CoreError::Numerical(format!(
            "epigraph LP ended with status {:?}",
            sol.status
        )));
    }
    let values: Vec<f64> = sol.x[..n].iter().map(|v| v.clamp(0.0, 1.0)).collect();

    let cert = dual_value(instance)?;
    let (strict_mass, boundary_mass) = certificate_masses(instance, &cert);
    let b0 = classify_b0(strict_mass, boundary_mass, instance.x).ok();

    Ok(TestSolution {
        value: sol.objective,
        test: Test::Randomized(RandomizedTest { values }),
        a_hat: cert.a_hat,
        h_hat: cert.h_hat,
        g_hat: cert.g_hat,
        boundary_mass,
        strict_mass,
        b0,
    })
}

/// Maximal pure testing value by exhaustive enumeration of indicator tests.
/// Ties are broken toward the lexicographically smallest indicator vector.
pub fn solve_pure(instance: &FiniteTestInstance) -> Result<TestSolution> {
    instance.validate()?;
    let n = instance.space.len();
    if n > 24 {
        return Err(CoreError::Capacity(format!(
            "pure-test enumeration is capped at 24 atoms, got {n}"
        )));
    }
    let p = &instance.space.probs;
    // Probability-weighted vertex rows, so a subset's moments are plain sums.
    let wg: Vec<Vec<f64>> = instance
        .g_vertices
        .iter()
        .map(|g| (0..n).map(|w| p[w] * g[w]).collect())
        .collect();
    let wh: Vec<Vec<f64>> = instance
        .h_vertices
        .iter()
        .map(|h| (0..n).map(|w| p[w] * h[w]).collect())
        .collect();

    let budget = instance.x + 1e-12 * (1.0 + instance.x.abs());
    let mut best_value = f64::NEG_INFINITY;
    let mut best_mask: u32 = 0;
    'outer: for mask in 0u32..(1u32 << n) {
        for h in &wh {
            let mut acc = 0.0;
            let mut bits = mask;
            while bits != 0 {
                let w = bits.trailing_zeros() as usize;
                acc += h[w];
                bits &= bits - 1;
            }
            if acc > budget {
                continue 'outer;
            }
        }
        let mut value = f64::INFINITY;
        for g in &wg {
            let mut acc = 0.0;
            let mut bits = mask;
            while bits != 0 {
                let w = bits.trailing_zeros() as usize;
                acc += g[w];
                bits &= bits - 1;
            }
            value = value.min(acc);
        }
        if value > best_value + 1e-12 {
            best_value = value;
            best_mask = mask;
        } else if value > best_value - 1e-12 && lex_smaller(mask, best_mask, n) {
            best_mask = mask;
        }
    }

    let indicator: Vec<bool> = (0..n).map(|w| best_mask >> w & 1 == 1).collect();
    let cert = dual_value(instance)?;
    let (strict_mass, boundary_mass) = certificate_masses(instance, &cert);
    Ok(TestSolution {
        value: best_value,
        test: Test::Pure(PureTest { indicator }),
        a_hat: cert.a_hat,
        h_hat: cert.h_hat,
        g_hat: cert.g_hat,
        boundary_mass,
        strict_mass,
        b0: None,
    })
}

/// True when mask `a` reads lexicographically smaller than `b` as a boolean
/// vector indexed by atom (false < true).
fn lex_smaller(a: u32, b: u32, n: usize) -> bool {
    for w in 0..n {
        let (ba, bb) = (a >> w & 1, b >> w & 1);
        if ba != bb {
            return ba < bb;
        }
    }
    false
}

/// Dual representation, solved exactly as one LP over (nu, mu, u):
///
/// ```text
/// minimize  x sum(mu) + E[u]
/// subject to u_w >= sum_j nu_j G_j(w) - sum_k mu_k H_k(w),  u, mu, nu >= 0,
///            sum_j nu_j = 1
/// ```
///
/// whose optimum is min_{a>=0} { x a + min_{G in co(G), H in co(H)} E[(G - aH)^+] }
/// with a = sum(mu), H_hat = sum(mu_k H_k)/a, G_hat = sum(nu_j G_j).
pub fn dual_value(instance: &FiniteTestInstance) -> Result<DualCertificate> {
    instance.validate()?;
    let n = instance.space.len();
    let p = &instance.space.probs;
    let n_g = instance.g_vertices.len();
    let n_h = instance.h_vertices.len();
    let n_vars = n_g + n_h + n;

    let mut rows = Vec::with_capacity(n + 1);
    let mut senses = Vec::with_capacity(n + 1);
    let mut rhs = Vec::with_capacity(n + 1);
    for w in 0..n {
        // sum_j nu_j G_j(w) - sum_k mu_k H_k(w) - u_w <= 0
        let mut row = vec![0.0; n_vars];
        for (j, g) in instance.g_vertices.iter().enumerate() {
            row[j] = g[w];
        }
        for (k, h) in instance.h_vertices.iter().enumerate() {
            row[n_g + k] = -h[w];
        }
        row[n_g + n_h + w] = -1.0;
        rows.push(row);
        senses.push(Sense::Le);
        rhs.push(0.0);
    }
    let mut simplex_row = vec![0.0; n_vars];
    simplex_row[..n_g].fill(1.0);
    rows.push(simplex_row);
    senses.push(Sense::Eq);
    rhs.push(1.0);

    let mut objective = vec![0.0; n_vars];
    for k in 0..n_h {
        objective[n_g + k] = instance.x;
    }
    for w in 0..n {
        objective[n_g + n_h + w] = p[w];
    }

    let lp = LpProblem {
        maximize: false,
        objective,
        rows,
        senses,
        rhs,
        bounds: vec![(0.0, f64::INFINITY); n_vars],
    };
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(CoreError::Numerical(format!(
            "dual LP ended with status {:?}",
            sol.status
        )));
    }

    let nu = &sol.x[..n_g];
    let mu = &sol.x[n_g..n_g + n_h];
    let a_hat: f64 = mu.iter().sum();
    let g_hat: Vec<f64> = (0..n)
        .map(|w| {
            instance
                .g_vertices
                .iter()
                .zip(nu)
                .map(|(g, nj)| nj * g[w])
                .sum()
        })
        .collect();
    let h_hat: Vec<f64> = if a_hat > 1e-12 {
        (0..n)
            .map(|w| {
                instance
                    .h_vertices
                    .iter()
                    .zip(mu)
                    .map(|(h, mk)| mk * h[w])
                    .sum::<f64>()
                    / a_hat
            })
            .collect()
    } else {
        // With a_hat = 0 the least favorable H is immaterial; report the
        // first vertex as a representative element of co(H).
        instance.h_vertices[0].clone()
    };

    Ok(DualCertificate {
        value: sol.objective,
        a_hat,
        h_hat,
        g_hat,
    })
}

/// Splits E[h_hat] into the mass on {g_hat > a_hat h_hat} (strict) and on the
/// tie set {g_hat = a_hat h_hat} (boundary), with a scale-aware tolerance.
fn certificate_masses(instance: &FiniteTestInstance, cert: &DualCertificate) -> (f64, f64) {
    let p = &instance.space.probs;
    let mut strict = 0.0;
    let mut boundary = 0.0;
    for w in 0..p.len() {
        let lhs = cert.g_hat[w];
        let rhs = cert.a_hat * cert.h_hat[w];
        let scale = 1.0 + lhs.abs() + rhs.abs();
        if lhs - rhs > TIE_TOL * scale {
            strict += p[w] * cert.h_hat[w];
        } else if (lhs - rhs).abs() <= TIE_TOL * scale {
            boundary += p[w] * cert.h_hat[w];
        }
    }
    (strict, boundary)
}

fn classify_b0(strict_mass: f64, boundary_mass: f64, x: f64) -> Result<f64> {
    let tol = 1e-9 * (1.0 + strict_mass.abs() + boundary_mass.abs());
    if x < strict_mass - tol || x > strict_mass + boundary_mass + tol {
        return Err(CoreError::Precondition(format!(
            "budget {x} lies outside [{strict_mass}, {}]",
            strict_mass + boundary_mass
        )));
    }
    if (x - strict_mass).abs() <= tol {
        return Ok(0.0);
    }
    if (x - strict_mass - boundary_mass).abs() <= tol {
        return Ok(1.0);
    }
    Ok(((x - strict_mass) / boundary_mass).clamp(0.0, 1.0))
}

/// Tie-set level B0 of the optimal threshold test at budget `x`: 0 when the
/// strict set alone exhausts the budget, 1 when strict plus boundary does,
/// and (x - strict_mass)/boundary_mass strictly between.
pub fn b0_threshold(solution: &TestSolution, x: f64) -> Result<f64> {
    classify_b0(solution.strict_mass, solution.boundary_mass, x)
}

/// Rewrites a randomized test as a pure test on Omega x [0,1] and verifies
/// the moment identity E[M 1{U < X(omega)}] = E[M X] for every vertex M of
/// both families. The identity is analytic (E[1{U < c}] = c), so the check
/// asserts exact equality of the two evaluation orders.
pub fn purify_with_uniform(
    test: &RandomizedTest,
    instance: &FiniteTestInstance,
) -> Result<PurifiedTest> {
    instance.validate()?;
    if test.values.len() != instance.space.len() {
        return Err(CoreError::InvalidInput(format!(
            "test has {} values for {} atoms",
            test.values.len(),
            instance.space.len()
        )));
    }
    if test.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CoreError::InvalidInput(
            "test values must lie in [0,1]".to_string(),
        ));
    }
    let purified = PurifiedTest {
        thresholds: test.values.clone(),
    };
    for m in instance.g_vertices.iter().chain(&instance.h_vertices) {
        let randomized: f64 = instance
            .space
            .probs
            .iter()
            .zip(m)
            .zip(&test.values)
            .map(|((p, mv), xv)| p * mv * xv)
            .sum();
        // E[M 1{U < thr}] = E[M thr] by independence of U.
        let pure: f64 = instance
            .space
            .probs
            .iter()
            .zip(m)
            .zip(&purified.thresholds)
            .map(|((p, mv), thr)| p * mv * thr)
            .sum();
        if pure != randomized {
            return Err(CoreError::Numerical(
                "purification failed to preserve a vertex moment".to_string(),
            ));
        }
    }
    Ok(purified)
}

/// Whether the dual multiplier is guaranteed positive: computes the threshold
/// max_k E[H_k ; all G vertices positive] and reports (0 < x < threshold,
/// threshold). When the condition holds, `dual_value` must return a_hat > 0.
pub fn positivity_check(instance: &FiniteTestInstance) -> Result<(bool, f64)> {
    instance.validate()?;
    let n = instance.space.len();
    let p = &instance.space.probs;
    let all_g_positive: Vec<bool> = (0..n)
        .map(|w| instance.g_vertices.iter().all(|g| g[w] > 0.0))
        .collect();
    let threshold = instance
        .h_vertices
        .iter()
        .map(|h| {
            (0..n)
                .filter(|&w| all_g_positive[w])
                .map(|w| p[w] * h[w])
                .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok((0.0 < instance.x && instance.x < threshold, threshold))
}

/// Minimal average value at risk of the liability -F achievable by a seller
/// who collected `x` against a claim capped at `k`.
///
/// With the transform X = (K - F)/K, the problem becomes a randomized test:
/// maximize the worst expectation of X over the density polytope
/// {Q : dQ/dP <= 1/level} subject to E[Z X] <= (K - x)/K for all Z. The inner
/// minimization over densities is folded into the LP by duality, giving the
/// joint program
///
/// ```text
/// maximize   t - (1/level) sum_w s_w
/// subject to p_w t - s_w - p_w X_w <= 0,   E[Z_k X] <= (K - x)/K,
///            0 <= X <= 1, s >= 0, t free
/// ```
///
/// and the reported risk is K - K V. The payoff vector only enters through
/// validation: the value depends on the constraint set, not on F itself.
pub fn avar_value(
    space: &FiniteSpace,
    f_payoff: &[f64],
    k: f64,
    z_vertices: &[Vec<f64>],
    x: f64,
    level: f64,
) -> Result<f64> {
    space.validate()?;
    let n = space.len();
    if !(k > 0.0 && k.is_finite()) {
        return Err(CoreError::InvalidInput(format!(
            "cap must be positive, got {k}"
        )));
    }
    if f_payoff.len() != n {
        return Err(CoreError::InvalidInput(format!(
            "payoff has {} entries for {n} atoms",
            f_payoff.len()
        )));
    }
    if f_payoff.iter().any(|f| !(0.0..=k).contains(f)) {
        return Err(CoreError::InvalidInput(format!(
            "payoff must lie in [0, {k}]"
        )));
    }
    if !(0.0 < level && level <= 1.0) {
        return Err(CoreError::InvalidInput(format!(
            "risk level must lie in (0, 1], got {level}"
        )));
    }
    if z_vertices.is_empty() {
        return Err(CoreError::InvalidInput("z_vertices is empty".to_string()));
    }
    for (i, z) in z_vertices.iter().enumerate() {
        if z.len() != n || z.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(CoreError::InvalidInput(format!(
                "z_vertices[{i}] must be nonnegative with {n} entries"
            )));
        }
    }
    if !x.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "capital must be finite, got {x}"
        )));
    }

    let budget = (k - x) / k;
    let p = &space.probs;
    // Variables: X_0..X_{n-1}, t, s_0..s_{n-1}.
    let n_vars = 2 * n + 1;
    let mut rows = Vec::with_capacity(n + z_vertices.len());
    let mut senses = Vec::new();
    let mut rhs = Vec::new();
    for w in 0..n {
        let mut row = vec![0.0; n_vars];
        row[w] = -p[w];
        row[n] = p[w];
        row[n + 1 + w] = -1.0;
        rows.push(row);
        senses.push(Sense::Le);
        rhs.push(0.0);
    }
    for z in z_vertices {
        let mut row = vec![0.0; n_vars];
        for w in 0..n {
            row[w] = p[w] * z[w];
        }
        rows.push(row);
        senses.push(Sense::Le);
        rhs.push(budget);
    }
    let mut objective = vec![0.0; n_vars];
    objective[n] = 1.0;
    for w in 0..n {
        objective[n + 1 + w] = -1.0 / level;
    }
    let mut bounds = vec![(0.0, 1.0); n];
    bounds.push((f64::NEG_INFINITY, f64::INFINITY));
    bounds.extend(std::iter::repeat((0.0, f64::INFINITY)).take(n));

    let lp = LpProblem {
        maximize: true,
        objective,
        rows,
        senses,
        rhs,
        bounds,
    };
    let sol = solve_lp(&lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(k - k * sol.objective),
        LpStatus::Infeasible => Err(CoreError::Precondition(format!(
            "no admissible test meets the capital constraint (budget {budget})"
        ))),
        LpStatus::Unbounded => Err(CoreError::Numerical(
            "risk LP reported unbounded, which violates its structure".to_string(),
        )),
    }
}

/// Smallest concave majorant of the piecewise-linear interpolant of
/// (xs, vs), evaluated back on xs (the upper convex hull of the points).
pub fn concave_majorant(xs: &[f64], vs: &[f64]) -> Result<Vec<f64>> {
    if xs.len() != vs.len() {
        return Err(CoreError::InvalidInput(format!(
            "{} grid points for {} values",
            xs.len(),
            vs.len()
        )));
    }
    if xs.is_empty() {
        return Err(CoreError::InvalidInput("empty grid".to_string()));
    }
    if xs.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(CoreError::InvalidInput(
            "grid must be strictly increasing".to_string(),
        ));
    }
    if xs.iter().chain(vs).any(|v| !v.is_finite()) {
        return Err(CoreError::InvalidInput(
            "grid and values must be finite".to_string(),
        ));
    }
    // Upper hull by a monotone scan: keep only clockwise turns.
    let mut hull: Vec<usize> = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (xs[b] - xs[a]) * (vs[i] - vs[a]) - (vs[b] - vs[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = vec![0.0; xs.len()];
    let mut seg = 0;
    for i in 0..xs.len() {
        while seg + 1 < hull.len() && xs[hull[seg + 1]] < xs[i] {
            seg += 1;
        }
        let a = hull[seg];
        let b = hull[(seg + 1).min(hull.len() - 1)];
        out[i] = if a == b || xs[i] <= xs[a] {
            vs[a]
        } else {
            let t = (xs[i] - xs[a]) / (xs[b] - xs[a]);
            vs[a] + t * (vs[b] - vs[a])
        };
    }
    Ok(out)
}
