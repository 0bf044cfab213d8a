//! End-to-end acceptance battery.
//!
//! One test per shipped guarantee, ordered by the `aNN` prefix. Each test
//! asserts its stated tolerance and prints a single summary line (visible
//! with `--nocapture`), so the harness output reads as a pass/fail checklist.
//! Runtime budgets are asserted where the guarantee includes one.

use std::time::Instant;

use outperf_core::dual::{EvalMode, LognormalSpec, MSpec, SampleSpec};
use outperf_core::factor::{
    FactorBenchmark, FactorModel, Lambda, Psi, SimConfig, StepFn,
};
use outperf_core::finite::{
    avar_value, concave_majorant, dual_value, positivity_check, solve_pure, solve_randomized,
    FiniteSpace, FiniteTestInstance, Test,
};
use outperf_core::gbm::{
    etf_benchmark, success_probability, superhedge_price, vtilde_beta, EtfSpec, GbmMarket,
    PowerBenchmark,
};
use outperf_core::hjb::{solve_hjb, success_from_u, validate_mc, BenchmarkFn, HjbConfig, SuccessQuery};
use outperf_core::numerics::rng::RngStream;
use outperf_core::{dual, factor};

// Frozen reference values, independently computed to the shown digits.
const PHI_01: f64 = 0.539_827_837_277_029; // Phi(0.1)
const EXP_NEG_005: f64 = 0.995_012_479_192_682_3; // exp(-0.005)
const LOSS_VAR_1: f64 = 0.382_924_922_548_026_2; // Phi(1/2) - Phi(-1/2)
const LOSS_VAR_025: f64 = 0.197_412_651_365_847_45; // Phi(1/4) - Phi(-1/4)

/// Two equally likely atoms, G = (1,1), H = (1/2,3/2): the worked instance
/// with randomized value 2x, then (2x+1)/3, then 1, and pure value 0, 1/2, 1.
fn two_point(x: f64) -> FiniteTestInstance {
    FiniteTestInstance {
        space: FiniteSpace {
            atoms: vec!["u".to_string(), "d".to_string()],
            probs: vec![0.5, 0.5],
        },
        g_vertices: vec![vec![1.0, 1.0]],
        h_vertices: vec![vec![0.5, 1.5]],
        x,
    }
}

/// Two atoms, G = (2,2), H vertices (2,4) and (6,2): the instance whose
/// randomized value is not the concave majorant of its pure value.
fn hull_gap(x: f64) -> FiniteTestInstance {
    FiniteTestInstance {
        space: FiniteSpace {
            atoms: vec!["w1".to_string(), "w2".to_string()],
            probs: vec![0.5, 0.5],
        },
        g_vertices: vec![vec![2.0, 2.0]],
        h_vertices: vec![vec![2.0, 4.0], vec![6.0, 2.0]],
        x,
    }
}

fn fig1_market() -> GbmMarket {
    GbmMarket {
        s0: 1.0,
        sigma: 0.3,
        theta: 0.2,
        horizon: 1.0,
    }
}

#[test]
fn a01_two_point_golden_curve() {
    let started = Instant::now();
    let v = |x: f64| {
        if x <= 0.25 {
            2.0 * x
        } else if x <= 1.0 {
            (2.0 * x + 1.0) / 3.0
        } else {
            1.0
        }
    };
    let v1 = |x: f64| {
        if x < 0.25 {
            0.0
        } else if x < 1.0 {
            0.5
        } else {
            1.0
        }
    };
    for x in [0.1, 0.25, 0.5, 0.9, 1.0, 1.5] {
        let rand = solve_randomized(&two_point(x)).unwrap().value;
        let pure = solve_pure(&two_point(x)).unwrap().value;
        assert!((rand - v(x)).abs() <= 1e-9, "V({x}) = {rand}, want {}", v(x));
        assert!((pure - v1(x)).abs() <= 1e-9, "V1({x}) = {pure}, want {}", v1(x));
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!(
        "PASS two-point golden curve: 6 randomized and 6 pure values within 1e-9 ({:.0} ms)",
        elapsed.as_secs_f64() * 1e3
    );
}

#[test]
fn a02_binomial_market_reduces_to_pure_testing() {
    let started = Instant::now();
    // One-period binomial market with benchmark 1: the deflated benchmark
    // takes the two density values (1/2, 3/2), so the maximal success
    // probability is the pure testing value of this instance.
    for (x, want) in [
        (0.0, 0.0),
        (0.2, 0.0),
        (0.25, 0.5),
        (0.5, 0.5),
        (0.9, 0.5),
        (1.0, 1.0),
        (1.5, 1.0),
    ] {
        let pure = solve_pure(&two_point(x)).unwrap().value;
        assert_eq!(pure, want, "market value at x = {x}");
    }
    // Randomization genuinely helps on (1/4, 1): the gap to (2x+1)/3.
    for x in [0.3, 0.5, 0.7, 0.9, 0.99] {
        let rand = solve_randomized(&two_point(x)).unwrap().value;
        let pure = solve_pure(&two_point(x)).unwrap().value;
        assert!((rand - (2.0 * x + 1.0) / 3.0).abs() <= 1e-9);
        assert_eq!(pure, 0.5);
        assert!(rand > pure, "no gap at x = {x}");
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1 s");
    println!(
        "PASS binomial market: pure values exact on all three regimes, randomized gap on (1/4,1) ({:.0} ms)",
        elapsed.as_secs_f64() * 1e3
    );
}

#[test]
fn a03_dual_needs_the_full_hull() {
    // G = (1,1), H vertices (1,2) and (2,1), x = 1: the mixture (3/2,3/2)
    // is least favorable, and restricting to either vertex alone is worse.
    let instance = FiniteTestInstance {
        space: FiniteSpace {
            atoms: vec!["a".to_string(), "b".to_string()],
            probs: vec![0.5, 0.5],
        },
        g_vertices: vec![vec![1.0, 1.0]],
        h_vertices: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        x: 1.0,
    };
    let cert = dual_value(&instance).unwrap();
    assert!((cert.value - 2.0 / 3.0).abs() <= 1e-9, "hull value {}", cert.value);
    assert!((cert.a_hat - 2.0 / 3.0).abs() <= 1e-9, "a_hat {}", cert.a_hat);
    assert!((cert.h_hat[0] - 1.5).abs() <= 1e-9);
    assert!((cert.h_hat[1] - 1.5).abs() <= 1e-9);

    let single = |h: Vec<f64>| {
        let mut inst = instance.clone();
        inst.h_vertices = vec![h];
        dual_value(&inst).unwrap().value
    };
    let restricted = single(vec![1.0, 2.0]).min(single(vec![2.0, 1.0]));
    assert!((restricted - 0.75).abs() <= 1e-9, "restricted value {restricted}");
    println!(
        "PASS hull dual: mixture certificate 2/3 with a_hat 2/3 and H (3/2,3/2); vertex-restricted 3/4; both within 1e-9"
    );
}

#[test]
fn a04_hull_gap_table_and_majorant() {
    for (x, want_v, want_v1) in [
        (1.0, 0.6, 0.0),
        (2.25, 1.35, 1.0),
        (3.0, 5.0 / 3.0, 1.0),
        (4.0, 2.0, 2.0),
    ] {
        let v = solve_randomized(&hull_gap(x)).unwrap().value;
        let p = solve_pure(&hull_gap(x)).unwrap().value;
        assert!((v - want_v).abs() <= 1e-9, "V({x}) = {v}, want {want_v}");
        assert!((p - want_v1).abs() <= 1e-9, "V1({x}) = {p}, want {want_v1}");
    }
    // The smallest concave majorant of the pure value is x/2 on [0,4],
    // which disagrees with the randomized value at x = 1 (1/2 vs 3/5).
    let xs: Vec<f64> = (0..=16).map(|i| 0.25 * i as f64).collect();
    let v1: Vec<f64> = xs
        .iter()
        .map(|&x| solve_pure(&hull_gap(x)).unwrap().value)
        .collect();
    let major = concave_majorant(&xs, &v1).unwrap();
    for (x, m) in xs.iter().zip(&major) {
        assert!((m - x / 2.0).abs() <= 1e-9, "majorant({x}) = {m}");
    }
    let v_at_one = solve_randomized(&hull_gap(1.0)).unwrap().value;
    assert!((v_at_one - major[4]).abs() >= 0.09, "majorant coincides with V at 1");
    println!(
        "PASS hull-gap table: randomized and pure values within 1e-9; pure majorant is x/2 on [0,4] and differs from V at x=1"
    );
}

#[test]
fn a05_random_instance_battery() {
    let started = Instant::now();
    let mut rng = RngStream::new(0xACCE97, 0);
    let mut positive_cases = 0usize;
    for round in 0..200 {
        let n = 2 + (rng.uniform01() * 9.0) as usize;
        let n_g = 1 + (rng.uniform01() * 3.0) as usize;
        let n_h = 1 + (rng.uniform01() * 3.0) as usize;
        let mut probs: Vec<f64> = (0..n).map(|_| rng.uniform01() + 0.05).collect();
        let total: f64 = probs.iter().sum();
        for p in probs.iter_mut() {
            *p /= total;
        }
        let vertex = |rng: &mut RngStream| -> Vec<f64> {
            (0..n).map(|_| 2.0 * rng.uniform01()).collect()
        };
        let instance = FiniteTestInstance {
            space: FiniteSpace {
                atoms: (0..n).map(|i| format!("w{i}")).collect(),
                probs,
            },
            g_vertices: (0..n_g).map(|_| vertex(&mut rng)).collect(),
            h_vertices: (0..n_h).map(|_| vertex(&mut rng)).collect(),
            x: rng.uniform01(),
        };

        let s = solve_randomized(&instance).unwrap();
        let p = solve_pure(&instance).unwrap();
        let d = dual_value(&instance).unwrap();
        assert!(
            p.value <= s.value + 1e-9,
            "round {round}: pure {} exceeds randomized {}",
            p.value,
            s.value
        );
        assert!(
            (s.value - d.value).abs() <= 1e-8,
            "round {round}: primal {} vs dual {}",
            s.value,
            d.value
        );

        // Concavity and monotonicity along the budget axis.
        let at = |x: f64| {
            let mut inst = instance.clone();
            inst.x = x;
            solve_randomized(&inst).unwrap().value
        };
        let (x1, x2) = (instance.x, instance.x + 0.5);
        let (va, vm, vb) = (at(x1), at(0.5 * (x1 + x2)), at(x2));
        assert!(vm >= 0.5 * (va + vb) - 1e-8, "round {round}: midpoint concavity");
        assert!(va <= vb + 1e-8, "round {round}: monotonicity");

        // Complementary slackness: a positive multiplier pins the budget.
        if s.a_hat > 1e-9 {
            let Test::Randomized(ref test) = s.test else {
                panic!("randomized solver returned a pure test");
            };
            let moment: f64 = instance
                .space
                .probs
                .iter()
                .zip(&s.h_hat)
                .zip(&test.values)
                .map(|((p, h), t)| p * h * t)
                .sum();
            assert!(
                (moment - instance.x).abs() <= 1e-8,
                "round {round}: budget moment {moment} vs x {}",
                instance.x
            );
        }

        let (positive, _threshold) = positivity_check(&instance).unwrap();
        if positive {
            positive_cases += 1;
            assert!(d.a_hat > 1e-10, "round {round}: positivity but a_hat {}", d.a_hat);
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30 s");
    println!(
        "PASS random battery: 200 instances (pure <= randomized, duality 1e-8, concave+monotone 1e-8, binding budget, {} positivity cases) in {:.1} s",
        positive_cases,
        elapsed.as_secs_f64()
    );
}

#[test]
fn a06_gbm_closed_form_point() {
    let market = fig1_market();
    let bench = PowerBenchmark { beta: 1.0, p: 1.0 };
    let sol = success_probability(&market, &bench, 0.5).unwrap();
    assert!((sol.a_hat - EXP_NEG_005).abs() <= 1e-12, "a_hat {}", sol.a_hat);
    assert!(sol.d1.abs() <= 1e-12, "d1 {}", sol.d1);
    assert!((sol.d2 - 0.1).abs() <= 1e-12, "d2 {}", sol.d2);
    assert!((sol.v - PHI_01).abs() <= 1e-12, "v {}", sol.v);

    // Independent route 1: dual minimization with quadrature evaluation of
    // the same lognormal deflated benchmark.
    let spec = MSpec::Lognormal(LognormalSpec { m: -0.005, s: 0.1 });
    let quad = dual::minimize_dual(&spec, 0.5, EvalMode::Quadrature).unwrap();
    assert!((quad.v - sol.v).abs() <= 1e-6, "quadrature {} vs {}", quad.v, sol.v);

    // Independent route 2: Monte Carlo with a million antithetic draws.
    let sampled = MSpec::Sampled(
        SampleSpec::lognormal(LognormalSpec { m: -0.005, s: 0.1 }, 1_000_000, 2024, 7).unwrap(),
    );
    let mc = dual::minimize_dual(&sampled, 0.5, EvalMode::MonteCarlo).unwrap();
    let se = mc.std_error.expect("Monte Carlo mode reports a standard error");
    assert!(
        (mc.v - sol.v).abs() <= 3.0 * se,
        "Monte Carlo {} vs {} (3 SE = {})",
        mc.v,
        sol.v,
        3.0 * se
    );

    // Degenerate exponent: the deflated benchmark is constant and the value
    // is exactly x / F0.
    let flat = PowerBenchmark { beta: 1.0, p: 2.0 / 3.0 };
    let f0 = superhedge_price(&market, &flat).unwrap();
    let deg = success_probability(&market, &flat, 0.5).unwrap();
    assert_eq!(deg.v, 0.5 / f0, "degenerate branch must be exact");
    println!(
        "PASS closed-form point: a_hat, d1, d2, v within 1e-12; quadrature within 1e-6; Monte Carlo within {:.1e} (3 SE); degenerate branch exact",
        3.0 * se
    );
}

#[test]
fn a07_benchmark_scale_invariance() {
    let market = fig1_market();
    let bench = PowerBenchmark { beta: 1.0, p: 1.0 };
    let mut worst: f64 = 0.0;
    for beta in [1e-3, 0.1, 0.5, 1.0, 2.0, 10.0, 1e4] {
        for x in [0.05, 0.3, 0.5, 0.9, 1.0, 1.2] {
            let scaled = vtilde_beta(&market, &bench, beta * x, beta).unwrap();
            let unit = vtilde_beta(&market, &bench, x, 1.0).unwrap();
            worst = worst.max((scaled - unit).abs());
        }
    }
    assert!(worst <= 1e-12, "scale identity drift {worst}");

    // Cheap benchmarks are beaten with certainty.
    for beta in [0.5, 0.8] {
        assert_eq!(vtilde_beta(&market, &bench, 0.8, beta).unwrap(), 1.0);
    }

    // Expensive benchmarks only hurt.
    let betas = [0.25, 0.5, 0.9, 1.0, 1.1, 2.0, 5.0, 10.0, 100.0, 1e4];
    let values: Vec<f64> = betas
        .iter()
        .map(|&b| vtilde_beta(&market, &bench, 1.0, b).unwrap())
        .collect();
    for w in values.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "value increased along beta: {w:?}");
    }
    let far = *values.last().unwrap();
    assert!(far <= 1e-3, "value at beta 1e4 is {far}");
    println!(
        "PASS scale laws: invariance drift {worst:.2e} (budget 1e-12), plateau exact, nonincreasing in beta, far-scale value {far:.3e} <= 1e-3"
    );
}

#[test]
fn a08_etf_invariants() {
    let market = fig1_market();
    // Pricing round trip: the drag-corrected power benchmark costs its fund
    // value today.
    for p in -3..=3 {
        for l0 in [1.0, 2.5] {
            let bench = etf_benchmark(&market, &EtfSpec { l0, p: f64::from(p) }).unwrap();
            let f0 = superhedge_price(&market, &bench).unwrap();
            assert!(
                (f0 - l0).abs() <= 1e-12,
                "round trip p = {p}, l0 = {l0}: F0 = {f0}"
            );
        }
    }

    // Without a risk premium, leverage enters only through its magnitude.
    let neutral = GbmMarket { theta: 0.0, ..market };
    for p in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let up = etf_benchmark(&neutral, &EtfSpec { l0: 1.0, p }).unwrap();
        let down = etf_benchmark(&neutral, &EtfSpec { l0: 1.0, p: -p }).unwrap();
        let v_up = success_probability(&neutral, &up, 0.5).unwrap().v;
        let v_down = success_probability(&neutral, &down, 0.5).unwrap().v;
        assert!((v_up - v_down).abs() <= 1e-10, "asymmetry at p = {p}");
    }

    // Outperforming gets easier as leverage moves away from theta/sigma.
    let ratio = market.theta / market.sigma;
    let mut by_distance: Vec<(f64, f64)> = (-3..=3)
        .map(|p| {
            let bench = etf_benchmark(&market, &EtfSpec { l0: 1.0, p: f64::from(p) }).unwrap();
            let v = success_probability(&market, &bench, 0.5).unwrap().v;
            ((f64::from(p) - ratio).abs(), v)
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in by_distance.windows(2) {
        assert!(
            w[1].1 > w[0].1,
            "value did not increase with leverage distance: {w:?}"
        );
    }
    println!(
        "PASS leveraged funds: price round trip 1e-12 for p in -3..=3, zero-premium symmetry 1e-10, value increasing in |p - theta/sigma|"
    );
}

#[test]
fn a09_mmm_scan_argmin() {
    let started = Instant::now();
    let model = FactorModel::preset("bounded-tanh").unwrap();
    let grid = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let cfg = SimConfig {
        n_paths: 100_000,
        n_steps: 150,
        horizon: 1.0,
        rng: RngStream::new(31_415, 0),
        lambda: Lambda::Constant(0.0),
    };
    for bench in [
        FactorBenchmark::Constant { beta: 1.0 },
        FactorBenchmark::Stock { beta: 1.0 },
    ] {
        let scan = factor::mmm_scan(&model, &cfg, 0.5, &bench, &grid).unwrap();
        assert_eq!(scan.argmin_lambda(), 0.0, "bench {bench:?}");
        for row in &scan.rows {
            assert!(
                row.value_minus_reference >= -2.0 * row.paired_se_vs_reference,
                "bench {bench:?}, lambda {}: paired diff {} vs SE {}",
                row.lambda,
                row.value_minus_reference,
                row.paired_se_vs_reference
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, budget 2 min");
    println!(
        "PASS risk-premium scan: argmin at lambda 0 for both benchmark forms at 100k common paths, all paired differences >= -2 SE ({:.1} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn a10_convex_order_of_exponential_martingales() {
    // Constant rates make the terminal log exactly Gaussian at any step
    // count, so the Monte Carlo means are unbiased for the frozen values.
    let cfg = SimConfig {
        n_paths: 400_000,
        n_steps: 16,
        horizon: 1.0,
        rng: RngStream::new(424_242, 0),
        lambda: Lambda::Constant(0.0),
    };
    let result = factor::comparison_lemma_check(
        &StepFn::constant(1.0),
        &StepFn::constant(0.5),
        Psi::LossBelowOne,
        &cfg,
    )
    .unwrap();
    assert!(
        (result.lhs - LOSS_VAR_1).abs() <= 3.0 * result.lhs_se,
        "lhs {} vs {} (3 SE = {})",
        result.lhs,
        LOSS_VAR_1,
        3.0 * result.lhs_se
    );
    assert!(
        (result.rhs - LOSS_VAR_025).abs() <= 3.0 * result.rhs_se,
        "rhs {} vs {} (3 SE = {})",
        result.rhs,
        LOSS_VAR_025,
        3.0 * result.rhs_se
    );
    assert!(result.holds);
    assert!(
        result.lhs - result.rhs > 3.0 * result.diff_se,
        "ordering margin {} vs 3 SE {}",
        result.lhs - result.rhs,
        3.0 * result.diff_se
    );
    println!(
        "PASS convex order: both means within 3 SE of the exact values, ordered with margin {:.2e} > 3 SE {:.2e}",
        result.lhs - result.rhs,
        3.0 * result.diff_se
    );
}

#[test]
fn a11_hjb_constant_coefficient_pipeline() {
    let started = Instant::now();
    let model = FactorModel::preset("constant").unwrap();

    // Stock benchmark at the default resolution; the grid ratio matches the
    // drift-to-volatility ratio so the cross stencil stays monotone.
    let cfg = HjbConfig {
        ln_s_range: (-1.2, 1.2),
        y_range: (-1.2, 1.2),
        ln_z_range: (-0.8, 0.8),
        n_s: 48,
        n_y: 48,
        n_z: 48,
        n_time: 200,
        horizon: 1.0,
        lambda_max: 0.25,
        benchmark: BenchmarkFn::Stock { beta: 1.0 },
    };
    let sol = solve_hjb(&model, &cfg).unwrap();
    let grid = sol.grid();

    // Closed form for the deflated stock benchmark: lognormal with log-mean
    // ln s - alpha^2 tau / 2 and log-std alpha sqrt(tau), alpha = 0.1.
    let closed_form = |tau: f64, ln_s: f64, ln_z: f64| -> f64 {
        let spec = MSpec::Lognormal(LognormalSpec {
            m: ln_s - 0.005 * tau,
            s: 0.1 * tau.sqrt(),
        });
        dual::q_value(&spec, ln_z.exp(), EvalMode::ClosedForm).unwrap().0
    };
    // Relative 2% on the inner half of the grid, with a 5e-4 absolute floor
    // where the value itself decays below measurability.
    let mut worst_ratio: f64 = 0.0;
    for t_idx in [0, cfg.n_time / 2] {
        let tau = cfg.horizon - grid.dt * t_idx as f64;
        for i in cfg.n_s / 4..=3 * cfg.n_s / 4 {
            for j in cfg.n_y / 4..=3 * cfg.n_y / 4 {
                for k in cfg.n_z / 4..=3 * cfg.n_z / 4 {
                    let num = sol.u[t_idx][(i * cfg.n_y + j) * cfg.n_z + k];
                    let cf = closed_form(tau, grid.ln_s[i], grid.ln_z[k]);
                    let ratio = (num - cf).abs() / (0.02 * cf.abs() + 5e-4);
                    worst_ratio = worst_ratio.max(ratio);
                }
            }
        }
    }
    assert!(worst_ratio <= 1.0, "closed-form deviation ratio {worst_ratio}");

    // Bounds and z-monotonicity hold exactly on every stored slice; the
    // diagnostics record how far the raw stencil strayed before repair.
    for slice in &sol.u {
        assert!(slice.iter().all(|&u| (0.0..=1.0).contains(&u)));
        for column in slice.chunks_exact(cfg.n_z) {
            assert!(column.windows(2).all(|w| w[0] >= w[1]));
        }
    }
    assert!(
        sol.diagnostics.max_z_monotonicity_violation <= 1e-8,
        "pre-repair z drift {}",
        sol.diagnostics.max_z_monotonicity_violation
    );
    assert!(
        sol.diagnostics.max_bound_excursion <= 1e-4,
        "pre-clamp excursion {}",
        sol.diagnostics.max_bound_excursion
    );

    // Capital readout at the centered query.
    let query = SuccessQuery { t: 0.0, s: 1.0, y: 0.0, x: 0.5 };
    let (v, _a_hat) = success_from_u(&sol, &query).unwrap();
    assert!((v - PHI_01).abs() <= 0.02 * PHI_01, "readout v = {v}");

    // Simulation check of the readout, stock benchmark.
    let sim = SimConfig {
        n_paths: 20_000,
        n_steps: 16,
        horizon: 1.0,
        rng: RngStream::new(123, 0),
        lambda: Lambda::Constant(0.0),
    };
    let report = validate_mc(&sol, &model, &sim, &query).unwrap();
    assert!(report.probability_check_ok, "stock event check: {report:?}");
    assert!(report.budget_check_ok, "stock budget check: {report:?}");
    let stock_excursion = sol.diagnostics.max_bound_excursion;
    drop(sol);

    // Constant benchmark: flat in ln s, fine z-axis for a sharp minimizer,
    // validated at 100k paths.
    let flat_cfg = HjbConfig {
        n_s: 16,
        n_y: 16,
        n_z: 96,
        n_time: 400,
        benchmark: BenchmarkFn::Constant { beta: 1.0 },
        ..cfg
    };
    let flat = solve_hjb(&model, &flat_cfg).unwrap();
    assert!(flat.diagnostics.max_z_monotonicity_violation <= 1e-12);
    let sim = SimConfig {
        n_paths: 100_000,
        n_steps: 16,
        horizon: 1.0,
        rng: RngStream::new(77, 0),
        lambda: Lambda::Constant(0.0),
    };
    let flat_report = validate_mc(&flat, &model, &sim, &query).unwrap();
    assert!(flat_report.probability_check_ok, "event check: {flat_report:?}");
    assert!(flat_report.budget_check_ok, "budget check: {flat_report:?}");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() <= 300.0, "took {elapsed:?}, budget 5 min");
    println!(
        "PASS PDE pipeline: 2% closed-form match (worst ratio {:.2}, 5e-4 floor), bounds and z-monotonicity exact on all slices, pre-clamp excursion {:.1e}, readout within 2% of Phi(0.1), both simulation identities within 3 SE ({:.1} s)",
        worst_ratio,
        stock_excursion,
        elapsed.as_secs_f64()
    );
}

#[test]
fn a12_avar_collapse_and_brute_force() {
    // At level 1 the density polytope degenerates and the risk is the
    // capped payoff transform of the plain testing value.
    let space = FiniteSpace {
        atoms: vec!["a".to_string(), "b".to_string()],
        probs: vec![0.5, 0.5],
    };
    let z = vec![vec![0.5, 1.5]];
    let plain = |space: &FiniteSpace, z: &[Vec<f64>], k: f64, x: f64| -> f64 {
        let instance = FiniteTestInstance {
            space: space.clone(),
            g_vertices: vec![vec![1.0; space.len()]],
            h_vertices: z.to_vec(),
            x: (k - x) / k,
        };
        k - k * dual_value(&instance).unwrap().value
    };
    let avar = avar_value(&space, &[1.0, 0.0], 1.0, &z, 0.25, 1.0).unwrap();
    assert!(
        (avar - plain(&space, &z, 1.0, 0.25)).abs() <= 1e-9,
        "level-1 collapse: {avar}"
    );

    let space3 = FiniteSpace {
        atoms: vec!["a".to_string(), "b".to_string(), "c".to_string()],
        probs: vec![0.2, 0.5, 0.3],
    };
    let z3 = vec![vec![1.2, 0.4, 1.8], vec![0.9, 1.3, 0.6]];
    let avar3 = avar_value(&space3, &[2.0, 0.5, 1.1], 2.0, &z3, 0.8, 1.0).unwrap();
    assert!(
        (avar3 - plain(&space3, &z3, 2.0, 0.8)).abs() <= 1e-9,
        "level-1 collapse on 3 atoms: {avar3}"
    );

    // Independent oracle for the 2-atom case: scan the first test weight on
    // a fine grid; for each weight the budget constraint pins the best
    // second weight exactly, so the scan is an exhaustive search over
    // randomized tests up to grid resolution.
    let budget = (1.0 - 0.25) / 1.0;
    let mut best: f64 = 0.0;
    let steps = 1_000_000;
    for i in 0..=steps {
        let x1 = i as f64 / steps as f64;
        let x2 = ((budget - 0.5 * z[0][0] * x1) / (0.5 * z[0][1])).min(1.0);
        if x2 >= 0.0 {
            best = best.max(0.5 * (x1 + x2));
        }
    }
    let brute = 1.0 - best;
    assert!(
        (avar - brute).abs() <= 1e-6,
        "risk {avar} vs brute force {brute}"
    );
    println!(
        "PASS capped risk: level-1 collapse within 1e-9 on 2 and 3 atoms; 2-atom value {avar:.6} matches a 1e6-point brute force within 1e-6"
    );
}
