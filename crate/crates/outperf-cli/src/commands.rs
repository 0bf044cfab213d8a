//! Command execution.
//!
//! Each runner parses its `params` block, calls into the core library,
//! writes one artifact (CSV or JSON), and returns a one-line summary for
//! stdout. Errors carry the process exit code: 1 for configuration and
//! input problems, 2 for numerical failures inside the solvers.
//!
//! Artifacts are deterministic: floats are printed with the shortest
//! round-trip representation, so rerunning an identical config and seed
//! reproduces the output byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use outperf_core::dual::{minimize_dual, EvalMode, LognormalSpec, MSpec, SampleSpec};
use outperf_core::factor::{comparison_lemma_check, mmm_scan, Lambda, SimConfig};
use outperf_core::finite::{solve_pure, solve_randomized, FiniteTestInstance};
use outperf_core::gbm::{etf_benchmark, success_probability, vtilde_beta, EtfSpec, GbmMarket};
use outperf_core::hjb::{solve_hjb, success_from_u};
use outperf_core::numerics::rng::RngStream;
use outperf_core::CoreError;

use crate::config::{
    Command, ComparisonCheckParams, DualEvalParams, EtfSurfaceParams, FiniteSolveParams,
    GbmBetaCurveParams, GbmCurveParams, HjbQueryParams, HjbSolveParams, MSpecParam, MmmScanParams,
    RunConfig,
};

/// Terminal outcome of a run: exit code plus a message for stderr.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<CoreError> for Failure {
    fn from(err: CoreError) -> Self {
        Failure {
            code: if err.is_input_error() { 1 } else { 2 },
            message: err.to_string(),
        }
    }
}

fn input_err(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

pub fn run(
    config_path: &Path,
    seed_override: Option<u64>,
    output_override: Option<PathBuf>,
) -> Result<String, Failure> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| input_err(format!("config {}: {e}", config_path.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| input_err(format!("config {}: {e}", config_path.display())))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(output) = output_override {
        cfg.output = Some(output);
    }
    match cfg.command {
        Command::FiniteSolve => finite_solve(&cfg),
        Command::GbmCurve => gbm_curve(&cfg),
        Command::GbmBetaCurve => gbm_beta_curve(&cfg),
        Command::EtfSurface => etf_surface(&cfg),
        Command::DualEval => dual_eval(&cfg),
        Command::MmmScan => mmm_scan_cmd(&cfg),
        Command::ComparisonCheck => comparison_check(&cfg),
        Command::HjbSolve => hjb_solve(&cfg),
        Command::HjbQuery => hjb_query(&cfg),
    }
}

fn parse_params<T: DeserializeOwned>(cfg: &RunConfig) -> Result<T, Failure> {
    serde_json::from_value(cfg.params.clone()).map_err(|e| input_err(format!("params: {e}")))
}

/// Final artifact path: `OUTPERF_OUT_DIR` prefixes relative outputs.
fn resolve_output(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let path = cfg
        .output
        .clone()
        .ok_or_else(|| input_err("output: an artifact path is required"))?;
    match std::env::var_os("OUTPERF_OUT_DIR") {
        Some(dir) if path.is_relative() => Ok(PathBuf::from(dir).join(path)),
        _ => Ok(path),
    }
}

fn write_artifact(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| input_err(format!("output {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, contents).map_err(|e| input_err(format!("output {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| input_err(format!("serialize: {e}")))?;
    text.push('\n');
    write_artifact(path, &text)
}

/// All CSV rows go through this: finite check enforces the artifact
/// invariant, Display gives shortest round-trip floats.
fn push_row(out: &mut String, fields: &[f64]) -> Result<(), Failure> {
    for (i, v) in fields.iter().enumerate() {
        if !v.is_finite() {
            return Err(Failure {
                code: 2,
                message: format!("non-finite value {v} in output row"),
            });
        }
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v}");
    }
    out.push('\n');
    Ok(())
}

fn finite_solve(cfg: &RunConfig) -> Result<String, Failure> {
    let params: FiniteSolveParams = parse_params(cfg)?;
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| input_err("input: finite-solve needs an instance file"))?;
    let text = fs::read_to_string(input)
        .map_err(|e| input_err(format!("input {}: {e}", input.display())))?;
    let mut instance: FiniteTestInstance = serde_json::from_str(&text)
        .map_err(|e| input_err(format!("input {}: {e}", input.display())))?;
    if let Some(x) = params.x {
        instance.x = x;
    }
    let randomized = solve_randomized(&instance)?;
    let pure = solve_pure(&instance)?;
    let output = resolve_output(cfg)?;
    #[derive(Serialize)]
    struct FiniteArtifact<'a> {
        randomized: &'a outperf_core::finite::TestSolution,
        pure: &'a outperf_core::finite::TestSolution,
    }
    write_json(
        &output,
        &FiniteArtifact {
            randomized: &randomized,
            pure: &pure,
        },
    )?;
    Ok(format!(
        "finite-solve: V = {}, a_hat = {}, pure V1 = {} -> {}",
        randomized.value,
        randomized.a_hat,
        pure.value,
        output.display()
    ))
}

fn gbm_curve(cfg: &RunConfig) -> Result<String, Failure> {
    let params: GbmCurveParams = parse_params(cfg)?;
    let xs = params.x_grid.points("params.x_grid")?;
    if let Some(bad) = xs.iter().find(|x| **x <= 0.0) {
        return Err(input_err(format!(
            "params.x_grid: capital must be positive, got {bad}"
        )));
    }
    let thetas = params
        .theta_grid
        .clone()
        .unwrap_or_else(|| vec![params.market.theta]);
    if thetas.is_empty() {
        return Err(input_err("params.theta_grid: at least one drift value"));
    }
    let mut out = String::from("x,theta,v,a_hat\n");
    for &theta in &thetas {
        let market = GbmMarket {
            theta,
            ..params.market
        };
        for &x in &xs {
            let sol = success_probability(&market, &params.benchmark, x)?;
            push_row(&mut out, &[x, theta, sol.v, sol.a_hat])?;
        }
    }
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "gbm-curve: {} rows over {} drift values -> {}",
        xs.len() * thetas.len(),
        thetas.len(),
        output.display()
    ))
}

fn gbm_beta_curve(cfg: &RunConfig) -> Result<String, Failure> {
    let params: GbmBetaCurveParams = parse_params(cfg)?;
    let betas = params.beta_grid.points("params.beta_grid")?;
    let mut out = String::from("beta,v\n");
    for &beta in &betas {
        let v = vtilde_beta(&params.market, &params.benchmark, params.x, beta)?;
        push_row(&mut out, &[beta, v])?;
    }
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "gbm-beta-curve: {} rows at x = {} -> {}",
        betas.len(),
        params.x,
        output.display()
    ))
}

fn etf_surface(cfg: &RunConfig) -> Result<String, Failure> {
    let params: EtfSurfaceParams = parse_params(cfg)?;
    let ps = params.p_grid.points("params.p_grid")?;
    let xs = params.x_grid.points("params.x_grid")?;
    if let Some(bad) = xs.iter().find(|x| **x <= 0.0) {
        return Err(input_err(format!(
            "params.x_grid: capital must be positive, got {bad}"
        )));
    }
    let mut out = String::from("p,x,v\n");
    for &p in &ps {
        let benchmark = etf_benchmark(&params.market, &EtfSpec { l0: params.l0, p })?;
        for &x in &xs {
            let sol = success_probability(&params.market, &benchmark, x)?;
            push_row(&mut out, &[p, x, sol.v])?;
        }
    }
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "etf-surface: {} rows ({} exposures x {} capital levels) -> {}",
        ps.len() * xs.len(),
        ps.len(),
        xs.len(),
        output.display()
    ))
}

fn dual_eval(cfg: &RunConfig) -> Result<String, Failure> {
    let params: DualEvalParams = parse_params(cfg)?;
    let n_paths = params.n_paths.unwrap_or(100_000);
    let spec = match (&params.spec, params.mode) {
        (MSpecParam::Lognormal { m, s }, EvalMode::MonteCarlo) => MSpec::Sampled(
            SampleSpec::lognormal(LognormalSpec { m: *m, s: *s }, n_paths, cfg.seed, 0)?,
        ),
        (MSpecParam::Lognormal { m, s }, _) => MSpec::Lognormal(LognormalSpec { m: *m, s: *s }),
        (MSpecParam::GbmCall { market, strike }, EvalMode::MonteCarlo) => {
            MSpec::Sampled(SampleSpec::gbm_call(market, *strike, n_paths, cfg.seed, 0)?)
        }
        (MSpecParam::GbmCall { .. }, _) => {
            return Err(input_err(
                "params.mode: gbm_call supports monte_carlo only",
            ));
        }
    };
    let result = minimize_dual(&spec, params.x, params.mode)?;
    let output = resolve_output(cfg)?;
    write_json(&output, &result)?;
    Ok(format!(
        "dual-eval: v = {}, a_hat = {} -> {}",
        result.v,
        result.a_hat,
        output.display()
    ))
}

fn mmm_scan_cmd(cfg: &RunConfig) -> Result<String, Failure> {
    let params: MmmScanParams = parse_params(cfg)?;
    let model = params.model.build()?;
    let lambdas = params.lambda_grid.points("params.lambda_grid")?;
    let sim = SimConfig {
        n_paths: params.n_paths,
        n_steps: params.n_steps,
        horizon: params.horizon,
        rng: RngStream::new(cfg.seed, 0),
        lambda: Lambda::Constant(0.0),
    };
    let scan = mmm_scan(&model, &sim, params.x, &params.benchmark, &lambdas)?;
    let mut out = String::from("lambda,a_hat,value,se\n");
    for row in &scan.rows {
        push_row(&mut out, &[row.lambda, row.a_hat, row.value, row.std_error])?;
    }
    let argmin = scan.argmin_lambda();
    let best = &scan.rows[scan.argmin_index];
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "mmm-scan: argmin lambda = {}, value = {} (se {}) -> {}",
        argmin,
        best.value,
        best.std_error,
        output.display()
    ))
}

fn comparison_check(cfg: &RunConfig) -> Result<String, Failure> {
    let params: ComparisonCheckParams = parse_params(cfg)?;
    let sim = SimConfig {
        n_paths: params.n_paths,
        n_steps: params.n_steps,
        horizon: params.horizon,
        rng: RngStream::new(cfg.seed, 0),
        lambda: Lambda::Constant(0.0),
    };
    let result = comparison_lemma_check(&params.rate_a, &params.rate_b, params.psi, &sim)?;
    let output = resolve_output(cfg)?;
    write_json(&output, &result)?;
    Ok(format!(
        "comparison-check: lhs = {} (se {}), rhs = {} (se {}), holds = {} -> {}",
        result.lhs,
        result.lhs_se,
        result.rhs,
        result.rhs_se,
        result.holds,
        output.display()
    ))
}

fn hjb_solve(cfg: &RunConfig) -> Result<String, Failure> {
    let params: HjbSolveParams = parse_params(cfg)?;
    let model = params.model.build()?;
    let solution = solve_hjb(&model, &params.config)?;
    let slices = params.slices.clone().unwrap_or_else(|| vec![0]);
    if slices.is_empty() {
        return Err(input_err("params.slices: at least one time index"));
    }
    let mut out = String::new();
    for (i, &t_idx) in slices.iter().enumerate() {
        let csv = solution.slice_csv(t_idx)?;
        if i == 0 {
            out.push_str(&csv);
        } else {
            // one header row for the whole artifact
            match csv.split_once('\n') {
                Some((_, body)) => out.push_str(body),
                None => {}
            }
        }
    }
    let d = &solution.diagnostics;
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "hjb-solve: {} slices, dt = {}, bound excursion = {:.3e}, z drift = {:.3e} -> {}",
        slices.len(),
        d.dt,
        d.max_bound_excursion,
        d.max_z_monotonicity_violation,
        output.display()
    ))
}

fn hjb_query(cfg: &RunConfig) -> Result<String, Failure> {
    let params: HjbQueryParams = parse_params(cfg)?;
    if params.queries.is_empty() {
        return Err(input_err("params.queries: at least one query"));
    }
    let model = params.model.build()?;
    let solution = solve_hjb(&model, &params.config)?;
    let mut out = String::from("t,s,y,x,v,a_hat\n");
    for query in &params.queries {
        let (v, a_hat) = success_from_u(&solution, query)?;
        push_row(&mut out, &[query.t, query.s, query.y, query.x, v, a_hat])?;
    }
    let output = resolve_output(cfg)?;
    write_artifact(&output, &out)?;
    Ok(format!(
        "hjb-query: {} queries -> {}",
        params.queries.len(),
        output.display()
    ))
}
