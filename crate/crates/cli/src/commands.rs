use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use maskbc::coding::{derive_coefficients, inner_region, state_v_given_y2, wdp_residuals, CodingCoefficients, Fault};
use maskbc::extremal::{
    enhance, random_candidate, solve_gaussian_subproblem, test_candidate, verify_preservation, Candidate1D,
    Component,
};
use maskbc::instances::random_strategy;
use maskbc::matcore::SymMat;
use maskbc::mcval::cross_check;
use maskbc::model::{build_joint, validate, ConstraintCheck, FeasibilityReport, StrategyJson};
use maskbc::optimize::{frontier_sweep, FrontierQuery, Sweep};
use maskbc::quadrature::QuadOptions;
use maskbc::region::eval_region_flagged;
use maskbc::{acceptance, ChannelSpec, Error, RegionPoint, Strategy};

use crate::args::{Format, Unit};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_FAIL: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InfeasibleStrategy { .. } | Error::Infeasible { .. } => EXIT_INFEASIBLE,
            Error::MaxIterations { .. }
            | Error::EnhancementFailed { .. }
            | Error::Quadrature { .. }
            | Error::DegenerateSample(_) => EXIT_FAIL,
            _ => EXIT_USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

/// Rendered output plus the exit status it implies.
pub struct Output {
    pub text: String,
    pub code: u8,
}

type Run = Result<Output, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<ChannelSpec, Failure> {
    ChannelSpec::from_json(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
}

fn load_strategy(path: &Path, spec: &ChannelSpec) -> Result<Strategy, Failure> {
    let strat = Strategy::from_json(&read(path)?).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
    if strat.t() != spec.t() {
        return Err(Failure::usage(format!("strategy has t = {} but channel has t = {}", strat.t(), spec.t())));
    }
    Ok(strat)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Region {
    #[serde(rename = "R1")]
    r1: f64,
    #[serde(rename = "R2")]
    r2: f64,
    #[serde(rename = "E1")]
    e1: f64,
    #[serde(rename = "E2")]
    e2: f64,
}

impl Region {
    fn new(p: &RegionPoint, unit: Unit) -> Self {
        Self { r1: unit.from_nats(p.r1), r2: unit.from_nats(p.r2), e1: unit.from_nats(p.e1), e2: unit.from_nats(p.e2) }
    }
}

#[derive(Serialize)]
struct EvalOut<'a> {
    unit: Unit,
    #[serde(flatten)]
    region: Option<Region>,
    /// A component was negative from roundoff and clamped to 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    clamped: Option<bool>,
    feasibility: &'a FeasibilityReport,
}

pub fn eval(spec_path: &Path, strat_path: &Path, unit: Unit) -> Run {
    let spec = load_spec(spec_path)?;
    let strat = load_strategy(strat_path, &spec)?;
    let report = validate(&spec, &strat)?;
    if !report.passed {
        let worst = report.worst().expect("failed report has a violated check");
        let text = json(&EvalOut { unit, region: None, clamped: None, feasibility: &report });
        eprintln!("infeasible strategy: {} (eigenvalue margin {:.6e})", worst.name, worst.margin);
        return Ok(Output { text, code: EXIT_INFEASIBLE });
    }
    let ev = eval_region_flagged(&spec, &strat)?;
    let out = EvalOut { unit, region: Some(Region::new(&ev.point, unit)), clamped: Some(ev.clamped), feasibility: &report };
    Ok(Output { text: json(&out), code: 0 })
}

#[derive(Serialize)]
struct CheckOut {
    name: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl CheckOut {
    fn measured(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            status: if residual <= tolerance { "PASS" } else { "FAIL" },
            residual: Some(residual),
            tolerance: Some(tolerance),
            note: None,
        }
    }

    fn from_constraint(prefix: &str, c: &ConstraintCheck) -> Self {
        Self {
            name: format!("{prefix}{}", c.name),
            status: if c.passed { "PASS" } else { "FAIL" },
            residual: Some(c.margin),
            tolerance: None,
            note: Some("margin: minimum eigenvalue, or minus a residual norm".into()),
        }
    }

    fn skipped(name: impl Into<String>, note: String) -> Self {
        Self { name: name.into(), status: "SKIP", residual: None, tolerance: None, note: Some(note) }
    }
}

#[derive(Serialize)]
struct VerifyOut {
    passed: bool,
    checks: Vec<CheckOut>,
}

fn rel_gap(a: &RegionPoint, b: &RegionPoint) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| {
            let scale = x.abs().max(y.abs());
            if scale < 1e-12 { (x - y).abs() } else { (x - y).abs() / scale }
        })
        .fold(0.0, f64::max)
}

fn coding_checks(
    spec: &ChannelSpec,
    strat: &Strategy,
    coeffs: &CodingCoefficients,
    prefix: &str,
    tol: f64,
    rel_tol: f64,
    out: &mut Vec<CheckOut>,
) -> Result<(), Failure> {
    for (name, r) in wdp_residuals(spec, strat, coeffs)?.families() {
        out.push(CheckOut::measured(format!("{prefix}wdp: {name}"), r, tol));
    }
    let joint = build_joint(spec, strat, coeffs)?;
    out.push(CheckOut::measured(format!("{prefix}I(S;V|Y2)"), state_v_given_y2(&joint)?.abs(), tol));
    let gap = rel_gap(&inner_region(spec, strat)?, &eval_region_flagged(spec, strat)?.point);
    out.push(CheckOut::measured(format!("{prefix}inner/outer agreement"), gap, rel_tol));
    Ok(())
}

pub struct VerifyArgs<'a> {
    pub spec: &'a Path,
    pub strategy: &'a Path,
    pub trials: usize,
    pub seed: u64,
    pub inject_fault: Option<&'a str>,
    pub extremal: bool,
    pub mu: &'a [f64],
    pub tol: f64,
    pub rel_tol: f64,
}

pub fn verify(a: &VerifyArgs) -> Run {
    let spec = load_spec(a.spec)?;
    let strat = load_strategy(a.strategy, &spec)?;
    let fault = a.inject_fault.map(|f| f.parse::<Fault>()).transpose()?;
    let report = validate(&spec, &strat)?;
    if !report.passed {
        return Err(report.into_error().into());
    }
    let mut checks = Vec::new();
    let mut coeffs = derive_coefficients(&spec, &strat)?;
    if let Some(f) = fault {
        coeffs = coeffs.with_fault(f, 0.1);
    }
    coding_checks(&spec, &strat, &coeffs, "", a.tol, a.rel_tol, &mut checks)?;

    if a.trials > 0 {
        if spec.k().min_eigenvalue() <= 0.0 {
            checks.push(CheckOut::skipped("random trials", "random strategies need a positive definite K".into()));
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            for i in 0..a.trials {
                let s = random_strategy(&mut rng, &spec);
                let c = derive_coefficients(&spec, &s)?;
                coding_checks(&spec, &s, &c, &format!("trial {i}: "), a.tol, a.rel_tol, &mut checks)?;
            }
        }
    }

    if a.extremal {
        if spec.degraded() {
            for &mu in a.mu {
                let sol = solve_gaussian_subproblem(&spec, mu)?;
                let p = format!("mu={mu}: ");
                checks.push(CheckOut::measured(format!("{p}stationarity"), sol.grad_norm, 1e-7));
                let enh = match enhance(&spec, mu, &sol.k_x_star, &sol.m1, &sol.m2) {
                    Ok(e) => e,
                    Err(Error::EnhancementFailed { check, margin }) => {
                        checks.push(CheckOut {
                            name: format!("{p}{check}"),
                            status: "FAIL",
                            residual: Some(margin),
                            tolerance: None,
                            note: None,
                        });
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                for c in enh.checks(&spec) {
                    checks.push(CheckOut::from_constraint(&p, &c));
                }
                let pres = verify_preservation(&spec, &enh)?;
                checks.push(CheckOut::measured(format!("{p}preservation identity 1"), pres.identity1, 1e-8));
                checks.push(CheckOut::measured(format!("{p}preservation identity 2"), pres.identity2, 1e-8));
                checks.push(CheckOut::measured(format!("{p}enhanced value gap"), pres.value_gap, 1e-8));
            }
        } else {
            let e = Error::DegradednessRequired { margin: spec.degradedness_margin() };
            checks.push(CheckOut::skipped("extremal", e.to_string()));
        }
    }

    let passed = checks.iter().all(|c| c.status != "FAIL");
    Ok(Output { text: json(&VerifyOut { passed, checks }), code: if passed { 0 } else { EXIT_FAIL } })
}

pub const CSV_HEADER: &str = "mu,e1_budget,e2_budget,R1,R2,E1,E2,objective,kkt_residual";

#[derive(Serialize)]
struct FrontierRow {
    mu: f64,
    /// `null` when unconstrained.
    e1_budget: Option<f64>,
    e2_budget: Option<f64>,
    status: &'static str,
    #[serde(flatten)]
    region: Option<Region>,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kkt_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monotonicity_violation: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    active_constraints: Option<maskbc::optimize::ActiveConstraints>,
    #[serde(skip_serializing_if = "Option::is_none")]
    strategy: Option<StrategyJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
}

#[derive(Serialize)]
struct FrontierOut {
    unit: Unit,
    seed: u64,
    rows: Vec<FrontierRow>,
}

pub struct FrontierArgs<'a> {
    pub spec: &'a Path,
    pub mu_list: &'a [f64],
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub format: Format,
}

/// Shortest round-trip form, switching to exponent notation outside
/// `[1e-4, 1e16)`.
fn csv_num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else if v != 0.0 && !(1e-4..1e16).contains(&v.abs()) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn frontier(a: &FrontierArgs, unit: Unit) -> Run {
    if a.mu_list.is_empty() {
        return Err(Failure::usage("--mu-list is empty"));
    }
    let spec = load_spec(a.spec)?;
    let budget = |e: Option<f64>| e.map_or(f64::INFINITY, |v| unit.to_nats(v));
    let mut base = FrontierQuery::new(spec, a.mu_list[0]).with_budgets(budget(a.e1), budget(a.e2)).with_seed(a.seed);
    base.options.restarts = a.restarts;
    let rows = frontier_sweep(&base, &Sweep::Mu(a.mu_list.to_vec()))?;

    let mut feasible = 0;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let finite = |e: f64| e.is_finite().then(|| unit.from_nats(e));
        let mut r = FrontierRow {
            mu: row.mu,
            e1_budget: finite(row.e1_budget),
            e2_budget: finite(row.e2_budget),
            status: "ok",
            region: None,
            objective: None,
            kkt_residual: None,
            converged: None,
            monotonicity_violation: None,
            active_constraints: None,
            strategy: None,
            message: None,
        };
        match row.result {
            Ok(p) => {
                feasible += 1;
                r.region = Some(Region::new(&p.point, unit));
                r.objective = Some(unit.from_nats(p.objective));
                r.kkt_residual = Some(p.kkt_residual);
                r.converged = Some(p.converged);
                r.monotonicity_violation = Some(p.monotonicity_violation);
                r.active_constraints = Some(p.active_constraints);
                r.strategy = Some(StrategyJson::from(&p.strategy));
            }
            Err(e @ Error::Infeasible { .. }) => {
                r.status = "infeasible";
                r.message = Some(e.to_string());
            }
            Err(e) => return Err(e.into()),
        }
        out.push(r);
    }

    let text = match a.format {
        Format::Json => json(&FrontierOut { unit, seed: a.seed, rows: out }),
        Format::Csv => {
            let mut s = String::new();
            writeln!(s, "{CSV_HEADER}").unwrap();
            for r in &out {
                let budget = |e: Option<f64>| e.map_or("inf".to_string(), csv_num);
                write!(s, "{},{},{}", csv_num(r.mu), budget(r.e1_budget), budget(r.e2_budget)).unwrap();
                match (&r.region, r.objective, r.kkt_residual) {
                    (Some(g), Some(obj), Some(kkt)) => {
                        for v in [g.r1, g.r2, g.e1, g.e2, obj, kkt] {
                            write!(s, ",{}", csv_num(v)).unwrap();
                        }
                    }
                    _ => s.push_str(",infeasible,infeasible,infeasible,infeasible,infeasible,infeasible"),
                }
                s.push('\n');
            }
            s
        }
    };
    Ok(Output { text, code: if feasible > 0 { 0 } else { EXIT_INFEASIBLE } })
}

#[derive(Serialize)]
struct McTerm {
    estimate: f64,
    std_error: f64,
    closed_form: f64,
    /// `null` when the standard error is 0 and the gap is not.
    z: f64,
}

#[derive(Serialize)]
struct McOut {
    unit: Unit,
    n: usize,
    seed: u64,
    low_sample: bool,
    passed: bool,
    terms: BTreeMap<String, McTerm>,
}

pub fn mc(spec_path: &Path, strat_path: &Path, n: usize, seed: u64, unit: Unit) -> Run {
    let spec = load_spec(spec_path)?;
    let strat = load_strategy(strat_path, &spec)?;
    let r = cross_check(&spec, &strat, n, seed)?;
    if r.low_sample {
        eprintln!("warning: n = {n} is below {}; standard errors are unreliable", maskbc::mcval::LOW_SAMPLE);
    }
    let terms = r
        .estimates
        .iter()
        .map(|(name, e)| {
            let term = McTerm {
                estimate: unit.from_nats(e.estimate),
                std_error: unit.from_nats(e.std_error),
                closed_form: unit.from_nats(r.closed_forms[name]),
                z: r.z_scores[name],
            };
            (name.clone(), term)
        })
        .collect();
    let out = McOut { unit, n: r.n, seed: r.seed, low_sample: r.low_sample, passed: r.passed, terms };
    Ok(Output { text: json(&out), code: if r.passed { 0 } else { EXIT_FAIL } })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CandidateFile {
    components: Vec<Component>,
}

#[derive(Serialize)]
struct CandidateOut {
    source: String,
    objective: f64,
    margin: f64,
    status: &'static str,
}

#[derive(Serialize)]
struct ExtremalOut {
    unit: Unit,
    mu: f64,
    k_x_star: Vec<Vec<f64>>,
    m1: Vec<Vec<f64>>,
    m2: Vec<Vec<f64>>,
    k_zt1: Vec<Vec<f64>>,
    k_zt2: Vec<Vec<f64>>,
    objective: f64,
    f: f64,
    kkt_residual: f64,
    checks: Vec<CheckOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gaussian_optimum: Option<f64>,
    candidates: Vec<CandidateOut>,
    passed: bool,
}

/// Candidates may not beat the Gaussian optimum by more than this.
const MARGIN_TOL: f64 = 1e-6;

pub struct ExtremalArgs<'a> {
    pub spec: &'a Path,
    pub mu: f64,
    pub candidates: Option<&'a Path>,
    pub random: usize,
    pub seed: u64,
}

pub fn extremal_test(a: &ExtremalArgs, unit: Unit) -> Run {
    let spec = load_spec(a.spec)?;
    let mut cands: Vec<(String, Candidate1D)> = Vec::new();
    if let Some(path) = a.candidates {
        let raw: Vec<CandidateFile> = serde_json::from_str(&read(path)?)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        for (i, c) in raw.into_iter().enumerate() {
            cands.push((format!("file[{i}]"), Candidate1D::new(c.components)?));
        }
    }
    if !cands.is_empty() || a.random > 0 {
        if spec.t() != 1 {
            return Err(Failure::usage("candidate laws need a scalar channel (t = 1)"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        for i in 0..a.random {
            cands.push((format!("random[{i}]"), random_candidate(&mut rng, spec.k()[(0, 0)])));
        }
    }

    let sol = solve_gaussian_subproblem(&spec, a.mu)?;
    let enh = enhance(&spec, a.mu, &sol.k_x_star, &sol.m1, &sol.m2)?;
    let mut checks: Vec<CheckOut> = enh.checks(&spec).iter().map(|c| CheckOut::from_constraint("", c)).collect();
    let pres = verify_preservation(&spec, &enh)?;
    checks.push(CheckOut::measured("preservation identity 1", pres.identity1, 1e-8));
    checks.push(CheckOut::measured("preservation identity 2", pres.identity2, 1e-8));
    checks.push(CheckOut::measured("enhanced value gap", pres.value_gap, 1e-8));

    let opts = QuadOptions::default();
    let mut gaussian_optimum = None;
    let mut cand_out = Vec::new();
    for (source, c) in &cands {
        let rep = test_candidate(&spec, a.mu, c, &opts)?;
        gaussian_optimum = Some(unit.from_nats(rep.gaussian_optimum));
        cand_out.push(CandidateOut {
            source: source.clone(),
            objective: unit.from_nats(rep.objective),
            margin: unit.from_nats(rep.margin),
            status: if rep.margin >= -MARGIN_TOL { "PASS" } else { "FAIL" },
        });
    }
    let passed = checks.iter().all(|c| c.status != "FAIL") && cand_out.iter().all(|c| c.status == "PASS");
    let rows = |m: &SymMat| m.to_rows();
    let out = ExtremalOut {
        unit,
        mu: a.mu,
        k_x_star: rows(&enh.k_x_star),
        m1: rows(&enh.m1),
        m2: rows(&enh.m2),
        k_zt1: rows(&enh.k_zt1),
        k_zt2: rows(&enh.k_zt2),
        objective: unit.from_nats(sol.objective),
        f: unit.from_nats(enh.f),
        kkt_residual: sol.kkt_residual,
        checks,
        gaussian_optimum,
        candidates: cand_out,
        passed,
    };
    Ok(Output { text: json(&out), code: if passed { 0 } else { EXIT_FAIL } })
}

pub fn self_test(only: &[usize]) -> Run {
    if let Some(bad) = only.iter().find(|id| !acceptance::CRITERIA.iter().any(|c| c.0 == **id)) {
        return Err(Failure::usage(format!("no acceptance criterion {bad}")));
    }
    let mut text = String::new();
    let mut passed = true;
    for &(id, _, _) in acceptance::CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.0)) {
        let out = acceptance::run(id).expect("listed criterion");
        writeln!(text, "{}", out.line()).unwrap();
        passed &= out.passed;
    }
    Ok(Output { text, code: if passed { 0 } else { EXIT_FAIL } })
}
