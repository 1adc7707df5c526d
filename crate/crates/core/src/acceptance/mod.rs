//! End-to-end acceptance checks, shared by the `acceptance` test target
//! and `maskbc self-test`. Each check returns a verdict and a one-line
//! summary of the worst residual it saw.

pub mod oracle;

use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coding::{derive_coefficients, inner_region, state_v_given_y2, wdp_residuals, Fault};
use crate::error::{Error, Result};
use crate::extremal::{
    enhanced_channel, f_argmax, f_eval, random_candidate, solve_gaussian_subproblem, test_candidate,
    verify_preservation, Candidate1D,
};
use crate::instances::{random_spd, random_spec, random_strategy};
use crate::matcore::SymMat;
use crate::mcval::cross_check_corrupted;
use crate::model::{build_joint, ChannelSpec, Strategy};
use crate::optimize::{maximize_weighted, FrontierQuery};
use crate::quadrature::QuadOptions;
use crate::region::eval_region;
use oracle::{ScalarProblem, det2, f_direct, scalar_enhancement, scalar_kkt};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "{} [{:>2}] {}: {} ({:.2} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64()
        )
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(usize, &str, Check); 10] = [
    (1, "inner/outer coincidence", inner_outer),
    (2, "dirty-paper residuals", wdp),
    (3, "masking independence", masking_independence),
    (4, "enhanced channel", enhancement),
    (5, "scalar KKT closed form", scalar_kkt_grid),
    (6, "extremal inequality stress", extremal_stress),
    (7, "f-function maximizer", f_function),
    (8, "optimizer vs grid oracle", optimizer_grid),
    (9, "Monte-Carlo cross-check", monte_carlo),
    (10, "special-case reductions", reductions),
];

pub fn run(id: usize) -> Option<Outcome> {
    let &(id, name, check) = CRITERIA.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
    Some(Outcome { id, name, passed, detail, elapsed: start.elapsed() })
}

/// Runs every criterion in order, calling `report` as each one finishes.
pub fn run_all(mut report: impl FnMut(&Outcome)) -> Vec<Outcome> {
    CRITERIA
        .iter()
        .filter_map(|c| {
            let out = run(c.0)?;
            report(&out);
            Some(out)
        })
        .collect()
}

/// The 200 instances shared by criteria 1-3: 50 per dimension, alternating
/// degraded and general noise.
pub fn random_instances() -> Vec<(ChannelSpec, Strategy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..200)
        .map(|i| {
            let spec = random_spec(&mut rng, 1 + i % 4, i % 8 < 4);
            let strat = random_strategy(&mut rng, &spec);
            (spec, strat)
        })
        .collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-12 { (a - b).abs() } else { (a - b).abs() / scale }
}

fn inner_outer() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let insts = random_instances();
    for (spec, strat) in &insts {
        let inner = inner_region(spec, strat)?.as_array();
        let outer = eval_region(spec, strat)?.as_array();
        for (a, b) in inner.iter().zip(outer) {
            worst = worst.max(rel_err(*a, b));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((worst <= 1e-8 && secs < 10.0, format!("{} instances, worst relative gap {worst:.2e}", insts.len())))
}

const FAULTS: [Fault; 5] = [Fault::A10, Fault::A11, Fault::A12, Fault::A21, Fault::A22];

fn wdp() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    // Smallest (over instances) of the largest fault-induced residual per family.
    let mut detect = [f64::INFINITY; 4];
    for (spec, strat) in random_instances() {
        let coeffs = derive_coefficients(&spec, &strat)?;
        worst = worst.max(wdp_residuals(&spec, &strat, &coeffs)?.max());
        let mut hit = [0.0f64; 4];
        for fault in FAULTS {
            let fam = wdp_residuals(&spec, &strat, &coeffs.with_fault(fault, 0.1))?.families();
            for (h, (_, r)) in hit.iter_mut().zip(fam) {
                *h = h.max(r);
            }
        }
        for (d, h) in detect.iter_mut().zip(hit) {
            *d = d.min(h);
        }
    }
    let weakest = detect.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((
        worst <= 1e-10 && weakest > 1e-6,
        format!("worst residual {worst:.2e}, weakest fault signal per family {weakest:.2e}"),
    ))
}

fn masking_independence() -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for (spec, strat) in random_instances() {
        let joint = build_joint(&spec, &strat, &derive_coefficients(&spec, &strat)?)?;
        worst = worst.max(state_v_given_y2(&joint)?.abs());
    }
    Ok((worst <= 1e-10, format!("max |I(S;V|Y2)| {worst:.2e}")))
}

fn enhancement() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_order = 0.0f64;
    let mut worst_prop = 0.0f64;
    let mut worst_pres = 0.0f64;
    for i in 0..100 {
        let spec = random_spec(&mut rng, 1 + i % 3, true);
        for mu in [1.1, 1.5, 3.0, 10.0] {
            let enh = enhanced_channel(&spec, mu)?;
            for m in [
                enh.k_zt1.clone(),
                spec.k_z1().sub(&enh.k_zt1),
                enh.k_zt2.sub(&enh.k_zt1),
                spec.k_z2().sub(&enh.k_zt2),
            ] {
                worst_order = worst_order.max(-m.min_eigenvalue());
            }
            let zt = enh.k_zt2.sub(&enh.k_zt1);
            let prop = enh.k_x_star.add(&enh.k_zt1).sub(&zt.scale(1.0 / (mu - 1.0)));
            worst_prop = worst_prop.max(prop.as_matrix().norm());
            let pres = verify_preservation(&spec, &enh)?;
            worst_pres = worst_pres.max(pres.identity1).max(pres.identity2);
        }
    }
    let mut worst_scalar = 0.0f64;
    for (k, z1, z2, mu) in [(1.0, 1.0, 2.0, 3.0), (2.0, 1.0, 2.0, 1.5), (1.0, 1.0, 2.0, 1.2), (0.5, 0.3, 1.1, 2.0)] {
        let spec = ChannelSpec::scalar(k, 1.0, 1.0, z1, z2)?;
        let enh = enhanced_channel(&spec, mu)?;
        let want = scalar_enhancement(k, z1, z2, mu);
        for (got, want) in [
            (enh.k_x_star[(0, 0)], want.x),
            (enh.m1[(0, 0)], want.m1),
            (enh.m2[(0, 0)], want.m2),
            (enh.k_zt1[(0, 0)], want.zt1),
            (enh.k_zt2[(0, 0)], want.zt2),
            (enh.f, want.f),
        ] {
            worst_scalar = worst_scalar.max((got - want).abs());
        }
    }
    let passed = worst_order <= 1e-8 && worst_prop <= 1e-8 && worst_pres <= 1e-8 && worst_scalar <= 1e-12;
    Ok((
        passed,
        format!(
            "400 cases: order {worst_order:.2e}, proportionality {worst_prop:.2e}, preservation {worst_pres:.2e}; scalar {worst_scalar:.2e}"
        ),
    ))
}

fn scalar_kkt_grid() -> Result<(bool, String)> {
    let (z1, z2) = (1.0, 2.0);
    let mut worst = 0.0f64;
    for mu in [1.05, 1.2, 1.5, 1.8, 2.0, 2.5, 3.0, 5.0, 8.0, 20.0] {
        for k in [0.1, 0.5, 1.0, 2.0, 5.0] {
            let spec = ChannelSpec::scalar(k, 1.0, 1.0, z1, z2)?;
            let got = solve_gaussian_subproblem(&spec, mu)?.k_x_star[(0, 0)];
            worst = worst.max((got - scalar_kkt(k, z1, z2, mu)).abs());
        }
    }
    Ok((worst <= 1e-7, format!("50 grid points, worst gap {worst:.2e}")))
}

fn scalar_degraded<R: Rng>(rng: &mut R) -> Result<ChannelSpec> {
    let z1 = rng.random_range(0.3..1.5);
    ChannelSpec::scalar(rng.random_range(0.5..3.0), 1.0, 1.0, z1, z1 + rng.random_range(0.1..2.0))
}

fn extremal_stress() -> Result<(bool, String)> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = QuadOptions::default();
    let mut min_margin = f64::INFINITY;
    let mut worst_gauss = 0.0f64;
    let mut count = 0;
    for _ in 0..5 {
        let spec = scalar_degraded(&mut rng)?;
        let mu = rng.random_range(1.2..4.0);
        let k = spec.k()[(0, 0)];
        for _ in 0..10 {
            let cand = random_candidate(&mut rng, k);
            min_margin = min_margin.min(test_candidate(&spec, mu, &cand, &opts)?.margin);
            count += 1;
        }
        let ks = solve_gaussian_subproblem(&spec, mu)?.k_x_star[(0, 0)];
        // A zero-variance Gaussian is the point mass at 0.
        let gauss = if ks > 0.0 { Candidate1D::gaussian(ks) } else { Candidate1D::gaussian(0.0) };
        worst_gauss = worst_gauss.max(test_candidate(&spec, mu, &gauss, &opts)?.margin.abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Ok((
        min_margin >= -1e-6 && worst_gauss <= 1e-6 && secs < 60.0,
        format!("{count} candidates, min margin {min_margin:.3e}, Gaussian |margin| {worst_gauss:.2e}"),
    ))
}

fn f_function() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-3;
    let mut worst_arg = 0.0f64;
    let mut worst_excess = f64::NEG_INFINITY;
    for i in 0..20 {
        let t = 1 + i % 3;
        let mu = rng.random_range(1.1..10.0);
        let b = rng.random_range(-3.0..3.0);
        let a_star = f_argmax(b, mu, t)?;
        let f_star = f_eval(a_star, b, mu, t)?;
        // Grid centred away from a* so that a* is never a node.
        let c = b - 0.5 * t as f64 * (mu - 1.0).ln().clamp(-1.0, 3.0);
        let (mut best_a, mut best_f) = (f64::NAN, f64::NEG_INFINITY);
        for j in -10_000..=10_000 {
            let a = c + (j as f64 + 0.37) * h;
            let v = f_direct(a, b, mu, t);
            if v > best_f {
                best_a = a;
                best_f = v;
            }
            worst_excess = worst_excess.max(v - f_star);
        }
        worst_arg = worst_arg.max((best_a - a_star).abs());
    }
    Ok((
        worst_arg <= h && worst_excess <= 1e-12,
        format!("20 pairs, argmax gap {worst_arg:.2e}, max f(a)-f(a*) {worst_excess:.2e}"),
    ))
}

fn scalar_problem<R: Rng>(rng: &mut R) -> ScalarProblem {
    let inf = f64::INFINITY;
    ScalarProblem {
        k: rng.random_range(0.5..3.0),
        s1: rng.random_range(0.3..2.0),
        s2: rng.random_range(0.3..2.0),
        z1: rng.random_range(0.3..1.5),
        z2: rng.random_range(0.3..2.0),
        mu: rng.random_range(1.0..4.0),
        e1: inf,
        e2: inf,
    }
}

fn solve_scalar(p: &ScalarProblem, spec: &ChannelSpec) -> Result<Option<f64>> {
    match maximize_weighted(&FrontierQuery::new(spec.clone(), p.mu).with_budgets(p.e1, p.e2)) {
        Ok(pt) => Ok(Some(pt.objective)),
        Err(Error::Infeasible { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

fn optimizer_grid() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inf = f64::INFINITY;
    let budgets = [0.0, 0.05, inf];
    let mut worst_gap = 0.0f64;
    let mut mismatched = 0;
    let mut cases = 0;
    let mut infeasible = 0;
    let mut worst_mono = 0.0f64;
    for _ in 0..20 {
        let base = scalar_problem(&mut rng);
        let spec = ChannelSpec::scalar(base.k, base.s1, base.s2, base.z1, base.z2)?;
        for e1 in budgets {
            for e2 in budgets {
                let prob = ScalarProblem { e1, e2, ..base };
                cases += 1;
                match (solve_scalar(&prob, &spec)?, prob.refined()) {
                    (Some(v), Some((_, g))) => worst_gap = worst_gap.max((v - g.objective).abs()),
                    (None, None) => infeasible += 1,
                    _ => mismatched += 1,
                }
            }
        }
        for sweep_user in 0..2 {
            let mut prev: Option<f64> = None;
            for e in [0.0, 0.02, 0.05, 0.1, 0.3, inf] {
                let prob = if sweep_user == 0 { ScalarProblem { e1: e, ..base } } else { ScalarProblem { e2: e, ..base } };
                if let Some(v) = solve_scalar(&prob, &spec)? {
                    if let Some(p) = prev {
                        worst_mono = worst_mono.max(p - v);
                    }
                    prev = Some(v);
                } else if prev.is_some() {
                    // Feasible at a smaller budget but not at a larger one.
                    worst_mono = inf;
                }
            }
        }
    }
    Ok((
        worst_gap <= 1e-3 && mismatched == 0 && worst_mono <= 1e-6,
        format!(
            "{cases} cases ({infeasible} infeasible on both sides), worst gap to grid {worst_gap:.2e}, feasibility mismatches {mismatched}, worst budget monotonicity breach {worst_mono:.2e}"
        ),
    ))
}

fn monte_carlo() -> Result<(bool, String)> {
    let start = Instant::now();
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_z = 0.0f64;
    let mut failed = 0;
    let mut first = None;
    for i in 0..15u64 {
        let t = if i < 10 { 1 } else { 2 };
        let spec = random_spec(&mut rng, t, i % 2 == 0);
        let strat = random_strategy(&mut rng, &spec);
        let report = cross_check_corrupted(&spec, &strat, n, i, None)?;
        worst_z = report.z_scores.values().fold(worst_z, |m, z| m.max(z.abs()));
        if !report.passed {
            failed += 1;
        }
        first.get_or_insert((spec, strat));
    }
    let (spec, strat) = first.expect("at least one instance");
    let corrupted = cross_check_corrupted(&spec, &strat, n, 0, Some(("I(S;Y2)", 0.05)))?;
    let secs = start.elapsed().as_secs_f64();
    Ok((
        failed == 0 && !corrupted.passed && secs < 300.0,
        format!(
            "15 instances at n = {n}, worst |z| {worst_z:.2}, failures {failed}, corrupted run {}",
            if corrupted.passed { "PASSED (bad)" } else { "FAILED as expected" }
        ),
    ))
}

fn sym2(m: &SymMat) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

fn add2(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    [[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]]
}

fn reductions() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let spec = random_spec(&mut rng, 2, false);

    // Costa: all power on the dirty-paper layer, no masking.
    let costa = Strategy::new(spec.k().clone(), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2))?;
    let (k, z1) = (sym2(spec.k()), sym2(spec.k_z1()));
    let want = 0.5 * (det2(add2(k, z1)) / det2(z1)).ln();
    let base = random_spd(&mut rng, 2, 0.3, 2.0);
    let mut costa_dev = 0.0f64;
    for i in 0..10 {
        let c = 10f64.powf(-2.0 + 4.0 * i as f64 / 9.0);
        let s = spec.with_states(base.scale(c), spec.k_s2().clone())?;
        costa_dev = costa_dev.max((eval_region(&s, &costa)?.r1 - want).abs());
    }

    // Vanishing state: Σ_k = B_k K_Sk with K_Sk = εI.
    let strat = random_strategy(&mut rng, &spec);
    let b1 = &strat.sigma_xs1 * spec.k_s1().inverse_pd()?.as_matrix();
    let b2 = &strat.sigma_xs2 * spec.k_s2().inverse_pd()?.as_matrix();
    let k_x1 = strat.k_x1.scale(0.5);
    let none = spec.with_states(SymMat::zeros(2), SymMat::zeros(2))?;
    let limit = eval_region(&none, &Strategy::new(k_x1.clone(), DMatrix::zeros(2, 2), DMatrix::zeros(2, 2))?)?;
    let mut prev: Option<([f64; 2], [f64; 2])> = None;
    let mut monotone = true;
    let mut last = ([0.0; 2], [0.0; 2]);
    for eps in [1e-2, 1e-4, 1e-6] {
        let s = spec.with_states(SymMat::identity(2).scale(eps), SymMat::identity(2).scale(eps))?;
        let st = Strategy::new(k_x1.clone(), &b1 * eps, &b2 * eps)?;
        let pt = eval_region(&s, &st)?;
        let leak = [pt.e1, pt.e2];
        let gap = [(pt.r1 - limit.r1).abs(), (pt.r2 - limit.r2).abs()];
        if let Some((pl, pg)) = prev {
            monotone &= leak[0] < pl[0] && leak[1] < pl[1] && gap[0] <= pg[0] && gap[1] <= pg[1];
        }
        prev = Some((leak, gap));
        last = (leak, gap);
    }
    let (leak, gap) = last;
    let tail = leak[0].max(leak[1]).max(gap[0]).max(gap[1]);
    let passed = costa_dev <= 1e-12 && monotone && tail <= 1e-5;
    Ok((
        passed,
        format!(
            "Costa deviation {costa_dev:.2e}; vanishing state monotone {monotone}, residual at 1e-6 {tail:.2e} (E {:.1e}/{:.1e})",
            leak[0], leak[1]
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible() {
        let a = random_instances();
        let b = random_instances();
        assert_eq!(a.len(), 200);
        assert_eq!(a[17].1, b[17].1);
        assert_eq!((1..=4).map(|t| a.iter().filter(|x| x.0.t() == t).count()).collect::<Vec<_>>(), vec![50; 4]);
    }

    #[test]
    fn outcome_line_format() {
        let o = Outcome {
            id: 3,
            name: "masking independence",
            passed: true,
            detail: "ok".into(),
            elapsed: Duration::from_millis(1500),
        };
        assert_eq!(o.line(), "PASS [ 3] masking independence: ok (1.50 s)");
    }

    #[test]
    fn unknown_criterion() {
        assert!(run(11).is_none());
    }

    #[test]
    fn cheap_criteria_pass() {
        for id in [3, 5, 7] {
            let out = run(id).unwrap();
            assert!(out.passed, "{}", out.line());
        }
    }
}
