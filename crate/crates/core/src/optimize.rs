//! Weighted-sum frontier search under leakage budgets.
//!
//! For fixed masking cross-covariances the weighted objective
//! `R1 + μ R2` only involves `K_X1` through the Gaussian subproblem with
//! upper constraint `P = K - Σ_XS K_S^+ Σ_XS^T`, and the leakages do not
//! involve `K_X1` at all. The search therefore runs over
//!
//! ```text
//! Σ_XSk = K^{1/2} C_k K_Sk^{1/2},   ‖[C_1 C_2]‖_2 <= 1
//! ```
//!
//! (exactly the set where `P ⪰ 0`), with `K_X1` re-solved at each step and
//! the gradient in `P` taken from the inner multiplier `M2`. Budgets are
//! handled by an augmented Lagrangian, a phase-one anchor and a final
//! bisection back into the feasible set.

use std::cell::RefCell;
use std::cmp::Ordering;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::extremal::{solve_pg, GaussianSolution, SubproblemOptions};
use crate::matcore::{logdet, max_abs, SymMat};
use crate::model::{validate, ChannelSpec, RegionPoint, Strategy};
use crate::region::eval_region;

/// Budgets are met when `E_k <= e_k + BUDGET_TOL`.
pub const BUDGET_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Projected-gradient stopping threshold of the outer ascent.
    pub tol: f64,
    /// Augmented-Lagrangian penalty schedule; the last weight is reused for
    /// any extra rounds.
    pub penalties: [f64; 3],
    pub max_rounds: usize,
    pub inner: SubproblemOptions,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iter: 3000,
            tol: 1e-9,
            penalties: [10.0, 100.0, 1000.0],
            max_rounds: 8,
            inner: SubproblemOptions { max_iter: 5000, tol: 1e-11 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierQuery {
    pub spec: ChannelSpec,
    pub mu: f64,
    pub e1_budget: f64,
    pub e2_budget: f64,
    pub options: SolverOptions,
}

impl FrontierQuery {
    pub fn new(spec: ChannelSpec, mu: f64) -> Self {
        Self { spec, mu, e1_budget: f64::INFINITY, e2_budget: f64::INFINITY, options: SolverOptions::default() }
    }

    pub fn with_budgets(mut self, e1: f64, e2: f64) -> Self {
        self.e1_budget = e1;
        self.e2_budget = e2;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.options.seed = seed;
        self
    }

    fn check(&self) -> Result<()> {
        if !(self.mu >= 1.0) || !self.mu.is_finite() {
            return Err(Error::Domain(format!("weight mu must be >= 1, got {}", self.mu)));
        }
        for (name, e) in [("e1", self.e1_budget), ("e2", self.e2_budget)] {
            if !(e >= 0.0) {
                return Err(Error::Domain(format!("budget {name} must be >= 0, got {e}")));
            }
        }
        if self.options.restarts == 0 {
            return Err(Error::Domain("at least one start is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActiveConstraints {
    /// `E_1` at its budget (within 1e-6).
    pub e1: bool,
    pub e2: bool,
    /// `K_X1` has eigenvalues pinned at 0.
    pub k_x1_lower: bool,
    /// `K_X1` touches the available power in some direction.
    pub k_x1_upper: bool,
    /// The masking cross-covariances use all of `K` in some direction.
    pub masking_power: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierPoint {
    pub strategy: Strategy,
    pub point: RegionPoint,
    /// `R1 + μ R2`, nats.
    pub objective: f64,
    /// Largest of the inner stationarity residual and the outer projected
    /// Lagrangian gradient norm.
    pub kkt_residual: f64,
    pub active_constraints: ActiveConstraints,
    pub converged: bool,
    /// Set by [`frontier_sweep`] when this point breaks the monotonicity
    /// expected from its predecessor by more than 1e-6.
    pub monotonicity_violation: bool,
}

struct Problem<'a> {
    spec: &'a ChannelSpec,
    mu: f64,
    budgets: [f64; 2],
    opts: &'a SolverOptions,
    t: usize,
    /// `K^{1/2}`
    r: DMatrix<f64>,
    /// `K_Sk^{1/2}`
    s: [DMatrix<f64>; 2],
    /// `K_Sk^+`
    ks_pinv: [DMatrix<f64>; 2],
    ld_z1: f64,
}

/// Evaluation at one masking parameter `C`.
struct Eval {
    sig: [DMatrix<f64>; 2],
    p: SymMat,
    e: [f64; 2],
    inner: GaussianSolution,
    j: f64,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a ChannelSpec, mu: f64, budgets: [f64; 2], opts: &'a SolverOptions) -> Result<Self> {
        Ok(Self {
            spec,
            mu,
            budgets,
            opts,
            t: spec.t(),
            r: spec.k().sqrt_psd().into_inner(),
            s: [spec.k_s1().sqrt_psd().into_inner(), spec.k_s2().sqrt_psd().into_inner()],
            ks_pinv: [spec.k_s1().pseudo_inverse().0.into_inner(), spec.k_s2().pseudo_inverse().0.into_inner()],
            ld_z1: logdet(spec.k_z1())?,
        })
    }

    fn sigmas(&self, c: &DMatrix<f64>) -> [DMatrix<f64>; 2] {
        let t = self.t;
        [
            &self.r * c.columns(0, t) * &self.s[0],
            &self.r * c.columns(t, t) * &self.s[1],
        ]
    }

    fn c_from_sigmas(&self, sig: &[DMatrix<f64>; 2]) -> DMatrix<f64> {
        let (r_pinv, _) = SymMat::symmetrize(&self.r).pseudo_inverse();
        let mut c = DMatrix::zeros(self.t, 2 * self.t);
        for k in 0..2 {
            let (s_pinv, _) = SymMat::symmetrize(&self.s[k]).pseudo_inverse();
            c.columns_mut(k * self.t, self.t).copy_from(&(r_pinv.as_matrix() * &sig[k] * s_pinv.as_matrix()));
        }
        c
    }

    fn power(&self, sig: &[DMatrix<f64>; 2]) -> SymMat {
        let mut p = self.spec.k().as_matrix().clone();
        for k in 0..2 {
            p -= &sig[k] * &self.ks_pinv[k] * sig[k].transpose();
        }
        SymMat::symmetrize(&p)
    }

    fn var_y(&self, k: usize, sig: &DMatrix<f64>) -> SymMat {
        let spec = self.spec;
        let ks = [spec.k_s1(), spec.k_s2()][k];
        let kz = [spec.k_z1(), spec.k_z2()][k];
        SymMat::symmetrize(&(spec.k().as_matrix() + sig + sig.transpose() + ks.as_matrix() + kz.as_matrix()))
    }

    fn leakages(&self, sig: &[DMatrix<f64>; 2], p: &SymMat) -> Result<[f64; 2]> {
        let kz = [self.spec.k_z1(), self.spec.k_z2()];
        let mut e = [0.0; 2];
        for k in 0..2 {
            e[k] = 0.5 * (logdet(&self.var_y(k, &sig[k]))? - logdet(&p.add(kz[k]))?);
        }
        Ok(e)
    }

    /// `dE_k / dΣ_j` for all pairs.
    fn leakage_grads(&self, sig: &[DMatrix<f64>; 2], p: &SymMat) -> Result<[[DMatrix<f64>; 2]; 2]> {
        let kz = [self.spec.k_z1(), self.spec.k_z2()];
        let mut out: [[DMatrix<f64>; 2]; 2] = Default::default();
        for k in 0..2 {
            let wk = p.add(kz[k]).inverse_pd()?.into_inner();
            for j in 0..2 {
                let mut g = &wk * &sig[j] * &self.ks_pinv[j];
                if j == k {
                    g += self.var_y(k, &sig[k]).inverse_pd()?.as_matrix();
                }
                out[k][j] = g;
            }
        }
        Ok(out)
    }

    fn chain_to_c(&self, g_sig: &[DMatrix<f64>; 2]) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.t, 2 * self.t);
        for k in 0..2 {
            g.columns_mut(k * self.t, self.t).copy_from(&(&self.r * &g_sig[k] * &self.s[k]));
        }
        g
    }

    fn evaluate(&self, c: &DMatrix<f64>, warm: Option<&SymMat>) -> Result<Eval> {
        let sig = self.sigmas(c);
        let p = self.power(&sig);
        let e = self.leakages(&sig, &p)?;
        let inner = solve_pg(&p, self.spec.k_z1(), self.spec.k_z2(), self.mu, &self.opts.inner, warm)?;
        let j = inner.objective - 0.5 * self.ld_z1 + 0.5 * self.mu * logdet(&p.add(self.spec.k_z2()))?;
        Ok(Eval { sig, p, e, inner, j })
    }

    /// Gradient of `J` with respect to `C`, using `dV/dP = M2`.
    fn objective_grad(&self, ev: &Eval) -> Result<DMatrix<f64>> {
        let g_p = ev.inner.m2.as_matrix() + ev.p.add(self.spec.k_z2()).inverse_pd()?.as_matrix() * (0.5 * self.mu);
        let g_sig = [0, 1].map(|k| &g_p * &ev.sig[k] * &self.ks_pinv[k] * -2.0);
        Ok(self.chain_to_c(&g_sig))
    }

    fn leakage_grad_c(&self, ev: &Eval, k: usize) -> Result<DMatrix<f64>> {
        let g = self.leakage_grads(&ev.sig, &ev.p)?;
        Ok(self.chain_to_c(&[g[k][0].clone(), g[k][1].clone()]))
    }

    fn violation(&self, e: &[f64; 2]) -> f64 {
        (0..2).map(|k| e[k] - self.budgets[k]).fold(f64::NEG_INFINITY, f64::max)
    }

    fn constrained(&self) -> bool {
        self.budgets.iter().any(|b| b.is_finite())
    }
}

/// Largest singular value clipped to 1.
fn project_ball(c: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = c.clone().svd(true, true);
    if svd.singular_values.max() <= 1.0 {
        return c.clone();
    }
    let s = svd.singular_values.map(|v| v.min(1.0));
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    u * DMatrix::from_diagonal(&s) * vt
}

struct Ascent {
    x: DMatrix<f64>,
    converged: bool,
}

/// Projected Barzilai–Borwein ascent with Armijo backtracking. `stop` may
/// end the run early on the current value.
fn projected_ascent(
    mut f: impl FnMut(&DMatrix<f64>) -> Result<(f64, DMatrix<f64>)>,
    proj: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    x0: DMatrix<f64>,
    max_iter: usize,
    tol: f64,
    stop: impl Fn(f64) -> bool,
) -> Result<Ascent> {
    let mut x = proj(&x0);
    let (mut fx, mut g) = f(&x)?;
    let mut alpha = 0.1;
    let mut stalled = 0;
    let mut grad_norm = (proj(&(&x + &g)) - &x).norm();
    for _ in 0..max_iter {
        if grad_norm <= tol || stop(fx) {
            return Ok(Ascent { x, converged: true });
        }
        let mut a = alpha;
        let (xn, fxn, gn) = loop {
            let xn = proj(&(&x + &g * a));
            let d = &xn - &x;
            let (fv, gv) = f(&xn)?;
            if fv >= fx + 1e-4 * g.dot(&d) || a < 1e-14 {
                break (xn, fv, gv);
            }
            a *= 0.5;
        };
        let s = &xn - &x;
        let sy = s.dot(&(&gn - &g));
        alpha = if sy < 0.0 { (s.dot(&s) / -sy).clamp(1e-10, 1e6) } else { (a * 4.0).min(1e6) };
        stalled = if fxn <= fx { stalled + 1 } else { 0 };
        if fxn >= fx {
            x = xn;
            fx = fxn;
            g = gn;
        }
        grad_norm = (proj(&(&x + &g)) - &x).norm();
        if stalled >= 30 {
            break;
        }
    }
    Ok(Ascent { x, converged: grad_norm <= tol })
}

/// One finished start.
struct Candidate {
    c: DMatrix<f64>,
    ev: Eval,
    kkt: f64,
    converged: bool,
}

impl<'a> Problem<'a> {
    fn ascend_objective(&self, c0: DMatrix<f64>, lambda: [f64; 2], rho: f64) -> Result<Ascent> {
        let warm: RefCell<Option<SymMat>> = RefCell::new(None);
        let f = |c: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            let ev = self.evaluate(c, warm.borrow().as_ref())?;
            *warm.borrow_mut() = Some(ev.inner.k_x_star.clone());
            let mut val = ev.j;
            let mut grad = self.objective_grad(&ev)?;
            for k in 0..2 {
                if !self.budgets[k].is_finite() {
                    continue;
                }
                let shifted = (lambda[k] + rho * (ev.e[k] - self.budgets[k])).max(0.0);
                val -= (shifted * shifted - lambda[k] * lambda[k]) / (2.0 * rho);
                if shifted > 0.0 {
                    grad -= self.leakage_grad_c(&ev, k)? * shifted;
                }
            }
            Ok((val, grad))
        };
        projected_ascent(f, project_ball, c0, self.opts.max_iter, self.opts.tol, |_| false)
    }

    /// Drives `C` strictly inside the budgets; `None` when this start cannot.
    fn phase_one(&self, c0: DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        let target = self.budgets.map(|b| b * (1.0 - 1e-3));
        let f = |c: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
            let sig = self.sigmas(c);
            let p = self.power(&sig);
            let e = self.leakages(&sig, &p)?;
            let g = self.leakage_grads(&sig, &p)?;
            let mut val = 0.0;
            let mut gs = [DMatrix::zeros(self.t, self.t), DMatrix::zeros(self.t, self.t)];
            for k in 0..2 {
                let excess = e[k] - target[k];
                if excess > 0.0 {
                    val -= excess * excess;
                    for j in 0..2 {
                        gs[j] -= &g[k][j] * (2.0 * excess);
                    }
                }
            }
            Ok((val, self.chain_to_c(&gs)))
        };
        let run = projected_ascent(f, project_ball, c0, self.opts.max_iter, 0.0, |v| v >= 0.0)?;
        let sig = self.sigmas(&run.x);
        let e = self.leakages(&sig, &self.power(&sig))?;
        Ok((self.violation(&e) <= 0.0).then_some(run.x))
    }

    fn finish(&self, c: DMatrix<f64>, lambda: [f64; 2], converged: bool) -> Result<Candidate> {
        let ev = self.evaluate(&c, None)?;
        let mut grad = self.objective_grad(&ev)?;
        for k in 0..2 {
            if lambda[k] > 0.0 {
                grad -= self.leakage_grad_c(&ev, k)? * lambda[k];
            }
        }
        let outer = (project_ball(&(&c + &grad)) - &c).norm();
        let kkt = outer.max(ev.inner.kkt_residual);
        Ok(Candidate { c, ev, kkt, converged })
    }

    fn run_start(&self, c0: DMatrix<f64>) -> Result<Option<Candidate>> {
        if !self.constrained() {
            let run = self.ascend_objective(c0, [0.0; 2], 1.0)?;
            return self.finish(run.x, [0.0; 2], run.converged).map(Some);
        }
        let Some(anchor) = self.phase_one(c0)? else {
            return Ok(None);
        };
        let mut c = anchor.clone();
        let mut lambda = [0.0; 2];
        let mut converged = false;
        for round in 0..self.opts.max_rounds {
            let rho = self.opts.penalties[round.min(self.opts.penalties.len() - 1)];
            let run = self.ascend_objective(c, lambda, rho)?;
            c = run.x;
            let sig = self.sigmas(&c);
            let e = self.leakages(&sig, &self.power(&sig))?;
            for k in 0..2 {
                if self.budgets[k].is_finite() {
                    lambda[k] = (lambda[k] + rho * (e[k] - self.budgets[k])).max(0.0);
                }
            }
            converged = run.converged;
            if round + 1 >= self.opts.penalties.len() && self.violation(&e) <= 1e-9 {
                break;
            }
        }
        // Pull back onto the budgets along the segment from the anchor.
        let feasible = |c: &DMatrix<f64>| -> Result<bool> {
            let sig = self.sigmas(c);
            Ok(self.violation(&self.leakages(&sig, &self.power(&sig))?) <= 0.0)
        };
        if !feasible(&c)? {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feasible(&(&anchor + (&c - &anchor) * mid))? {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            c = &anchor + (&c - &anchor) * lo;
        }
        self.finish(c, lambda, converged).map(Some)
    }
}

fn random_start(t: usize, seed: u64, stream: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let g = DMatrix::from_fn(t, 2 * t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = g.clone().svd(false, false).singular_values.max();
    let scale: f64 = rng.random_range(0.0..1.0);
    if norm > 0.0 {
        g * (scale / norm)
    } else {
        g
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Objectives closer than this are ties, broken lexicographically on the
/// vectorized strategy.
const TIE_TOL: f64 = 1e-10;

fn to_point(problem: &Problem, cand: Candidate) -> Result<FrontierPoint> {
    let spec = problem.spec;
    let strategy = Strategy {
        k_x1: cand.ev.inner.k_x_star.clone(),
        sigma_xs1: cand.ev.sig[0].clone(),
        sigma_xs2: cand.ev.sig[1].clone(),
    };
    let report = validate(spec, &strategy)?;
    if !report.passed {
        return Err(report.into_error());
    }
    let point = eval_region(spec, &strategy)?;
    let objective = point.r1 + problem.mu * point.r2;
    let kx = &cand.ev.inner.k_x_star;
    let near = |v: f64, b: f64| b.is_finite() && v >= b - BUDGET_TOL;
    let active_constraints = ActiveConstraints {
        e1: near(point.e1, problem.budgets[0]),
        e2: near(point.e2, problem.budgets[1]),
        k_x1_lower: kx.min_eigenvalue() <= 1e-9 * (1.0 + spec.k().max_eigenvalue()),
        k_x1_upper: cand.ev.p.sub(kx).min_eigenvalue() <= 1e-9 * (1.0 + spec.k().max_eigenvalue()),
        masking_power: cand.c.clone().svd(false, false).singular_values.max() >= 1.0 - 1e-9,
    };
    Ok(FrontierPoint {
        strategy,
        point,
        objective,
        kkt_residual: cand.kkt,
        active_constraints,
        converged: cand.converged,
        monotonicity_violation: false,
    })
}

/// Strategy whose leakage is zero at receiver `k`: the state seen by that
/// receiver is cancelled outright and nothing else is correlated.
fn zero_leakage_sigmas(spec: &ChannelSpec, k: usize) -> [DMatrix<f64>; 2] {
    let t = spec.t();
    let mut sig = [DMatrix::zeros(t, t), DMatrix::zeros(t, t)];
    sig[k] = -[spec.k_s1(), spec.k_s2()][k].as_matrix().clone();
    sig
}

/// A zero budget pins the masking cross-covariances completely; only `K_X1`
/// is left to optimize.
fn solve_pinned(problem: &Problem) -> Result<FrontierPoint> {
    let spec = problem.spec;
    let zero: Vec<usize> = (0..2).filter(|&k| problem.budgets[k] == 0.0).collect();
    let states_vanish = max_abs(spec.k_s1()) == 0.0 && max_abs(spec.k_s2()) == 0.0;
    let sig = if zero.len() == 2 && !states_vanish {
        // E_1 = 0 and E_2 = 0 would need Σ_XS1 = -K_S1 and Σ_XS1 = 0 at once.
        let worst = (0..2)
            .map(|k| {
                let s = zero_leakage_sigmas(spec, k);
                let p = problem.power(&s);
                problem.leakages(&s, &p).map(|e| e[1 - k]).unwrap_or(f64::INFINITY)
            })
            .fold(f64::INFINITY, f64::min);
        return Err(Error::Infeasible { violation: worst });
    } else if states_vanish {
        [DMatrix::zeros(spec.t(), spec.t()), DMatrix::zeros(spec.t(), spec.t())]
    } else {
        zero_leakage_sigmas(spec, zero[0])
    };
    let p = problem.power(&sig);
    let margin = p.min_eigenvalue();
    if margin < -crate::matcore::PSD_TOL * (1.0 + spec.k().trace_norm()) {
        return Err(Error::Infeasible { violation: -margin });
    }
    let e = problem.leakages(&sig, &p)?;
    let excess = problem.violation(&e);
    if excess > BUDGET_TOL {
        return Err(Error::Infeasible { violation: excess });
    }
    let c = problem.c_from_sigmas(&sig);
    let inner = solve_pg(&p, spec.k_z1(), spec.k_z2(), problem.mu, &problem.opts.inner, None)?;
    let j = inner.objective - 0.5 * problem.ld_z1 + 0.5 * problem.mu * logdet(&p.add(spec.k_z2()))?;
    let kkt = inner.kkt_residual;
    let converged = inner.grad_norm <= crate::extremal::STATIONARITY_TOL;
    let ev = Eval { sig, p, e, inner, j };
    to_point(problem, Candidate { c, ev, kkt, converged })
}

fn pick_best(cands: Vec<Candidate>) -> Option<Candidate> {
    let mut best: Option<(Candidate, Vec<f64>)> = None;
    for cand in cands {
        let key = Strategy {
            k_x1: cand.ev.inner.k_x_star.clone(),
            sigma_xs1: cand.ev.sig[0].clone(),
            sigma_xs2: cand.ev.sig[1].clone(),
        }
        .vectorize();
        let better = match &best {
            None => true,
            Some((b, bkey)) => {
                if cand.ev.j > b.ev.j + TIE_TOL {
                    true
                } else if cand.ev.j >= b.ev.j - TIE_TOL {
                    lex_cmp(&key, bkey) == Ordering::Less
                } else {
                    false
                }
            }
        };
        if better {
            best = Some((cand, key));
        }
    }
    best.map(|b| b.0)
}

fn maximize_with_warm(query: &FrontierQuery, warm: Option<&Strategy>) -> Result<FrontierPoint> {
    query.check()?;
    let budgets = [query.e1_budget, query.e2_budget];
    let problem = Problem::new(&query.spec, query.mu, budgets, &query.options)?;
    if budgets.contains(&0.0) {
        return solve_pinned(&problem);
    }
    let t = query.spec.t();
    let starts: Vec<DMatrix<f64>> = (0..query.options.restarts)
        .map(|i| if i == 0 { DMatrix::zeros(t, 2 * t) } else { random_start(t, query.options.seed, i as u64) })
        .collect();
    let warm_c = warm.filter(|w| w.t() == t).map(|w| problem.c_from_sigmas(&[w.sigma_xs1.clone(), w.sigma_xs2.clone()]));

    let results: Vec<Result<Option<Candidate>>> = starts.into_par_iter().map(|c0| problem.run_start(c0)).collect();
    let mut cands = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(Some(c)) => cands.push(c),
            Ok(None) => {}
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(wc) = warm_c {
        // The previous sweep point is scored as it stands and also used as a
        // start.
        let wc = project_ball(&wc);
        let sig = problem.sigmas(&wc);
        if problem.violation(&problem.leakages(&sig, &problem.power(&sig))?) <= 0.0 {
            cands.push(problem.finish(wc.clone(), [0.0; 2], false)?);
        }
        if let Ok(Some(c)) = problem.run_start(wc) {
            cands.push(c);
        }
    }
    match pick_best(cands) {
        Some(best) => to_point(&problem, best),
        None => match first_err {
            Some(e) => Err(e),
            None => {
                // Report how close the best phase-one attempt came.
                let sig = problem.sigmas(&DMatrix::zeros(t, 2 * t));
                let e = problem.leakages(&sig, &problem.power(&sig))?;
                Err(Error::Infeasible { violation: problem.violation(&e) })
            }
        },
    }
}

/// Best `R1 + μ R2` over all strategies meeting the budgets. Deterministic
/// for a fixed seed: starts run in parallel but are reduced in start order.
pub fn maximize_weighted(query: &FrontierQuery) -> Result<FrontierPoint> {
    maximize_with_warm(query, None)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    Mu(Vec<f64>),
    E1(Vec<f64>),
    E2(Vec<f64>),
}

impl Sweep {
    fn values(&self) -> &[f64] {
        match self {
            Sweep::Mu(v) | Sweep::E1(v) | Sweep::E2(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mu: f64,
    pub e1_budget: f64,
    pub e2_budget: f64,
    pub result: Result<FrontierPoint>,
}

/// One row per swept value, in order. Each point is warm-started from the
/// last successful one. Along a nondecreasing budget or weight sweep the
/// optimum cannot decrease; rows that do are flagged.
pub fn frontier_sweep(base: &FrontierQuery, sweep: &Sweep) -> Result<Vec<SweepRow>> {
    if sweep.values().is_empty() {
        return Err(Error::Domain("sweep list is empty".into()));
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    let mut prev: Option<(f64, FrontierPoint)> = None;
    for &v in sweep.values() {
        let mut q = base.clone();
        match sweep {
            Sweep::Mu(_) => q.mu = v,
            Sweep::E1(_) => q.e1_budget = v,
            Sweep::E2(_) => q.e2_budget = v,
        }
        let mut result = maximize_with_warm(&q, prev.as_ref().map(|p| &p.1.strategy));
        if let (Ok(point), Some((pv, pp))) = (&mut result, &prev) {
            if v >= *pv && point.objective < pp.objective - BUDGET_TOL {
                point.monotonicity_violation = true;
            }
        }
        if let Ok(point) = &result {
            prev = Some((v, point.clone()));
        }
        rows.push(SweepRow { mu: q.mu, e1_budget: q.e1_budget, e2_budget: q.e2_budget, result });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::random_spec;

    fn running() -> ChannelSpec {
        ChannelSpec::scalar(2.0, 1.0, 1.0, 1.0, 2.0).unwrap()
    }

    fn fd_check(problem: &Problem, c: &DMatrix<f64>) {
        let ev = problem.evaluate(c, None).unwrap();
        let gj = problem.objective_grad(&ev).unwrap();
        let ge = [problem.leakage_grad_c(&ev, 0).unwrap(), problem.leakage_grad_c(&ev, 1).unwrap()];
        let h = 1e-6;
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                let mut cp = c.clone();
                cp[(i, j)] += h;
                let mut cm = c.clone();
                cm[(i, j)] -= h;
                let (ep, em) = (problem.evaluate(&cp, None).unwrap(), problem.evaluate(&cm, None).unwrap());
                let dj = (ep.j - em.j) / (2.0 * h);
                assert!((dj - gj[(i, j)]).abs() < 1e-5, "dJ[{i},{j}] fd {dj} vs {}", gj[(i, j)]);
                for k in 0..2 {
                    let de = (ep.e[k] - em.e[k]) / (2.0 * h);
                    assert!((de - ge[k][(i, j)]).abs() < 1e-5, "dE{k}[{i},{j}] fd {de} vs {}", ge[k][(i, j)]);
                }
            }
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let opts = SolverOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for t in 1..=3 {
            let spec = random_spec(&mut rng, t, t != 2);
            for mu in [1.0, 1.7, 4.0] {
                let problem = Problem::new(&spec, mu, [f64::INFINITY; 2], &opts).unwrap();
                let c = random_start(t, 9, t as u64) * 0.8;
                fd_check(&problem, &c);
            }
        }
    }

    #[test]
    fn parameterization_covers_power_constraint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = random_spec(&mut rng, 3, false);
        let opts = SolverOptions::default();
        let problem = Problem::new(&spec, 2.0, [f64::INFINITY; 2], &opts).unwrap();
        let g = random_start(3, 1, 1);
        let c = project_ball(&(&g * (5.0 / g.clone().svd(false, false).singular_values.max())));
        let p = problem.power(&problem.sigmas(&c));
        assert!(p.min_eigenvalue().abs() < 1e-12);
        let back = problem.c_from_sigmas(&problem.sigmas(&c));
        assert!(max_abs(&(back - c)) < 1e-10);
    }

    #[test]
    fn unit_weight_example_puts_all_power_on_user_one() {
        let spec = ChannelSpec::scalar(1.0, 0.7, 1.3, 1.0, 2.0).unwrap();
        let fp = maximize_weighted(&FrontierQuery::new(spec, 1.0)).unwrap();
        assert!((fp.objective - 0.5 * 2f64.ln()).abs() < 1e-9);
        assert!((fp.strategy.k_x1[(0, 0)] - 1.0).abs() < 1e-6);
        assert!(fp.active_constraints.k_x1_upper);
    }

    #[test]
    fn large_weight_approaches_user_two_corner() {
        let fp = maximize_weighted(&FrontierQuery::new(running(), 1e4)).unwrap();
        assert!(fp.strategy.k_x1[(0, 0)] < 1e-9);
        assert!(fp.active_constraints.k_x1_lower);
    }

    #[test]
    fn both_zero_budgets_are_infeasible_with_states() {
        let q = FrontierQuery::new(running(), 1.5).with_budgets(0.0, 0.0);
        assert!(matches!(maximize_weighted(&q), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn single_zero_budget_pins_cancellation() {
        let q = FrontierQuery::new(running(), 1.5).with_budgets(0.0, f64::INFINITY);
        let fp = maximize_weighted(&q).unwrap();
        assert!(fp.point.e1 <= 1e-12);
        assert!((fp.strategy.sigma_xs1[(0, 0)] + 1.0).abs() < 1e-15);
        let free = maximize_weighted(&FrontierQuery::new(running(), 1.5)).unwrap();
        assert!(fp.objective < free.objective);

        // Cancelling a state stronger than the power is impossible.
        let weak = ChannelSpec::scalar(0.5, 1.0, 1.0, 1.0, 2.0).unwrap();
        let q = FrontierQuery::new(weak, 1.5).with_budgets(0.0, f64::INFINITY);
        assert!(matches!(maximize_weighted(&q), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn budgets_are_met() {
        let q = FrontierQuery::new(running(), 1.5).with_budgets(0.07, 0.12);
        let fp = maximize_weighted(&q).unwrap();
        // Smallest achievable max(E1 - 0.02, E2 - 0.05) is about 0.04.
        let tight = FrontierQuery::new(running(), 1.5).with_budgets(0.02, 0.05);
        assert!(matches!(maximize_weighted(&tight), Err(Error::Infeasible { .. })));
        assert!(fp.point.e1 <= 0.07 + BUDGET_TOL && fp.point.e2 <= 0.12 + BUDGET_TOL);
        assert!(validate(&running(), &fp.strategy).unwrap().passed);
        assert!(fp.active_constraints.e1 || fp.active_constraints.e2);
    }

    #[test]
    fn query_domain_errors() {
        assert!(matches!(maximize_weighted(&FrontierQuery::new(running(), 0.5)), Err(Error::Domain(_))));
        let q = FrontierQuery::new(running(), 1.5).with_budgets(-0.1, 1.0);
        assert!(matches!(maximize_weighted(&q), Err(Error::Domain(_))));
        assert!(matches!(frontier_sweep(&FrontierQuery::new(running(), 1.5), &Sweep::Mu(vec![])), Err(Error::Domain(_))));
    }

    #[test]
    fn mu_sweep_is_monotone() {
        let rows = frontier_sweep(&FrontierQuery::new(running(), 1.0), &Sweep::Mu(vec![1.0, 1.5, 2.0, 4.0])).unwrap();
        assert_eq!(rows.len(), 4);
        let objs: Vec<f64> = rows.iter().map(|r| r.result.as_ref().unwrap().objective).collect();
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - 1e-9), "{objs:?}");
        assert!(rows.iter().all(|r| !r.result.as_ref().unwrap().monotonicity_violation));
    }

    #[test]
    fn budget_sweep_is_monotone() {
        let base = FrontierQuery::new(running(), 1.0);
        let rows = frontier_sweep(&base, &Sweep::E1(vec![0.0, 0.05, 0.1, f64::INFINITY])).unwrap();
        let objs: Vec<f64> = rows.iter().map(|r| r.result.as_ref().unwrap().objective).collect();
        assert!(objs.windows(2).all(|w| w[1] >= w[0] - BUDGET_TOL), "{objs:?}");
    }

    #[test]
    fn single_point_sweep_matches_direct_call() {
        let q = FrontierQuery::new(running(), 2.0).with_budgets(0.05, f64::INFINITY);
        let rows = frontier_sweep(&q, &Sweep::Mu(vec![2.0])).unwrap();
        assert_eq!(rows[0].result.as_ref().unwrap(), &maximize_weighted(&q).unwrap());
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let spec = random_spec(&mut rng, 2, false);
        let q = FrontierQuery::new(spec, 1.8).with_budgets(0.3, 0.3).with_seed(5);
        let a = maximize_weighted(&q).unwrap();
        let b = maximize_weighted(&q).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
