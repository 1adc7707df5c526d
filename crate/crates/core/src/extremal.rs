//! Gaussian subproblem, KKT multipliers and the enhanced channel.
//!
//! The subproblem is
//!
//! ```text
//! maximize  ½ ln|X + K_Z1| - (μ/2) ln|X + K_Z2|   over 0 ⪯ X ⪯ K
//! ```
//!
//! solved by projected gradient ascent in whitened coordinates
//! `X = R Y R^T` (`R R^T = K`), where the feasible set becomes
//! `0 ⪯ Y ⪯ I` and the projection is an eigenvalue clip to `[0, 1]`.
//! Multipliers are read off the gradient restricted to the eigenspaces of
//! `Y` pinned at 0 and at 1.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::{logdet, max_abs, SymMat, RANK_TOL};
use crate::model::{ChannelSpec, ConstraintCheck};
use crate::quadrature::{integrate, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubproblemOptions {
    pub max_iter: usize,
    /// Stop when the unit-step projected gradient (Frobenius, whitened
    /// coordinates) falls below this.
    pub tol: f64,
}

impl Default for SubproblemOptions {
    fn default() -> Self {
        Self { max_iter: 20_000, tol: 1e-12 }
    }
}

/// Stationarity threshold used to call a subproblem solution converged.
pub const STATIONARITY_TOL: f64 = 1e-7;

/// Eigenvalues of the whitened iterate within this of 0 or 1 are treated as
/// active constraints.
const ACTIVE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSolution {
    pub k_x_star: SymMat,
    pub m1: SymMat,
    pub m2: SymMat,
    pub objective: f64,
    /// Projected-gradient norm at the returned point.
    pub grad_norm: f64,
    /// `max|∇ - (M2 - M1)|` in the original coordinates.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// `½ ln|X + K_Z1| - (μ/2) ln|X + K_Z2|`.
pub fn pg_objective(x: &SymMat, kz1: &SymMat, kz2: &SymMat, mu: f64) -> Result<f64> {
    Ok(0.5 * logdet(&x.add(kz1))? - 0.5 * mu * logdet(&x.add(kz2))?)
}

fn pg_value_grad(x: &SymMat, kz1: &SymMat, kz2: &SymMat, mu: f64) -> Result<(f64, DMatrix<f64>)> {
    let a1 = x.add(kz1);
    let a2 = x.add(kz2);
    let v = 0.5 * logdet(&a1)? - 0.5 * mu * logdet(&a2)?;
    let g = a1.inverse_pd()?.scale(0.5).sub(&a2.inverse_pd()?.scale(0.5 * mu));
    Ok((v, g.into_inner()))
}

struct Whitening {
    /// t x r, `R R^T = K` on the range of `K`.
    r: DMatrix<f64>,
    /// r x t left inverse of `r`.
    r_pinv: DMatrix<f64>,
    /// Orthonormal basis of the null space of `K`.
    null: DMatrix<f64>,
}

impl Whitening {
    fn new(k: &SymMat) -> Self {
        let eig = k.eigen();
        let t = k.dim();
        let top = eig.eigenvalues.max().max(0.0);
        let keep: Vec<usize> = (0..t).filter(|&i| top > 0.0 && eig.eigenvalues[i] > RANK_TOL * top).collect();
        let drop: Vec<usize> = (0..t).filter(|i| !keep.contains(i)).collect();
        let col = |i: usize| eig.eigenvectors.column(i).into_owned();
        let mut r = DMatrix::zeros(t, keep.len());
        let mut r_pinv = DMatrix::zeros(keep.len(), t);
        for (j, &i) in keep.iter().enumerate() {
            let s = eig.eigenvalues[i].sqrt();
            r.set_column(j, &(col(i) * s));
            r_pinv.set_row(j, &(col(i) / s).transpose());
        }
        let mut null = DMatrix::zeros(t, drop.len());
        for (j, &i) in drop.iter().enumerate() {
            null.set_column(j, &col(i));
        }
        Self { r, r_pinv, null }
    }

    fn to_x(&self, y: &DMatrix<f64>) -> SymMat {
        SymMat::symmetrize(&(&self.r * y * self.r.transpose()))
    }

    fn to_y(&self, x: &SymMat) -> DMatrix<f64> {
        let y = &self.r_pinv * x.as_matrix() * self.r_pinv.transpose();
        (&y + y.transpose()) * 0.5
    }
}

fn clip_unit(y: &DMatrix<f64>) -> DMatrix<f64> {
    if y.nrows() == 0 {
        return y.clone();
    }
    let eig = SymMat::symmetrize(y).eigen();
    let vals = eig.eigenvalues.map(|l| l.clamp(0.0, 1.0));
    let q = &eig.eigenvectors;
    let m = q * DMatrix::from_diagonal(&vals) * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn eigen_split(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let eig = SymMat::symmetrize(m).eigen();
    let pos = eig.eigenvalues.map(|l| l.max(0.0));
    let neg = eig.eigenvalues.map(|l| (-l).max(0.0));
    let q = &eig.eigenvectors;
    (
        q * DMatrix::from_diagonal(&pos) * q.transpose(),
        q * DMatrix::from_diagonal(&neg) * q.transpose(),
    )
}

/// Solves the subproblem for an arbitrary upper constraint `K` (possibly
/// singular) and noises, optionally warm-started. No degradedness check;
/// without it the objective may have several stationary points.
pub fn solve_pg(
    k: &SymMat,
    kz1: &SymMat,
    kz2: &SymMat,
    mu: f64,
    opts: &SubproblemOptions,
    warm: Option<&SymMat>,
) -> Result<GaussianSolution> {
    let w = Whitening::new(k);
    let r = w.r.ncols();
    let eval = |y: &DMatrix<f64>| -> Result<(f64, DMatrix<f64>)> {
        let (v, g) = pg_value_grad(&w.to_x(y), kz1, kz2, mu)?;
        Ok((v, w.r.transpose() * g * &w.r))
    };

    let mut y = match warm {
        Some(x0) => clip_unit(&w.to_y(x0)),
        None => DMatrix::identity(r, r) * 0.5,
    };
    let (mut f, mut g) = eval(&y)?;
    let mut alpha = 1.0;
    let mut iterations = 0;
    let mut stalled = 0;
    let mut grad_norm = (clip_unit(&(&y + &g)) - &y).norm();
    while grad_norm > opts.tol && iterations < opts.max_iter && r > 0 {
        iterations += 1;
        let mut a = alpha;
        let (yn, fn_, gn) = loop {
            let yn = clip_unit(&(&y + &g * a));
            let d = &yn - &y;
            let (fv, gv) = eval(&yn)?;
            if fv >= f + 1e-4 * g.dot(&d) || a < 1e-14 {
                break (yn, fv, gv);
            }
            a *= 0.5;
        };
        let s = &yn - &y;
        let sy = s.dot(&(&gn - &g));
        let ss = s.dot(&s);
        alpha = if sy < 0.0 { (ss / -sy).clamp(1e-10, 1e10) } else { (a * 4.0).min(1e10) };
        stalled = if fn_ <= f { stalled + 1 } else { 0 };
        y = yn;
        f = fn_;
        g = gn;
        grad_norm = (clip_unit(&(&y + &g)) - &y).norm();
        if stalled >= 50 {
            break;
        }
    }

    // Objective differences stop resolving progress near 1e-9 stationarity;
    // finish by accepting steps that shrink the projected gradient instead.
    let mut polish = 0;
    alpha = 1.0;
    while grad_norm > opts.tol && polish < 200 && r > 0 {
        polish += 1;
        let mut a = alpha;
        let mut next = None;
        for _ in 0..60 {
            let yn = clip_unit(&(&y + &g * a));
            let (_, gv) = eval(&yn)?;
            let gn = (clip_unit(&(&yn + &gv)) - &yn).norm();
            if gn < grad_norm {
                next = Some((yn, gv, gn));
                break;
            }
            a *= 0.5;
        }
        let Some((yn, gv, gn)) = next else { break };
        let s = &yn - &y;
        let sy = s.dot(&(&gv - &g));
        alpha = if sy < 0.0 { (s.dot(&s) / -sy).clamp(1e-3, 10.0) } else { 1.0 };
        y = yn;
        g = gv;
        grad_norm = gn;
        iterations += 1;
    }

    // Pin near-active eigenvalues exactly so that slackness holds exactly.
    let (mut y0, mut y1) = (Vec::new(), Vec::new());
    if r > 0 {
        let eig = SymMat::symmetrize(&y).eigen();
        let mut vals = eig.eigenvalues.clone();
        for i in 0..r {
            if vals[i] <= ACTIVE_TOL {
                vals[i] = 0.0;
                y0.push(eig.eigenvectors.column(i).into_owned());
            } else if vals[i] >= 1.0 - ACTIVE_TOL {
                vals[i] = 1.0;
                y1.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        let q = &eig.eigenvectors;
        let m = q * DMatrix::from_diagonal(&vals) * q.transpose();
        y = (&m + m.transpose()) * 0.5;
    }
    let x = w.to_x(&y);
    let (objective, grad) = pg_value_grad(&x, kz1, kz2, mu)?;
    let gy = w.r.transpose() * &grad * &w.r;
    if r > 0 {
        grad_norm = (clip_unit(&(&y + &gy)) - &y).norm();
    }

    let restrict = |vs: &[nalgebra::DVector<f64>]| -> DMatrix<f64> {
        if vs.is_empty() {
            return DMatrix::zeros(r, r);
        }
        let v = DMatrix::from_columns(vs);
        &v * (v.transpose() * &gy * &v) * v.transpose()
    };
    let back = |m: DMatrix<f64>| w.r_pinv.transpose() * m * &w.r_pinv;
    let mut m1 = back(-restrict(&y0));
    let mut m2 = back(restrict(&y1));
    if w.null.ncols() > 0 {
        let n = &w.null;
        let (pos, neg) = eigen_split(&(n.transpose() * &grad * n));
        m1 += n * neg * n.transpose();
        m2 += n * pos * n.transpose();
    }
    let m1 = SymMat::symmetrize(&m1);
    let m2 = SymMat::symmetrize(&m2);
    let kkt_residual = max_abs(&(&grad - (m2.as_matrix() - m1.as_matrix())));
    Ok(GaussianSolution { k_x_star: x, m1, m2, objective, grad_norm, kkt_residual, iterations })
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("weight mu must be > 1, got {mu}")));
    }
    Ok(())
}

fn require_degraded(spec: &ChannelSpec) -> Result<()> {
    if !spec.degraded() {
        return Err(Error::DegradednessRequired { margin: spec.degradedness_margin() });
    }
    Ok(())
}

/// Optimal Gaussian input covariance `K_X*` for the channel's power `K`,
/// with its multipliers.
pub fn solve_gaussian_subproblem(spec: &ChannelSpec, mu: f64) -> Result<GaussianSolution> {
    check_mu(mu)?;
    require_degraded(spec)?;
    let sol = solve_pg(spec.k(), spec.k_z1(), spec.k_z2(), mu, &SubproblemOptions::default(), None)?;
    if sol.grad_norm > STATIONARITY_TOL {
        return Err(Error::MaxIterations { iterations: sol.iterations, residual: sol.grad_norm });
    }
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancedChannel {
    pub mu: f64,
    pub k_x_star: SymMat,
    pub m1: SymMat,
    pub m2: SymMat,
    pub k_zt1: SymMat,
    pub k_zt2: SymMat,
    /// `K_Zt2 - K_Zt1`
    pub k_zt: SymMat,
    /// Value offset between the original and enhanced subproblems, nats.
    pub f: f64,
}

/// Tolerance on every enhanced-channel invariant.
pub const ENHANCE_TOL: f64 = 1e-8;

pub fn enhance(spec: &ChannelSpec, mu: f64, k_x_star: &SymMat, m1: &SymMat, m2: &SymMat) -> Result<EnhancedChannel> {
    check_mu(mu)?;
    require_degraded(spec)?;
    let x = k_x_star;
    let a1 = x.add(spec.k_z1()).inverse_pd()?;
    let a2 = x.add(spec.k_z2()).inverse_pd()?;
    let k_zt1 = a1.add(&m1.scale(2.0)).inverse_pd()?.sub(x);
    let k_zt2 = a2.add(&m2.scale(2.0 / mu)).inverse_pd()?.sub(x);
    let k_zt = k_zt2.sub(&k_zt1);
    let enh = EnhancedChannel {
        mu,
        k_x_star: x.clone(),
        m1: m1.clone(),
        m2: m2.clone(),
        k_zt1,
        k_zt2,
        k_zt,
        f: f64::NAN,
    };
    if let Some(bad) = enh.checks(spec).into_iter().find(|c| !c.passed) {
        return Err(Error::EnhancementFailed { check: bad.name, margin: bad.margin });
    }
    let f = 0.5 * (logdet(spec.k_z1())? - logdet(&enh.k_zt1)?)
        + 0.5 * mu * (logdet(&spec.k().add(&enh.k_zt2))? - logdet(&spec.k().add(spec.k_z2()))?);
    Ok(EnhancedChannel { f, ..enh })
}

impl EnhancedChannel {
    /// Ordering, proportionality and slackness checks. Ordering margins are
    /// minimum eigenvalues; norm checks report the negated residual.
    pub fn checks(&self, spec: &ChannelSpec) -> Vec<ConstraintCheck> {
        let psd = |name: &str, m: &SymMat| {
            let margin = m.min_eigenvalue();
            ConstraintCheck { name: name.into(), passed: margin >= -ENHANCE_TOL, margin }
        };
        let small = |name: &str, v: f64| ConstraintCheck { name: name.into(), passed: v <= ENHANCE_TOL, margin: -v };
        let prop = self.k_x_star.add(&self.k_zt1).sub(&self.k_zt.scale(1.0 / (self.mu - 1.0)));
        let slack2 = self.m2.as_matrix() * spec.k().sub(&self.k_x_star).as_matrix();
        vec![
            psd("K_Zt1 >= 0", &self.k_zt1),
            psd("K_Zt1 <= K_Z1", &spec.k_z1().sub(&self.k_zt1)),
            psd("K_Zt1 <= K_Zt2", &self.k_zt),
            psd("K_Zt2 <= K_Z2", &spec.k_z2().sub(&self.k_zt2)),
            psd("M1 >= 0", &self.m1),
            psd("M2 >= 0", &self.m2),
            small("K_X* + K_Zt1 = (mu-1)^-1 K_Zt", max_abs(&prop)),
            small("M1 K_X* = 0", max_abs(&(self.m1.as_matrix() * self.k_x_star.as_matrix()))),
            small("M2 (K - K_X*) = 0", max_abs(&slack2)),
        ]
    }
}

/// Solve, then enhance.
pub fn enhanced_channel(spec: &ChannelSpec, mu: f64) -> Result<EnhancedChannel> {
    let sol = solve_gaussian_subproblem(spec, mu)?;
    enhance(spec, mu, &sol.k_x_star, &sol.m1, &sol.m2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreservationReport {
    /// `max|(X + K_Zt1)^{-1} K_Zt1 - (X + K_Z1)^{-1} K_Z1|`
    pub identity1: f64,
    /// `max|(X + K_Zt2)^{-1}(K + K_Zt2) - (X + K_Z2)^{-1}(K + K_Z2)|`
    pub identity2: f64,
    /// `|value(original) - value(enhanced) - F|` at `X = K_X*`.
    pub value_gap: f64,
    pub passed: bool,
}

pub fn verify_preservation(spec: &ChannelSpec, enh: &EnhancedChannel) -> Result<PreservationReport> {
    let x = &enh.k_x_star;
    let k = spec.k();
    let lhs1 = x.add(&enh.k_zt1).inverse_pd()?.as_matrix() * enh.k_zt1.as_matrix();
    let rhs1 = x.add(spec.k_z1()).inverse_pd()?.as_matrix() * spec.k_z1().as_matrix();
    let lhs2 = x.add(&enh.k_zt2).inverse_pd()?.as_matrix() * k.add(&enh.k_zt2).as_matrix();
    let rhs2 = x.add(spec.k_z2()).inverse_pd()?.as_matrix() * k.add(spec.k_z2()).as_matrix();
    let identity1 = max_abs(&(lhs1 - rhs1));
    let identity2 = max_abs(&(lhs2 - rhs2));
    let orig = pg_objective(x, spec.k_z1(), spec.k_z2(), enh.mu)?;
    let enhanced = pg_objective(x, &enh.k_zt1, &enh.k_zt2, enh.mu)?;
    let value_gap = (orig - enhanced - enh.f).abs();
    let passed = identity1 <= ENHANCE_TOL && identity2 <= ENHANCE_TOL && value_gap <= ENHANCE_TOL;
    Ok(PreservationReport { identity1, identity2, value_gap, passed })
}

fn check_f_args(mu: f64, t: usize) -> Result<()> {
    check_mu(mu)?;
    if t == 0 {
        return Err(Error::Domain("dimension t must be >= 1".into()));
    }
    Ok(())
}

/// `f(a, b) = a - (μt/2) ln(e^{2a/t} + e^{2b/t})`, evaluated with a
/// log-sum-exp so that large entropies do not overflow.
pub fn f_eval(a: f64, b: f64, mu: f64, t: usize) -> Result<f64> {
    check_f_args(mu, t)?;
    let tf = t as f64;
    let (p, q) = (2.0 * a / tf, 2.0 * b / tf);
    let m = p.max(q);
    let lse = m + ((p - m).exp() + (q - m).exp()).ln();
    Ok(a - 0.5 * mu * tf * lse)
}

/// Maximizer of `f(·, b)`: `b - (t/2) ln(μ - 1)`.
pub fn f_argmax(b: f64, mu: f64, t: usize) -> Result<f64> {
    check_f_args(mu, t)?;
    Ok(b - 0.5 * t as f64 * (mu - 1.0).ln())
}

/// Scalar conditional law of `X` given one value of the conditioning pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseLaw {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Mass `p_hi` at `hi`, the rest at `lo`.
    TwoPoint { lo: f64, hi: f64, p_hi: f64 },
    Gaussian { variance: f64 },
}

impl BaseLaw {
    fn mean(&self) -> f64 {
        match *self {
            BaseLaw::Uniform { .. } | BaseLaw::Gaussian { .. } => 0.0,
            BaseLaw::TwoPoint { lo, hi, p_hi } => p_hi * hi + (1.0 - p_hi) * lo,
        }
    }

    fn second_moment(&self) -> f64 {
        match *self {
            BaseLaw::Uniform { half_width } => half_width * half_width / 3.0,
            BaseLaw::TwoPoint { lo, hi, p_hi } => p_hi * hi * hi + (1.0 - p_hi) * lo * lo,
            BaseLaw::Gaussian { variance } => variance,
        }
    }

    fn scaled(&self, s: f64) -> Self {
        match *self {
            BaseLaw::Uniform { half_width } => BaseLaw::Uniform { half_width: half_width * s },
            BaseLaw::TwoPoint { lo, hi, p_hi } => BaseLaw::TwoPoint { lo: lo * s, hi: hi * s, p_hi },
            BaseLaw::Gaussian { variance } => BaseLaw::Gaussian { variance: variance * s * s },
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            BaseLaw::Uniform { half_width } => half_width > 0.0 && half_width.is_finite(),
            BaseLaw::TwoPoint { lo, hi, p_hi } => {
                lo.is_finite() && hi.is_finite() && lo <= hi && (0.0..=1.0).contains(&p_hi)
            }
            BaseLaw::Gaussian { variance } => variance >= 0.0 && variance.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid law parameters {self:?}")))
        }
    }

    /// Density of `W + N(0, s2)` at `y`.
    fn convolved_density(&self, y: f64, s2: f64) -> f64 {
        let s = s2.sqrt();
        let phi = |u: f64| (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        match *self {
            BaseLaw::Gaussian { variance } => {
                let v = variance + s2;
                (-0.5 * y * y / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
            }
            BaseLaw::TwoPoint { lo, hi, p_hi } => p_hi * phi((y - hi) / s) + (1.0 - p_hi) * phi((y - lo) / s),
            BaseLaw::Uniform { half_width: c } => {
                // (Φ(a) - Φ(b)) / 2c with a > b, written with erfc on the
                // side that avoids cancellation.
                let a = (y + c) / s;
                let b = (y - c) / s;
                let r2 = std::f64::consts::SQRT_2;
                let diff = if b > 0.0 {
                    0.5 * (libm::erfc(b / r2) - libm::erfc(a / r2))
                } else if a < 0.0 {
                    0.5 * (libm::erfc(-a / r2) - libm::erfc(-b / r2))
                } else {
                    1.0 - 0.5 * libm::erfc(a / r2) - 0.5 * libm::erfc(-b / r2)
                };
                diff / (2.0 * c)
            }
        }
    }

    fn support_and_breaks(&self, s2: f64) -> (f64, f64, Vec<f64>) {
        let pad = 12.0 * s2.sqrt();
        match *self {
            BaseLaw::Uniform { half_width } => (-half_width - pad, half_width + pad, vec![-half_width, half_width]),
            BaseLaw::TwoPoint { lo, hi, .. } => (lo - pad, hi + pad, vec![lo, hi]),
            BaseLaw::Gaussian { variance } => {
                let w = 12.0 * (variance + s2).sqrt();
                (-w, w, vec![0.0])
            }
        }
    }

    /// `h(W + N(0, s2))` in nats by quadrature.
    pub fn noisy_entropy(&self, s2: f64, opts: &QuadOptions) -> Result<f64> {
        let (lo, hi, breaks) = self.support_and_breaks(s2);
        let r = integrate(
            |y| {
                let p = self.convolved_density(y, s2);
                if p > 0.0 {
                    -p * p.max(1e-300).ln()
                } else {
                    0.0
                }
            },
            lo,
            hi,
            &breaks,
            opts,
        )?;
        Ok(r.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// Probability of this value of the conditioning pair.
    pub weight: f64,
    /// Offset of `X` for this value; costs power but not entropy.
    #[serde(default)]
    pub mean: f64,
    #[serde(flatten)]
    pub law: BaseLaw,
}

/// A finite mixture over the conditioning pair; each atom carries one
/// conditional law of scalar `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate1D {
    pub components: Vec<Component>,
}

impl Candidate1D {
    /// Validates the laws; weights must be nonnegative and sum to 1 within
    /// 1e-9, and are then renormalized exactly.
    pub fn new(mut components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("candidate has no components".into()));
        }
        let mut total = 0.0;
        for c in &components {
            c.law.validate()?;
            if !(c.weight >= 0.0) || !c.mean.is_finite() {
                return Err(Error::Domain(format!("invalid component {c:?}")));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("mixing weights sum to {total}")));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Ok(Self { components })
    }

    fn single(law: BaseLaw) -> Self {
        Self { components: vec![Component { weight: 1.0, mean: 0.0, law }] }
    }

    pub fn gaussian(variance: f64) -> Self {
        Self::single(BaseLaw::Gaussian { variance })
    }

    /// Uniform law using the full power `k`.
    pub fn uniform_full_power(k: f64) -> Self {
        Self::single(BaseLaw::Uniform { half_width: (3.0 * k).sqrt() })
    }

    /// Equiprobable `±sqrt(k)`.
    pub fn symmetric_two_point(k: f64) -> Self {
        let a = k.sqrt();
        Self::single(BaseLaw::TwoPoint { lo: -a, hi: a, p_hi: 0.5 })
    }

    /// `E[X^2]`.
    pub fn power(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (c.mean * c.mean + 2.0 * c.mean * c.law.mean() + c.law.second_moment()))
            .sum()
    }

    /// Amplitude scaling by `s` (power by `s^2`).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            components: self
                .components
                .iter()
                .map(|c| Component { weight: c.weight, mean: c.mean * s, law: c.law.scaled(s) })
                .collect(),
        }
    }

    /// `h(X + Z | mixture index)` for `Z ~ N(0, s2)`.
    pub fn conditional_entropy(&self, s2: f64, opts: &QuadOptions) -> Result<f64> {
        let mut h = 0.0;
        for c in &self.components {
            if c.weight > 0.0 {
                h += c.weight * c.law.noisy_entropy(s2, opts)?;
            }
        }
        Ok(h)
    }
}

/// Random mixture of one to four atoms, at least one of them non-Gaussian,
/// rescaled to a random fraction in `[0.2, 1]` of the power `k`.
pub fn random_candidate<R: Rng + ?Sized>(rng: &mut R, k: f64) -> Candidate1D {
    let n = rng.random_range(1..=4usize);
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let kind = if i == 0 { rng.random_range(0..2) } else { rng.random_range(0..3) };
        let law = match kind {
            0 => BaseLaw::Uniform { half_width: rng.random_range(0.1..2.0) },
            1 => BaseLaw::TwoPoint {
                lo: -rng.random_range(0.1..2.0),
                hi: rng.random_range(0.1..2.0),
                p_hi: rng.random_range(0.1..0.9),
            },
            _ => BaseLaw::Gaussian { variance: rng.random_range(0.05..2.0) },
        };
        let mean = 0.5 * rng.sample::<f64, _>(StandardNormal);
        comps.push(Component { weight: rng.random_range(0.1..1.0), mean, law });
    }
    let total: f64 = comps.iter().map(|c| c.weight).sum();
    for c in &mut comps {
        c.weight /= total;
    }
    let cand = Candidate1D { components: comps };
    let frac = rng.random_range(0.2..=1.0);
    cand.scaled((frac * k / cand.power()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateReport {
    /// `h(X + Z1 | ·) - μ h(X + Z2 | ·)` for the candidate.
    pub objective: f64,
    /// Same objective for the Gaussian input with variance `K_X*`.
    pub gaussian_optimum: f64,
    /// `gaussian_optimum - objective`.
    pub margin: f64,
    pub k_x_star: f64,
}

/// Scalar channels only.
pub fn test_candidate(spec: &ChannelSpec, mu: f64, cand: &Candidate1D, opts: &QuadOptions) -> Result<CandidateReport> {
    if spec.t() != 1 {
        return Err(Error::Domain(format!("candidate tests need t = 1, got t = {}", spec.t())));
    }
    let k = spec.k()[(0, 0)];
    let power = cand.power();
    if power > k * (1.0 + 1e-9) {
        return Err(Error::Domain(format!("candidate power {power} exceeds K = {k}")));
    }
    let sol = solve_gaussian_subproblem(spec, mu)?;
    let ks = sol.k_x_star[(0, 0)];
    let (z1, z2) = (spec.k_z1()[(0, 0)], spec.k_z2()[(0, 0)]);
    let tau = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    let gaussian_optimum = 0.5 * (tau * (ks + z1)).ln() - 0.5 * mu * (tau * (ks + z2)).ln();
    let objective = cand.conditional_entropy(z1, opts)? - mu * cand.conditional_entropy(z2, opts)?;
    Ok(CandidateReport { objective, gaussian_optimum, margin: gaussian_optimum - objective, k_x_star: ks })
}
