//! Closed-form rate-leakage evaluation and the matching converse bounds.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{logdet, BlockCov, SymMat};
use crate::model::{validate, ChannelSpec, RegionPoint, Strategy, User};

/// A region point together with the numerical flags raised while computing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionEval {
    pub point: RegionPoint,
    /// Some component came out negative (roundoff at a boundary strategy)
    /// and was clamped to zero.
    pub clamped: bool,
}

fn ensure_feasible(spec: &ChannelSpec, strat: &Strategy) -> Result<()> {
    let report = validate(spec, strat)?;
    if report.passed {
        Ok(())
    } else {
        Err(report.into_error())
    }
}

fn half_log_ratio(num: &SymMat, den: &SymMat) -> Result<f64> {
    Ok(0.5 * (logdet(num)? - logdet(den)?))
}

/// Covariance of `Y_k`: `K + Σ_XSk + Σ_XSk^T + K_Sk + K_Zk`.
pub fn output_cov(spec: &ChannelSpec, strat: &Strategy, user: User) -> SymMat {
    let s = strat.sigma_xs_of(user);
    let m = spec.k().as_matrix() + s + s.transpose() + spec.k_s_of(user).as_matrix() + spec.k_z_of(user).as_matrix();
    SymMat::symmetrize(&m)
}

fn leakage_closed_form(spec: &ChannelSpec, strat: &Strategy, user: User, avail: &SymMat) -> Result<f64> {
    half_log_ratio(&output_cov(spec, strat, user), &avail.add(spec.k_z_of(user)))
}

/// `(R1, R2, E1, E2)` of the given strategy, in nats.
pub fn eval_region(spec: &ChannelSpec, strat: &Strategy) -> Result<RegionPoint> {
    eval_region_flagged(spec, strat).map(|e| e.point)
}

pub fn eval_region_flagged(spec: &ChannelSpec, strat: &Strategy) -> Result<RegionEval> {
    ensure_feasible(spec, strat)?;
    let avail = strat.available_power(spec);
    let r1 = half_log_ratio(&strat.k_x1.add(spec.k_z1()), spec.k_z1())?;
    let r2 = half_log_ratio(&avail.add(spec.k_z2()), &strat.k_x1.add(spec.k_z2()))?;
    let e1 = leakage_closed_form(spec, strat, User::One, &avail)?;
    let e2 = leakage_closed_form(spec, strat, User::Two, &avail)?;
    let raw = RegionPoint { r1, r2, e1, e2 };
    let clamped = raw.as_array().iter().any(|&v| v < 0.0);
    Ok(RegionEval { point: raw.map(|v| v.max(0.0)), clamped })
}

/// Converse bound on `R1 + μ R2` evaluated at the strategy's covariances,
/// assembled from its entropy terms. Requires `μ > 1`.
pub fn weighted_sum_upper(spec: &ChannelSpec, strat: &Strategy, mu: f64) -> Result<f64> {
    if !(mu > 1.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("weight mu must be > 1, got {mu}")));
    }
    ensure_feasible(spec, strat)?;
    let kz1 = spec.k_z1();
    let kz2 = spec.k_z2();
    let first = half_log_ratio(&strat.k_x1.add(kz1), kz1)?;
    let diff = half_log_ratio(&strat.k_x1.add(kz2), kz2)?;
    let outer = half_log_ratio(&strat.available_power(spec).add(kz2), kz2)?;
    Ok(first - mu * diff + mu * outer)
}

/// `I(S; Y_k) = h(S) - h(S | Y_k)`, computed from the Schur complement of
/// the `(S, Y_k)` covariance.
pub fn leakage_lower_bound(spec: &ChannelSpec, strat: &Strategy, user: User) -> Result<f64> {
    ensure_feasible(spec, strat)?;
    let t = spec.t();
    let ks = spec.k_s();
    // Σ_{S Y_k} = Σ_XS^T + Σ_{S S_k}
    let mut s_y = strat.sigma_xs().transpose();
    let off = match user {
        User::One => 0,
        User::Two => t,
    };
    let cols = ks.columns(off, t).into_owned();
    s_y += cols;
    let sy_cov = output_cov(spec, strat, user);
    let mut cov = DMatrix::zeros(3 * t, 3 * t);
    cov.view_mut((0, 0), (2 * t, 2 * t)).copy_from(ks.as_matrix());
    cov.view_mut((0, 2 * t), (2 * t, t)).copy_from(&s_y);
    cov.view_mut((2 * t, 0), (t, 2 * t)).copy_from(&s_y.transpose());
    cov.view_mut((2 * t, 2 * t), (t, t)).copy_from(sy_cov.as_matrix());
    let joint = BlockCov::new(vec!["S", "Y"], vec![2 * t, t], SymMat::symmetrize(&cov))?;
    Ok(joint.mutual_info(&["S"], &["Y"], &[])?.nats)
}
