//! Dirty-paper superposition construction.
//!
//! Builds the precoding (`B_k`) and auxiliary (`A_ij`) gains, checks that the
//! LMMSE residuals of the auxiliaries are free of the state, and recomputes
//! every mutual-information term of the inner bound from the joint
//! covariance.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matcore::{logdet, max_abs, BlockCov, SymMat};
use crate::model::labels::{S, S1, S2, U, V, X, X1, X2, Y1, Y2, Z1};
use crate::model::{build_joint, validate, ChannelSpec, RegionPoint, Strategy};

/// Gains of
///
/// ```text
/// X = X1 + X2 + B1 S1 + B2 S2
/// U = X1 + A10 X2 + A11 S1 + A12 S2
/// V = X2 + A21 S1 + A22 S2
/// ```
/// together with the LMMSE gains `M_U|Y1`, `M_V|Y2` they are derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingCoefficients {
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub a10: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub m_u_y1: DMatrix<f64>,
    pub m_v_y2: DMatrix<f64>,
}

/// Which gain to corrupt in [`CodingCoefficients::with_fault`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    A10,
    A11,
    A12,
    A21,
    A22,
}

impl std::str::FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a10" => Ok(Fault::A10),
            "a11" => Ok(Fault::A11),
            "a12" => Ok(Fault::A12),
            "a21" => Ok(Fault::A21),
            "a22" => Ok(Fault::A22),
            other => Err(Error::Parse(format!("unknown fault target {other}"))),
        }
    }
}

impl CodingCoefficients {
    pub fn t(&self) -> usize {
        self.b1.nrows()
    }

    /// Gains assembled from `B_k` and the two LMMSE matrices.
    pub fn from_gains(b1: DMatrix<f64>, b2: DMatrix<f64>, m_u_y1: DMatrix<f64>, m_v_y2: DMatrix<f64>) -> Self {
        let id = DMatrix::<f64>::identity(b1.nrows(), b1.ncols());
        Self {
            a10: m_u_y1.clone(),
            a11: &m_u_y1 * (&b1 + &id),
            a12: &m_u_y1 * &b2,
            a21: &m_v_y2 * &b1,
            a22: &m_v_y2 * (&b2 + &id),
            b1,
            b2,
            m_u_y1,
            m_v_y2,
        }
    }

    /// Copy with `delta` added to every entry of one auxiliary gain.
    pub fn with_fault(&self, fault: Fault, delta: f64) -> Self {
        let mut c = self.clone();
        let target = match fault {
            Fault::A10 => &mut c.a10,
            Fault::A11 => &mut c.a11,
            Fault::A12 => &mut c.a12,
            Fault::A21 => &mut c.a21,
            Fault::A22 => &mut c.a22,
        };
        target.add_scalar_mut(delta);
        c
    }

    /// Largest entrywise difference over all nine matrices.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            (&self.b1, &other.b1),
            (&self.b2, &other.b2),
            (&self.a10, &other.a10),
            (&self.a11, &other.a11),
            (&self.a12, &other.a12),
            (&self.a21, &other.a21),
            (&self.a22, &other.a22),
            (&self.m_u_y1, &other.m_u_y1),
            (&self.m_v_y2, &other.m_v_y2),
        ]
        .iter()
        .map(|(a, b)| max_abs(&(*a - *b)))
        .fold(0.0, f64::max)
    }
}

/// `B_k = Σ_XSk K_Sk^{-1}`, `M_U|Y1 = K_X1 (K_X1 + K_Z1)^{-1}`,
/// `M_V|Y2 = K_X2 (K_X1 + K_X2 + K_Z2)^{-1}` and the five `A` gains built
/// from them.
pub fn derive_coefficients(spec: &ChannelSpec, strat: &Strategy) -> Result<CodingCoefficients> {
    let report = validate(spec, strat)?;
    if !report.passed {
        return Err(report.into_error());
    }
    let (ks1_inv, _) = spec.k_s1().inverse_or_pinv();
    let (ks2_inv, _) = spec.k_s2().inverse_or_pinv();
    let b1 = &strat.sigma_xs1 * ks1_inv.as_matrix();
    let b2 = &strat.sigma_xs2 * ks2_inv.as_matrix();

    let k_x2 = strat.k_x2(spec);
    let d_u = strat.k_x1.add(spec.k_z1()).inverse_pd()?;
    let d_v = strat.k_x1.add(&k_x2).add(spec.k_z2()).inverse_pd()?;
    let m_u = strat.k_x1.as_matrix() * d_u.as_matrix();
    let m_v = k_x2.as_matrix() * d_v.as_matrix();
    Ok(CodingCoefficients::from_gains(b1, b2, m_u, m_v))
}

/// Recovers the gains from a joint built by [`build_joint`]: `B_k` from
/// `cov(X, S_k)`, the `M` gains as the LMMSE matrices `cov(U, Y1) Σ_Y1^{-1}`
/// and `cov(V, Y2) Σ_Y2^{-1}`.
pub fn coefficients_from_joint(joint: &BlockCov) -> Result<CodingCoefficients> {
    let (ks1_inv, _) = joint.sub_cov(&[S1])?.inverse_or_pinv();
    let (ks2_inv, _) = joint.sub_cov(&[S2])?.inverse_or_pinv();
    let b1 = joint.cross_cov(&[X], &[S1])? * ks1_inv.as_matrix();
    let b2 = joint.cross_cov(&[X], &[S2])? * ks2_inv.as_matrix();
    let y1_inv = joint.sub_cov(&[Y1])?.inverse_pd()?;
    let y2_inv = joint.sub_cov(&[Y2])?.inverse_pd()?;
    let m_u = joint.cross_cov(&[U], &[Y1])? * y1_inv.as_matrix();
    let m_v = joint.cross_cov(&[V], &[Y2])? * y2_inv.as_matrix();
    Ok(CodingCoefficients::from_gains(b1, b2, m_u, m_v))
}

/// Max-abs entries of the four cross-covariances that vanish when the
/// auxiliaries' estimation residuals are free of state and interference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WdpResiduals {
    /// `cov(S, V - M_V|Y2 Y2)`
    pub state_vs_v_residual: f64,
    /// `cov(V - M_V|Y2 Y2, Y2)`
    pub v_residual_vs_y2: f64,
    /// `cov((X2, S), U - M_U|Y1 Y1)`
    pub x2_state_vs_u_residual: f64,
    /// `cov(U - M_U|Y1 Y1, Y1)`
    pub u_residual_vs_y1: f64,
}

impl WdpResiduals {
    pub fn families(&self) -> [(&'static str, f64); 4] {
        [
            ("cov(S, V - M Y2)", self.state_vs_v_residual),
            ("cov(V - M Y2, Y2)", self.v_residual_vs_y2),
            ("cov((X2,S), U - M Y1)", self.x2_state_vs_u_residual),
            ("cov(U - M Y1, Y1)", self.u_residual_vs_y1),
        ]
    }

    pub fn max(&self) -> f64 {
        self.families().iter().map(|f| f.1).fold(0.0, f64::max)
    }
}

pub fn wdp_residuals(spec: &ChannelSpec, strat: &Strategy, coeffs: &CodingCoefficients) -> Result<WdpResiduals> {
    let joint = build_joint(spec, strat, coeffs)?;
    let mv = &coeffs.m_v_y2;
    let mu = &coeffs.m_u_y1;

    let s_v = joint.cross_cov(&S, &[V])? - joint.cross_cov(&S, &[Y2])? * mv.transpose();
    let v_y2 = joint.cross_cov(&[V], &[Y2])? - mv * joint.sub_cov(&[Y2])?.as_matrix();
    let xs = [X2, S1, S2];
    let xs_u = joint.cross_cov(&xs, &[U])? - joint.cross_cov(&xs, &[Y1])? * mu.transpose();
    let u_y1 = joint.cross_cov(&[U], &[Y1])? - mu * joint.sub_cov(&[Y1])?.as_matrix();
    Ok(WdpResiduals {
        state_vs_v_residual: max_abs(&s_v),
        v_residual_vs_y2: max_abs(&v_y2),
        x2_state_vs_u_residual: max_abs(&xs_u),
        u_residual_vs_y1: max_abs(&u_y1),
    })
}

/// Inner-bound information terms, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiTerms {
    /// `I(V; Y2) - I(V; S)`
    pub r_v: f64,
    /// `I(U; Y1) - I(U; V, S)`
    pub r_u: f64,
    /// `I(S; U, Y1)`
    pub mask1: f64,
    /// `I(S; V, Y2)`
    pub mask2: f64,
    /// `I(U; V | S)`
    pub marton: f64,
    /// `I(U; Y1) - I(U; S)`; equals `r_u + marton` by the chain rule.
    pub r_u_marginal: f64,
    /// Some conditioning block was singular and pseudo-inverted, or a
    /// deterministic direction was projected out.
    pub degenerate: bool,
}

pub fn mi_terms(joint: &BlockCov) -> Result<MiTerms> {
    let mut degenerate = false;
    let mut mi = |a: &[&str], b: &[&str], g: &[&str]| -> Result<f64> {
        let m = joint.mutual_info(a, b, g)?;
        degenerate |= m.degenerate;
        Ok(m.nats)
    };
    let v_y2 = mi(&[V], &[Y2], &[])?;
    let v_s = mi(&[V], &S, &[])?;
    let u_y1 = mi(&[U], &[Y1], &[])?;
    let u_vs = mi(&[U], &[V, S1, S2], &[])?;
    let u_s = mi(&[U], &S, &[])?;
    let mask1 = mi(&S, &[U, Y1], &[])?;
    let mask2 = mi(&S, &[V, Y2], &[])?;
    let marton = mi(&[U], &[V], &S)?;
    Ok(MiTerms {
        r_v: v_y2 - v_s,
        r_u: u_y1 - u_vs,
        mask1,
        mask2,
        marton,
        r_u_marginal: u_y1 - u_s,
        degenerate,
    })
}

/// Derive gains, build the joint, and read the region point off the
/// information terms: `(R1, R2, E1, E2) = (r_u, r_v, mask1, mask2)`.
pub fn inner_region(spec: &ChannelSpec, strat: &Strategy) -> Result<RegionPoint> {
    let coeffs = derive_coefficients(spec, strat)?;
    let joint = build_joint(spec, strat, &coeffs)?;
    let m = mi_terms(&joint)?;
    Ok(RegionPoint { r1: m.r_u, r2: m.r_v, e1: m.mask1, e2: m.mask2 }.map(|v| v.max(0.0)))
}

/// `I(S; V | Y2)` read from the joint; zero for correctly derived gains.
pub fn state_v_given_y2(joint: &BlockCov) -> Result<f64> {
    Ok(joint.mutual_info(&S, &[V], &[Y2])?.nats)
}

/// `(ln|Σ_{U|Y1}|, ln|Σ_{X1|X1+Z1}|)`: the two conditional log-volumes that
/// must agree. Needs `K_X1` positive definite.
pub fn u_given_y1_logdets(joint: &BlockCov) -> Result<(f64, f64)> {
    let lhs = logdet(&joint.schur(&[U], &[Y1])?.cov)?;
    let kx1 = joint.sub_cov(&[X1])?;
    let kz1 = joint.sub_cov(&[Z1])?;
    let t = kx1.dim();
    let mut c = DMatrix::zeros(2 * t, 2 * t);
    c.view_mut((0, 0), (t, t)).copy_from(kx1.as_matrix());
    c.view_mut((0, t), (t, t)).copy_from(kx1.as_matrix());
    c.view_mut((t, 0), (t, t)).copy_from(kx1.as_matrix());
    c.view_mut((t, t), (t, t)).copy_from(kx1.add(&kz1).as_matrix());
    let pair = BlockCov::new(vec!["X1", "X1+Z1"], vec![t, t], SymMat::symmetrize(&c))?;
    let rhs = logdet(&pair.schur(&["X1"], &["X1+Z1"])?.cov)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_spec, random_strategy};
    use crate::region::eval_region;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn running() -> (ChannelSpec, Strategy) {
        (ChannelSpec::scalar(2.0, 1.0, 1.0, 1.0, 2.0).unwrap(), Strategy::scalar(0.5, -0.5, 0.0))
    }

    #[test]
    fn scalar_coefficients_by_hand() {
        // K_X1 = K_X2 = 1, no state correlation, K_Z1 = 1, K_Z2 = 2.
        let spec = ChannelSpec::scalar(2.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        let strat = Strategy::scalar(1.0, 0.0, 0.0);
        let c = derive_coefficients(&spec, &strat).unwrap();
        let get = |m: &DMatrix<f64>| m[(0, 0)];
        assert_eq!(get(&c.b1), 0.0);
        assert_eq!(get(&c.b2), 0.0);
        assert!((get(&c.a10) - 0.5).abs() < 1e-15);
        assert!((get(&c.a11) - 0.5).abs() < 1e-15);
        assert_eq!(get(&c.a12), 0.0);
        assert_eq!(get(&c.a21), 0.0);
        assert!((get(&c.a22) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn full_cancellation_zeroes_a11() {
        let spec = ChannelSpec::scalar(3.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        let c = derive_coefficients(&spec, &Strategy::scalar(0.5, -1.0, 0.0)).unwrap();
        assert!((c.b1[(0, 0)] + 1.0).abs() < 1e-15);
        assert_eq!(c.a11[(0, 0)], 0.0);
    }

    #[test]
    fn no_private_one_signal() {
        let (spec, _) = running();
        let c = derive_coefficients(&spec, &Strategy::scalar(0.0, -0.5, 0.2)).unwrap();
        for m in [&c.m_u_y1, &c.a10, &c.a11, &c.a12] {
            assert_eq!(max_abs(m), 0.0);
        }
    }

    #[test]
    fn residuals_vanish_and_detect_faults() {
        let (spec, strat) = running();
        let c = derive_coefficients(&spec, &strat).unwrap();
        assert!(wdp_residuals(&spec, &strat, &c).unwrap().max() < 1e-14);

        let bad = wdp_residuals(&spec, &strat, &c.with_fault(Fault::A21, 0.1)).unwrap();
        assert!(bad.state_vs_v_residual > 0.01);

        let z = Strategy::zero(1);
        let cz = derive_coefficients(&spec, &z).unwrap();
        assert_eq!(wdp_residuals(&spec, &z, &cz).unwrap().max(), 0.0);
    }

    #[test]
    fn running_example_terms() {
        let (spec, strat) = running();
        let c = derive_coefficients(&spec, &strat).unwrap();
        let j = build_joint(&spec, &strat, &c).unwrap();
        let m = mi_terms(&j).unwrap();
        assert!((m.r_v - 0.5 * (3.75f64 / 2.5).ln()).abs() < 1e-13);
        assert!((m.r_u - 0.5 * 1.5f64.ln()).abs() < 1e-13);

        // I(U;V|S) = 1/2 ln |K_X1 + A10 K_X2 A10^T| - 1/2 ln |K_X1|
        let a10 = c.a10[(0, 0)];
        let kx2 = strat.k_x2(&spec)[(0, 0)];
        let want = 0.5 * ((0.5 + a10 * a10 * kx2) / 0.5f64).ln();
        assert!((m.marton - want).abs() < 1e-13);
        assert!((m.r_u_marginal - (m.r_u + m.marton)).abs() < 1e-13);
    }

    #[test]
    fn uncorrelated_state_masks_equal_plain_leakage() {
        let (spec, _) = running();
        let strat = Strategy::scalar(0.7, 0.0, 0.0);
        let c = derive_coefficients(&spec, &strat).unwrap();
        let j = build_joint(&spec, &strat, &c).unwrap();
        let m = mi_terms(&j).unwrap();
        let plain1 = j.mutual_info(&[S1], &[Y1], &[]).unwrap().nats;
        let plain2 = j.mutual_info(&[S2], &[Y2], &[]).unwrap().nats;
        assert!((m.mask1 - plain1).abs() < 1e-13);
        assert!((m.mask2 - plain2).abs() < 1e-13);
    }

    #[test]
    fn inner_equals_closed_form_running() {
        let (spec, strat) = running();
        let a = inner_region(&spec, &strat).unwrap();
        let b = eval_region(&spec, &strat).unwrap();
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn inner_zero_strategy() {
        let (spec, _) = running();
        let z = Strategy::zero(1);
        let p = inner_region(&spec, &z).unwrap();
        assert_eq!(p.r1, 0.0);
        assert!((p.r2 - 0.5 * 2f64.ln()).abs() < 1e-13);
        // I(S1;Y1) with Y1 = X2 + S1 + Z1
        assert!((p.e1 - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-13);
        assert!((p.e2 - 0.5 * (5.0f64 / 4.0).ln()).abs() < 1e-13);
    }

    #[test]
    fn randomized_construction_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for i in 0..100 {
            let t = 1 + i % 4;
            let spec = random_spec(&mut rng, t, false);
            let strat = random_strategy(&mut rng, &spec);
            let c = derive_coefficients(&spec, &strat).unwrap();
            let j = build_joint(&spec, &strat, &c).unwrap();

            // Power used with equality; cross-covariance consistent with B_k.
            let kx = j.sub_cov(&[X]).unwrap();
            assert!(max_abs(&(kx.as_matrix() - spec.k().as_matrix())) < 1e-12);
            let xs1 = j.cross_cov(&[X], &[S1]).unwrap();
            assert!(max_abs(&(xs1 - &strat.sigma_xs1)) < 1e-12);
            assert!(j.cov().is_psd(1e-9));

            assert!(wdp_residuals(&spec, &strat, &c).unwrap().max() < 1e-10);
            assert!(state_v_given_y2(&j).unwrap().abs() < 1e-10);
            let (l, r) = u_given_y1_logdets(&j).unwrap();
            assert!((l - r).abs() < 1e-9);
            let back = coefficients_from_joint(&j).unwrap();
            assert!(back.max_abs_diff(&c) < 1e-10);

            let m = mi_terms(&j).unwrap();
            assert!(m.r_u >= -1e-9 && m.r_v >= -1e-9);
            assert!((m.r_u_marginal - m.r_u - m.marton).abs() < 1e-9);
        }
    }
}
