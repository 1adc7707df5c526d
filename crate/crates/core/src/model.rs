//! Channel and strategy data model, feasibility checks, and the exact
//! second-order law of the superposition/precoding construction.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coding::CodingCoefficients;
use crate::error::{Error, Result};
use crate::matcore::{block_diag, max_abs, psd_project, BlockCov, LinearFactor, SymMat, PSD_TOL};

/// Block labels of the joint law produced by [`build_joint`].
pub mod labels {
    pub const X1: &str = "X1";
    pub const X2: &str = "X2";
    pub const S1: &str = "S1";
    pub const S2: &str = "S2";
    pub const Z1: &str = "Z1";
    pub const Z2: &str = "Z2";
    pub const U: &str = "U";
    pub const V: &str = "V";
    pub const X: &str = "X";
    pub const Y1: &str = "Y1";
    pub const Y2: &str = "Y2";

    pub const ALL: [&str; 11] = [X1, X2, S1, S2, Z1, Z2, U, V, X, Y1, Y2];
    pub const S: [&str; 2] = [S1, S2];
}

/// `Y_k = X + S_k + Z_k`, `k = 1, 2`, all vectors of dimension `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    t: usize,
    k: SymMat,
    k_s1: SymMat,
    k_s2: SymMat,
    k_z1: SymMat,
    k_z2: SymMat,
    degraded: bool,
}

impl ChannelSpec {
    /// `K` and the state covariances must be PSD, the noise covariances
    /// positive definite. Singular state covariances are accepted and
    /// handled by pseudo-inverses (see [`ChannelSpec::state_degenerate`]).
    pub fn new(k: SymMat, k_s1: SymMat, k_s2: SymMat, k_z1: SymMat, k_z2: SymMat) -> Result<Self> {
        let t = k.dim();
        for (name, m) in [("K_S1", &k_s1), ("K_S2", &k_s2), ("K_Z1", &k_z1), ("K_Z2", &k_z2)] {
            if m.dim() != t {
                return Err(Error::Shape(format!("{name} is {0}x{0}, expected {t}x{t}", m.dim())));
            }
        }
        for (name, m) in [("K", &k), ("K_S1", &k_s1), ("K_S2", &k_s2)] {
            if !m.is_psd(PSD_TOL) {
                return Err(Error::NotPositiveDefinite(format!(
                    "{name} is not PSD (min eigenvalue {:.3e})",
                    m.min_eigenvalue()
                )));
            }
        }
        for (name, m) in [("K_Z1", &k_z1), ("K_Z2", &k_z2)] {
            m.inverse_pd()
                .map_err(|_| Error::NotPositiveDefinite(format!("{name} must be positive definite")))?;
        }
        let degraded = k_z2.sub(&k_z1).is_psd(PSD_TOL);
        Ok(Self { t, k, k_s1, k_s2, k_z1, k_z2, degraded })
    }

    /// Scalar (`t = 1`) convenience constructor.
    pub fn scalar(k: f64, k_s1: f64, k_s2: f64, k_z1: f64, k_z2: f64) -> Result<Self> {
        Self::new(
            SymMat::scalar(k),
            SymMat::scalar(k_s1),
            SymMat::scalar(k_s2),
            SymMat::scalar(k_z1),
            SymMat::scalar(k_z2),
        )
    }

    pub fn t(&self) -> usize {
        self.t
    }
    pub fn k(&self) -> &SymMat {
        &self.k
    }
    pub fn k_s1(&self) -> &SymMat {
        &self.k_s1
    }
    pub fn k_s2(&self) -> &SymMat {
        &self.k_s2
    }
    pub fn k_s_of(&self, user: User) -> &SymMat {
        match user {
            User::One => &self.k_s1,
            User::Two => &self.k_s2,
        }
    }
    pub fn k_z1(&self) -> &SymMat {
        &self.k_z1
    }
    pub fn k_z2(&self) -> &SymMat {
        &self.k_z2
    }
    pub fn k_z_of(&self, user: User) -> &SymMat {
        match user {
            User::One => &self.k_z1,
            User::Two => &self.k_z2,
        }
    }

    /// `K_Z1 <= K_Z2` in the Loewner order.
    pub fn degraded(&self) -> bool {
        self.degraded
    }

    /// Smallest eigenvalue of `K_Z2 - K_Z1`.
    pub fn degradedness_margin(&self) -> f64 {
        self.k_z2.sub(&self.k_z1).min_eigenvalue()
    }

    /// True when either state covariance is singular.
    pub fn state_degenerate(&self) -> bool {
        self.k_s1.pseudo_inverse().1 || self.k_s2.pseudo_inverse().1
    }

    /// `K_S = blockdiag(K_S1, K_S2)`.
    pub fn k_s(&self) -> SymMat {
        block_diag(&[&self.k_s1, &self.k_s2])
    }

    /// Same channel with every covariance multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.k.scale(c),
            self.k_s1.scale(c),
            self.k_s2.scale(c),
            self.k_z1.scale(c),
            self.k_z2.scale(c),
        )
    }

    /// Same channel with both state covariances replaced.
    pub fn with_states(&self, k_s1: SymMat, k_s2: SymMat) -> Result<Self> {
        Self::new(self.k.clone(), k_s1, k_s2, self.k_z1.clone(), self.k_z2.clone())
    }
}

/// Receiver index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    One,
    Two,
}

impl User {
    pub const BOTH: [User; 2] = [User::One, User::Two];

    pub fn index(self) -> usize {
        match self {
            User::One => 1,
            User::Two => 2,
        }
    }
}

/// Transmitter parameters `(K_X1, Σ_XS1, Σ_XS2)`; `K_X2` is derived so that
/// the full power `K` is used.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub k_x1: SymMat,
    pub sigma_xs1: DMatrix<f64>,
    pub sigma_xs2: DMatrix<f64>,
}

impl Strategy {
    pub fn new(k_x1: SymMat, sigma_xs1: DMatrix<f64>, sigma_xs2: DMatrix<f64>) -> Result<Self> {
        let t = k_x1.dim();
        for (name, m) in [("Sigma_XS1", &sigma_xs1), ("Sigma_XS2", &sigma_xs2)] {
            if m.nrows() != t || m.ncols() != t {
                return Err(Error::Shape(format!(
                    "{name} is {}x{}, expected {t}x{t}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidMatrix(format!("{name} has non-finite entries")));
            }
        }
        Ok(Self { k_x1, sigma_xs1, sigma_xs2 })
    }

    pub fn scalar(k_x1: f64, sigma_xs1: f64, sigma_xs2: f64) -> Self {
        Self {
            k_x1: SymMat::scalar(k_x1),
            sigma_xs1: DMatrix::from_element(1, 1, sigma_xs1),
            sigma_xs2: DMatrix::from_element(1, 1, sigma_xs2),
        }
    }

    pub fn zero(t: usize) -> Self {
        Self {
            k_x1: SymMat::zeros(t),
            sigma_xs1: DMatrix::zeros(t, t),
            sigma_xs2: DMatrix::zeros(t, t),
        }
    }

    pub fn t(&self) -> usize {
        self.k_x1.dim()
    }

    pub fn sigma_xs_of(&self, user: User) -> &DMatrix<f64> {
        match user {
            User::One => &self.sigma_xs1,
            User::Two => &self.sigma_xs2,
        }
    }

    /// `Σ_XS = [Σ_XS1 Σ_XS2]`.
    pub fn sigma_xs(&self) -> DMatrix<f64> {
        let t = self.t();
        let mut m = DMatrix::zeros(t, 2 * t);
        m.view_mut((0, 0), (t, t)).copy_from(&self.sigma_xs1);
        m.view_mut((0, t), (t, t)).copy_from(&self.sigma_xs2);
        m
    }

    /// Power spent on state correlation, `Σ_XS K_S^{-1} Σ_XS^T`
    /// (pseudo-inverse for singular state covariances).
    pub fn masking_power(&self, spec: &ChannelSpec) -> SymMat {
        let (p1, _) = spec.k_s1.inverse_or_pinv();
        let (p2, _) = spec.k_s2.inverse_or_pinv();
        p1.congruence(&self.sigma_xs1).add(&p2.congruence(&self.sigma_xs2))
    }

    /// `K - Σ_XS K_S^{-1} Σ_XS^T`, the covariance of `X` given the state.
    pub fn available_power(&self, spec: &ChannelSpec) -> SymMat {
        spec.k.sub(&self.masking_power(spec))
    }

    /// `K_X2 = K - K_X1 - Σ_XS K_S^{-1} Σ_XS^T`.
    pub fn k_x2(&self, spec: &ChannelSpec) -> SymMat {
        self.available_power(spec).sub(&self.k_x1)
    }

    /// Every covariance (including the spec's) scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            k_x1: self.k_x1.scale(c),
            sigma_xs1: &self.sigma_xs1 * c,
            sigma_xs2: &self.sigma_xs2 * c,
        }
    }

    /// Entries of `(K_X1 upper triangle, Σ_XS1, Σ_XS2)` in row-major order.
    pub fn vectorize(&self) -> Vec<f64> {
        let t = self.t();
        let mut v = Vec::with_capacity(t * (t + 1) / 2 + 2 * t * t);
        for i in 0..t {
            for j in i..t {
                v.push(self.k_x1[(i, j)]);
            }
        }
        for m in [&self.sigma_xs1, &self.sigma_xs2] {
            for i in 0..t {
                for j in 0..t {
                    v.push(m[(i, j)]);
                }
            }
        }
        v
    }
}

/// `(R1, R2, E1, E2)` in nats per channel use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    #[serde(rename = "R1")]
    pub r1: f64,
    #[serde(rename = "R2")]
    pub r2: f64,
    #[serde(rename = "E1")]
    pub e1: f64,
    #[serde(rename = "E2")]
    pub e2: f64,
}

impl RegionPoint {
    pub fn as_array(&self) -> [f64; 4] {
        [self.r1, self.r2, self.e1, self.e2]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { r1: f(self.r1), r2: f(self.r2), e1: f(self.e1), e2: f(self.e2) }
    }

    pub fn leakage(&self, user: User) -> f64 {
        match user {
            User::One => self.e1,
            User::Two => self.e2,
        }
    }
}

/// One constraint of the feasibility report. `margin` is the smallest
/// eigenvalue of the matrix that must be PSD (negative means violated).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub passed: bool,
    pub checks: Vec<ConstraintCheck>,
}

impl FeasibilityReport {
    /// The most violated constraint, if any.
    pub fn worst(&self) -> Option<&ConstraintCheck> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .min_by(|a, b| a.margin.total_cmp(&b.margin))
    }

    pub fn into_error(self) -> Error {
        match self.worst() {
            Some(c) => Error::InfeasibleStrategy { reason: c.name.clone(), margin: c.margin },
            None => Error::InfeasibleStrategy { reason: "unknown".into(), margin: 0.0 },
        }
    }
}

/// Checks `0 <= K_X1 <= K - Σ_XS K_S^{-1} Σ_XS^T` and, for singular state
/// covariances, that `Σ_XSk` lies in the row space of `K_Sk`.
pub fn validate(spec: &ChannelSpec, strat: &Strategy) -> Result<FeasibilityReport> {
    let t = spec.t();
    if strat.t() != t {
        return Err(Error::Shape(format!("strategy has t = {} but channel has t = {t}", strat.t())));
    }
    let tol = PSD_TOL * (1.0 + spec.k.trace_norm());
    let mut checks = Vec::new();
    let mut push = |name: &str, margin: f64| {
        checks.push(ConstraintCheck { name: name.to_string(), passed: margin >= -tol, margin });
    };
    push("K_X1 >= 0", strat.k_x1.min_eigenvalue());
    push("K - Sigma_XS K_S^-1 Sigma_XS^T >= 0", strat.available_power(spec).min_eigenvalue());
    push("K_X1 <= K - Sigma_XS K_S^-1 Sigma_XS^T", strat.k_x2(spec).min_eigenvalue());
    for user in User::BOTH {
        let ks = spec.k_s_of(user);
        let (pinv, singular) = ks.pseudo_inverse();
        if singular {
            let sig = strat.sigma_xs_of(user);
            let resid = sig - sig * pinv.as_matrix() * ks.as_matrix();
            push(
                &format!("Sigma_XS{} within range of K_S{}", user.index(), user.index()),
                -max_abs(&resid),
            );
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(FeasibilityReport { passed, checks })
}

/// Joint covariance of `(X1, X2, S1, S2, Z1, Z2, U, V, X, Y1, Y2)` where the
/// first six blocks are independent and
///
/// ```text
/// X  = X1 + X2 + B1 S1 + B2 S2
/// U  = X1 + A10 X2 + A11 S1 + A12 S2
/// V  = X2 + A21 S1 + A22 S2
/// Yk = X + Sk + Zk
/// ```
pub fn build_joint(spec: &ChannelSpec, strat: &Strategy, coeffs: &CodingCoefficients) -> Result<BlockCov> {
    let report = validate(spec, strat)?;
    if !report.passed {
        return Err(report.into_error());
    }
    let t = spec.t();
    if coeffs.t() != t {
        return Err(Error::Shape(format!("coefficients have t = {} but channel has t = {t}", coeffs.t())));
    }
    let mut k_x2 = strat.k_x2(spec);
    if k_x2.min_eigenvalue() < 0.0 {
        k_x2 = psd_project(&k_x2);
    }
    let base = vec![
        strat.k_x1.clone(),
        k_x2,
        spec.k_s1.clone(),
        spec.k_s2.clone(),
        spec.k_z1.clone(),
        spec.k_z2.clone(),
    ];

    let id = DMatrix::<f64>::identity(t, t);
    let zero = DMatrix::<f64>::zeros(t, t);
    let c = coeffs;
    // Columns: X1 X2 S1 S2 Z1 Z2
    let rows: [[&DMatrix<f64>; 6]; 5] = [
        [&id, &c.a10, &c.a11, &c.a12, &zero, &zero],
        [&zero, &id, &c.a21, &c.a22, &zero, &zero],
        [&id, &id, &c.b1, &c.b2, &zero, &zero],
        [&id, &id, &(&c.b1 + &id), &c.b2, &id, &zero],
        [&id, &id, &c.b1, &(&c.b2 + &id), &zero, &id],
    ];
    let mut map = DMatrix::zeros(11 * t, 6 * t);
    for i in 0..6 {
        map.view_mut((i * t, i * t), (t, t)).copy_from(&id);
    }
    for (r, row) in rows.iter().enumerate() {
        for (col, blk) in row.iter().enumerate() {
            map.view_mut(((6 + r) * t, col * t), (t, t)).copy_from(*blk);
        }
    }
    BlockCov::from_factor(labels::ALL.to_vec(), vec![t; 11], LinearFactor { base, map })
}

/// JSON schema: `{"t": n, "K": [[..]], "K_S1": .., "K_S2": .., "K_Z1": .., "K_Z2": ..}`
/// with row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpecJson {
    pub t: usize,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "K_S1")]
    pub k_s1: Vec<Vec<f64>>,
    #[serde(rename = "K_S2")]
    pub k_s2: Vec<Vec<f64>>,
    #[serde(rename = "K_Z1")]
    pub k_z1: Vec<Vec<f64>>,
    #[serde(rename = "K_Z2")]
    pub k_z2: Vec<Vec<f64>>,
}

/// JSON schema: `{"t": n, "K_X1": [[..]], "Sigma_XS1": [[..]], "Sigma_XS2": [[..]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyJson {
    pub t: usize,
    #[serde(rename = "K_X1")]
    pub k_x1: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_XS1")]
    pub sigma_xs1: Vec<Vec<f64>>,
    #[serde(rename = "Sigma_XS2")]
    pub sigma_xs2: Vec<Vec<f64>>,
}

fn parse_rows(name: &str, rows: &[Vec<f64>], t: usize) -> Result<DMatrix<f64>> {
    if rows.len() != t {
        return Err(Error::Parse(format!("{name} has {} rows, expected {t}", rows.len())));
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != t {
            return Err(Error::Parse(format!("{name} row {i} has {} entries, expected {t}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(t, t, |i, j| rows[i][j]))
}

fn parse_sym(name: &str, rows: &[Vec<f64>], t: usize) -> Result<SymMat> {
    SymMat::new(parse_rows(name, rows, t)?).map_err(|e| Error::Parse(format!("{name}: {e}")))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl ChannelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ChannelSpecJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::try_from(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ChannelSpecJson::from(self)).expect("plain data serializes")
    }
}

impl TryFrom<ChannelSpecJson> for ChannelSpec {
    type Error = Error;

    fn try_from(raw: ChannelSpecJson) -> Result<Self> {
        let t = raw.t;
        if t == 0 {
            return Err(Error::Parse("t must be positive".into()));
        }
        Self::new(
            parse_sym("K", &raw.k, t)?,
            parse_sym("K_S1", &raw.k_s1, t)?,
            parse_sym("K_S2", &raw.k_s2, t)?,
            parse_sym("K_Z1", &raw.k_z1, t)?,
            parse_sym("K_Z2", &raw.k_z2, t)?,
        )
    }
}

impl From<&ChannelSpec> for ChannelSpecJson {
    fn from(s: &ChannelSpec) -> Self {
        Self {
            t: s.t,
            k: s.k.to_rows(),
            k_s1: s.k_s1.to_rows(),
            k_s2: s.k_s2.to_rows(),
            k_z1: s.k_z1.to_rows(),
            k_z2: s.k_z2.to_rows(),
        }
    }
}

impl Strategy {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: StrategyJson = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::try_from(raw)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&StrategyJson::from(self)).expect("plain data serializes")
    }
}

impl TryFrom<StrategyJson> for Strategy {
    type Error = Error;

    fn try_from(raw: StrategyJson) -> Result<Self> {
        let t = raw.t;
        if t == 0 {
            return Err(Error::Parse("t must be positive".into()));
        }
        let s1 = parse_rows("Sigma_XS1", &raw.sigma_xs1, t)?;
        let s2 = parse_rows("Sigma_XS2", &raw.sigma_xs2, t)?;
        Self::new(parse_sym("K_X1", &raw.k_x1, t)?, s1, s2).map_err(|e| Error::Parse(e.to_string()))
    }
}

impl From<&Strategy> for StrategyJson {
    fn from(s: &Strategy) -> Self {
        Self {
            t: s.t(),
            k_x1: s.k_x1.to_rows(),
            sigma_xs1: to_rows(&s.sigma_xs1),
            sigma_xs2: to_rows(&s.sigma_xs2),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::derive_coefficients;

    fn running() -> (ChannelSpec, Strategy) {
        (ChannelSpec::scalar(2.0, 1.0, 1.0, 1.0, 2.0).unwrap(), Strategy::scalar(0.5, -0.5, 0.0))
    }

    #[test]
    fn running_example_is_feasible() {
        let (spec, strat) = running();
        let r = validate(&spec, &strat).unwrap();
        assert!(r.passed);
        assert!((strat.k_x2(&spec)[(0, 0)] - 1.25).abs() < 1e-15);
    }

    #[test]
    fn oversized_k_x1_fails() {
        let (spec, _) = running();
        let r = validate(&spec, &Strategy::scalar(2.0, -0.5, 0.0)).unwrap();
        assert!(!r.passed);
        let worst = r.worst().unwrap();
        assert_eq!(worst.name, "K_X1 <= K - Sigma_XS K_S^-1 Sigma_XS^T");
        assert!((worst.margin + 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_strategy_passes() {
        let (spec, _) = running();
        let z = Strategy::zero(1);
        assert!(validate(&spec, &z).unwrap().passed);
        assert_eq!(z.k_x2(&spec), *spec.k());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let (spec, _) = running();
        assert!(matches!(validate(&spec, &Strategy::zero(2)), Err(Error::Shape(_))));
    }

    #[test]
    fn degraded_flag() {
        let (spec, _) = running();
        assert!(spec.degraded());
        let rev = ChannelSpec::scalar(2.0, 1.0, 1.0, 2.0, 1.0).unwrap();
        assert!(!rev.degraded());
    }

    #[test]
    fn singular_noise_rejected() {
        assert!(ChannelSpec::scalar(2.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn zero_state_requires_zero_correlation() {
        let spec = ChannelSpec::scalar(2.0, 0.0, 1.0, 1.0, 2.0).unwrap();
        assert!(spec.state_degenerate());
        assert!(validate(&spec, &Strategy::scalar(0.5, 0.0, 0.3)).unwrap().passed);
        assert!(!validate(&spec, &Strategy::scalar(0.5, 0.2, 0.3)).unwrap().passed);
    }

    #[test]
    fn joint_scalar_expansion() {
        let (spec, strat) = running();
        let c = derive_coefficients(&spec, &strat).unwrap();
        let j = build_joint(&spec, &strat, &c).unwrap();
        let vy1 = j.sub_cov(&[labels::Y1]).unwrap()[(0, 0)];
        assert!((vy1 - 3.0).abs() < 1e-14);
        let xs1 = j.cross_cov(&[labels::X], &[labels::S1]).unwrap()[(0, 0)];
        assert!((xs1 + 0.5).abs() < 1e-15);
        let vx = j.sub_cov(&[labels::X]).unwrap()[(0, 0)];
        assert!((vx - 2.0).abs() < 1e-14);
    }

    #[test]
    fn joint_zero_strategy_output() {
        let (spec, _) = running();
        let z = Strategy::zero(1);
        let c = derive_coefficients(&spec, &z).unwrap();
        let j = build_joint(&spec, &z, &c).unwrap();
        // Y1 = X2 + S1 + Z1 with K_X2 = K
        let vy1 = j.sub_cov(&[labels::Y1]).unwrap()[(0, 0)];
        assert!((vy1 - (2.0 + 1.0 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn joint_rejects_infeasible() {
        let (spec, strat) = running();
        let c = derive_coefficients(&spec, &strat).unwrap();
        let bad = Strategy::scalar(2.0, -0.5, 0.0);
        assert!(matches!(build_joint(&spec, &bad, &c), Err(Error::InfeasibleStrategy { .. })));
    }

    #[test]
    fn json_roundtrip_and_strictness() {
        let (spec, strat) = running();
        assert_eq!(ChannelSpec::from_json(&spec.to_json()).unwrap(), spec);
        assert_eq!(Strategy::from_json(&strat.to_json()).unwrap(), strat);

        let bad = r#"{"t":2,"K":[[1,0.5],[0.3,1]],"K_S1":[[1,0],[0,1]],"K_S2":[[1,0],[0,1]],
                      "K_Z1":[[1,0],[0,1]],"K_Z2":[[1,0],[0,1]]}"#;
        let err = ChannelSpec::from_json(bad).unwrap_err().to_string();
        assert!(err.contains("K") && err.contains("[0][1]"), "{err}");

        let ragged = r#"{"t":2,"K":[[1,0],[0]],"K_S1":[[1,0],[0,1]],"K_S2":[[1,0],[0,1]],
                         "K_Z1":[[1,0],[0,1]],"K_Z2":[[1,0],[0,1]]}"#;
        assert!(matches!(ChannelSpec::from_json(ragged), Err(Error::Parse(_))));

        let extra = r#"{"t":1,"K":[[1]],"K_S1":[[1]],"K_S2":[[1]],"K_Z1":[[1]],"K_Z2":[[1]],"x":1}"#;
        assert!(matches!(ChannelSpec::from_json(extra), Err(Error::Parse(_))));
    }
}
