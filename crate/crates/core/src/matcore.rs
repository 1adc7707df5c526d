//! Symmetric-matrix primitives on the PSD cone.
//!
//! Everything else in the crate is expressed through [`SymMat`] and
//! [`BlockCov`]: log-determinants are taken by Cholesky, conditional
//! covariances by Schur complements, and Gaussian mutual informations as
//! differences of conditional log-determinants. All logarithms are natural.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold below which a covariance direction is
/// treated as deterministic.
pub const RANK_TOL: f64 = 1e-10;

/// Default relative tolerance for PSD membership tests.
pub const PSD_TOL: f64 = 1e-9;

/// A finite, exactly symmetric real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl SymMat {
    /// Checks squareness, finiteness and symmetry
    /// (`max|A - A^T| <= 1e-12 (1 + max|A|)`), then stores the exact
    /// symmetric part.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Shape(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::Shape("matrix has zero dimension".into()));
        }
        if let Some((i, j)) = first_non_finite(&m) {
            return Err(Error::InvalidMatrix(format!("entry [{i}][{j}] is not finite")));
        }
        let scale = 1.0 + m.amax();
        for i in 0..m.nrows() {
            for j in (i + 1)..m.ncols() {
                if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidMatrix(format!(
                        "not symmetric: entry [{i}][{j}] = {} but [{j}][{i}] = {}",
                        m[(i, j)],
                        m[(j, i)]
                    )));
                }
            }
        }
        Ok(Self::symmetrize(&m))
    }

    /// Symmetric part `(A + A^T)/2` without any checks beyond squareness.
    pub fn symmetrize(m: &DMatrix<f64>) -> Self {
        Self((m + m.transpose()) * 0.5)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("rows must all have length {n}")));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self(DMatrix::from_fn(n, n, |i, j| if i == j { d[i] } else { 0.0 }))
    }

    pub fn scalar(v: f64) -> Self {
        Self(DMatrix::from_element(1, 1, v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn add(&self, other: &SymMat) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMat) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `M A M^T` for an arbitrary conformable `M`.
    pub fn congruence(&self, m: &DMatrix<f64>) -> Self {
        Self::symmetrize(&(m * &self.0 * m.transpose()))
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.0.clone())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.max()
    }

    /// Sum of absolute eigenvalues.
    pub fn trace_norm(&self) -> f64 {
        self.eigen().eigenvalues.iter().map(|l| l.abs()).sum()
    }

    pub fn is_psd(&self, tol: f64) -> bool {
        let eig = self.eigen();
        let tn: f64 = eig.eigenvalues.iter().map(|l| l.abs()).sum();
        eig.eigenvalues.min() >= -tol * (1.0 + tn)
    }

    /// Inverse through Cholesky; fails unless positive definite.
    pub fn inverse_pd(&self) -> Result<SymMat> {
        let chol = self.0.clone().cholesky().ok_or_else(|| {
            Error::NotPositiveDefinite(format!(
                "Cholesky failed (min eigenvalue {:.3e})",
                self.min_eigenvalue()
            ))
        })?;
        Ok(Self::symmetrize(&chol.inverse()))
    }

    /// Moore-Penrose inverse. The flag is set when any eigenvalue was
    /// dropped as numerically zero.
    pub fn pseudo_inverse(&self) -> (SymMat, bool) {
        let eig = self.eigen();
        let top = eig.eigenvalues.amax();
        let cut = RANK_TOL * top.max(f64::MIN_POSITIVE);
        let mut dropped = false;
        let inv_vals = eig.eigenvalues.map(|l| {
            if l > cut {
                1.0 / l
            } else {
                dropped = true;
                0.0
            }
        });
        let q = &eig.eigenvectors;
        let m = q * DMatrix::from_diagonal(&inv_vals) * q.transpose();
        (Self::symmetrize(&m), dropped)
    }

    /// Inverse when positive definite, pseudo-inverse (flagged) otherwise.
    pub fn inverse_or_pinv(&self) -> (SymMat, bool) {
        let eig = self.eigen();
        let top = eig.eigenvalues.amax();
        if top > 0.0 && eig.eigenvalues.min() > RANK_TOL * top {
            if let Ok(inv) = self.inverse_pd() {
                return (inv, false);
            }
        }
        self.pseudo_inverse()
    }

    /// Symmetric PSD square root (negative eigenvalues clipped).
    pub fn sqrt_psd(&self) -> SymMat {
        let eig = self.eigen();
        let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let q = &eig.eigenvectors;
        Self::symmetrize(&(q * DMatrix::from_diagonal(&vals) * q.transpose()))
    }
}

impl Deref for SymMat {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

/// PSD test on a raw matrix: true iff the smallest eigenvalue of the
/// symmetric part is at least `-tol (1 + trace|A|)`.
pub fn is_psd(a: &DMatrix<f64>, tol: f64) -> Result<bool> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("{}x{} is not square", a.nrows(), a.ncols())));
    }
    if let Some((i, j)) = first_non_finite(a) {
        return Err(Error::InvalidMatrix(format!("entry [{i}][{j}] is not finite")));
    }
    Ok(SymMat::symmetrize(a).is_psd(tol))
}

/// `ln det A` via Cholesky.
pub fn logdet(a: &SymMat) -> Result<f64> {
    let chol = a.as_matrix().clone().cholesky().ok_or_else(|| {
        Error::NotPositiveDefinite(format!(
            "Cholesky failed in logdet (min eigenvalue {:.3e})",
            a.min_eigenvalue()
        ))
    })?;
    Ok(2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Euclidean projection onto the PSD cone by eigenvalue clipping.
pub fn psd_project(a: &SymMat) -> SymMat {
    let eig = a.eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    let q = &eig.eigenvectors;
    SymMat::symmetrize(&(q * DMatrix::from_diagonal(&vals) * q.transpose()))
}

/// Orthonormal basis of the eigenspace of `a` with eigenvalues `<= cut`.
pub fn null_basis(a: &SymMat, cut: f64) -> DMatrix<f64> {
    let eig = a.eigen();
    let cols: Vec<_> = (0..a.dim())
        .filter(|&i| eig.eigenvalues[i] <= cut)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.dim(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Independent Gaussian blocks pushed through a linear map; the exact
/// generator of a [`BlockCov`] built from one.
#[derive(Debug, Clone)]
pub struct LinearFactor {
    pub base: Vec<SymMat>,
    pub map: DMatrix<f64>,
}

impl LinearFactor {
    pub fn base_dim(&self) -> usize {
        self.base.iter().map(SymMat::dim).sum()
    }

    pub fn covariance(&self) -> SymMat {
        let n = self.base_dim();
        let mut d = DMatrix::zeros(n, n);
        let mut off = 0;
        for b in &self.base {
            d.view_mut((off, off), (b.dim(), b.dim())).copy_from(b.as_matrix());
            off += b.dim();
        }
        SymMat::symmetrize(&(&self.map * d * self.map.transpose()))
    }
}

/// Joint covariance of a stacked vector of named blocks.
#[derive(Debug, Clone)]
pub struct BlockCov {
    labels: Vec<String>,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    cov: SymMat,
    factor: Option<LinearFactor>,
}

/// Result of conditioning; `degenerate` is set when the conditioning block
/// had to be pseudo-inverted.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub cov: SymMat,
    pub degenerate: bool,
}

/// A Gaussian (conditional) mutual information in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutualInfo {
    pub nats: f64,
    pub degenerate: bool,
}

impl BlockCov {
    pub fn new<S: Into<String>>(labels: Vec<S>, dims: Vec<usize>, cov: SymMat) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() != dims.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} blocks",
                labels.len(),
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape("block dimensions must be positive".into()));
        }
        let total: usize = dims.iter().sum();
        if total != cov.dim() {
            return Err(Error::Shape(format!(
                "block dims sum to {total} but covariance is {}x{}",
                cov.dim(),
                cov.dim()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Shape(format!("duplicate block label {l}")));
            }
        }
        let eig = cov.eigen();
        let trace = cov.trace().abs();
        if eig.eigenvalues.min() < -PSD_TOL * trace.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite(format!(
                "joint covariance has eigenvalue {:.3e} (trace {trace:.3e})",
                eig.eigenvalues.min()
            )));
        }
        let offsets = dims
            .iter()
            .scan(0, |acc, d| {
                let o = *acc;
                *acc += d;
                Some(o)
            })
            .collect();
        Ok(Self { labels, dims, offsets, cov, factor: None })
    }

    /// Builds the covariance of `map * (independent base blocks)` and keeps
    /// the factor around for exact sampling.
    pub fn from_factor<S: Into<String>>(
        labels: Vec<S>,
        dims: Vec<usize>,
        factor: LinearFactor,
    ) -> Result<Self> {
        if factor.map.ncols() != factor.base_dim() {
            return Err(Error::Shape(format!(
                "map has {} columns but base blocks have total dimension {}",
                factor.map.ncols(),
                factor.base_dim()
            )));
        }
        let mut bc = Self::new(labels, dims, factor.covariance())?;
        bc.factor = Some(factor);
        Ok(bc)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn cov(&self) -> &SymMat {
        &self.cov
    }

    pub fn factor(&self) -> Option<&LinearFactor> {
        self.factor.as_ref()
    }

    pub fn block_dim(&self, label: &str) -> Result<usize> {
        self.position(label).map(|p| self.dims[p])
    }

    fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::Shape(format!("unknown block label {label}")))
    }

    /// Scalar indices of the listed blocks, in the listed order.
    pub fn indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::Shape(format!("block {l} listed twice")));
            }
            let p = self.position(l)?;
            out.extend(self.offsets[p]..self.offsets[p] + self.dims[p]);
        }
        Ok(out)
    }

    pub fn sub_cov(&self, labels: &[&str]) -> Result<SymMat> {
        let idx = self.indices(labels)?;
        Ok(SymMat(self.cov.select_rows(&idx).select_columns(&idx)))
    }

    /// Cross-covariance `E[a b^T]` between two block groups.
    pub fn cross_cov(&self, a: &[&str], b: &[&str]) -> Result<DMatrix<f64>> {
        let ia = self.indices(a)?;
        let ib = self.indices(b)?;
        Ok(self.cov.select_rows(&ia).select_columns(&ib))
    }

    /// Conditional covariance of `keep` given `given`:
    /// `S_kk - S_kg S_gg^{-1} S_gk`, pseudo-inverting a singular `S_gg`.
    pub fn schur(&self, keep: &[&str], given: &[&str]) -> Result<Conditional> {
        if let Some(l) = keep.iter().find(|l| given.contains(l)) {
            return Err(Error::Shape(format!("block {l} both kept and conditioned on")));
        }
        let skk = self.sub_cov(keep)?;
        if given.is_empty() {
            return Ok(Conditional { cov: skk, degenerate: false });
        }
        let sgg = self.sub_cov(given)?;
        let skg = self.cross_cov(keep, given)?;
        let (inv, degenerate) = sgg.inverse_or_pinv();
        let cov = SymMat::symmetrize(&(skk.as_matrix() - &skg * inv.as_matrix() * skg.transpose()));
        Ok(Conditional { cov, degenerate })
    }

    /// `I(a; b | given)` for jointly Gaussian blocks.
    ///
    /// Directions of `a` (or `b`) that are deterministic given `given` carry
    /// no information and are projected out first; if a remaining direction
    /// of `a` is a deterministic function of `b` the information is infinite.
    pub fn mutual_info(&self, a: &[&str], b: &[&str], given: &[&str]) -> Result<MutualInfo> {
        if let Some(l) = a.iter().find(|l| b.contains(l)) {
            return Err(Error::Shape(format!("block {l} appears on both sides")));
        }
        let mut ab: Vec<&str> = a.to_vec();
        ab.extend_from_slice(b);
        let cond = self.schur(&ab, given)?;
        let na: usize = self.indices(a)?.len();
        let nb: usize = self.indices(b)?.len();

        // Scale for "numerically zero" conditional variances.
        let mut all = ab.clone();
        all.extend_from_slice(given);
        let scale = self
            .sub_cov(&all)?
            .diagonal()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let cut = RANK_TOL * scale;

        let c = cond.cov.as_matrix();
        let caa = SymMat(c.view((0, 0), (na, na)).into_owned());
        let cbb = SymMat(c.view((na, na), (nb, nb)).into_owned());
        let wa = range_basis(&caa, cut);
        let wb = range_basis(&cbb, cut);
        let reduced = wa.ncols() < na || wb.ncols() < nb;
        let degenerate = cond.degenerate || reduced;
        if wa.ncols() == 0 || wb.ncols() == 0 {
            return Ok(MutualInfo { nats: 0.0, degenerate });
        }

        let ra = wa.ncols();
        let rb = wb.ncols();
        let mut w = DMatrix::zeros(na + nb, ra + rb);
        w.view_mut((0, 0), (na, ra)).copy_from(&wa);
        w.view_mut((na, ra), (nb, rb)).copy_from(&wb);
        let joint = cond.cov.congruence(&w.transpose());
        let ja = SymMat(joint.view((0, 0), (ra, ra)).into_owned());
        let jb = SymMat(joint.view((ra, ra), (rb, rb)).into_owned());
        let la = logdet(&ja)?;
        let lb = logdet(&jb)?;
        let nats = match logdet(&joint) {
            Ok(lj) => 0.5 * (la + lb - lj),
            Err(_) => f64::INFINITY,
        };
        Ok(MutualInfo { nats, degenerate })
    }
}

/// Orthonormal basis of the eigenspace of `a` with eigenvalues `> cut`.
fn range_basis(a: &SymMat, cut: f64) -> DMatrix<f64> {
    let eig = a.eigen();
    let cols: Vec<_> = (0..a.dim())
        .filter(|&i| eig.eigenvalues[i] > cut)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(a.dim(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Block-diagonal assembly.
pub fn block_diag(blocks: &[&SymMat]) -> SymMat {
    let n: usize = blocks.iter().map(|b| b.dim()).sum();
    let mut d = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        d.view_mut((off, off), (b.dim(), b.dim())).copy_from(b.as_matrix());
        off += b.dim();
    }
    SymMat(d)
}

/// Max-abs entry; `0` for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        0.0
    } else {
        m.amax()
    }
}
