//! Monte-Carlo cross-check of the closed forms.
//!
//! Samples are drawn exactly from the linear-Gaussian factor of a joint
//! covariance, reduced to per-fold sufficient statistics, and pushed
//! through the Gaussian mutual-information formula (plug-in estimator).
//! Standard errors come from a leave-one-fold-out jackknife.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::coding::{derive_coefficients, mi_terms};
use crate::error::{Error, Result};
use crate::matcore::{logdet, BlockCov, LinearFactor, SymMat};
use crate::model::labels::{S, U, V, Y1, Y2};
use crate::model::{build_joint, ChannelSpec, Strategy, User};
use crate::region::{eval_region, leakage_lower_bound};

/// Runs below this many draws are flagged.
pub const LOW_SAMPLE: usize = 1000;
pub const FOLDS: usize = 20;
pub const Z_THRESHOLD: f64 = 4.0;
const CHUNK: usize = 8192;

/// Draws stored row-wise, columns in the joint's block order.
#[derive(Debug, Clone)]
pub struct Samples {
    labels: Vec<String>,
    dims: Vec<usize>,
    pub data: DMatrix<f64>,
    pub low_sample: bool,
}

impl Samples {
    pub fn n(&self) -> usize {
        self.data.nrows()
    }
}

/// Square-root factor of a PSD block: Cholesky, or the eigen square root
/// when the block is only semidefinite.
fn sqrt_factor(a: &SymMat) -> Result<DMatrix<f64>> {
    if let Some(ch) = a.as_matrix().clone().cholesky() {
        return Ok(ch.l());
    }
    let tol = 1e-9 * (1.0 + a.trace_norm());
    if a.min_eigenvalue() < -tol {
        return Err(Error::NotPositiveDefinite(format!(
            "cannot sample a covariance with eigenvalue {:.3e}",
            a.min_eigenvalue()
        )));
    }
    Ok(a.sqrt_psd().into_inner())
}

/// `x = A ξ` with `ξ` standard normal; `A` is `d x m`.
struct Sampler {
    a: DMatrix<f64>,
}

impl Sampler {
    fn new(joint: &BlockCov) -> Result<Self> {
        let a = match joint.factor() {
            Some(LinearFactor { base, map }) => {
                let m: usize = base.iter().map(SymMat::dim).sum();
                let mut l = DMatrix::zeros(m, m);
                let mut off = 0;
                for b in base {
                    l.view_mut((off, off), (b.dim(), b.dim())).copy_from(&sqrt_factor(b)?);
                    off += b.dim();
                }
                map * l
            }
            None => sqrt_factor(joint.cov())?,
        };
        Ok(Self { a })
    }

    /// Rows `[0, m)` of chunk `index`; every chunk has its own stream so
    /// the draws do not depend on how chunks are scheduled.
    fn chunk(&self, seed: u64, index: u64, m: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let k = self.a.ncols();
        let xi = DMatrix::from_fn(k, m, |_, _| StandardNormal.sample(&mut rng));
        (&self.a * xi).transpose()
    }
}

fn chunk_plan(n: usize) -> Vec<(u64, usize, usize)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c as u64, c * CHUNK, CHUNK.min(n - c * CHUNK))).collect()
}

/// `n` i.i.d. draws from `joint`, reproducible per seed.
pub fn sample_joint(joint: &BlockCov, n: usize, seed: u64) -> Result<Samples> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 samples, got {n}")));
    }
    let sampler = Sampler::new(joint)?;
    let d = sampler.a.nrows();
    let mut data = DMatrix::zeros(n, d);
    let chunks: Vec<_> = chunk_plan(n).into_par_iter().map(|(i, _, m)| sampler.chunk(seed, i, m)).collect();
    for ((_, start, m), block) in chunk_plan(n).into_iter().zip(chunks) {
        data.view_mut((start, 0), (m, d)).copy_from(&block);
    }
    Ok(Samples { labels: joint.labels().to_vec(), dims: joint.dims().to_vec(), data, low_sample: n < LOW_SAMPLE })
}

#[derive(Debug, Clone)]
struct Moments {
    count: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Moments {
    fn zero(d: usize) -> Self {
        Self { count: 0, sum: DVector::zeros(d), outer: DMatrix::zeros(d, d) }
    }

    fn of_rows(x: &DMatrix<f64>) -> Self {
        let sum = x.row_sum().transpose();
        Self { count: x.nrows(), sum, outer: x.transpose() * x }
    }

    fn add(&mut self, o: &Moments) {
        self.count += o.count;
        self.sum += &o.sum;
        self.outer += &o.outer;
    }

    fn sub(&self, o: &Moments) -> Moments {
        Moments { count: self.count - o.count, sum: &self.sum - &o.sum, outer: &self.outer - &o.outer }
    }

    fn covariance(&self) -> SymMat {
        let n = self.count as f64;
        let c = (&self.outer - &self.sum * self.sum.transpose() / n) / (n - 1.0);
        SymMat::symmetrize(&c)
    }
}

/// Per-fold sufficient statistics of a sample.
#[derive(Debug, Clone)]
pub struct FoldMoments {
    labels: Vec<String>,
    dims: Vec<usize>,
    folds: Vec<Moments>,
}

impl FoldMoments {
    /// Contiguous folds over the rows of `samples`.
    pub fn from_samples(samples: &Samples, folds: usize) -> Result<Self> {
        let n = samples.n();
        let g = folds.min(n);
        if g < 2 {
            return Err(Error::Domain("jackknife needs at least two folds".into()));
        }
        let folds = (0..g)
            .map(|f| {
                let (a, b) = (f * n / g, (f + 1) * n / g);
                Moments::of_rows(&samples.data.rows(a, b - a).into_owned())
            })
            .collect();
        Ok(Self { labels: samples.labels.clone(), dims: samples.dims.clone(), folds })
    }

    /// Same statistics as sampling and then folding, without keeping the
    /// draws. Chunk results are merged in chunk order.
    pub fn stream(joint: &BlockCov, n: usize, seed: u64, folds: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 samples, got {n}")));
        }
        let g = folds.min(n);
        if g < 2 {
            return Err(Error::Domain("jackknife needs at least two folds".into()));
        }
        let sampler = Sampler::new(joint)?;
        let d = sampler.a.nrows();
        let plan = chunk_plan(n);
        let bounds: Vec<usize> = (0..=g).map(|f| f * n / g).collect();
        let parts: Vec<Vec<(usize, Moments)>> = plan
            .par_iter()
            .map(|&(i, start, m)| {
                let x = sampler.chunk(seed, i, m);
                // Split the chunk where it crosses fold boundaries.
                let mut out = Vec::new();
                let mut row = 0;
                while row < m {
                    let global = start + row;
                    let f = bounds.partition_point(|&b| b <= global) - 1;
                    let take = (bounds[f + 1] - global).min(m - row);
                    out.push((f, Moments::of_rows(&x.rows(row, take).into_owned())));
                    row += take;
                }
                out
            })
            .collect();
        let mut acc = vec![Moments::zero(d); g];
        for part in parts {
            for (f, m) in part {
                acc[f].add(&m);
            }
        }
        Ok(Self { labels: joint.labels().to_vec(), dims: joint.dims().to_vec(), folds: acc })
    }

    pub fn n(&self) -> usize {
        self.folds.iter().map(|m| m.count).sum()
    }

    fn total(&self) -> Moments {
        let mut t = Moments::zero(self.folds[0].sum.len());
        for m in &self.folds {
            t.add(m);
        }
        t
    }

    fn block_cov(&self, m: &Moments) -> Result<BlockCov> {
        BlockCov::new(self.labels.clone(), self.dims.clone(), m.covariance())
    }

    /// Full-sample statistic and its jackknife standard error
    /// `sqrt((g-1)/g Σ (θ_i - θ̄)^2)`.
    pub fn estimate(&self, stat: impl Fn(&BlockCov) -> Result<f64>) -> Result<(f64, f64)> {
        let total = self.total();
        let full = stat(&self.block_cov(&total)?)?;
        let g = self.folds.len() as f64;
        let loo: Vec<f64> = self
            .folds
            .iter()
            .map(|f| stat(&self.block_cov(&total.sub(f))?))
            .collect::<Result<_>>()?;
        let mean = loo.iter().sum::<f64>() / g;
        let var = loo.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() * (g - 1.0) / g;
        Ok((full, var.sqrt()))
    }
}

fn mi(c: &BlockCov, a: &[&str], b: &[&str], given: &[&str]) -> Result<f64> {
    let v = c.mutual_info(a, b, given)?.nats;
    if !v.is_finite() {
        return Err(Error::DegenerateSample(format!(
            "I({}; {} | {}) is unbounded on the sample covariance",
            a.join(","),
            b.join(","),
            given.join(",")
        )));
    }
    Ok(v)
}

/// Plug-in `I(a; b)` with its jackknife standard error over 20 folds.
pub fn plugin_mi(samples: &Samples, a: &[&str], b: &[&str]) -> Result<(f64, f64)> {
    let need = samples_dim(samples, a)? + samples_dim(samples, b)? + 2;
    if samples.n() <= need {
        return Err(Error::DegenerateSample(format!("{} samples for {need} dimensions", samples.n())));
    }
    FoldMoments::from_samples(samples, FOLDS)?.estimate(|c| mi(c, a, b, &[]))
}

fn samples_dim(samples: &Samples, labels: &[&str]) -> Result<usize> {
    labels
        .iter()
        .map(|l| {
            samples
                .labels
                .iter()
                .position(|x| x == l)
                .map(|i| samples.dims[i])
                .ok_or_else(|| Error::Shape(format!("unknown block {l}")))
        })
        .sum()
}

/// Plug-in point estimate on the full sample, no error bar.
pub fn plugin_mi_point(samples: &Samples, a: &[&str], b: &[&str]) -> Result<f64> {
    let m = Moments::of_rows(&samples.data);
    mi(&BlockCov::new(samples.labels.clone(), samples.dims.clone(), m.covariance())?, a, b, &[])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McReport {
    pub estimates: BTreeMap<String, Estimate>,
    pub closed_forms: BTreeMap<String, f64>,
    pub z_scores: BTreeMap<String, f64>,
    pub n: usize,
    pub seed: u64,
    pub low_sample: bool,
    pub passed: bool,
}

type Stat = Box<dyn Fn(&BlockCov) -> Result<f64> + Sync>;

/// Names, sample statistics, and the closed form each is compared to.
fn terms(spec: &ChannelSpec, strat: &Strategy) -> Result<Vec<(&'static str, Stat, f64)>> {
    let region = eval_region(spec, strat)?;
    let coeffs = derive_coefficients(spec, strat)?;
    let marton = if strat.k_x1.min_eigenvalue() > 0.0 && strat.k_x1.as_matrix().clone().cholesky().is_some() {
        // I(U;V|S) = ½ ln|K_X1 + A10 K_X2 A10^T| - ½ ln|K_X1|
        let inner = strat.k_x1.add(&strat.k_x2(spec).congruence(&coeffs.a10));
        0.5 * (logdet(&inner)? - logdet(&strat.k_x1)?)
    } else {
        mi_terms(&build_joint(spec, strat, &coeffs)?)?.marton
    };
    Ok(vec![
        ("I(U;Y1)-I(U;V,S)", Box::new(|c: &BlockCov| Ok(mi(c, &[U], &[Y1], &[])? - mi(c, &[U], &[V, S[0], S[1]], &[])?)), region.r1),
        ("I(V;Y2)-I(V;S)", Box::new(|c: &BlockCov| Ok(mi(c, &[V], &[Y2], &[])? - mi(c, &[V], &S, &[])?)), region.r2),
        ("I(S;U,Y1)", Box::new(|c: &BlockCov| mi(c, &S, &[U, Y1], &[])), region.e1),
        ("I(S;V,Y2)", Box::new(|c: &BlockCov| mi(c, &S, &[V, Y2], &[])), region.e2),
        ("I(U;V|S)", Box::new(|c: &BlockCov| mi(c, &[U], &[V], &S)), marton),
        ("I(S;Y1)", Box::new(|c: &BlockCov| mi(c, &S, &[Y1], &[])), leakage_lower_bound(spec, strat, User::One)?),
        ("I(S;Y2)", Box::new(|c: &BlockCov| mi(c, &S, &[Y2], &[])), leakage_lower_bound(spec, strat, User::Two)?),
    ])
}

/// Names of the terms compared by [`cross_check`].
pub fn term_names() -> [&'static str; 7] {
    ["I(U;Y1)-I(U;V,S)", "I(V;Y2)-I(V;S)", "I(S;U,Y1)", "I(S;V,Y2)", "I(U;V|S)", "I(S;Y1)", "I(S;Y2)"]
}

/// Samples the coded system and compares every information term to its
/// closed form. PASS iff every `|z| <= 4`.
pub fn cross_check(spec: &ChannelSpec, strat: &Strategy, n: usize, seed: u64) -> Result<McReport> {
    cross_check_corrupted(spec, strat, n, seed, None)
}

/// As [`cross_check`], with `delta` added to one closed form first. Used to
/// show that the comparison has teeth.
pub fn cross_check_corrupted(
    spec: &ChannelSpec,
    strat: &Strategy,
    n: usize,
    seed: u64,
    corrupt: Option<(&str, f64)>,
) -> Result<McReport> {
    let mut terms = terms(spec, strat)?;
    if let Some((name, delta)) = corrupt {
        let t = terms
            .iter_mut()
            .find(|t| t.0 == name)
            .ok_or_else(|| Error::Domain(format!("unknown term {name}")))?;
        t.2 += delta;
    }
    let joint = build_joint(spec, strat, &derive_coefficients(spec, strat)?)?;
    let moments = FoldMoments::stream(&joint, n, seed, FOLDS)?;
    let mut report = McReport {
        estimates: BTreeMap::new(),
        closed_forms: BTreeMap::new(),
        z_scores: BTreeMap::new(),
        n,
        seed,
        low_sample: n < LOW_SAMPLE,
        passed: true,
    };
    for (name, stat, closed) in &terms {
        let (estimate, std_error) = moments.estimate(stat)?;
        let diff = estimate - closed;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        report.passed &= z.abs() <= Z_THRESHOLD;
        report.estimates.insert(name.to_string(), Estimate { estimate, std_error });
        report.closed_forms.insert(name.to_string(), *closed);
        report.z_scores.insert(name.to_string(), z);
    }
    Ok(report)
}
