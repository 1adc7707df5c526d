//! Seeded random channels and strategies for randomized suites.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::matcore::SymMat;
use crate::model::{ChannelSpec, Strategy};

/// Haar-ish random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q()
}

/// Symmetric matrix with eigenvalues drawn uniformly from `[lo, hi]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> SymMat {
    let q = random_orthogonal(rng, n);
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    SymMat::from_diagonal(&d).congruence(&q)
}

/// Well-conditioned random channel. With `degraded`, `K_Z2 = K_Z1 + D`
/// for a positive definite `D`.
pub fn random_spec<R: Rng + ?Sized>(rng: &mut R, t: usize, degraded: bool) -> ChannelSpec {
    let k = random_spd(rng, t, 0.5, 3.0);
    let k_s1 = random_spd(rng, t, 0.3, 2.0);
    let k_s2 = random_spd(rng, t, 0.3, 2.0);
    let k_z1 = random_spd(rng, t, 0.3, 1.5);
    let k_z2 = if degraded {
        k_z1.add(&random_spd(rng, t, 0.05, 1.5))
    } else {
        random_spd(rng, t, 0.3, 2.0)
    };
    ChannelSpec::new(k, k_s1, k_s2, k_z1, k_z2).expect("generated covariances are valid")
}

/// Random strictly feasible strategy: both `K_X1` and the derived `K_X2`
/// are positive definite.
pub fn random_strategy<R: Rng + ?Sized>(rng: &mut R, spec: &ChannelSpec) -> Strategy {
    let t = spec.t();
    let b1 = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let b2 = DMatrix::from_fn(t, t, |_, _| rng.sample::<f64, _>(StandardNormal));
    let q = spec.k_s1().congruence(&b1).add(&spec.k_s2().congruence(&b2));

    // Scale so that the masking power is at most a fraction `alpha` of K.
    let alpha = rng.random_range(0.0..0.9);
    let k_isqrt = spec.k().sqrt_psd().inverse_pd().expect("random K is positive definite");
    let lam = q.congruence(k_isqrt.as_matrix()).max_eigenvalue();
    let c = if lam > 0.0 { (alpha / lam).sqrt() } else { 0.0 };
    let sigma_xs1 = &b1 * spec.k_s1().as_matrix() * c;
    let sigma_xs2 = &b2 * spec.k_s2().as_matrix() * c;

    let mut strat = Strategy { k_x1: SymMat::zeros(t), sigma_xs1, sigma_xs2 };
    let avail = strat.available_power(spec).sqrt_psd();
    let w = random_spd(rng, t, 0.05, 0.95);
    strat.k_x1 = w.congruence(avail.as_matrix());
    strat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_strategies_are_strictly_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in 1..=4 {
            for _ in 0..25 {
                let spec = random_spec(&mut rng, t, t % 2 == 0);
                let strat = random_strategy(&mut rng, &spec);
                assert!(validate(&spec, &strat).unwrap().passed);
                assert!(strat.k_x1.min_eigenvalue() > 0.0);
                assert!(strat.k_x2(&spec).min_eigenvalue() > 0.0);
                if t % 2 == 0 {
                    assert!(spec.degraded());
                }
            }
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let a = random_spec(&mut ChaCha8Rng::seed_from_u64(3), 3, true);
        let b = random_spec(&mut ChaCha8Rng::seed_from_u64(3), 3, true);
        assert_eq!(a, b);
    }
}
