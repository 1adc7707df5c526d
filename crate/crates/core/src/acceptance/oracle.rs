//! Scalar and 2x2 reference computations written directly from the
//! closed forms, sharing no code with the library paths they check.

/// Interior stationary point of the scalar Gaussian subproblem, clipped to
/// the power constraint.
pub fn scalar_kkt(k: f64, z1: f64, z2: f64, mu: f64) -> f64 {
    ((z2 - mu * z1) / (mu - 1.0)).clamp(0.0, k)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarEnhancement {
    pub x: f64,
    pub m1: f64,
    pub m2: f64,
    pub zt1: f64,
    pub zt2: f64,
    pub f: f64,
}

/// Multipliers from the scalar stationarity condition, then the enhanced
/// noises and the value offset.
pub fn scalar_enhancement(k: f64, z1: f64, z2: f64, mu: f64) -> ScalarEnhancement {
    let x = scalar_kkt(k, z1, z2, mu);
    let g = 0.5 / (x + z1) - 0.5 * mu / (x + z2);
    let (m1, m2) = if x == 0.0 && g < 0.0 {
        (-g, 0.0)
    } else if x == k && g > 0.0 {
        (0.0, g)
    } else {
        (0.0, 0.0)
    };
    let zt1 = 1.0 / (1.0 / (x + z1) + 2.0 * m1) - x;
    let zt2 = 1.0 / (1.0 / (x + z2) + 2.0 * m2 / mu) - x;
    let f = 0.5 * (z1 / zt1).ln() + 0.5 * mu * ((k + zt2) / (k + z2)).ln();
    ScalarEnhancement { x, m1, m2, zt1, zt2, f }
}

/// `f(a, b)` straight from its definition, no overflow guard.
pub fn f_direct(a: f64, b: f64, mu: f64, t: usize) -> f64 {
    let t = t as f64;
    a - 0.5 * mu * t * ((2.0 * a / t).exp() + (2.0 * b / t).exp()).ln()
}

pub fn det2(m: [[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Scalar channel with a weight and two leakage budgets (`INFINITY` for
/// none).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarProblem {
    pub k: f64,
    pub s1: f64,
    pub s2: f64,
    pub z1: f64,
    pub z2: f64,
    pub mu: f64,
    pub e1: f64,
    pub e2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    /// Masking gains: `Σ_k = b_k K_Sk`.
    pub b1: f64,
    pub b2: f64,
    /// `K_X1 = y P`.
    pub y: f64,
    pub objective: f64,
}

// Budgets are compared without slack beyond roundoff.
const BUDGET_SLACK: f64 = 1e-12;

impl ScalarProblem {
    fn p(&self, b1: f64, b2: f64) -> f64 {
        self.k - b1 * b1 * self.s1 - b2 * b2 * self.s2
    }

    fn leak(&self, b: f64, s: f64, z: f64, p: f64) -> f64 {
        0.5 * ((self.k + 2.0 * b * s + s + z) / (p + z)).ln()
    }

    fn within_budgets(&self, b1: f64, b2: f64, p: f64) -> bool {
        self.leak(b1, self.s1, self.z1, p) <= self.e1 + BUDGET_SLACK
            && self.leak(b2, self.s2, self.z2, p) <= self.e2 + BUDGET_SLACK
    }

    fn phi(&self, p: f64, y: f64) -> f64 {
        let x = y * p;
        0.5 * ((x + self.z1) / self.z1).ln() + 0.5 * self.mu * ((p + self.z2) / (x + self.z2)).ln()
    }

    /// Grid maximum over `y = y0 + i h`, `i = 0..=n`, restricted to
    /// `[0, 1]`. The objective is unimodal in `y`, so a discrete bisection
    /// on the sign of consecutive differences finds the exact grid maximum.
    fn best_y(&self, p: f64, y0: f64, h: f64, n: usize) -> (f64, f64) {
        let lo_i = if y0 >= 0.0 { 0 } else { (-y0 / h).ceil() as usize };
        let hi_i = n.min(((1.0 - y0) / h + 1e-9).floor() as usize);
        let y_at = |i: usize| (y0 + i as f64 * h).clamp(0.0, 1.0);
        let (mut lo, mut hi) = (lo_i, hi_i);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.phi(p, y_at(mid)) < self.phi(p, y_at(mid + 1)) {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        (y_at(lo), self.phi(p, y_at(lo)))
    }

    /// Best grid point with masking gains on `c_k + j h` (`|j| <= half`)
    /// and `y` on `y0 + i h`.
    fn search(&self, c: [f64; 2], half: i64, h: f64, y0: f64, ny: usize) -> Option<GridPoint> {
        let bound1 = (self.k / self.s1).sqrt();
        let bound2 = (self.k / self.s2).sqrt();
        let mut best: Option<GridPoint> = None;
        for j1 in -half..=half {
            let b1 = c[0] + j1 as f64 * h;
            if b1.abs() > bound1 {
                continue;
            }
            for j2 in -half..=half {
                let b2 = c[1] + j2 as f64 * h;
                if b2.abs() > bound2 {
                    continue;
                }
                let p = self.p(b1, b2);
                if p < 0.0 || !self.within_budgets(b1, b2, p) {
                    continue;
                }
                let (y, objective) = self.best_y(p, y0, h, ny);
                if best.is_none_or(|g| objective > g.objective) {
                    best = Some(GridPoint { b1, b2, y, objective });
                }
            }
        }
        best
    }

    /// Exhaustive search on the 0.01 lattice (gains anchored at 0, `y` on
    /// `[0, 1]`). `None` when no lattice point meets the budgets.
    pub fn grid(&self) -> Option<GridPoint> {
        let h = 0.01;
        let half = ((self.k / self.s1.min(self.s2)).sqrt() / h).ceil() as i64;
        self.search([0.0, 0.0], half, h, 0.0, 100)
    }

    /// The coarse optimum followed by two zoom passes (steps 1e-3, 1e-4)
    /// over a window of two coarse steps around the incumbent.
    pub fn refined(&self) -> Option<(GridPoint, GridPoint)> {
        let coarse = self.grid()?;
        let mut best = coarse;
        for h in [1e-3, 1e-4] {
            let half = 20;
            let y0 = best.y - half as f64 * h;
            if let Some(g) = self.search([best.b1, best.b2], half, h, y0, 2 * half as usize) {
                if g.objective > best.objective {
                    best = g;
                }
            }
        }
        Some((coarse, best))
    }
}
