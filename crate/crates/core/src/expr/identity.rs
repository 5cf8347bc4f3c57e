//! Probabilistic identity testing by random sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Expr, ExprError, ParamBinding};

/// Sampling interval with optional excluded neighbourhoods around
/// singular points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
    /// `(center, radius)` pairs that are never sampled.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclusions: Vec<(f64, f64)>,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            exclusions: Vec::new(),
        }
    }

    pub fn excluding(mut self, center: f64, radius: f64) -> Self {
        self.exclusions.push((center, radius));
        self
    }

    pub fn admits(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi && self.exclusions.iter().all(|&(c, r)| (x - c).abs() > r)
    }

    /// `n` points drawn uniformly from the admissible set, deterministic in
    /// `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<f64>, ExprError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0usize;
        while out.len() < n {
            attempts += 1;
            if attempts > 1000 * n.max(1) {
                return Err(ExprError::EmptyDomain);
            }
            let x = rng.gen_range(self.lo..=self.hi);
            if self.admits(x) {
                out.push(x);
            }
        }
        Ok(out)
    }

    /// `n` Chebyshev points of the first kind mapped onto `[lo, hi]`.
    pub fn chebyshev(&self, n: usize) -> Vec<f64> {
        let mid = 0.5 * (self.lo + self.hi);
        let half = 0.5 * (self.hi - self.lo);
        (0..n)
            .map(|k| {
                let t = ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos();
                mid - half * t
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub equal: bool,
    /// Largest `|e1 - e2| / (1 + max(|e1|, |e2|))` over the samples.
    pub max_residual: f64,
    pub worst_x: f64,
    pub samples: usize,
}

/// Residual used throughout: absolute difference relative to `1 + |value|`.
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Decide `e1 == e2` on `domain` by sampling.
///
/// Any evaluation failure is reported as inconclusive at the offending
/// point rather than as inequality.
pub fn approx_equal(
    e1: &Expr,
    e2: &Expr,
    domain: &Domain,
    binding: &ParamBinding,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<IdentityReport, ExprError> {
    let points = domain.sample(samples, seed)?;
    let (max_residual, worst_x) = max_residual(e1, e2, &points, binding)?;
    Ok(IdentityReport {
        equal: max_residual <= tol,
        max_residual,
        worst_x,
        samples,
    })
}

/// Largest relative gap between `e1` and `e2` over `points`.
pub fn max_residual(
    e1: &Expr,
    e2: &Expr,
    points: &[f64],
    binding: &ParamBinding,
) -> Result<(f64, f64), ExprError> {
    let mut worst = (0.0_f64, points.first().copied().unwrap_or(f64::NAN));
    for &x in points {
        let inconclusive = |source: ExprError| ExprError::Inconclusive {
            at: x,
            source: Box::new(source),
        };
        let a = e1.eval(x, binding).map_err(inconclusive)?;
        let b = e2.eval(x, binding).map_err(inconclusive)?;
        let r = relative_gap(a, b);
        if r > worst.0 {
            worst = (r, x);
        }
    }
    Ok(worst)
}
