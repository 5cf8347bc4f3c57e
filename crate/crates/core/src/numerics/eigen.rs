//! Lowest eigenpairs of a real symmetric tridiagonal matrix by Sturm
//! bisection followed by inverse iteration.

use rayon::prelude::*;

/// Symmetric tridiagonal matrix: `diag[i]`, `off[i]` couples `i` and `i+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `shift`.
    pub fn count_below(&self, shift: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.len() {
            let coupling = if i == 0 {
                0.0
            } else {
                self.off[i - 1] * self.off[i - 1] / q
            };
            q = self.diag[i] - shift - coupling;
            if q == 0.0 {
                q = -1e-300;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval containing the whole spectrum.
    pub fn bounds(&self) -> (f64, f64) {
        let n = self.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `j`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > j {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Unit eigenvector for an (accurate) eigenvalue.
    pub fn eigenvector(&self, value: f64) -> Vec<f64> {
        let n = self.len();
        // deterministic, not orthogonal to any eigenvector in practice
        let mut v: Vec<f64> = (0..n)
            .map(|i| 1.0 + 0.5 * ((i as f64) * 0.7).sin())
            .collect();
        normalize(&mut v);
        for _ in 0..3 {
            self.solve_shifted(value, &mut v);
            normalize(&mut v);
        }
        v
    }

    /// Solve `(T − shift) y = rhs` in place, Gaussian elimination with
    /// partial pivoting.
    fn solve_shifted(&self, shift: f64, b: &mut [f64]) {
        let n = self.len();
        let tiny = f64::EPSILON * self.bounds().1.abs().max(1.0);
        let mut d: Vec<f64> = self.diag.iter().map(|x| x - shift).collect();
        let mut dl = self.off.clone();
        let mut du = self.off.clone();
        // second superdiagonal created by row swaps
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                d[i + 1] -= fact * du[i];
                b[i + 1] -= fact * b[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                let temp = d[i + 1];
                d[i + 1] = du[i] - fact * temp;
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du2[i];
                }
                du[i] = temp;
                let tb = b[i];
                b[i] = b[i + 1];
                b[i + 1] = tb - fact * b[i + 1];
            }
            dl[i] = 0.0;
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        b[n - 1] /= d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
        }
    }

    /// Lowest `k` eigenpairs, computed concurrently and returned in order.
    pub fn lowest(&self, k: usize) -> Vec<(f64, Vec<f64>)> {
        (0..k)
            .into_par_iter()
            .map(|j| {
                let value = self.eigenvalue(j);
                (value, self.eigenvector(value))
            })
            .collect()
    }

    /// Eigenvalues only.
    pub fn lowest_values(&self, k: usize) -> Vec<f64> {
        (0..k).into_par_iter().map(|j| self.eigenvalue(j)).collect()
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> Tridiagonal {
        Tridiagonal {
            diag: vec![2.0; n],
            off: vec![-1.0; n - 1],
        }
    }

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let t = laplacian(n);
        for (j, (value, vec)) in t.lowest(5).into_iter().enumerate() {
            let theta = (j + 1) as f64 * std::f64::consts::PI / (n + 1) as f64;
            let exact = 2.0 - 2.0 * theta.cos();
            assert!((value - exact).abs() < 1e-13);
            // residual of T v = λ v
            for i in 0..n {
                let mut tv = 2.0 * vec[i];
                if i > 0 {
                    tv -= vec[i - 1];
                }
                if i + 1 < n {
                    tv -= vec[i + 1];
                }
                assert!((tv - value * vec[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sturm_count() {
        let t = laplacian(10);
        assert_eq!(t.count_below(-1.0), 0);
        assert_eq!(t.count_below(5.0), 10);
    }

    #[test]
    fn pivoting_path_exercised() {
        // small diagonal forces row swaps
        let t = Tridiagonal {
            diag: vec![1e-3, 5.0, -2.0, 0.3],
            off: vec![2.0, 1.0, 3.0],
        };
        let mut b = vec![1.0, 2.0, 3.0, 4.0];
        let rhs = b.clone();
        t.solve_shifted(0.1, &mut b);
        let d: Vec<f64> = t.diag.iter().map(|x| x - 0.1).collect();
        for i in 0..4 {
            let mut r = d[i] * b[i];
            if i > 0 {
                r += t.off[i - 1] * b[i - 1];
            }
            if i < 3 {
                r += t.off[i] * b[i + 1];
            }
            assert!((r - rhs[i]).abs() < 1e-12, "row {i}");
        }
    }
}
