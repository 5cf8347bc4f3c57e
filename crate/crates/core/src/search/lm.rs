//! Levenberg-Marquardt with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmOptions {
    pub max_iter: usize,
    /// Stop once `max |r|` drops below this.
    pub target: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LmOutcome {
    pub p: Vec<f64>,
    pub iterations: usize,
}

fn cost(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn max_abs(r: &[f64]) -> f64 {
    r.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimize `½‖f(p)‖²`. `f` returns `None` where it cannot be evaluated;
/// such points are treated as infinitely bad.
pub(crate) fn minimize<F>(f: F, p0: &[f64], opts: LmOptions) -> LmOutcome
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let mut p = p0.to_vec();
    let Some(mut r) = f(&p) else {
        return LmOutcome { p, iterations: 0 };
    };
    let mut c = cost(&r);
    let mut mu = 1e-3;
    let n = p.len();
    let mut iterations = 0;
    if n == 0 {
        return LmOutcome { p, iterations };
    }
    while iterations < opts.max_iter && max_abs(&r) > opts.target {
        iterations += 1;
        let Some(jac) = jacobian(&f, &p, r.len()) else {
            break;
        };
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * rv;
        let mut accepted = false;
        while mu < 1e16 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += mu * (jtj[(i, i)] + 1e-12);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                mu *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            if let Some(rt) = f(&trial) {
                let ct = cost(&rt);
                if ct < c {
                    let tiny = step
                        .iter()
                        .zip(&p)
                        .all(|(s, v)| s.abs() <= 1e-15 * (1.0 + v.abs()));
                    p = trial;
                    r = rt;
                    c = ct;
                    mu = (mu / 3.0).max(1e-12);
                    accepted = !tiny;
                    break;
                }
            }
            mu *= 4.0;
        }
        if !accepted {
            break;
        }
    }
    LmOutcome { p, iterations }
}

fn jacobian<F>(f: &F, p: &[f64], m: usize) -> Option<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut work = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * (1.0 + p[j].abs());
        work[j] = p[j] + h;
        let plus = f(&work)?;
        work[j] = p[j] - h;
        let minus = f(&work)?;
        work[j] = p[j];
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Some(jac)
}
