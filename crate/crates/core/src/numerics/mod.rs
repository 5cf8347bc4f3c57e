//! Finite-difference oracle.
//!
//! `H = X D² + V` with `X < 0` is the Sturm-Liouville problem
//! `(−D² + V/(−X)) ψ = E ψ/(−X)`. Central differences give a symmetric
//! tridiagonal `A` and a positive diagonal `B`; `B^{-1/2} A B^{-1/2}` is
//! symmetric tridiagonal again and goes to [`eigen::Tridiagonal`].

mod eigen;
mod ladder_check;
mod output;

use serde::Serialize;
use thiserror::Error;

use crate::diffop::DiffOp;
use crate::expr::{ExprError, ParamBinding};
use crate::ladder::LadderSystem;

pub use eigen::Tridiagonal;
pub use ladder_check::{
    apply_on_grid, ground_state_oracle, numeric_ground_state, spectrum_by_ladder, verify_ladder,
    GroundStateReport, LadderReport, LadderStep,
};
pub use output::{energies_json, format_sig17, wavefunction_csv, Sig17};

/// Default number of grid points.
pub const DEFAULT_POINTS: usize = 4001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("X must be negative on the grid, X({x}) = {value}")]
    XSign { x: f64, value: f64 },
    #[error("operator is not of the form X D^2 + V: {0}")]
    NotLadderForm(String),
    #[error("requested {k} levels but the grid has only {max} interior points")]
    TooManyLevels { k: usize, max: usize },
    #[error("ladder radicand negative at E = {0}")]
    RadicandNegative(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, NumericsError> {
        if n < 3 {
            return Err(NumericsError::BadGrid(format!("n = {n} < 3")));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(NumericsError::BadGrid(format!("[{a}, {b}] is empty")));
        }
        Ok(Grid { a, b, n })
    }

    /// The natural grid of a ladder system with `n` points.
    pub fn for_system(sys: &LadderSystem, n: usize) -> Result<Self, NumericsError> {
        Grid::new(sys.domain.grid.0, sys.domain.grid.1, n)
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.a + i as f64 * self.h()
    }

    /// Nodes `1..n-1`; the end points carry Dirichlet zeros.
    pub fn interior(&self) -> Vec<f64> {
        (1..self.n - 1).map(|i| self.node(i)).collect()
    }
}

/// `A ψ = E B ψ` on the interior nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub x: Vec<f64>,
    pub h: f64,
    /// Diagonal of `A = −D²_FD + diag(V/(−X))`.
    pub a_diag: Vec<f64>,
    /// Off-diagonal of `A`, `−1/h²`.
    pub a_off: f64,
    /// Diagonal of `B = diag(1/(−X))`, the Sturm-Liouville weight.
    pub b: Vec<f64>,
}

impl Discretization {
    /// `B^{-1/2} A B^{-1/2}`.
    pub fn symmetrized(&self) -> Tridiagonal {
        let n = self.x.len();
        Tridiagonal {
            diag: (0..n).map(|i| self.a_diag[i] / self.b[i]).collect(),
            off: (0..n.saturating_sub(1))
                .map(|i| self.a_off / (self.b[i] * self.b[i + 1]).sqrt())
                .collect(),
        }
    }
}

/// Split a `X D² + V` operator into its two coefficients.
fn ladder_form(op: &DiffOp) -> Result<(crate::expr::Expr, crate::expr::Expr), NumericsError> {
    if op.order().unwrap_or(0) > 2 {
        return Err(NumericsError::NotLadderForm("order above 2".into()));
    }
    if !op.coeff(1).is_zero() {
        return Err(NumericsError::NotLadderForm(
            "nonzero first-order term".into(),
        ));
    }
    if op.has_energy() {
        return Err(NumericsError::NotLadderForm(
            "coefficients depend on ENERGY".into(),
        ));
    }
    Ok((op.coeff(2), op.coeff(0)))
}

pub fn discretize(op: &DiffOp, grid: &Grid) -> Result<Discretization, NumericsError> {
    let (x_coef, v) = ladder_form(op)?;
    let none = ParamBinding::new();
    let h = grid.h();
    let x = grid.interior();
    let mut a_diag = Vec::with_capacity(x.len());
    let mut b = Vec::with_capacity(x.len());
    for &xi in &x {
        let xv = x_coef.eval(xi, &none)?;
        if !(xv < 0.0) {
            return Err(NumericsError::XSign { x: xi, value: xv });
        }
        let w = -1.0 / xv;
        a_diag.push(2.0 / (h * h) + v.eval(xi, &none)? * w);
        b.push(w);
    }
    Ok(Discretization {
        x,
        h,
        a_diag,
        a_off: -1.0 / (h * h),
        b,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Grid,
    Ladder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult {
    pub method: Method,
    pub energies: Vec<f64>,
    /// Interior nodes; empty for ladder-generated spectra.
    pub x: Vec<f64>,
    pub h: f64,
    /// `w(x) = 1/(−X(x))` at the nodes.
    pub weight: Vec<f64>,
    /// `states[i][j] = ψ_i(x_j)`, normalized so `Σ ψ_i² w h = 1`.
    pub states: Vec<Vec<f64>>,
}

impl SpectrumResult {
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.weight)
            .map(|((a, b), w)| a * b * w)
            .sum::<f64>()
            * self.h
    }

    /// Largest deviation of the weighted Gram matrix from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.states.len() {
            for j in 0..=i {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(&self.states[i], &self.states[j]) - target).abs());
            }
        }
        worst
    }

    /// Sign changes of state `i`, ignoring the numerically zero tails.
    pub fn node_count(&self, i: usize) -> usize {
        count_nodes(&self.states[i])
    }
}

pub(crate) fn count_nodes(psi: &[f64]) -> usize {
    let peak = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut last = 0.0_f64;
    let mut nodes = 0;
    for &v in psi {
        if v.abs() < 1e-6 * peak {
            continue;
        }
        if last != 0.0 && v.signum() != last {
            nodes += 1;
        }
        last = v.signum();
    }
    nodes
}

/// Lowest `k` eigenpairs on one grid, no extrapolation.
pub fn eigensolve(disc: &Discretization, k: usize) -> Result<SpectrumResult, NumericsError> {
    let max = disc.x.len();
    if k > max {
        return Err(NumericsError::TooManyLevels { k, max });
    }
    let t = disc.symmetrized();
    let pairs = t.lowest(k);
    let mut energies = Vec::with_capacity(k);
    let mut states = Vec::with_capacity(k);
    let scale = 1.0 / disc.h.sqrt();
    for (value, phi) in pairs {
        let mut psi: Vec<f64> = phi
            .iter()
            .zip(&disc.b)
            .map(|(p, w)| p * scale / w.sqrt())
            .collect();
        // fix the sign: first significant entry positive
        let peak = psi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if let Some(first) = psi.iter().find(|v| v.abs() > 1e-3 * peak) {
            if *first < 0.0 {
                psi.iter_mut().for_each(|v| *v = -*v);
            }
        }
        energies.push(value);
        states.push(psi);
    }
    Ok(SpectrumResult {
        method: Method::Grid,
        energies,
        x: disc.x.clone(),
        h: disc.h,
        weight: disc.b.clone(),
        states,
    })
}

/// Grid spectrum with Richardson extrapolation against a grid of half the
/// resolution: `E = (r² E_h − E_H)/(r² − 1)` with `r = H/h`. States come
/// from the finer grid.
pub fn grid_spectrum(op: &DiffOp, grid: &Grid, k: usize) -> Result<SpectrumResult, NumericsError> {
    let fine = eigensolve(&discretize(op, grid)?, k)?;
    let coarse_n = grid.n.div_ceil(2);
    if coarse_n < k + 2 || coarse_n < 3 {
        return Ok(fine);
    }
    let coarse_grid = Grid::new(grid.a, grid.b, coarse_n)?;
    let coarse_disc = discretize(op, &coarse_grid)?;
    let coarse = coarse_disc.symmetrized().lowest_values(k);
    let r2 = (coarse_grid.h() / grid.h()).powi(2);
    let mut out = fine;
    for (e, ec) in out.energies.iter_mut().zip(coarse) {
        *e = (r2 * *e - ec) / (r2 - 1.0);
    }
    Ok(out)
}
