//! Finite-order differential operators `Σ c_k(x) D^k` with [`Expr`]
//! coefficients.
//!
//! Operators act to the right. Coefficients may mention the reserved
//! [`ENERGY`] parameter; such an operator stands for `Σ c_k(x, H) D^k` with
//! every `H` kept to the right, so on an eigenstate of energy `E` it is the
//! ordinary operator obtained by [`DiffOp::bind_energy`].

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::expr::{Expr, ExprError, ParamBinding, ENERGY};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffOpError {
    #[error("operator coefficients reference the unbound energy slot")]
    UnboundEnergy,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiffOp {
    terms: BTreeMap<usize, Expr>,
}

impl DiffOp {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn identity() -> Self {
        Self::multiply(Expr::one())
    }

    /// `D`
    pub fn d() -> Self {
        Self::term(1, Expr::one())
    }

    /// Multiplication by `f`.
    pub fn multiply(f: Expr) -> Self {
        Self::term(0, f)
    }

    /// `coeff * D^order`
    pub fn term(order: usize, coeff: Expr) -> Self {
        let mut op = Self::zero();
        op.add_term(order, coeff);
        op
    }

    pub fn from_terms<I: IntoIterator<Item = (usize, Expr)>>(terms: I) -> Self {
        let mut op = Self::zero();
        for (k, c) in terms {
            op.add_term(k, c);
        }
        op
    }

    /// `X D² + V`
    pub fn hamiltonian(x_coef: Expr, potential: Expr) -> Self {
        Self::from_terms([(2, x_coef), (0, potential)])
    }

    /// `Y D + Z`
    pub fn first_order(y: Expr, z: Expr) -> Self {
        Self::from_terms([(1, y), (0, z)])
    }

    fn add_term(&mut self, order: usize, coeff: Expr) {
        let merged = match self.terms.remove(&order) {
            Some(prev) => Expr::sum(vec![prev, coeff]),
            None => coeff,
        };
        if !merged.is_zero() {
            self.terms.insert(order, merged);
        }
    }

    /// Highest order with a structurally nonzero coefficient.
    pub fn order(&self) -> Option<usize> {
        self.terms.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, order: usize) -> Expr {
        self.terms.get(&order).cloned().unwrap_or_else(Expr::zero)
    }

    /// Terms in ascending order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (usize, &Expr)> {
        self.terms.iter().map(|(k, c)| (*k, c))
    }

    pub fn add(&self, other: &DiffOp) -> DiffOp {
        let mut out = self.clone();
        for (k, c) in other.terms() {
            out.add_term(k, c.clone());
        }
        out
    }

    pub fn sub(&self, other: &DiffOp) -> DiffOp {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> DiffOp {
        self.scale_expr(&Expr::c(k))
    }

    /// Left multiplication by a function (or energy expression).
    pub fn scale_expr(&self, f: &Expr) -> DiffOp {
        DiffOp::from_terms(
            self.terms()
                .map(|(k, c)| (k, Expr::product(vec![f.clone(), c.clone()]))),
        )
    }

    /// `self ∘ other` by the Leibniz rule:
    /// `(f D^m)(g D^n) = f Σ_j C(m, j) g^(j) D^(m+n-j)`.
    pub fn compose(&self, other: &DiffOp) -> DiffOp {
        let mut out = DiffOp::zero();
        for (n, g) in other.terms() {
            let max_m = self.order().unwrap_or(0);
            let mut derivs = Vec::with_capacity(max_m + 1);
            derivs.push(g.clone());
            for j in 1..=max_m {
                let next = derivs[j - 1].diff();
                derivs.push(next);
            }
            for (m, f) in self.terms() {
                for (j, gj) in derivs.iter().enumerate().take(m + 1) {
                    if gj.is_zero() {
                        continue;
                    }
                    let c = binomial(m, j);
                    out.add_term(
                        m + n - j,
                        Expr::product(vec![Expr::c(c), f.clone(), gj.clone()]),
                    );
                }
            }
        }
        out
    }

    /// `[A, B] = A∘B − B∘A`
    pub fn commutator(&self, other: &DiffOp) -> DiffOp {
        self.compose(other).sub(&other.compose(self))
    }

    pub fn has_energy(&self) -> bool {
        self.terms.values().any(|c| c.contains_param(ENERGY))
    }

    /// Replace the energy slot by a number.
    pub fn bind_energy(&self, energy: f64) -> DiffOp {
        self.substitute_energy(&Expr::c(energy))
    }

    /// Replace the energy slot by an expression (itself possibly in ENERGY).
    pub fn substitute_energy(&self, with: &Expr) -> DiffOp {
        self.map_coeffs(|c| c.substitute(ENERGY, with))
    }

    /// Substitute numeric values for the parameters in `binding`.
    pub fn bind(&self, binding: &ParamBinding) -> DiffOp {
        self.map_coeffs(|c| c.bind(binding))
    }

    pub fn map_coeffs(&self, f: impl Fn(&Expr) -> Expr) -> DiffOp {
        DiffOp::from_terms(self.terms().map(|(k, c)| (k, f(c))))
    }

    /// `Σ c_k ψ^(k)` as an expression.
    pub fn apply_symbolic(&self, psi: &Expr) -> Result<Expr, DiffOpError> {
        if self.has_energy() {
            return Err(DiffOpError::UnboundEnergy);
        }
        let mut acc = Vec::new();
        let mut deriv = psi.clone();
        let mut current = 0usize;
        for (k, c) in self.terms() {
            while current < k {
                deriv = deriv.diff();
                current += 1;
            }
            acc.push(Expr::product(vec![c.clone(), deriv.clone()]));
        }
        Ok(Expr::sum(acc))
    }

    /// Evaluate every coefficient at `x`.
    pub fn eval_coeffs(
        &self,
        x: f64,
        binding: &ParamBinding,
    ) -> Result<Vec<(usize, f64)>, ExprError> {
        self.terms()
            .map(|(k, c)| Ok((k, c.eval(x, binding)?)))
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

impl fmt::Display for DiffOp {
    /// Descending order, e.g. `(-1.0)*D^2 + (0.5*x^2.0)*D^0`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return f.write_str("(0.0)*D^0");
        }
        let mut first = true;
        for (k, c) in self.terms().rev() {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            match c.as_const() {
                Some(v) if v.is_sign_negative() => write!(f, "{c}*D^{k}")?,
                _ => write!(f, "({c})*D^{k}")?,
            }
        }
        Ok(())
    }
}

/// Action of an operator on an eigenstate of `H = X D² + V`, written as
/// `a(x) ψ + b(x) ψ'` after eliminating `ψ'' = (E − V) ψ / X`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedAction {
    pub value: Expr,
    pub slope: Expr,
}

/// Reduce `op ψ` for `ψ` an eigenfunction of `X D² + V` with energy
/// `energy` (usually [`Expr::energy`]).
pub fn reduce_on_eigenstate(
    op: &DiffOp,
    x_coef: &Expr,
    potential: &Expr,
    energy: &Expr,
) -> ReducedAction {
    // ψ^(k) = A_k ψ + B_k ψ'
    let ratio = Expr::div(Expr::sub(energy.clone(), potential.clone()), x_coef.clone());
    let max = op.order().unwrap_or(0);
    let mut a = vec![Expr::one()];
    let mut b = vec![Expr::zero()];
    for k in 0..max {
        let next_a = Expr::sum(vec![
            a[k].diff(),
            Expr::product(vec![b[k].clone(), ratio.clone()]),
        ]);
        let next_b = Expr::sum(vec![a[k].clone(), b[k].diff()]);
        a.push(next_a);
        b.push(next_b);
    }
    let mut value = Vec::new();
    let mut slope = Vec::new();
    for (k, c) in op.terms() {
        value.push(Expr::product(vec![c.clone(), a[k].clone()]));
        slope.push(Expr::product(vec![c.clone(), b[k].clone()]));
    }
    ReducedAction {
        value: Expr::sum(value),
        slope: Expr::sum(slope),
    }
}
