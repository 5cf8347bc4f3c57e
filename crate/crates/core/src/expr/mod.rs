//! Expression language for the coefficient functions of 1-D Hamiltonians.
//!
//! An [`Expr`] is a tree over a single spatial variable `x` and named
//! real parameters. The grammar is closed under differentiation with
//! respect to `x`: power exponents never contain `x`, so `d/dx b^e` is
//! always `e * b^(e-1) * b'`.
//!
//! Trees are kept in a light normal form by the smart constructors
//! ([`Expr::sum`], [`Expr::product`], ...): nested sums and products are
//! flattened, constants are folded, factors are sorted and like terms in a
//! sum are merged. No trigonometric or exponential rewriting happens, so
//! identities such as `sin^2 + cos^2 = 1` are decided by sampling instead
//! (see [`approx_equal`]).

mod binding;
mod identity;
mod parse;
mod print;

pub use binding::{ParamBinding, ENERGY};
pub use identity::{approx_equal, max_residual, relative_gap, Domain, IdentityReport};
pub use parse::parse;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("exponent depends on x (at byte {offset})")]
    VarInExponent { offset: usize },
    #[error("unbound parameter `{0}`")]
    Unbound(String),
    #[error("domain error at x = {x}: {what}")]
    Domain { x: f64, what: String },
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("`{0}` is reserved for the energy slot")]
    ReservedName(String),
    #[error("inconclusive at x = {at}: {source}")]
    Inconclusive {
        at: f64,
        #[source]
        source: Box<ExprError>,
    },
    #[error("sampling domain is empty after exclusions")]
    EmptyDomain,
}

/// Symbolic expression in `x` and named parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Param(Arc<str>),
    Sum(Vec<Expr>),
    Product(Vec<Expr>),
    /// `base ^ exponent`; the exponent never contains [`Expr::Var`].
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    pub fn zero() -> Expr {
        Expr::Const(0.0)
    }

    pub fn one() -> Expr {
        Expr::Const(1.0)
    }

    pub fn c(v: f64) -> Expr {
        Expr::Const(v)
    }

    pub fn x() -> Expr {
        Expr::Var
    }

    pub fn param(name: &str) -> Expr {
        Expr::Param(Arc::from(name))
    }

    pub fn energy() -> Expr {
        Expr::param(ENERGY)
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Const(v) if *v == 1.0)
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(terms.len());
        let mut constant = 0.0;
        let mut stack: Vec<(f64, Expr)> = terms.into_iter().rev().map(|t| (1.0, t)).collect();
        while let Some((scale, t)) = stack.pop() {
            match t {
                Expr::Const(v) => constant += scale * v,
                Expr::Sum(inner) => {
                    stack.extend(inner.into_iter().rev().map(|u| (scale, u)));
                }
                other => {
                    // c * (a + b) inside a sum is spread over its terms
                    let (c, rest) = split_coefficient(other);
                    match rest {
                        Expr::Sum(inner) => {
                            stack.extend(inner.into_iter().rev().map(|u| (scale * c, u)));
                        }
                        rest => {
                            let k = scale * c;
                            flat.push(if k == 1.0 {
                                rest
                            } else {
                                Expr::product(vec![Expr::Const(k), rest])
                            });
                        }
                    }
                }
            }
        }
        let mut merged = merge_like_terms(flat);
        if constant != 0.0 {
            merged.push(Expr::Const(constant));
        }
        match merged.len() {
            0 => Expr::zero(),
            1 => merged.pop().unwrap(),
            _ => Expr::Sum(merged),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Expr {
        let mut flat = Vec::with_capacity(factors.len());
        let mut constant = 1.0;
        for f in factors {
            let f = match f {
                Expr::Neg(inner) => {
                    constant = -constant;
                    *inner
                }
                other => other,
            };
            match f {
                Expr::Product(inner) => {
                    for u in inner {
                        match u {
                            Expr::Const(v) => constant *= v,
                            other => flat.push(other),
                        }
                    }
                }
                Expr::Const(v) => constant *= v,
                other => flat.push(other),
            }
        }
        if constant == 0.0 {
            return Expr::zero();
        }
        flat.sort_by(cmp_expr);
        if flat.is_empty() {
            return Expr::Const(constant);
        }
        if constant == -1.0 {
            let inner = if flat.len() == 1 {
                flat.pop().unwrap()
            } else {
                Expr::Product(flat)
            };
            return Expr::Neg(Box::new(inner));
        }
        if constant != 1.0 {
            flat.insert(0, Expr::Const(constant));
        }
        if flat.len() == 1 {
            flat.pop().unwrap()
        } else {
            Expr::Product(flat)
        }
    }

    pub fn neg(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(-v),
            Expr::Neg(inner) => *inner,
            Expr::Product(mut fs) => {
                if let Some(Expr::Const(v)) = fs.first_mut() {
                    *v = -*v;
                    if *v == 1.0 {
                        fs.remove(0);
                        if fs.len() == 1 {
                            return fs.pop().unwrap();
                        }
                    }
                    Expr::Product(fs)
                } else {
                    Expr::Neg(Box::new(Expr::Product(fs)))
                }
            }
            other => Expr::Neg(Box::new(other)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::sum(vec![a, Expr::neg(b)])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        Expr::product(vec![a, Expr::pow(b, Expr::c(-1.0))])
    }

    pub fn scale(k: f64, e: Expr) -> Expr {
        Expr::product(vec![Expr::Const(k), e])
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        if exponent.is_zero() {
            return Expr::one();
        }
        if exponent.is_one() {
            return base;
        }
        if let (Expr::Const(b), Expr::Const(e)) = (&base, &exponent) {
            let v = b.powf(*e);
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
        if base.is_one() {
            return Expr::one();
        }
        if let Expr::Pow(inner_base, inner_exp) = &base {
            // (b^p)^q = b^(p q) only holds for integer q or b >= 0; keep nested
            // unless both are plain constants and q is an integer.
            if let (Some(p), Some(q)) = (inner_exp.as_const(), exponent.as_const()) {
                if q.fract() == 0.0 {
                    return Expr::pow((**inner_base).clone(), Expr::Const(p * q));
                }
            }
        }
        Expr::Pow(Box::new(base), Box::new(exponent))
    }

    pub fn sqrt(e: Expr) -> Expr {
        Expr::pow(e, Expr::c(0.5))
    }

    pub fn exp(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.exp()),
            other => Expr::Exp(Box::new(other)),
        }
    }

    pub fn sin(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.sin()),
            other => Expr::Sin(Box::new(other)),
        }
    }

    pub fn cos(e: Expr) -> Expr {
        match e {
            Expr::Const(v) => Expr::Const(v.cos()),
            other => Expr::Cos(Box::new(other)),
        }
    }

    pub fn contains_var(&self) -> bool {
        match self {
            Expr::Var => true,
            Expr::Const(_) | Expr::Param(_) => false,
            Expr::Sum(ts) | Expr::Product(ts) => ts.iter().any(Expr::contains_var),
            Expr::Pow(b, e) => b.contains_var() || e.contains_var(),
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Neg(a) => a.contains_var(),
        }
    }

    pub fn contains_param(&self, name: &str) -> bool {
        match self {
            Expr::Param(p) => &**p == name,
            Expr::Const(_) | Expr::Var => false,
            Expr::Sum(ts) | Expr::Product(ts) => ts.iter().any(|t| t.contains_param(name)),
            Expr::Pow(b, e) => b.contains_param(name) || e.contains_param(name),
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Neg(a) => a.contains_param(name),
        }
    }

    pub fn params(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_params(&mut out);
        out
    }

    fn collect_params(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Param(p) => {
                out.insert(p.to_string());
            }
            Expr::Const(_) | Expr::Var => {}
            Expr::Sum(ts) | Expr::Product(ts) => ts.iter().for_each(|t| t.collect_params(out)),
            Expr::Pow(b, e) => {
                b.collect_params(out);
                e.collect_params(out);
            }
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Neg(a) => a.collect_params(out),
        }
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + match self {
            Expr::Const(_) | Expr::Var | Expr::Param(_) => 0,
            Expr::Sum(ts) | Expr::Product(ts) => ts.iter().map(Expr::size).sum(),
            Expr::Pow(b, e) => b.size() + e.size(),
            Expr::Exp(a) | Expr::Sin(a) | Expr::Cos(a) | Expr::Neg(a) => a.size(),
        }
    }

    /// Exact derivative with respect to `x`.
    pub fn diff(&self) -> Expr {
        match self {
            Expr::Const(_) | Expr::Param(_) => Expr::zero(),
            Expr::Var => Expr::one(),
            Expr::Sum(ts) => Expr::sum(ts.iter().map(Expr::diff).collect()),
            Expr::Product(fs) => {
                let mut terms = Vec::with_capacity(fs.len());
                for (i, f) in fs.iter().enumerate() {
                    let df = f.diff();
                    if df.is_zero() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(fs.len());
                    for (j, g) in fs.iter().enumerate() {
                        factors.push(if i == j { df.clone() } else { g.clone() });
                    }
                    terms.push(Expr::product(factors));
                }
                Expr::sum(terms)
            }
            Expr::Pow(base, exponent) => {
                let db = base.diff();
                if db.is_zero() {
                    return Expr::zero();
                }
                let lowered = Expr::sum(vec![(**exponent).clone(), Expr::c(-1.0)]);
                Expr::product(vec![
                    (**exponent).clone(),
                    Expr::pow((**base).clone(), lowered),
                    db,
                ])
            }
            Expr::Exp(a) => {
                let da = a.diff();
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::product(vec![da, self.clone()])
            }
            Expr::Sin(a) => {
                let da = a.diff();
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::product(vec![da, Expr::cos((**a).clone())])
            }
            Expr::Cos(a) => {
                let da = a.diff();
                if da.is_zero() {
                    return Expr::zero();
                }
                Expr::neg(Expr::product(vec![da, Expr::sin((**a).clone())]))
            }
            Expr::Neg(a) => Expr::neg(a.diff()),
        }
    }

    pub fn diff_n(&self, n: usize) -> Expr {
        let mut e = self.clone();
        for _ in 0..n {
            e = e.diff();
        }
        e
    }

    /// Evaluate at `x` with every parameter taken from `binding`.
    pub fn eval(&self, x: f64, binding: &ParamBinding) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(v) => *v,
            Expr::Var => x,
            Expr::Param(name) => binding
                .get(name)
                .ok_or_else(|| ExprError::Unbound(name.to_string()))?,
            Expr::Sum(ts) => {
                let mut acc = 0.0;
                for t in ts {
                    acc += t.eval(x, binding)?;
                }
                acc
            }
            Expr::Product(fs) => {
                let mut acc = 1.0;
                for f in fs {
                    acc *= f.eval(x, binding)?;
                }
                acc
            }
            Expr::Pow(base, exponent) => {
                let b = base.eval(x, binding)?;
                let e = exponent.eval(x, binding)?;
                if b == 0.0 && e < 0.0 {
                    return Err(ExprError::Domain {
                        x,
                        what: format!("0 raised to negative power {e}"),
                    });
                }
                if b < 0.0 && e.fract() != 0.0 {
                    return Err(ExprError::Domain {
                        x,
                        what: format!("negative base {b} raised to non-integer power {e}"),
                    });
                }
                b.powf(e)
            }
            Expr::Exp(a) => a.eval(x, binding)?.exp(),
            Expr::Sin(a) => a.eval(x, binding)?.sin(),
            Expr::Cos(a) => a.eval(x, binding)?.cos(),
            Expr::Neg(a) => -a.eval(x, binding)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                x,
                what: format!("non-finite value {v}"),
            })
        }
    }

    /// Replace parameter `name` by `with` everywhere, renormalizing.
    pub fn substitute(&self, name: &str, with: &Expr) -> Expr {
        self.map_params(&|p| (p == name).then(|| with.clone()))
    }

    /// Replace every parameter bound in `binding` by its value.
    pub fn bind(&self, binding: &ParamBinding) -> Expr {
        self.map_params(&|p| binding.get(p).map(Expr::Const))
    }

    fn map_params(&self, f: &dyn Fn(&str) -> Option<Expr>) -> Expr {
        match self {
            Expr::Param(p) => f(p).unwrap_or_else(|| self.clone()),
            Expr::Const(_) | Expr::Var => self.clone(),
            Expr::Sum(ts) => Expr::sum(ts.iter().map(|t| t.map_params(f)).collect()),
            Expr::Product(ts) => Expr::product(ts.iter().map(|t| t.map_params(f)).collect()),
            Expr::Pow(b, e) => Expr::pow(b.map_params(f), e.map_params(f)),
            Expr::Exp(a) => Expr::exp(a.map_params(f)),
            Expr::Sin(a) => Expr::sin(a.map_params(f)),
            Expr::Cos(a) => Expr::cos(a.map_params(f)),
            Expr::Neg(a) => Expr::neg(a.map_params(f)),
        }
    }

    /// Re-run the normalizing constructors over the whole tree.
    pub fn normalize(&self) -> Expr {
        self.map_params(&|_| None)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sub(self, rhs)
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![self, rhs])
    }
}

impl std::ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        Expr::div(self, rhs)
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Expr {
        Expr::Const(v)
    }
}

fn rank(e: &Expr) -> u8 {
    match e {
        Expr::Const(_) => 0,
        Expr::Param(_) => 1,
        Expr::Var => 2,
        Expr::Pow(..) => 3,
        Expr::Exp(_) => 4,
        Expr::Sin(_) => 5,
        Expr::Cos(_) => 6,
        Expr::Sum(_) => 7,
        Expr::Product(_) => 8,
        Expr::Neg(_) => 9,
    }
}

/// Total structural order used to sort product factors.
pub fn cmp_expr(a: &Expr, b: &Expr) -> Ordering {
    let r = rank(a).cmp(&rank(b));
    if r != Ordering::Equal {
        return r;
    }
    match (a, b) {
        (Expr::Const(x), Expr::Const(y)) => x.total_cmp(y),
        (Expr::Param(x), Expr::Param(y)) => x.cmp(y),
        (Expr::Var, Expr::Var) => Ordering::Equal,
        (Expr::Sum(xs), Expr::Sum(ys)) | (Expr::Product(xs), Expr::Product(ys)) => {
            for (x, y) in xs.iter().zip(ys) {
                let o = cmp_expr(x, y);
                if o != Ordering::Equal {
                    return o;
                }
            }
            xs.len().cmp(&ys.len())
        }
        (Expr::Pow(b1, e1), Expr::Pow(b2, e2)) => cmp_expr(b1, b2).then_with(|| cmp_expr(e1, e2)),
        (Expr::Exp(x), Expr::Exp(y))
        | (Expr::Sin(x), Expr::Sin(y))
        | (Expr::Cos(x), Expr::Cos(y))
        | (Expr::Neg(x), Expr::Neg(y)) => cmp_expr(x, y),
        _ => Ordering::Equal,
    }
}

/// Split a term into numeric coefficient and remaining structure.
fn split_coefficient(t: Expr) -> (f64, Expr) {
    match t {
        Expr::Neg(inner) => {
            let (c, rest) = split_coefficient(*inner);
            (-c, rest)
        }
        Expr::Product(mut fs) => {
            if let Some(Expr::Const(c)) = fs.first() {
                let c = *c;
                fs.remove(0);
                let rest = if fs.len() == 1 {
                    fs.pop().unwrap()
                } else {
                    Expr::Product(fs)
                };
                (c, rest)
            } else {
                (1.0, Expr::Product(fs))
            }
        }
        other => (1.0, other),
    }
}

/// Merge terms with identical structure, keeping first-appearance order.
fn merge_like_terms(terms: Vec<Expr>) -> Vec<Expr> {
    if terms.len() < 2 {
        return terms;
    }
    let mut groups: Vec<(f64, Expr)> = Vec::with_capacity(terms.len());
    for t in terms {
        let (c, rest) = split_coefficient(t);
        if let Some(slot) = groups.iter_mut().find(|(_, r)| *r == rest) {
            slot.0 += c;
        } else {
            groups.push((c, rest));
        }
    }
    groups
        .into_iter()
        .filter(|(c, _)| *c != 0.0)
        .map(|(c, rest)| {
            if c == 1.0 {
                rest
            } else {
                Expr::product(vec![Expr::Const(c), rest])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Expr {
        parse(s).unwrap()
    }

    #[test]
    fn diff_of_square() {
        let d = p("x^2").diff();
        assert_eq!(d, p("2*x"));
    }

    #[test]
    fn diff_of_decaying_exponential() {
        let d = p("exp(-c*x)").diff();
        let expected = p("-c*exp(-c*x)");
        let b = ParamBinding::from_pairs([("c", 0.7)]).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            assert!((d.eval(x, &b).unwrap() - expected.eval(x, &b).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn diff_of_trig_combination() {
        let d = p("a*sin(k*x)+b*cos(k*x)").diff();
        let expected = p("a*k*cos(k*x) - b*k*sin(k*x)");
        let b = ParamBinding::from_pairs([("a", 1.3), ("b", -0.4), ("k", 2.1)]).unwrap();
        let r = approx_equal(&d, &expected, &Domain::new(-3.0, 3.0), &b, 50, 1e-12, 1).unwrap();
        assert!(r.equal, "{r:?}");
    }

    #[test]
    fn eval_basics() {
        let empty = ParamBinding::new();
        assert_eq!(p("x^2").eval(3.0, &empty).unwrap(), 9.0);
        assert!(matches!(
            p("a*x").eval(1.0, &empty),
            Err(ExprError::Unbound(name)) if name == "a"
        ));
        assert!(matches!(
            p("x^(-2)").eval(0.0, &empty),
            Err(ExprError::Domain { .. })
        ));
    }

    #[test]
    fn like_terms_cancel() {
        let e = p("x*y - y*x");
        assert!(e.is_zero());
        assert_eq!(p("x + x"), p("2*x"));
    }

    #[test]
    fn substitute_energy() {
        let e = p("(4 - ENERGY)^0.5");
        let bound = e.substitute(ENERGY, &Expr::c(3.0));
        assert_eq!(bound, Expr::c(1.0));
    }

    #[test]
    fn pow_folding_respects_sign() {
        // ((x)^2)^0.5 must not collapse to x
        let e = Expr::pow(p("x^2"), Expr::c(0.5));
        let v = e.eval(-2.0, &ParamBinding::new()).unwrap();
        assert_eq!(v, 2.0);
    }
}
