//! Multiplying `(−D² + R)ψ = Eψ` by a nonvanishing `T(x)`.

use super::LadderError;
use crate::diffop::DiffOp;
use crate::expr::{Domain, Expr, ParamBinding};

/// `H′ = −T D² + T (R − E)`. The eigenproblem `H′ψ = −ψ` is equivalent to
/// `(−D² + R + 1/T) ψ = E ψ` wherever `T` has no zero.
pub fn transform_eigenproblem(
    r: &Expr,
    t: &Expr,
    energy: f64,
    domain: &Domain,
    binding: &ParamBinding,
) -> Result<DiffOp, LadderError> {
    let n = 400;
    let mut sign = 0.0;
    for i in 0..=n {
        let x = domain.lo + (domain.hi - domain.lo) * i as f64 / n as f64;
        if !domain.admits(x) {
            continue;
        }
        let v = t.eval(x, binding)?;
        if v.abs() < 1e-12 || (sign != 0.0 && v.signum() != sign) {
            return Err(LadderError::TransformZero(x));
        }
        sign = v.signum();
    }
    let t = t.bind(binding);
    let r = r.bind(binding);
    Ok(DiffOp::from_terms([
        (2, Expr::neg(t.clone())),
        (0, t * Expr::sum(vec![r, Expr::c(-energy)])),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{approx_equal, parse};

    fn check_eigen(op: &DiffOp, psi: &Expr, domain: &Domain) {
        let lhs = op.apply_symbolic(psi).unwrap();
        let r = approx_equal(
            &lhs,
            &Expr::neg(psi.clone()),
            domain,
            &ParamBinding::new(),
            50,
            1e-10,
            0,
        )
        .unwrap();
        assert!(r.equal, "{r:?}");
    }

    #[test]
    fn unit_t_is_a_shift() {
        let op = transform_eigenproblem(
            &parse("x^2").unwrap(),
            &Expr::one(),
            2.0,
            &Domain::new(-1.0, 1.0),
            &ParamBinding::new(),
        )
        .unwrap();
        assert_eq!(op.coeff(2), Expr::c(-1.0));
        assert_eq!(op.coeff(0), parse("x^2 - 2").unwrap());
    }

    #[test]
    fn coulomb() {
        // n = l + 1 ground state ρ^(l+1) e^(−ρ)
        for l in [0.0, 1.0, 2.0] {
            let n = l + 1.0;
            let b = ParamBinding::from_pairs([("l", l), ("n", n)]).unwrap();
            let dom = Domain::new(0.2, 8.0);
            let op = transform_eigenproblem(
                &parse("l*(l+1)/x^2").unwrap(),
                &parse("-x/(2*n)").unwrap(),
                -1.0,
                &dom,
                &b,
            )
            .unwrap();
            // scaled by −2n: −ρ D² + l(l+1)/ρ + ρ
            let scaled = op.scale(-2.0 * n);
            let expect = DiffOp::from_terms([
                (2, parse("-x").unwrap()),
                (0, parse("l*(l+1)/x + x").unwrap().bind(&b)),
            ]);
            let pts = dom.sample(20, 0).unwrap();
            assert!(
                crate::ladder::operator_residual(&scaled, &expect, &pts, &ParamBinding::new())
                    < 1e-12
            );
            check_eigen(&op, &parse("x^(l+1)*exp(-x)").unwrap().bind(&b), &dom);
        }
    }

    #[test]
    fn morse() {
        let l = 3.0;
        let eps: f64 = l - 0.5;
        let b = ParamBinding::from_pairs([("l", l)]).unwrap();
        let dom = Domain::new(-3.0, 4.0);
        let op = transform_eigenproblem(
            &parse("exp(-2*x)").unwrap(),
            &parse("-exp(x)/(2*l)").unwrap(),
            -eps * eps,
            &dom,
            &b,
        )
        .unwrap();
        let scaled = op.scale(-2.0 * l);
        let expect = DiffOp::from_terms([
            (2, parse("-exp(x)").unwrap()),
            (
                0,
                Expr::sum(vec![
                    parse("exp(-x)").unwrap(),
                    Expr::scale(eps * eps, parse("exp(x)").unwrap()),
                ]),
            ),
        ]);
        let pts = dom.sample(20, 0).unwrap();
        assert!(
            crate::ladder::operator_residual(&scaled, &expect, &pts, &ParamBinding::new()) < 1e-12
        );
        // ψ = ξ^(l−½) e^(−ξ/2), ξ = 2e^(−x)
        let psi = parse("(2*exp(-x))^(l-0.5)*exp(-exp(-x))").unwrap().bind(&b);
        check_eigen(&op, &psi, &dom);
    }

    #[test]
    fn zero_of_t_rejected() {
        let err = transform_eigenproblem(
            &Expr::zero(),
            &Expr::x(),
            0.0,
            &Domain::new(-1.0, 1.0),
            &ParamBinding::new(),
        );
        assert!(matches!(err, Err(LadderError::TransformZero(_))));
    }
}
