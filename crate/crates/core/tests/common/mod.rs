#![allow(dead_code)]

use ladderlab_core::expr::Expr;
use proptest::prelude::*;

/// Random expressions that stay finite and smooth on [-2, 2] for a, b in
/// [-1, 1].
pub fn smooth_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (-2.0f64..2.0).prop_map(Expr::c),
        Just(Expr::x()),
        Just(Expr::param("a")),
        Just(Expr::param("b")),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..3).prop_map(Expr::product),
            (inner.clone(), 1u8..4).prop_map(|(b, k)| Expr::pow(b, Expr::c(k as f64))),
            inner.clone().prop_map(|b| {
                // positive base for fractional and negative powers
                Expr::pow(
                    Expr::sum(vec![Expr::c(1.5), Expr::pow(b, Expr::c(2.0))]),
                    Expr::c(-0.5),
                )
            }),
            inner.clone().prop_map(|a| Expr::exp(Expr::scale(0.3, a))),
            inner.clone().prop_map(Expr::sin),
            inner.clone().prop_map(Expr::cos),
            inner.prop_map(Expr::neg),
        ]
    })
}

/// Polynomial in x of degree <= 3 with small coefficients.
pub fn poly() -> impl Strategy<Value = Expr> {
    prop::collection::vec(-2.0f64..2.0, 1..5).prop_map(|cs| {
        Expr::sum(
            cs.into_iter()
                .enumerate()
                .map(|(k, c)| {
                    Expr::product(vec![Expr::c(c), Expr::pow(Expr::x(), Expr::c(k as f64))])
                })
                .collect(),
        )
    })
}
