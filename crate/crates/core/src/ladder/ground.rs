//! Closed-form ground states, `S1 ψ0 = 0`.
//!
//! Where the defining equation has several roots every root is returned;
//! the physical one is chosen against the grid oracle in `numerics`.

use serde::Serialize;

use super::{CaseId, LadderError, LadderSystem};
use crate::expr::{parse, Expr, ParamBinding};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct E0Candidate {
    pub e0: f64,
    #[serde(serialize_with = "as_string")]
    pub psi0: Expr,
    /// Square-integrable with the Sturm-Liouville weight and vanishing
    /// wherever the grid imposes Dirichlet conditions.
    pub normalizable: bool,
    pub label: String,
}

fn as_string<S: serde::Serializer>(e: &Expr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundState {
    pub candidates: Vec<E0Candidate>,
    /// The scalar equation the candidates solve.
    pub equation: String,
    /// Lowest normalizable candidate; a heuristic until the oracle confirms.
    pub preferred: Option<usize>,
}

impl GroundState {
    pub fn preferred(&self) -> Option<&E0Candidate> {
        self.preferred.map(|i| &self.candidates[i])
    }
}

fn real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let r = disc.sqrt();
    vec![(-b + r) / (2.0 * a), (-b - r) / (2.0 * a)]
}

pub fn ground_state(sys: &LadderSystem) -> Result<GroundState, LadderError> {
    let CaseId::Catalog(id) = sys.case else {
        return Err(LadderError::NoClosedForm);
    };
    let p = |n: &str| sys.params.get(n).unwrap_or(0.0);
    let k = &sys.consts;
    let (alpha, lambda, c1, c2, c3) = (k.alpha, k.lambda, k.c1, k.c2, k.c3);
    let omega = (alpha * alpha + 2.0 * lambda).sqrt();

    let build = |template: &str, extra: &[(&str, f64)]| -> Result<Expr, LadderError> {
        let mut b = sys.params.clone();
        for &(n, v) in extra {
            b.set(n, v)?;
        }
        Ok(parse(template)?.bind(&b))
    };
    let mut cands = Vec::new();
    let equation: &str;
    match id {
        1 => {
            equation = "E0 = omega/2 + c3 - (c1 + c2*alpha)^2/omega^2";
            let e0 = omega / 2.0 + c3 - (c1 + c2 * alpha).powi(2) / (omega * omega);
            // ψ'/ψ = −s0/s1 is linear in x
            let s1 = sys.shift.s1.bind_energy(e0);
            let none = ParamBinding::new();
            let lead = s1.coeff(1).eval(0.0, &none)?;
            let s0 = |x: f64| s1.coeff(0).eval(x, &none);
            let b2 = -s0(0.0)? / lead;
            let b1 = -(s0(1.0)? - s0(0.0)?) / lead;
            cands.push(E0Candidate {
                e0,
                psi0: build("c4*exp(B1*x^2/2 + B2*x)", &[("B1", b1), ("B2", b2)])?,
                normalizable: b1 < 0.0,
                label: "closed form".into(),
            });
        }
        2 => {
            equation = "(B2*E0 + B3)^2 + (B2*E0 + B3) - c3 = 0";
            let b2 = -2.0 / omega;
            let b3 = c2 + (c1 * omega - k.tau) / (omega * (alpha - omega));
            for kk in real_roots(1.0, 1.0, -c3) {
                cands.push(E0Candidate {
                    e0: (kk - b3) / b2,
                    psi0: build(
                        "c4*x^(-K)*exp(-omega*x^2/8)",
                        &[("K", kk), ("omega", omega)],
                    )?,
                    normalizable: kk < 0.5,
                    label: format!("K = {kk}"),
                });
            }
        }
        3 => {
            equation = "s^2 + c*s + c3/(4*a*b) = 0, E0 = V_inf - s^2";
            let (a, b, c) = (p("a"), p("b"), p("c"));
            let v_inf = ((alpha + c * c).powi(2) + 2.0 * lambda) / (4.0 * c * c);
            for s in real_roots(1.0, c, c3 / (4.0 * a * b)) {
                cands.push(E0Candidate {
                    e0: v_inf - s * s,
                    psi0: build("c4*(a*exp(c*x)+b*exp(-c*x))^q", &[("q", -s / c)])?,
                    normalizable: s > 0.0,
                    label: format!("s = {s}"),
                });
            }
        }
        4 => {
            equation = "r^2 - 2*k^2*r - 4*k^2*c3/(a^2+b^2) = 0, E0 = (r^2 - (alpha-k^2)^2 - 2*lambda)/(4*k^2)";
            let (a, b, kk) = (p("a"), p("b"), p("k"));
            let k2 = kk * kk;
            for r in real_roots(1.0, -2.0 * k2, -4.0 * k2 * c3 / (a * a + b * b)) {
                let power = r / (2.0 * k2);
                cands.push(E0Candidate {
                    e0: (r * r - (alpha - k2).powi(2) - 2.0 * lambda) / (4.0 * k2),
                    psi0: build("c4*(a*sin(k*x)+b*cos(k*x))^q", &[("q", power)])?,
                    normalizable: power > 0.0,
                    label: format!("r = {r}"),
                });
            }
        }
        5 => {
            equation = "E0 = (omega/2)*(1 +/- sqrt(1 + 4*c3)) - c1 - alpha*c2";
            if 1.0 + 4.0 * c3 >= 0.0 {
                let root = (1.0 + 4.0 * c3).sqrt();
                for sign in [1.0, -1.0] {
                    let e0 = omega / 2.0 * (1.0 + sign * root) - c1 - alpha * c2;
                    let power = (c1 + alpha * c2 + e0) / omega;
                    cands.push(E0Candidate {
                        e0,
                        psi0: build("c4*x^q*exp(-omega*x/2)", &[("q", power), ("omega", omega)])?,
                        normalizable: power > 0.0,
                        label: format!("{} root", if sign > 0.0 { "+" } else { "-" }),
                    });
                }
            }
        }
        6 => {
            equation = "E0 = (2*c1 + alpha*(c + 2*c2) + c*omega +/- 2*sqrt(c3)*omega)/(2*c)";
            let c = p("c");
            if c3 >= 0.0 {
                let base = 2.0 * c1 + alpha * (c + 2.0 * c2) + c * omega;
                for sign in [1.0, -1.0] {
                    let e0 = (base + sign * 2.0 * c3.sqrt() * omega) / (2.0 * c);
                    let slope = (base - 2.0 * c * e0) / (2.0 * omega);
                    cands.push(E0Candidate {
                        e0,
                        psi0: build(
                            "c4*exp(-omega/(2*c^2)*exp(-c*x) + l*x)",
                            &[("l", slope), ("omega", omega)],
                        )?,
                        normalizable: slope < c / 2.0,
                        label: format!("{} root", if sign > 0.0 { "+" } else { "-" }),
                    });
                }
            }
        }
        _ => return Err(LadderError::UnknownCase(u32::from(id))),
    }
    if !cands.iter().any(|c| c.normalizable) {
        return Err(LadderError::NoNormalizable(format!(
            "case {id}: candidates {:?}",
            cands.iter().map(|c| c.e0).collect::<Vec<_>>()
        )));
    }
    let preferred = cands
        .iter()
        .enumerate()
        .filter(|(_, c)| c.normalizable)
        .min_by(|a, b| a.1.e0.total_cmp(&b.1.e0))
        .map(|(i, _)| i);
    Ok(GroundState {
        candidates: cands,
        equation: equation.to_string(),
        preferred,
    })
}

/// Largest scale-free residual of `S1(E0) ψ0` over the check domain:
/// `|s1 ψ0' + s0 ψ0| / max(|s1 ψ0'|, |s0 ψ0|)`.
pub fn annihilation_residual(sys: &LadderSystem, cand: &E0Candidate) -> Result<f64, LadderError> {
    let s1 = sys.shift.s1.bind_energy(cand.e0);
    let lead = s1.coeff(1) * cand.psi0.diff();
    let rest = s1.coeff(0) * cand.psi0.clone();
    let none = ParamBinding::new();
    let mut worst = 0.0_f64;
    for x in sys.domain.check.sample(50, 3)? {
        let (a, b) = (lead.eval(x, &none)?, rest.eval(x, &none)?);
        let scale = a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
        worst = worst.max((a + b).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::build_case;

    fn sys(id: u32, pairs: &[(&str, f64)]) -> LadderSystem {
        build_case(
            id,
            &ParamBinding::from_pairs(pairs.iter().copied()).unwrap(),
        )
        .unwrap()
    }

    /// `|H ψ0 − E0 ψ0|` relative to the size of the individual terms.
    fn eigen_residual(s: &LadderSystem, c: &E0Candidate) -> f64 {
        let none = ParamBinding::new();
        let kinetic = s.x_coef.clone() * c.psi0.diff_n(2);
        let pot = s.v.clone() * c.psi0.clone();
        let mut worst = 0.0_f64;
        for x in s.domain.check.sample(30, 5).unwrap() {
            let (t, p, psi) = (
                kinetic.eval(x, &none).unwrap(),
                pot.eval(x, &none).unwrap(),
                c.psi0.eval(x, &none).unwrap(),
            );
            let scale = t.abs() + p.abs() + (c.e0 * psi).abs();
            worst = worst.max((t + p - c.e0 * psi).abs() / scale);
        }
        worst
    }

    #[test]
    fn harmonic_ground_state() {
        let s = sys(1, &[]);
        let g = ground_state(&s).unwrap();
        let c = g.preferred().unwrap();
        assert!((c.e0 - 2f64.sqrt() / 2.0).abs() < 1e-15);
        assert!(annihilation_residual(&s, c).unwrap() < 1e-12);
        assert!(eigen_residual(&s, c) < 1e-12);
    }

    #[test]
    fn every_case_annihilated_with_shifted_constants() {
        let cases: [(u32, &[(&str, f64)]); 6] = [
            (
                1,
                &[
                    ("alpha", 0.4),
                    ("lambda", 1.3),
                    ("c1", 0.2),
                    ("c2", -0.5),
                    ("c3", 0.7),
                ],
            ),
            (
                2,
                &[
                    ("alpha", 0.3),
                    ("lambda", 0.8),
                    ("c1", 0.1),
                    ("c2", 0.2),
                    ("c3", 1.5),
                ],
            ),
            (
                3,
                &[
                    ("alpha", 0.5),
                    ("c2", 0.4),
                    ("c1", -0.2),
                    ("a", 0.8),
                    ("b", 1.3),
                    ("c", 1.2),
                    ("c3", -30.0),
                ],
            ),
            (
                4,
                &[
                    ("alpha", 0.5),
                    ("c2", 0.4),
                    ("c1", -0.2),
                    ("a", 0.8),
                    ("b", 0.6),
                    ("k", 1.2),
                    ("c3", 1.5),
                ],
            ),
            (
                5,
                &[
                    ("alpha", 0.3),
                    ("lambda", 0.7),
                    ("c1", 0.2),
                    ("c2", -0.4),
                    ("c3", 1.2),
                ],
            ),
            (
                6,
                &[
                    ("alpha", 0.3),
                    ("lambda", 0.7),
                    ("c1", 0.2),
                    ("c2", -0.4),
                    ("c3", 1.2),
                    ("c", 0.8),
                ],
            ),
        ];
        for (id, pairs) in cases {
            let s = sys(id, pairs);
            let g = ground_state(&s).unwrap();
            let c = g.preferred().unwrap();
            let r = annihilation_residual(&s, c).unwrap();
            assert!(r < 1e-9, "case {id}: S1 psi0 residual {r}");
            let h = eigen_residual(&s, c);
            assert!(h < 1e-9, "case {id}: H psi0 residual {h}");
        }
    }

    #[test]
    fn coulomb_roots() {
        let s = sys(5, &[]);
        let g = ground_state(&s).unwrap();
        let mut e: Vec<f64> = g.candidates.iter().map(|c| c.e0).collect();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 1.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14);
        assert_eq!(g.preferred().unwrap().e0, 2.0);
    }

    #[test]
    fn custom_has_no_closed_form() {
        let mut s = sys(1, &[]);
        s.case = CaseId::Custom;
        assert!(matches!(ground_state(&s), Err(LadderError::NoClosedForm)));
    }
}
