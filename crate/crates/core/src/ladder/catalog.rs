//! The six solvable families.
//!
//! Each family is a set of expression templates in the free constants plus
//! formulas for β, γ, ν, τ. `build_case` binds the templates, assembles the
//! system and refuses to return it unless the constraints check out.

use std::f64::consts::PI;

use rand::Rng;

use super::{
    check_constraints, CaseId, Constants, LadderError, LadderSystem, NaturalDomain, Normalization,
};
use crate::expr::{parse, Domain, Expr, ParamBinding};

type Getter<'a> = &'a dyn Fn(&str) -> f64;

/// Static description of a family.
#[derive(Debug, Clone, Copy)]
pub struct CaseInfo {
    pub id: u8,
    pub name: &'static str,
    pub x: &'static str,
    pub y: &'static str,
    pub z: &'static str,
    pub q: &'static str,
    pub v: &'static str,
    /// Free parameters and their defaults.
    pub defaults: &'static [(&'static str, f64)],
    normalization: Normalization,
    scalars: fn(Getter) -> [f64; 4],
    domain: fn(Getter) -> NaturalDomain,
    commutator: &'static str,
    commutator_printed: Option<&'static str>,
}

macro_rules! defaults {
    ($($name:literal => $v:expr),* $(,)?) => {
        &[$(($name, $v)),*]
    };
}

pub const CASES: [CaseInfo; 6] = [
    CaseInfo {
        id: 1,
        name: "harmonic oscillator",
        x: "-1",
        y: "1",
        z: "-alpha*x/2 + c2",
        q: "-lambda*x + c1",
        v: "0.5*(lambda + alpha^2/2)*x^2 - (alpha*c2 + c1)*x + c3",
        defaults: defaults!["alpha" => 0.0, "lambda" => 1.0, "c1" => 0.0, "c2" => 0.0, "c3" => 0.0, "c4" => 1.0],
        normalization: Normalization::UnitP,
        scalars: |p| {
            let (a, l) = (p("alpha"), p("lambda"));
            [0.0, 0.0, -a, a * p("c1") - 2.0 * l * p("c2")]
        },
        domain: |p| {
            let center =
                (p("alpha") * p("c2") + p("c1")) / (p("lambda") + p("alpha").powi(2) / 2.0);
            NaturalDomain {
                check: Domain::new(center - 4.0, center + 4.0),
                grid: (center - 12.0, center + 12.0),
            }
        },
        commutator: "-omega",
        commutator_printed: None,
    },
    CaseInfo {
        id: 2,
        name: "radial harmonic oscillator",
        x: "-1",
        y: "x",
        z: "-alpha*x^2/4 + c2",
        q: "-lambda*x^2/2 + c1",
        v: "(lambda + alpha^2/2)*x^2/8 + c3/x^2 + 0.5*(alpha/2 - alpha*c2 - c1)",
        defaults: defaults!["alpha" => 0.0, "lambda" => 1.0, "c1" => 0.0, "c2" => 0.0, "c3" => 2.0, "c4" => 1.0],
        normalization: Normalization::UnitQ,
        scalars: |p| {
            let (a, l) = (p("alpha"), p("lambda"));
            [0.0, 2.0, -a, l * (1.0 - 2.0 * p("c2")) + a * p("c1")]
        },
        domain: |_| NaturalDomain {
            check: Domain::new(0.3, 4.0),
            grid: (0.0, 40.0),
        },
        commutator: "8*lambda/omega*(2*ENERGY + c1 + c2*alpha - alpha/2)",
        commutator_printed: None,
    },
    CaseInfo {
        id: 3,
        name: "generalized Poschl-Teller",
        x: "-1",
        y: "a*exp(c*x)+b*exp(-c*x)",
        z: "-(alpha+c^2)/(2*c)*(a*exp(c*x)-b*exp(-c*x)) + c2",
        q: "-lambda/c*(a*exp(c*x)-b*exp(-c*x)) + c1",
        v: "c3/(a*exp(c*x)+b*exp(-c*x))^2 + ((alpha+c^2)^2 + 2*lambda)/(4*c^2)",
        defaults: defaults![
            "a" => 1.0, "b" => 1.0, "c" => 1.0,
            "alpha" => 0.0, "lambda" => 1.0, "c1" => 0.0, "c2" => 0.0, "c3" => -143.0, "c4" => 1.0,
        ],
        normalization: Normalization::UnitP,
        scalars: |p| {
            let (a, l, c) = (p("alpha"), p("lambda"), p("c"));
            let nu = -a - 2.0 * c * c;
            [
                -2.0 * c * c / l,
                2.0 * c * c * p("c1") / l,
                nu,
                -2.0 * l * p("c2") - nu * p("c1"),
            ]
        },
        domain: |p| {
            let (a, b, c) = (p("a"), p("b"), p("c"));
            if a * b > 0.0 {
                let center = (b / a).ln() / (2.0 * c);
                NaturalDomain {
                    check: Domain::new(center - 3.0 / c, center + 3.0 / c),
                    grid: (center - 20.0 / c, center + 20.0 / c),
                }
            } else if a * b < 0.0 {
                let zero = (-b / a).ln() / (2.0 * c);
                NaturalDomain {
                    check: Domain::new(zero + 0.3 / c, zero + 3.0 / c),
                    grid: (zero, zero + 20.0 / c),
                }
            } else {
                NaturalDomain {
                    check: Domain::new(-3.0 / c, 3.0 / c),
                    grid: (-12.0 / c, 12.0 / c),
                }
            }
        },
        commutator: "-8*a*b*c*(((alpha+c^2)/(2*c))^2 + lambda/(2*c^2) - ENERGY)^0.5",
        commutator_printed: None,
    },
    CaseInfo {
        id: 4,
        name: "Poschl-Teller",
        x: "-1",
        y: "a*sin(k*x)+b*cos(k*x)",
        z: "(alpha-k^2)/(2*k)*(a*cos(k*x)-b*sin(k*x)) + c2",
        q: "lambda/k*(a*cos(k*x)-b*sin(k*x)) + c1",
        v: "c3/(a*sin(k*x)+b*cos(k*x))^2 - ((k^2-alpha)^2 + 2*lambda)/(4*k^2)",
        defaults: defaults![
            "a" => 1.0, "b" => 0.0, "k" => 1.0,
            "alpha" => 0.0, "lambda" => 1.0, "c1" => 0.0, "c2" => 0.0, "c3" => 2.0, "c4" => 1.0,
        ],
        normalization: Normalization::UnitP,
        scalars: |p| {
            let (a, l, k) = (p("alpha"), p("lambda"), p("k"));
            [
                2.0 * k * k / l,
                -2.0 * p("c1") * k * k / l,
                2.0 * k * k - a,
                p("c1") * (a - 2.0 * k * k) - 2.0 * l * p("c2"),
            ]
        },
        domain: |p| {
            // a sin(kx) + b cos(kx) = A sin(kx + φ), positive on (−φ, π − φ)/k
            let (k, phi) = (p("k"), p("b").atan2(p("a")));
            let (lo, hi) = (-phi / k + 0.0, (PI - phi) / k);
            let pad = 0.1 * (hi - lo);
            NaturalDomain {
                check: Domain::new(lo + pad, hi - pad),
                grid: (lo, hi),
            }
        },
        commutator: "-2*k*(a^2+b^2)*(ENERGY + lambda/(2*k^2) + ((alpha-k^2)/(2*k))^2)^0.5",
        commutator_printed: None,
    },
    CaseInfo {
        id: 5,
        name: "Coulomb",
        x: "-x",
        y: "x",
        z: "-alpha*x/2 + c2",
        q: "-lambda*x + c1",
        v: "0.5*(lambda + alpha^2/2)*x + c3/x - (c1 + alpha*c2)",
        defaults: defaults!["alpha" => 0.0, "lambda" => 0.5, "c1" => 0.0, "c2" => 0.0, "c3" => 2.0, "c4" => 1.0],
        normalization: Normalization::UnitP,
        scalars: |p| {
            let (a, l) = (p("alpha"), p("lambda"));
            [0.0, 1.0, -a, a * p("c1") - 2.0 * l * p("c2")]
        },
        domain: |p| {
            let omega = (p("alpha").powi(2) + 2.0 * p("lambda")).sqrt();
            NaturalDomain {
                check: Domain::new(0.3, 6.0),
                grid: (0.0, 80.0 / omega),
            }
        },
        commutator: "-2/omega*(ENERGY + c1 + alpha*c2)",
        commutator_printed: None,
    },
    CaseInfo {
        id: 6,
        name: "Morse",
        x: "-exp(c*x)",
        y: "1",
        z: "alpha/(2*c)*exp(-c*x) + c2",
        q: "lambda/c*exp(-c*x) + c1",
        v: "(2*lambda + alpha^2)/(4*c^2)*exp(-c*x) + c3*exp(c*x) + alpha*(2*c2 + c)/(2*c) + c1/c",
        defaults: defaults![
            "c" => 1.0,
            "alpha" => 0.0, "lambda" => 1.0, "c1" => 0.0, "c2" => 0.0, "c3" => 1.0, "c4" => 1.0,
        ],
        normalization: Normalization::UnitP,
        scalars: |p| {
            let (a, l, c) = (p("alpha"), p("lambda"), p("c"));
            [0.0, -c, -a, a * p("c1") - l * (c + 2.0 * p("c2"))]
        },
        domain: |p| {
            let c = p("c");
            NaturalDomain {
                check: Domain::new(-3.0 / c, 3.0 / c),
                grid: (-8.0 / c, 32.0 / c),
            }
        },
        commutator: "-2*c^2/omega*(ENERGY - (2*c1 + alpha*(c + 2*c2))/(2*c))",
        commutator_printed: Some("-2*c^2/omega*(ENERGY + (2*c1 + alpha*(c + 2*c2))/(2*c))"),
    },
];

impl CaseInfo {
    /// Sampling and grid domain for the given parameters; missing names
    /// take the family defaults.
    pub fn natural_domain(&self, params: &ParamBinding) -> NaturalDomain {
        let get = |name: &str| {
            params
                .get(name)
                .or_else(|| {
                    self.defaults
                        .iter()
                        .find(|(n, _)| *n == name)
                        .map(|(_, v)| *v)
                })
                .unwrap_or(0.0)
        };
        (self.domain)(&get)
    }
}

pub fn case_info(id: u32) -> Result<&'static CaseInfo, LadderError> {
    CASES
        .iter()
        .find(|c| u32::from(c.id) == id)
        .ok_or(LadderError::UnknownCase(id))
}

/// Defaults for every free parameter of the family.
pub fn default_params(id: u32) -> Result<ParamBinding, LadderError> {
    let info = case_info(id)?;
    Ok(ParamBinding::from_pairs(info.defaults.iter().copied())?)
}

/// Merge user overrides into the defaults, rejecting names the family
/// does not know.
fn merged_params(info: &CaseInfo, overrides: &ParamBinding) -> Result<ParamBinding, LadderError> {
    let mut out = ParamBinding::from_pairs(info.defaults.iter().copied())?;
    for (name, value) in overrides.iter() {
        if !out.contains(name) {
            return Err(LadderError::UnknownParam {
                case: info.id,
                name: name.to_string(),
            });
        }
        out.set(name, value)?;
    }
    Ok(out)
}

/// Instantiate family `id` with `params` (missing names take defaults).
pub fn build_case(id: u32, params: &ParamBinding) -> Result<LadderSystem, LadderError> {
    let info = case_info(id)?;
    let values = merged_params(info, params)?;
    let get = |name: &str| values.get(name).unwrap_or(0.0);

    if let Some((name, v)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(LadderError::Constraint(format!(
            "{name} = {v} is not finite"
        )));
    }
    match id {
        3 | 4 => {
            let rel = get("c1") + get("alpha") * get("c2");
            if rel.abs() > 1e-12 {
                return Err(LadderError::Constraint(format!(
                    "case {id} requires c1 + alpha*c2 = 0, got {rel}"
                )));
            }
            let (s, n) = if id == 3 { ("c", "c") } else { ("k", "k") };
            if get(s) == 0.0 {
                return Err(LadderError::Degenerate(format!("{n} = 0")));
            }
            if get("a") == 0.0 && get("b") == 0.0 {
                return Err(LadderError::Degenerate("a = b = 0 makes Y vanish".into()));
            }
        }
        6 if get("c") == 0.0 => return Err(LadderError::Degenerate("c = 0".into())),
        _ => {}
    }
    let [beta, gamma, nu, tau] = (info.scalars)(&get);
    if beta == 0.0 {
        let rad = get("alpha").powi(2) + 2.0 * get("lambda");
        if rad < 0.0 {
            return Err(LadderError::ImaginaryGap(rad));
        }
    }
    let consts = Constants {
        alpha: get("alpha"),
        beta,
        gamma,
        lambda: get("lambda"),
        nu,
        tau,
        c1: get("c1"),
        c2: get("c2"),
        c3: get("c3"),
        c4: get("c4"),
    };
    let bind = |src: &str| -> Result<Expr, LadderError> { Ok(parse(src)?.bind(&values)) };
    let sys = LadderSystem::from_parts(
        CaseId::Catalog(info.id),
        values.clone(),
        bind(info.x)?,
        bind(info.y)?,
        bind(info.z)?,
        bind(info.q)?,
        bind(info.v)?,
        consts,
        info.normalization,
        (info.domain)(&get),
    )?;
    let report = check_constraints(&sys, 0);
    if !report.passed {
        return Err(LadderError::Constraint(format!(
            "constraint residuals e1..e5 = {:e}, {:e}, {:e}, {:e}, {:e}",
            report.e1, report.e2, report.e3, report.e4, report.e5
        )));
    }
    Ok(sys)
}

/// A random admissible parameter set for family `id`.
pub fn random_params<R: Rng>(id: u32, rng: &mut R) -> Result<ParamBinding, LadderError> {
    case_info(id)?;
    let mut b = ParamBinding::new();
    let alpha = rng.gen_range(-1.0..1.0);
    let c2 = rng.gen_range(-1.0..1.0);
    b.set("alpha", alpha)?;
    b.set("lambda", rng.gen_range(0.5..2.0))?;
    b.set("c2", c2)?;
    match id {
        3 | 4 => {
            b.set("c1", -alpha * c2)?;
            b.set("a", rng.gen_range(0.5..1.5))?;
            b.set("b", rng.gen_range(0.5..1.5))?;
            b.set(if id == 3 { "c" } else { "k" }, rng.gen_range(0.5..1.5))?;
            b.set(
                "c3",
                if id == 3 {
                    rng.gen_range(-2.0..-0.5)
                } else {
                    rng.gen_range(0.5..2.0)
                },
            )?;
        }
        _ => {
            b.set("c1", rng.gen_range(-1.0..1.0))?;
            b.set(
                "c3",
                match id {
                    1 => rng.gen_range(-1.0..1.0),
                    6 => rng.gen_range(0.5..2.0),
                    _ => rng.gen_range(0.0..2.0),
                },
            )?;
            if id == 6 {
                b.set("c", rng.gen_range(0.5..1.5))?;
            }
        }
    }
    Ok(b)
}

/// The family's closed form for `[S1, S2]` as an expression in ENERGY.
/// `printed` is the commonly quoted form; it differs from `corrected`
/// only for Case 6, where the quoted sign of the constant term is wrong.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedCommutator {
    pub corrected: Expr,
    pub printed: Expr,
}

pub fn closed_form_commutator(sys: &LadderSystem) -> Option<ClosedCommutator> {
    let CaseId::Catalog(id) = sys.case else {
        return None;
    };
    let info = case_info(u32::from(id)).ok()?;
    let mut b = sys.params.clone();
    let k = &sys.consts;
    b.set("omega", (k.alpha * k.alpha + 2.0 * k.lambda).sqrt())
        .ok()?;
    let corrected = parse(info.commutator).ok()?.bind(&b);
    let printed = match info.commutator_printed {
        Some(src) => parse(src).ok()?.bind(&b),
        None => corrected.clone(),
    };
    Some(ClosedCommutator { corrected, printed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ladder::{algebra_relations, Class};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_cover_common_names() {
        for info in &CASES {
            for name in ["alpha", "lambda", "c1", "c2", "c3", "c4"] {
                assert!(
                    info.defaults.iter().any(|(n, _)| *n == name),
                    "case {} lacks {name}",
                    info.id
                );
            }
        }
    }

    #[test]
    fn all_defaults_build() {
        for id in 1..=6 {
            let sys = build_case(id, &ParamBinding::new()).unwrap();
            assert!(algebra_relations(&sys, 0).passed, "case {id}");
        }
    }

    #[test]
    fn random_draws_build() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for id in 1..=6 {
            for _ in 0..3 {
                let p = random_params(id, &mut rng).unwrap();
                let sys = build_case(id, &p).unwrap_or_else(|e| panic!("case {id} {p:?}: {e}"));
                assert!(check_constraints(&sys, 1).max() < 1e-12, "case {id}");
            }
        }
    }

    #[test]
    fn case3_relation_enforced() {
        let p = ParamBinding::from_pairs([("c1", 1.0), ("c2", 1.0), ("alpha", 1.0)]).unwrap();
        assert!(matches!(build_case(3, &p), Err(LadderError::Constraint(_))));
    }

    #[test]
    fn case3_stated_example() {
        let p = ParamBinding::from_pairs([
            ("a", 1.0),
            ("b", 1.0),
            ("c", 1.0),
            ("alpha", 0.0),
            ("lambda", 1.0),
            ("c3", -1.0),
        ])
        .unwrap();
        let sys = build_case(3, &p).unwrap();
        assert_eq!(sys.consts.beta, -2.0);
        assert_eq!(sys.class, Class::PoschlTellerLike);
        let b = ParamBinding::new();
        // V = −1/(2 cosh x)² + 3/4
        let v0 = sys.v.eval(0.0, &b).unwrap();
        assert!((v0 - (-0.25 + 0.75)).abs() < 1e-15);
    }

    #[test]
    fn case1_stated_example() {
        let sys = build_case(1, &ParamBinding::new()).unwrap();
        let b = ParamBinding::new();
        assert!((sys.v.eval(3.0, &b).unwrap() - 4.5).abs() < 1e-15);
        assert_eq!(sys.consts.tau, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_case(7, &ParamBinding::new()),
            Err(LadderError::UnknownCase(7))
        ));
        let p = ParamBinding::from_pairs([("k", 1.0)]).unwrap();
        assert!(matches!(
            build_case(1, &p),
            Err(LadderError::UnknownParam { .. })
        ));
        let p = ParamBinding::from_pairs([("alpha", 0.0), ("lambda", -1.0)]).unwrap();
        assert!(matches!(
            build_case(1, &p),
            Err(LadderError::ImaginaryGap(_))
        ));
        let p = ParamBinding::from_pairs([("lambda", 0.0)]).unwrap();
        assert!(build_case(4, &p).is_err());
    }
}
