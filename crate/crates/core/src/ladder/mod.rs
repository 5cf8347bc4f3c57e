//! Constraint system, the six-family catalog and the derived shift
//! operators.
//!
//! A system is `H = X D² + V`, `P = Y D + Z` and a multiplication operator
//! `Q`, tied together by
//!
//! ```text
//! [H, P] = Q (βH + 1) + αP + γH
//! [H, Q] = 2λP + νQ + τ
//! ```
//!
//! After the tilde shift `Q̃ = Q − f`, `P̃ = P − g` the relations become
//! homogeneous, `[H, (Q̃, P̃)] = (Q̃, P̃) M(H)`, and the eigenvectors of `M`
//! give `S = Q̃ u₁ + P̃ u₂` with `[H, S] = S g(H)`. Functions of `H` always
//! sit to the right of the operators, so on an eigenstate they become
//! functions of the reserved `ENERGY` parameter.

mod catalog;
mod ground;
mod transform;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::diffop::{reduce_on_eigenstate, DiffOp, DiffOpError};
use crate::expr::{max_residual, relative_gap, Domain, Expr, ExprError, ParamBinding};

pub use catalog::{
    build_case, case_info, closed_form_commutator, default_params, random_params, CaseInfo,
    ClosedCommutator, CASES,
};
pub use ground::{annihilation_residual, ground_state, E0Candidate, GroundState};
pub use transform::transform_eigenproblem;

/// Tolerance used by [`check_constraints`] and [`algebra_relations`].
pub const CHECK_TOL: f64 = 1e-9;
/// Number of sample points for symbolic identity checks.
pub const CHECK_SAMPLES: usize = 50;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("unknown case {0} (expected 1..6)")]
    UnknownCase(u32),
    #[error("parameter `{name}` is not used by case {case}")]
    UnknownParam { case: u8, name: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("imaginary ladder gap: radicand {0} is negative")]
    ImaginaryGap(f64),
    #[error("degenerate system: {0}")]
    Degenerate(String),
    #[error("no normalizable ground state: {0}")]
    NoNormalizable(String),
    #[error("no closed-form ground state for custom systems")]
    NoClosedForm,
    #[error("T vanishes or changes sign near x = {0}")]
    TransformZero(f64),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    DiffOp(#[from] DiffOpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    Catalog(u8),
    Custom,
}

impl Serialize for CaseId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            CaseId::Catalog(n) => s.serialize_u8(*n),
            CaseId::Custom => s.serialize_str("custom"),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaseId::Catalog(n) => write!(f, "{n}"),
            CaseId::Custom => f.write_str("custom"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub nu: f64,
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Ground-state normalization.
    pub c4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Class {
    /// β = 0: constant gaps.
    HarmonicLike,
    /// β ≠ 0: energy-dependent gaps.
    PoschlTellerLike,
}

impl Class {
    pub fn of(beta: f64) -> Class {
        if beta.abs() > 1e-12 {
            Class::PoschlTellerLike
        } else {
            Class::HarmonicLike
        }
    }
}

/// How the eigenvectors of `M` are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `u = ((g − α)/2λ, 1)`
    UnitP,
    /// `u = (1, 2λ/(g − α))`
    UnitQ,
}

/// 2×2 matrix with entries `m0 + m1·H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoefMatrix {
    pub m: [[(f64, f64); 2]; 2],
}

impl CoefMatrix {
    /// `M(H) = [[ν, 1 + βH], [2λ, α]]`, acting as `[H, (Q̃, P̃)] = (Q̃, P̃) M`.
    pub fn from_constants(k: &Constants) -> Self {
        CoefMatrix {
            m: [
                [(k.nu, 0.0), (1.0, k.beta)],
                [(2.0 * k.lambda, 0.0), (k.alpha, 0.0)],
            ],
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Expr {
        let (m0, m1) = self.m[i][j];
        Expr::sum(vec![Expr::c(m0), Expr::scale(m1, Expr::energy())])
    }

    pub fn at(&self, energy: f64) -> [[f64; 2]; 2] {
        let v = |(a, b): (f64, f64)| a + b * energy;
        [
            [v(self.m[0][0]), v(self.m[0][1])],
            [v(self.m[1][0]), v(self.m[1][1])],
        ]
    }

    /// True when no entry depends on `H`.
    pub fn is_constant(&self) -> bool {
        self.m.iter().flatten().all(|&(_, m1)| m1 == 0.0)
    }

    /// `(trace/2, radicand)` as expressions in ENERGY, so the eigenvalues
    /// are `trace/2 ∓ sqrt(radicand)`.
    pub fn eigen_parts(&self) -> (Expr, Expr) {
        let half_trace = Expr::scale(0.5, self.entry(0, 0) + self.entry(1, 1));
        let det = Expr::sub(
            self.entry(0, 0) * self.entry(1, 1),
            self.entry(0, 1) * self.entry(1, 0),
        );
        let radicand = Expr::sub(Expr::pow(half_trace.clone(), Expr::c(2.0)), det);
        (half_trace, radicand)
    }

    /// Eigenvalues `(g1, g2)` with `g1 ≤ g2` at a given energy.
    pub fn eigenvalues(&self, energy: f64) -> Result<(f64, f64), LadderError> {
        let m = self.at(energy);
        let ht = 0.5 * (m[0][0] + m[1][1]);
        let rad = ht * ht - (m[0][0] * m[1][1] - m[0][1] * m[1][0]);
        if rad < 0.0 {
            return Err(LadderError::ImaginaryGap(rad));
        }
        Ok((ht - rad.sqrt(), ht + rad.sqrt()))
    }
}

/// Result of the tilde shift and the diagonalization of `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperators {
    /// `Q̃ = Q − f`
    pub f: Expr,
    /// `P̃ = P − g`
    pub g: Expr,
    /// Columns are the eigenvectors for `g1` and `g2`.
    pub u: [[Expr; 2]; 2],
    /// Lowering operator, `[H, S1] = S1 g1(H)`.
    pub s1: DiffOp,
    /// Raising operator, `[H, S2] = S2 g2(H)`.
    pub s2: DiffOp,
    pub g1: Expr,
    pub g2: Expr,
}

/// Where identities are sampled and where the grid oracle runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaturalDomain {
    pub check: Domain,
    pub grid: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct LadderSystem {
    pub case: CaseId,
    /// Numeric values of the family parameters (α, λ, c's, a, b, c, k).
    pub params: ParamBinding,
    pub x_coef: Expr,
    pub y: Expr,
    pub z: Expr,
    pub q: Expr,
    pub v: Expr,
    pub consts: Constants,
    pub h: DiffOp,
    pub p: DiffOp,
    pub q_op: DiffOp,
    pub m: CoefMatrix,
    pub shift: ShiftOperators,
    pub class: Class,
    pub normalization: Normalization,
    pub domain: NaturalDomain,
}

impl LadderSystem {
    /// Assemble a system from its coefficient functions and scalars. All
    /// expressions must be free of parameters other than ENERGY.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        case: CaseId,
        params: ParamBinding,
        x_coef: Expr,
        y: Expr,
        z: Expr,
        q: Expr,
        v: Expr,
        consts: Constants,
        normalization: Normalization,
        domain: NaturalDomain,
    ) -> Result<Self, LadderError> {
        let m = CoefMatrix::from_constants(&consts);
        let shift = shift_operators_for(&consts, &m, &y, &z, &q, normalization)?;
        Ok(LadderSystem {
            case,
            params,
            h: DiffOp::hamiltonian(x_coef.clone(), v.clone()),
            p: DiffOp::first_order(y.clone(), z.clone()),
            q_op: DiffOp::multiply(q.clone()),
            x_coef,
            y,
            z,
            q,
            v,
            class: Class::of(consts.beta),
            consts,
            m,
            shift,
            normalization,
            domain,
        })
    }

    pub fn binding(&self) -> ParamBinding {
        ParamBinding::new()
    }

    /// `g1(E)` and `g2(E)` evaluated numerically.
    pub fn gaps(&self, energy: f64) -> Result<(f64, f64), ExprError> {
        let b = ParamBinding::new().with_energy(energy);
        Ok((self.shift.g1.eval(0.0, &b)?, self.shift.g2.eval(0.0, &b)?))
    }

    /// Constant gap `g2` for harmonic-like systems.
    pub fn constant_gap(&self) -> Option<f64> {
        match self.class {
            Class::HarmonicLike => self.shift.g2.as_const(),
            Class::PoschlTellerLike => None,
        }
    }

    pub fn document(&self) -> LadderDocument {
        let gs = ground_state(self).ok();
        LadderDocument {
            case_id: self.case,
            class: self.class,
            params: self.params.clone(),
            constants: self.consts,
            x: self.x_coef.to_string(),
            y: self.y.to_string(),
            z: self.z.to_string(),
            q: self.q.to_string(),
            v: self.v.to_string(),
            psi0: gs
                .as_ref()
                .and_then(|g| g.preferred.map(|i| g.candidates[i].psi0.to_string())),
            e0_candidates: gs
                .as_ref()
                .map(|g| g.candidates.iter().map(|c| c.e0).collect())
                .unwrap_or_default(),
            h: self.h.to_string(),
            p: self.p.to_string(),
            q_op: self.q_op.to_string(),
            s1: self.shift.s1.to_string(),
            s2: self.shift.s2.to_string(),
            g1: self.shift.g1.to_string(),
            g2: self.shift.g2.to_string(),
            gap: self.constant_gap(),
            tilde_f: self.shift.f.to_string(),
            tilde_g: self.shift.g.to_string(),
            m: self.m,
            u: self
                .shift
                .u
                .iter()
                .map(|row| row.iter().map(|e| e.to_string()).collect())
                .collect(),
            normalization: self.normalization,
            domain: self.domain.clone(),
        }
    }
}

/// Serializable view of a [`LadderSystem`].
#[derive(Debug, Clone, Serialize)]
pub struct LadderDocument {
    pub case_id: CaseId,
    pub class: Class,
    pub params: ParamBinding,
    pub constants: Constants,
    #[serde(rename = "X")]
    pub x: String,
    #[serde(rename = "Y")]
    pub y: String,
    #[serde(rename = "Z")]
    pub z: String,
    #[serde(rename = "Q")]
    pub q: String,
    #[serde(rename = "V")]
    pub v: String,
    pub psi0: Option<String>,
    pub e0_candidates: Vec<f64>,
    #[serde(rename = "H")]
    pub h: String,
    #[serde(rename = "P")]
    pub p: String,
    #[serde(rename = "Q_op")]
    pub q_op: String,
    #[serde(rename = "S1")]
    pub s1: String,
    #[serde(rename = "S2")]
    pub s2: String,
    pub g1: String,
    pub g2: String,
    pub gap: Option<f64>,
    pub tilde_f: String,
    pub tilde_g: String,
    #[serde(rename = "M")]
    pub m: CoefMatrix,
    #[serde(rename = "U")]
    pub u: Vec<Vec<String>>,
    pub normalization: Normalization,
    pub domain: NaturalDomain,
}

fn shift_operators_for(
    k: &Constants,
    m: &CoefMatrix,
    y: &Expr,
    z: &Expr,
    q: &Expr,
    normalization: Normalization,
) -> Result<ShiftOperators, LadderError> {
    if k.lambda.abs() < 1e-12 {
        return Err(LadderError::Degenerate(
            "lambda = 0 makes Q constant".into(),
        ));
    }
    let e = Expr::energy();
    let (f, g) = if k.beta.abs() < 1e-12 {
        let denom = 2.0 * k.lambda - k.nu * k.alpha;
        if denom.abs() < 1e-12 {
            return Err(LadderError::Degenerate("2*lambda - nu*alpha = 0".into()));
        }
        // g = (νγH − τ)/(2λ − να), f = −αg − γH
        let g = Expr::scale(
            1.0 / denom,
            Expr::sum(vec![
                Expr::scale(k.nu * k.gamma, e.clone()),
                Expr::c(-k.tau),
            ]),
        );
        let f = Expr::neg(Expr::sum(vec![
            Expr::scale(k.alpha, g.clone()),
            Expr::scale(k.gamma, e.clone()),
        ]));
        (f, g)
    } else {
        let f = -k.gamma / k.beta;
        let g = (k.nu * k.gamma / k.beta - k.tau) / (2.0 * k.lambda);
        let mismatch = f + k.alpha * g;
        if mismatch.abs() > 1e-9 * (1.0 + f.abs() + (k.alpha * g).abs()) {
            return Err(LadderError::Constraint(format!(
                "tilde shift inconsistent: f + alpha*g = {mismatch:e} (needs c1 + alpha*c2 = 0)"
            )));
        }
        (Expr::c(f), Expr::c(g))
    };

    let (half_trace, radicand) = m.eigen_parts();
    if let Some(r) = radicand.as_const() {
        if r < 0.0 {
            return Err(LadderError::ImaginaryGap(r));
        }
        if r == 0.0 {
            return Err(LadderError::Degenerate(
                "coincident eigenvalues of M".into(),
            ));
        }
    }
    let root = Expr::sqrt(radicand);
    let g1 = Expr::sub(half_trace.clone(), root.clone());
    let g2 = Expr::sum(vec![half_trace, root]);

    let m10 = m.entry(1, 0);
    let m11 = m.entry(1, 1);
    let eigvec = |gi: &Expr| -> [Expr; 2] {
        let ratio = Expr::div(Expr::sub(gi.clone(), m11.clone()), m10.clone());
        match normalization {
            Normalization::UnitP => [ratio, Expr::one()],
            Normalization::UnitQ => [Expr::one(), Expr::pow(ratio, Expr::c(-1.0))],
        }
    };
    let [u11, u21] = eigvec(&g1);
    let [u12, u22] = eigvec(&g2);

    let q_tilde = Expr::sub(q.clone(), f.clone());
    let z_tilde = Expr::sub(z.clone(), g.clone());
    let make = |u1: &Expr, u2: &Expr| {
        DiffOp::from_terms([
            (1, u2.clone() * y.clone()),
            (
                0,
                Expr::sum(vec![
                    u1.clone() * q_tilde.clone(),
                    u2.clone() * z_tilde.clone(),
                ]),
            ),
        ])
    };
    Ok(ShiftOperators {
        s1: make(&u11, &u21),
        s2: make(&u12, &u22),
        f,
        g,
        u: [[u11, u12], [u21, u22]],
        g1,
        g2,
    })
}

/// Per-constraint maximum relative residuals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub e5: f64,
    pub tol: f64,
    pub passed: bool,
}

impl ConstraintReport {
    pub fn max(&self) -> f64 {
        [self.e1, self.e2, self.e3, self.e4, self.e5]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// The five constraint equations as `(lhs, rhs)` pairs.
pub fn constraint_sides(sys: &LadderSystem) -> [(Expr, Expr); 5] {
    let k = &sys.consts;
    let (x, y, z, q, v) = (&sys.x_coef, &sys.y, &sys.z, &sys.q, &sys.v);
    let e1 = (
        x.clone() * Expr::sum(vec![y.diff_n(2), Expr::scale(2.0, z.diff())]),
        Expr::scale(k.alpha, y.clone()),
    );
    let e2 = (
        Expr::sub(Expr::scale(2.0, x.clone() * y.diff()), x.diff() * y.clone()),
        Expr::sum(vec![Expr::scale(k.beta, q.clone()), Expr::c(k.gamma)]) * x.clone(),
    );
    let numerator = Expr::sum(vec![
        x.clone() * z.diff_n(2),
        Expr::scale(-k.gamma, v.clone()),
        Expr::scale(-k.alpha, z.clone()),
        Expr::neg(y.clone() * v.diff()),
    ]);
    let e3 = (
        q.clone(),
        Expr::div(
            numerator,
            Expr::sum(vec![Expr::one(), Expr::scale(k.beta, v.clone())]),
        ),
    );
    let e4 = (x.clone() * q.diff(), Expr::scale(k.lambda, y.clone()));
    let e5 = (
        Expr::sum(vec![
            Expr::scale(-2.0 * k.lambda, z.clone()),
            x.clone() * q.diff_n(2),
        ]),
        Expr::sum(vec![Expr::scale(k.nu, q.clone()), Expr::c(k.tau)]),
    );
    [e1, e2, e3, e4, e5]
}

/// Evaluate (e1)–(e5) at `CHECK_SAMPLES` points of the natural domain.
pub fn check_constraints(sys: &LadderSystem, seed: u64) -> ConstraintReport {
    let points = sys
        .domain
        .check
        .sample(CHECK_SAMPLES, seed)
        .unwrap_or_default();
    let binding = sys.binding();
    let res: Vec<f64> = constraint_sides(sys)
        .iter()
        .map(|(l, r)| {
            max_residual(l, r, &points, &binding)
                .map(|(m, _)| m)
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let passed = !points.is_empty() && res.iter().all(|&r| r < CHECK_TOL);
    ConstraintReport {
        e1: res[0],
        e2: res[1],
        e3: res[2],
        e4: res[3],
        e5: res[4],
        tol: CHECK_TOL,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgebraReport {
    /// `[H,P] − Q(βH+1) − αP − γH`, coefficient-wise.
    pub hp_residual: f64,
    /// `[H,Q] − 2λP − νQ − τ`, coefficient-wise.
    pub hq_residual: f64,
    /// Both sides of the `[H,P]` relation applied to random test functions.
    pub test_function_residual: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Largest coefficient-wise relative gap between two operators.
pub fn operator_residual(a: &DiffOp, b: &DiffOp, points: &[f64], binding: &ParamBinding) -> f64 {
    let top = a.order().unwrap_or(0).max(b.order().unwrap_or(0));
    (0..=top)
        .map(|k| {
            max_residual(&a.coeff(k), &b.coeff(k), points, binding)
                .map(|(m, _)| m)
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

/// Right-hand sides of the two closed relations.
pub fn relation_rhs(sys: &LadderSystem) -> (DiffOp, DiffOp) {
    let k = &sys.consts;
    let id = DiffOp::identity();
    let hp = sys
        .q_op
        .compose(&sys.h.scale(k.beta).add(&id))
        .add(&sys.p.scale(k.alpha))
        .add(&sys.h.scale(k.gamma));
    let hq = sys
        .p
        .scale(2.0 * k.lambda)
        .add(&sys.q_op.scale(k.nu))
        .add(&id.scale(k.tau));
    (hp, hq)
}

/// Random smooth test functions drawn from the expression grammar.
pub fn test_functions(domain: &Domain, n: usize, seed: u64) -> Vec<Expr> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let width = rng.gen_range(0.1..1.0);
            let center = rng.gen_range(domain.lo..=domain.hi);
            let slope = rng.gen_range(-1.0..1.0);
            let amp = rng.gen_range(-1.0..1.0);
            let freq = rng.gen_range(0.5..2.0);
            let gauss = Expr::exp(Expr::scale(
                -width,
                Expr::pow(Expr::sum(vec![Expr::x(), Expr::c(-center)]), Expr::c(2.0)),
            ));
            Expr::sum(vec![
                gauss * Expr::sum(vec![Expr::one(), Expr::scale(slope, Expr::x())]),
                Expr::scale(amp, Expr::sin(Expr::scale(freq, Expr::x()))),
            ])
        })
        .collect()
}

/// Verify `[H,P] = Q(βH+1) + αP + γH` and `[H,Q] = 2λP + νQ + τ`.
pub fn algebra_relations(sys: &LadderSystem, seed: u64) -> AlgebraReport {
    let points = sys
        .domain
        .check
        .sample(CHECK_SAMPLES, seed)
        .unwrap_or_default();
    let binding = sys.binding();
    let (rhs_hp, rhs_hq) = relation_rhs(sys);
    let hp_residual = operator_residual(&sys.h.commutator(&sys.p), &rhs_hp, &points, &binding);
    let hq_residual = operator_residual(&sys.h.commutator(&sys.q_op), &rhs_hq, &points, &binding);

    // H acts on the test function before Q multiplies, so the βQH term is
    // exercised as an honest composition rather than a coefficient identity.
    let k = &sys.consts;
    let mut tf = 0.0_f64;
    for phi in test_functions(&sys.domain.check, 20, seed ^ 0x9e37) {
        let apply =
            |op: &DiffOp, f: &Expr| op.apply_symbolic(f).unwrap_or_else(|_| Expr::c(f64::NAN));
        let h_phi = apply(&sys.h, &phi);
        let lhs = Expr::sub(apply(&sys.h, &apply(&sys.p, &phi)), apply(&sys.p, &h_phi));
        let rhs = Expr::sum(vec![
            sys.q.clone() * Expr::sum(vec![Expr::scale(k.beta, h_phi.clone()), phi.clone()]),
            Expr::scale(k.alpha, apply(&sys.p, &phi)),
            Expr::scale(k.gamma, h_phi),
        ]);
        let r = max_residual(&lhs, &rhs, &points[..20.min(points.len())], &binding)
            .map(|(m, _)| m)
            .unwrap_or(f64::INFINITY);
        tf = tf.max(r);
    }
    let passed = !points.is_empty()
        && hp_residual < CHECK_TOL
        && hq_residual < CHECK_TOL
        && tf < 1e-8
        && tf.is_finite();
    AlgebraReport {
        hp_residual,
        hq_residual,
        test_function_residual: tf,
        tol: CHECK_TOL,
        passed,
    }
}

/// `[S1, S2]` acting on an eigenstate of energy ENERGY, reduced to
/// `value·ψ + slope·ψ'`. For a genuine factorization `slope` vanishes and
/// `value` depends on ENERGY only.
#[derive(Debug, Clone, PartialEq)]
pub struct SCommutator {
    pub value: Expr,
    pub slope: Expr,
}

/// Operator ordering on eigenstates: `S1 S2 ψ_E = S1(E + g2(E)) S2(E) ψ_E`.
pub fn s_commutator(sys: &LadderSystem) -> SCommutator {
    let sh = &sys.shift;
    let e = Expr::energy();
    let raised = Expr::sum(vec![e.clone(), sh.g2.clone()]);
    let lowered = Expr::sum(vec![e.clone(), sh.g1.clone()]);
    let s1_after = sh.s1.substitute_energy(&raised);
    let s2_after = sh.s2.substitute_energy(&lowered);
    let op = s1_after.compose(&sh.s2).sub(&s2_after.compose(&sh.s1));
    let r = reduce_on_eigenstate(&op, &sys.x_coef, &sys.v, &e);
    SCommutator {
        value: r.value,
        slope: r.slope,
    }
}

/// Scalar `F(E)` with `S1 S2 ψ_E = F(E) ψ_E`, from the reduced product.
pub fn factorization(sys: &LadderSystem) -> SCommutator {
    let sh = &sys.shift;
    let e = Expr::energy();
    let raised = Expr::sum(vec![e.clone(), sh.g2.clone()]);
    let op = sh.s1.substitute_energy(&raised).compose(&sh.s2);
    let r = reduce_on_eigenstate(&op, &sys.x_coef, &sys.v, &e);
    SCommutator {
        value: r.value,
        slope: r.slope,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorSample {
    pub energy: f64,
    /// Engine value at the middle of the check domain.
    pub engine: f64,
    pub closed_form: Option<f64>,
    /// Largest relative gap to the closed form over the sample points.
    pub residual: f64,
    /// Largest `|slope| / (1 + |value|)`; zero for a scalar commutator.
    pub slope_residual: f64,
    pub printed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub samples: Vec<CommutatorSample>,
    pub tol: f64,
    pub passed: bool,
    /// Whether the literally printed closed form also matches; differs from
    /// `passed` only for families with a corrected closed form.
    pub printed_matches: Option<bool>,
}

/// Compare the engine's `[S1,S2]` with the family's closed form at the
/// given energies.
pub fn check_s_commutator(
    sys: &LadderSystem,
    energies: &[f64],
    tol: f64,
    seed: u64,
) -> CommutatorReport {
    let sc = s_commutator(sys);
    let closed = closed_form_commutator(sys);
    let points = sys.domain.check.sample(20, seed).unwrap_or_default();
    let mid = 0.5 * (sys.domain.check.lo + sys.domain.check.hi);
    let mut samples = Vec::new();
    let mut passed = !energies.is_empty();
    let mut printed_ok = true;
    for &energy in energies {
        let b = ParamBinding::new().with_energy(energy);
        let eval_closed = |e: &Expr| e.eval(mid, &b).ok();
        let closed_value = closed.as_ref().and_then(|c| eval_closed(&c.corrected));
        let printed_value = closed.as_ref().and_then(|c| eval_closed(&c.printed));
        let engine = sc.value.eval(mid, &b).unwrap_or(f64::NAN);
        let mut residual = 0.0_f64;
        let mut slope_residual = 0.0_f64;
        let mut printed_res = 0.0_f64;
        for &x in &points {
            let (Ok(a), Ok(s)) = (sc.value.eval(x, &b), sc.slope.eval(x, &b)) else {
                residual = f64::INFINITY;
                continue;
            };
            slope_residual = slope_residual.max(s.abs() / (1.0 + a.abs()));
            if let Some(cv) = closed_value {
                residual = residual.max(relative_gap(a, cv));
            }
            if let Some(pv) = printed_value {
                printed_res = printed_res.max(relative_gap(a, pv));
            }
        }
        if closed_value.is_none() {
            // custom systems: only require that the commutator is scalar
            // and constant in x
            let spread = points
                .iter()
                .filter_map(|&x| sc.value.eval(x, &b).ok())
                .map(|a| relative_gap(a, engine))
                .fold(0.0, f64::max);
            residual = spread;
        }
        passed &= residual < tol && slope_residual < tol;
        printed_ok &= printed_res < tol;
        samples.push(CommutatorSample {
            energy,
            engine,
            closed_form: closed_value,
            residual,
            slope_residual,
            printed_form: printed_value,
        });
    }
    CommutatorReport {
        samples,
        tol,
        passed,
        printed_matches: closed.map(|_| printed_ok),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ENERGY;

    fn case(id: u32, pairs: &[(&str, f64)]) -> LadderSystem {
        let b = ParamBinding::from_pairs(pairs.iter().copied()).unwrap();
        build_case(id, &b).unwrap()
    }

    #[test]
    fn harmonic_oscillator_constants() {
        let sys = case(1, &[("alpha", 0.0), ("lambda", 1.0)]);
        assert_eq!(sys.class, Class::HarmonicLike);
        assert_eq!(sys.consts.tau, 0.0);
        let gap = sys.constant_gap().unwrap();
        assert!((gap - 2f64.sqrt()).abs() < 1e-15);
        let (g1, g2) = sys.gaps(3.0).unwrap();
        assert!((g1 + 2f64.sqrt()).abs() < 1e-15 && (g2 - 2f64.sqrt()).abs() < 1e-15);
        assert!(check_constraints(&sys, 0).passed);
    }

    #[test]
    fn tilde_shift_matches_stated_case1_form() {
        let (alpha, lambda, c1, c2) = (0.7, 1.3, 0.4, -0.9);
        let sys = case(
            1,
            &[("alpha", alpha), ("lambda", lambda), ("c1", c1), ("c2", c2)],
        );
        let nu = -alpha;
        let w2 = alpha * alpha + 2.0 * lambda;
        let g = (2.0 * lambda * c2 + nu * c1) / w2;
        assert!((sys.shift.g.as_const().unwrap() - g).abs() < 1e-14);
        assert!((sys.shift.f.as_const().unwrap() + alpha * g).abs() < 1e-14);
    }

    #[test]
    fn shift_operators_satisfy_ladder_relation() {
        // [H, S] = S g(H): check on eigenstates via the reduced action of
        // H S − S(E) (E + g) evaluated as operators in ENERGY.
        for id in 1..=6 {
            let sys = case(id, &[]);
            let e = Expr::energy();
            for (s, g) in [
                (&sys.shift.s1, &sys.shift.g1),
                (&sys.shift.s2, &sys.shift.g2),
            ] {
                let shifted = Expr::sum(vec![e.clone(), g.clone()]);
                let lhs = sys.h.compose(s).sub(&s.scale_expr(&shifted));
                let r = reduce_on_eigenstate(&lhs, &sys.x_coef, &sys.v, &e);
                let energy = match id {
                    3 => -20.0,
                    _ => 3.3,
                };
                let b = ParamBinding::new().with_energy(energy);
                for x in sys.domain.check.sample(10, 1).unwrap() {
                    let scale = 1.0 + s.coeff(1).eval(x, &b).unwrap().abs();
                    assert!(
                        r.value.eval(x, &b).unwrap().abs() / scale < 1e-9,
                        "case {id}"
                    );
                    assert!(
                        r.slope.eval(x, &b).unwrap().abs() / scale < 1e-9,
                        "case {id}"
                    );
                }
            }
        }
    }

    #[test]
    fn perturbed_potential_fails_only_e3() {
        let mut sys = case(1, &[]);
        sys.v = Expr::sum(vec![sys.v.clone(), Expr::scale(0.01, Expr::x())]);
        let r = check_constraints(&sys, 0);
        assert!(r.e3 > CHECK_TOL);
        assert!(r.e1 < CHECK_TOL && r.e2 < CHECK_TOL && r.e4 < CHECK_TOL && r.e5 < CHECK_TOL);
    }

    #[test]
    fn perturbed_lambda_in_q_fails_e4() {
        let mut sys = case(1, &[("lambda", 1.0)]);
        // Q = −(λ+1)x + c1
        sys.q = Expr::sum(vec![sys.q.clone(), Expr::neg(Expr::x())]);
        let r = check_constraints(&sys, 0);
        assert!(r.e4 > CHECK_TOL);
    }

    #[test]
    fn zero_system_passes_algebra() {
        let consts = Constants {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            lambda: 0.0,
            nu: 0.0,
            tau: 0.0,
            c1: 0.0,
            c2: 0.0,
            c3: 0.0,
            c4: 1.0,
        };
        let sys = LadderSystem {
            case: CaseId::Custom,
            params: ParamBinding::new(),
            x_coef: Expr::c(-1.0),
            y: Expr::zero(),
            z: Expr::zero(),
            q: Expr::zero(),
            v: Expr::x(),
            consts,
            h: DiffOp::hamiltonian(Expr::c(-1.0), Expr::x()),
            p: DiffOp::zero(),
            q_op: DiffOp::zero(),
            m: CoefMatrix::from_constants(&consts),
            shift: case(1, &[]).shift,
            class: Class::HarmonicLike,
            normalization: Normalization::UnitP,
            domain: NaturalDomain {
                check: Domain::new(-1.0, 1.0),
                grid: (-1.0, 1.0),
            },
        };
        assert!(algebra_relations(&sys, 0).passed);
    }

    #[test]
    fn misdeclared_tau_breaks_hq() {
        let mut sys = case(1, &[("alpha", 0.5), ("c1", 1.0), ("c2", 0.3)]);
        assert!(sys.consts.tau != 0.0);
        sys.consts.tau = 0.0;
        let r = algebra_relations(&sys, 0);
        assert!(r.hq_residual > CHECK_TOL);
        assert!(!r.passed);
    }

    #[test]
    fn coef_matrix_eigenvalues() {
        let sys = case(3, &[]);
        let k = sys.consts;
        let energy = -10.0;
        let (g1, g2) = sys.m.eigenvalues(energy).unwrap();
        let c = 1.0;
        let r = ((k.alpha + c * c).powi(2) + 2.0 * k.lambda - 4.0 * c * c * energy).sqrt();
        assert!((g1 - (-c * c - r)).abs() < 1e-12);
        assert!((g2 - (-c * c + r)).abs() < 1e-12);
        let (e1, e2) = sys.gaps(energy).unwrap();
        assert!((e1 - g1).abs() < 1e-12 && (e2 - g2).abs() < 1e-12);
        assert!(!sys.m.is_constant());
    }

    #[test]
    fn classification() {
        for id in 1..=6 {
            let sys = case(id, &[]);
            let expected = if matches!(id, 3 | 4) {
                Class::PoschlTellerLike
            } else {
                Class::HarmonicLike
            };
            assert_eq!(sys.class, expected, "case {id}");
            assert_eq!(
                sys.shift.g2.contains_param(ENERGY),
                expected == Class::PoschlTellerLike
            );
        }
    }

    #[test]
    fn s_commutator_matches_closed_forms() {
        for id in 1..=6 {
            // c1 ≠ 0 separates the two Case 6 forms
            let sys = case(id, if id == 6 { &[("c1", 0.5)] } else { &[] });
            let e0 = ground_state(&sys).unwrap().preferred().unwrap().e0;
            let mut energies = vec![e0];
            for _ in 0..4 {
                let e = *energies.last().unwrap();
                energies.push(e + sys.gaps(e).unwrap().1);
            }
            let r = check_s_commutator(&sys, &energies, 1e-8, 0);
            assert!(r.passed, "case {id}: {r:?}");
            assert_eq!(r.printed_matches, Some(id != 6), "case {id}");
        }
    }

    #[test]
    fn document_serializes() {
        let sys = case(1, &[]);
        let json = serde_json::to_string(&sys.document()).unwrap();
        assert!(json.contains("\"case_id\":1"));
        assert!(json.contains("\"class\":\"harmonic-like\""));
    }
}
