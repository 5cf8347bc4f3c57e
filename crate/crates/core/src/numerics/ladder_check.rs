//! Grid-level checks of the ladder action against the eigensolver.

use serde::Serialize;

use super::{count_nodes, Method, NumericsError, SpectrumResult};
use crate::diffop::DiffOp;
use crate::expr::ParamBinding;
use crate::ladder::{annihilation_residual, factorization, ground_state, Class, LadderSystem};

/// Apply an ENERGY-free operator of order ≤ 2 to grid values. Derivatives
/// use fourth-order centered differences; beyond the Dirichlet ends the
/// state is continued as an odd function.
pub fn apply_on_grid(
    op: &DiffOp,
    x: &[f64],
    h: f64,
    psi: &[f64],
) -> Result<Vec<f64>, NumericsError> {
    if op.order().unwrap_or(0) > 2 || op.has_energy() {
        return Err(NumericsError::NotLadderForm(
            "grid application needs an ENERGY-free operator of order <= 2".into(),
        ));
    }
    let m = psi.len();
    // padded[j + 2] = ψ at interior index j; index 1 and m+2 are the
    // boundary zeros, 0 and m+3 their odd reflections
    let mut padded = vec![0.0; m + 4];
    padded[2..m + 2].copy_from_slice(psi);
    padded[0] = -psi.first().copied().unwrap_or(0.0);
    padded[m + 3] = -psi.last().copied().unwrap_or(0.0);
    let none = ParamBinding::new();
    let c0 = op.coeff(0);
    let c1 = op.coeff(1);
    let c2 = op.coeff(2);
    let mut out = Vec::with_capacity(m);
    for j in 0..m {
        let p = |k: isize| padded[(j as isize + 2 + k) as usize];
        let d1 = (p(-2) - 8.0 * p(-1) + 8.0 * p(1) - p(2)) / (12.0 * h);
        let d2 = (-p(-2) + 16.0 * p(-1) - 30.0 * p(0) + 16.0 * p(1) - p(2)) / (12.0 * h * h);
        let xj = x[j];
        let mut v = c0.eval(xj, &none)? * psi[j];
        if !c1.is_zero() {
            v += c1.eval(xj, &none)? * d1;
        }
        if !c2.is_zero() {
            v += c2.eval(xj, &none)? * d2;
        }
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderStep {
    pub n: usize,
    pub energy: f64,
    /// Weighted cosine similarity of `S2 ψ_n` and `ψ_{n+1}`.
    pub similarity: f64,
    pub predicted_gap: f64,
    pub grid_gap: f64,
    pub gap_error: f64,
    /// `‖S1 S2 ψ_n − F ψ_n‖ / ‖S1 S2 ψ_n‖` with `F` fitted on the grid.
    pub factorization_residual: f64,
    pub factor_grid: f64,
    pub factor_symbolic: f64,
    pub nodes: usize,
    pub nodes_next: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub steps: Vec<LadderStep>,
    pub min_similarity: f64,
    pub max_gap_error: f64,
    pub max_factorization_residual: f64,
    pub nodes_ok: bool,
}

/// Raise each grid state with `S2(E_n)` and compare with the next one.
pub fn verify_ladder(
    sys: &LadderSystem,
    spec: &SpectrumResult,
    n_max: usize,
) -> Result<LadderReport, NumericsError> {
    if spec.states.len() < n_max + 1 {
        return Err(NumericsError::TooManyLevels {
            k: n_max + 1,
            max: spec.states.len(),
        });
    }
    let factor = factorization(sys);
    let mid = 0.5 * (sys.domain.check.lo + sys.domain.check.hi);
    let norm = |v: &[f64]| spec.inner(v, v).sqrt();
    let mut steps = Vec::new();
    for n in 0..n_max {
        let energy = spec.energies[n];
        let psi = &spec.states[n];
        let next = &spec.states[n + 1];
        let (_, g2) = sys.gaps(energy)?;
        let raised = apply_on_grid(&sys.shift.s2.bind_energy(energy), &spec.x, spec.h, psi)?;
        let similarity = spec.inner(&raised, next).abs() / (norm(&raised) * norm(next));

        let back = apply_on_grid(
            &sys.shift.s1.bind_energy(energy + g2),
            &spec.x,
            spec.h,
            &raised,
        )?;
        let factor_grid = spec.inner(psi, &back) / spec.inner(psi, psi);
        let resid: Vec<f64> = back
            .iter()
            .zip(psi)
            .map(|(b, p)| b - factor_grid * p)
            .collect();
        let factorization_residual = norm(&resid) / norm(&back).max(f64::MIN_POSITIVE);
        let factor_symbolic = factor
            .value
            .eval(mid, &ParamBinding::new().with_energy(energy))
            .unwrap_or(f64::NAN);

        let grid_gap = spec.energies[n + 1] - energy;
        steps.push(LadderStep {
            n,
            energy,
            similarity,
            predicted_gap: g2,
            grid_gap,
            gap_error: (grid_gap - g2).abs(),
            factorization_residual,
            factor_grid,
            factor_symbolic,
            nodes: count_nodes(psi),
            nodes_next: count_nodes(next),
        });
    }
    Ok(LadderReport {
        min_similarity: steps.iter().map(|s| s.similarity).fold(1.0, f64::min),
        max_gap_error: steps.iter().map(|s| s.gap_error).fold(0.0, f64::max),
        max_factorization_residual: steps
            .iter()
            .map(|s| s.factorization_residual)
            .fold(0.0, f64::max),
        nodes_ok: steps.iter().all(|s| s.nodes_next == s.nodes + 1),
        steps,
    })
}

/// Iterate `E_{n+1} = E_n + g2(E_n)` from `e0`. Energy-dependent towers
/// stop when the radicand turns negative or when lowering the new level
/// no longer returns to the previous one (the raised state has left the
/// square-root branch, i.e. it is not a bound state).
pub fn spectrum_by_ladder(
    sys: &LadderSystem,
    e0: f64,
    n_max: usize,
) -> Result<SpectrumResult, NumericsError> {
    if sys.gaps(e0).is_err() {
        return Err(NumericsError::RadicandNegative(e0));
    }
    let mut energies = vec![e0];
    while energies.len() <= n_max {
        let e = *energies.last().unwrap();
        let Ok((_, g2)) = sys.gaps(e) else { break };
        let next = e + g2;
        if sys.class == Class::PoschlTellerLike {
            match sys.gaps(next) {
                Ok((g1, _)) if (next + g1 - e).abs() <= 1e-9 * (1.0 + e.abs()) => {}
                _ => break,
            }
        }
        energies.push(next);
    }
    Ok(SpectrumResult {
        method: Method::Ladder,
        energies,
        x: Vec::new(),
        h: 0.0,
        weight: Vec::new(),
        states: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateCheck {
    pub e0: f64,
    pub normalizable: bool,
    pub label: String,
    pub psi0: String,
    /// `S1 ψ0` residual; infinite when it could not be evaluated.
    pub annihilation: f64,
    pub grid_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundStateReport {
    pub equation: String,
    pub grid_e0: f64,
    pub candidates: Vec<CandidateCheck>,
    /// Index of the candidate closest to the grid ground energy.
    pub selected: usize,
    pub e0: f64,
    pub error: f64,
    /// Cosine similarity between the grid ground state and `ψ0` obtained
    /// by integrating `S1(E0) ψ = 0` on the grid.
    pub numeric_psi0_similarity: f64,
}

/// Resolve the closed-form root ambiguity with the grid ground energy.
pub fn ground_state_oracle(
    sys: &LadderSystem,
    spec: &SpectrumResult,
) -> Result<GroundStateReport, NumericsError> {
    let gs = ground_state(sys)
        .map_err(|e| NumericsError::NotLadderForm(format!("no ground state: {e}")))?;
    let grid_e0 = spec.energies[0];
    let candidates: Vec<CandidateCheck> = gs
        .candidates
        .iter()
        .map(|c| CandidateCheck {
            e0: c.e0,
            normalizable: c.normalizable,
            label: c.label.clone(),
            psi0: c.psi0.to_string(),
            annihilation: annihilation_residual(sys, c).unwrap_or(f64::INFINITY),
            grid_distance: (c.e0 - grid_e0).abs(),
        })
        .collect();
    let selected = candidates
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.grid_distance.total_cmp(&b.1.grid_distance))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let e0 = candidates[selected].e0;
    let numeric = numeric_ground_state(sys, e0, &spec.x, spec.h)?;
    let similarity = spec.inner(&numeric, &spec.states[0]).abs()
        / (spec.inner(&numeric, &numeric) * spec.inner(&spec.states[0], &spec.states[0])).sqrt();
    Ok(GroundStateReport {
        equation: gs.equation,
        grid_e0,
        error: (e0 - grid_e0).abs(),
        e0,
        selected,
        candidates,
        numeric_psi0_similarity: similarity,
    })
}

/// Solve `S1(E0) ψ = 0` as `ψ'/ψ = −s0/s1` by trapezoidal integration of
/// `ln ψ` from the middle of the grid.
pub fn numeric_ground_state(
    sys: &LadderSystem,
    e0: f64,
    x: &[f64],
    h: f64,
) -> Result<Vec<f64>, NumericsError> {
    let s1 = sys.shift.s1.bind_energy(e0);
    let none = ParamBinding::new();
    let rate: Vec<f64> = x
        .iter()
        .map(|&xi| Ok(-s1.coeff(0).eval(xi, &none)? / s1.coeff(1).eval(xi, &none)?))
        .collect::<Result<_, NumericsError>>()?;
    let m = x.len();
    let start = m / 2;
    let mut log = vec![0.0; m];
    for j in start + 1..m {
        log[j] = log[j - 1] + 0.5 * h * (rate[j] + rate[j - 1]);
    }
    for j in (0..start).rev() {
        log[j] = log[j + 1] - 0.5 * h * (rate[j] + rate[j + 1]);
    }
    let top = log.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(log.iter().map(|l| (l - top).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::ladder::build_case;
    use crate::numerics::{grid_spectrum, Grid, DEFAULT_POINTS};

    #[test]
    fn fourth_order_derivatives() {
        let n = 201;
        let h = 2.0 / (n + 1) as f64;
        let x: Vec<f64> = (1..=n).map(|i| -1.0 + i as f64 * h).collect();
        // vanishes at ±1 and is odd about both ends to third order
        let psi: Vec<f64> = x.iter().map(|v| (std::f64::consts::PI * v).sin()).collect();
        let op = DiffOp::from_terms([(1, parse("1").unwrap()), (2, parse("x").unwrap())]);
        let out = apply_on_grid(&op, &x, h, &psi).unwrap();
        let pi = std::f64::consts::PI;
        for (j, &xj) in x.iter().enumerate() {
            let exact = pi * (pi * xj).cos() - xj * pi * pi * (pi * xj).sin();
            assert!((out[j] - exact).abs() < 1e-5, "{xj}: {} vs {exact}", out[j]);
        }
        let with_energy = DiffOp::multiply(parse("ENERGY").unwrap());
        assert!(apply_on_grid(&with_energy, &x, h, &psi).is_err());
    }

    #[test]
    fn harmonic_ladder_on_grid() {
        let sys = build_case(1, &ParamBinding::new()).unwrap();
        let spec =
            grid_spectrum(&sys.h, &Grid::for_system(&sys, DEFAULT_POINTS).unwrap(), 6).unwrap();
        let r = verify_ladder(&sys, &spec, 5).unwrap();
        assert!(r.min_similarity > 1.0 - 1e-5, "{r:?}");
        assert!(r.max_gap_error < 1e-4);
        assert!(r.nodes_ok);
        for s in &r.steps {
            assert!(
                (s.factor_grid - s.factor_symbolic).abs() < 1e-5 * (1.0 + s.factor_symbolic.abs())
            );
        }
        assert!(matches!(
            verify_ladder(&sys, &spec, 6),
            Err(NumericsError::TooManyLevels { .. })
        ));
    }

    #[test]
    fn ladder_spectrum_stops_at_last_bound_state() {
        // s0 = 5.5: levels −(5.5 − n)² + 0.75 ... six of them
        let sys = build_case(3, &ParamBinding::new()).unwrap();
        let s = spectrum_by_ladder(&sys, -29.5, 20).unwrap();
        assert_eq!(s.energies.len(), 6, "{:?}", s.energies);
        let harmonic = build_case(1, &ParamBinding::new()).unwrap();
        let s = spectrum_by_ladder(&harmonic, 0.5f64.sqrt(), 4).unwrap();
        assert_eq!(s.energies.len(), 5);
        assert!((s.energies[4] - 4.5 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oracle_picks_normalizable_root() {
        for id in [1, 3, 4, 5, 6] {
            let sys = build_case(id, &ParamBinding::new()).unwrap();
            let spec =
                grid_spectrum(&sys.h, &Grid::for_system(&sys, DEFAULT_POINTS).unwrap(), 2).unwrap();
            let r = ground_state_oracle(&sys, &spec).unwrap();
            assert!(r.error < 1e-4, "case {id}: {r:?}");
            assert!(r.candidates[r.selected].normalizable, "case {id}");
            assert!(
                r.numeric_psi0_similarity > 1.0 - 1e-6,
                "case {id}: {}",
                r.numeric_psi0_similarity
            );
        }
    }
}
