//! The six subcommands. Each returns its document and exit code; nothing
//! here touches stdout directly.

use std::collections::BTreeMap;

use ladderlab_core::diffop::DiffOp;
use ladderlab_core::expr::{Expr, ParamBinding};
use ladderlab_core::ladder::{
    algebra_relations, annihilation_residual, build_case, check_constraints, check_s_commutator,
    ground_state, AlgebraReport, CaseId, CommutatorReport, ConstraintReport, LadderDocument,
    LadderSystem, CASES,
};
use ladderlab_core::numerics::{
    grid_spectrum, ground_state_oracle, spectrum_by_ladder, verify_ladder, wavefunction_csv, Grid,
    GroundStateReport, LadderReport, Sig17, SpectrumResult, DEFAULT_POINTS,
};
use ladderlab_core::search::{
    assemble, fit, recover_case_with, Ansatz, CatalogMatch, FitOptions, FitResult, SearchError,
};
use serde::Serialize;

use crate::config::{Command, Format, GridSpec, RunConfig};

/// Largest grid-vs-ladder energy discrepancy `spectrum` accepts.
const SPECTRUM_TOL: f64 = 1e-3;
/// Grid-vs-closed-form ground energy tolerance.
const E0_TOL: f64 = 1e-4;
/// Ladder-action tolerances on the grid.
const SIMILARITY_TOL: f64 = 1e-5;
const GAP_TOL: f64 = 1e-4;
const COMMUTATOR_TOL: f64 = 1e-8;

pub struct Outcome {
    pub output: Option<String>,
    pub message: Option<String>,
    pub code: u8,
}

impl Outcome {
    fn input_error(msg: impl std::fmt::Display) -> Self {
        Outcome {
            output: None,
            message: Some(format!("error: {msg}")),
            code: 1,
        }
    }

    fn json<T: Serialize>(doc: &T, code: u8) -> Self {
        let mut text = serde_json::to_string_pretty(doc).expect("documents are plain data");
        text.push('\n');
        let message = match code {
            2 => Some("verification failed".to_string()),
            3 => Some("search did not converge".to_string()),
            _ => None,
        };
        Outcome {
            output: Some(text),
            message,
            code,
        }
    }
}

pub fn run(cfg: &RunConfig) -> Outcome {
    if cfg.format == Format::Csv && !matches!(cfg.command, Command::Spectrum | Command::Catalog) {
        return Outcome::input_error("--format csv is only available for `spectrum` and `catalog`");
    }
    let result = match cfg.command {
        Command::Catalog => catalog(cfg),
        Command::Derive => derive(cfg),
        Command::Spectrum => spectrum(cfg),
        Command::Verify => verify(cfg),
        Command::Search => search(cfg),
        Command::Groundstate => groundstate(cfg),
    };
    result.unwrap_or_else(Outcome::input_error)
}

fn system(cfg: &RunConfig) -> Result<LadderSystem, String> {
    let id = cfg.case.ok_or("--case is required")?;
    build_case(id, &cfg.params).map_err(|e| e.to_string())
}

fn grid_for(cfg: &RunConfig, sys: Option<&LadderSystem>) -> Result<Grid, String> {
    let g = match (cfg.grid, sys) {
        (Some(GridSpec { a, b, n }), _) => Grid::new(a, b, n),
        (None, Some(sys)) => Grid::for_system(sys, DEFAULT_POINTS),
        (None, None) => Grid::new(0.0, std::f64::consts::PI, DEFAULT_POINTS),
    };
    g.map_err(|e| e.to_string())
}

fn sig(values: &[f64]) -> Vec<Sig17> {
    values.iter().copied().map(Sig17).collect()
}

#[derive(Serialize)]
struct CatalogEntry {
    id: u8,
    name: &'static str,
    #[serde(rename = "X")]
    x: &'static str,
    #[serde(rename = "Y")]
    y: &'static str,
    #[serde(rename = "Z")]
    z: &'static str,
    #[serde(rename = "Q")]
    q: &'static str,
    #[serde(rename = "V")]
    v: &'static str,
    defaults: BTreeMap<&'static str, f64>,
    class: String,
}

fn catalog(cfg: &RunConfig) -> Result<Outcome, String> {
    let mut entries = Vec::new();
    for info in &CASES {
        let sys =
            build_case(u32::from(info.id), &ParamBinding::new()).map_err(|e| e.to_string())?;
        let class = serde_json::to_value(sys.class)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        entries.push(CatalogEntry {
            id: info.id,
            name: info.name,
            x: info.x,
            y: info.y,
            z: info.z,
            q: info.q,
            v: info.v,
            defaults: info.defaults.iter().copied().collect(),
            class,
        });
    }
    if cfg.format == Format::Csv {
        let mut text = String::from("id,name,X,Y,class\n");
        for e in &entries {
            text.push_str(&format!(
                "{},{},\"{}\",\"{}\",{}\n",
                e.id, e.name, e.x, e.y, e.class
            ));
        }
        return Ok(Outcome {
            output: Some(text),
            message: None,
            code: 0,
        });
    }
    Ok(Outcome::json(&entries, 0))
}

#[derive(Serialize)]
struct DeriveDoc {
    system: LadderDocument,
    constraints: ConstraintReport,
    algebra: AlgebraReport,
    passed: bool,
}

fn derive(cfg: &RunConfig) -> Result<Outcome, String> {
    let sys = system(cfg)?;
    let constraints = check_constraints(&sys, cfg.seed);
    let algebra = algebra_relations(&sys, cfg.seed);
    let passed = constraints.passed && algebra.passed;
    let doc = DeriveDoc {
        system: sys.document(),
        constraints,
        algebra,
        passed,
    };
    Ok(Outcome::json(&doc, if passed { 0 } else { 2 }))
}

#[derive(Serialize)]
struct GridDoc {
    a: f64,
    b: f64,
    n: usize,
}

impl From<&Grid> for GridDoc {
    fn from(g: &Grid) -> Self {
        GridDoc {
            a: g.a,
            b: g.b,
            n: g.n,
        }
    }
}

#[derive(Serialize)]
struct SpectrumDoc {
    case: CaseId,
    grid: GridDoc,
    grid_energies: Vec<Sig17>,
    /// `E_{n+1} = E_n + g2(E_n)` from the closed-form ground energy.
    ladder_energies: Option<Vec<Sig17>>,
    max_discrepancy: Option<Sig17>,
    tol: f64,
    passed: bool,
}

/// Ladder tower from the oracle-selected closed-form `E0`, falling back
/// to the grid `E0` when no closed form applies.
fn ladder_tower(
    sys: &LadderSystem,
    spec: &SpectrumResult,
    levels: usize,
) -> Result<SpectrumResult, String> {
    let e0 = ground_state_oracle(sys, spec)
        .map(|r| r.e0)
        .unwrap_or(spec.energies[0]);
    spectrum_by_ladder(sys, e0, levels.saturating_sub(1)).map_err(|e| e.to_string())
}

fn spectrum(cfg: &RunConfig) -> Result<Outcome, String> {
    let (case, op, sys) = if cfg.case.is_none() && !cfg.custom.is_empty() {
        for (name, _) in &cfg.custom {
            if name != "X" && name != "V" {
                return Err(format!("spectrum takes --custom X=.. and V=.., not {name}"));
            }
        }
        let x = cfg.custom("X").cloned().unwrap_or_else(|| Expr::c(-1.0));
        let v = cfg.custom("V").cloned().unwrap_or_else(Expr::zero);
        let op = DiffOp::hamiltonian(x.bind(&cfg.params), v.bind(&cfg.params));
        (CaseId::Custom, op, None)
    } else {
        let sys = system(cfg)?;
        (sys.case, sys.h.clone(), Some(sys))
    };
    let grid = grid_for(cfg, sys.as_ref())?;
    let spec = grid_spectrum(&op, &grid, cfg.levels).map_err(|e| e.to_string())?;

    let mut ladder = None;
    let mut discrepancy = None;
    if let Some(sys) = &sys {
        let tower = ladder_tower(sys, &spec, cfg.levels)?;
        let worst = spec
            .energies
            .iter()
            .zip(&tower.energies)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ladder = Some(tower.energies);
        discrepancy = Some(worst);
    }
    let passed = discrepancy.is_none_or(|d| d <= SPECTRUM_TOL);
    let code = if passed { 0 } else { 2 };
    if cfg.format == Format::Csv {
        return Ok(Outcome {
            output: Some(wavefunction_csv(&spec.x, &spec.states)),
            message: (!passed).then(|| "verification failed".to_string()),
            code,
        });
    }
    let doc = SpectrumDoc {
        case,
        grid: GridDoc::from(&grid),
        grid_energies: sig(&spec.energies),
        ladder_energies: ladder.as_deref().map(sig),
        max_discrepancy: discrepancy.map(Sig17),
        tol: SPECTRUM_TOL,
        passed,
    };
    Ok(Outcome::json(&doc, code))
}

#[derive(Serialize)]
struct Checks {
    constraints: bool,
    algebra: bool,
    commutator: bool,
    ground_state: bool,
    ladder_action: bool,
}

#[derive(Serialize)]
struct VerifyDoc {
    case: CaseId,
    params: ParamBinding,
    constraints: ConstraintReport,
    algebra: AlgebraReport,
    commutator: CommutatorReport,
    ground_state: Result<GroundStateReport, String>,
    ladder: Result<LadderReport, String>,
    checks: Checks,
    passed: bool,
}

fn ground_ok(r: &GroundStateReport, sys: &LadderSystem) -> bool {
    let gs = ground_state(sys).ok();
    let annihilated = gs
        .as_ref()
        .and_then(|g| g.candidates.get(r.selected))
        .and_then(|c| annihilation_residual(sys, c).ok())
        .is_some_and(|a| a < 1e-9);
    r.error < E0_TOL && annihilated
}

fn verify(cfg: &RunConfig) -> Result<Outcome, String> {
    let sys = system(cfg)?;
    let grid = grid_for(cfg, Some(&sys))?;
    let levels = cfg.levels.max(2);
    let spec = grid_spectrum(&sys.h, &grid, levels).map_err(|e| e.to_string())?;

    let constraints = check_constraints(&sys, cfg.seed);
    let algebra = algebra_relations(&sys, cfg.seed);
    let sample = &spec.energies[..spec.energies.len().min(5)];
    let commutator = check_s_commutator(&sys, sample, COMMUTATOR_TOL, cfg.seed);
    let gs = ground_state_oracle(&sys, &spec).map_err(|e| e.to_string());
    // only levels the ladder itself reaches are bound states worth comparing
    let reach = ladder_tower(&sys, &spec, levels).map_or(1, |t| t.energies.len());
    let steps = reach.min(spec.energies.len()).saturating_sub(1);
    let ladder = verify_ladder(&sys, &spec, steps).map_err(|e| e.to_string());

    let checks = Checks {
        constraints: constraints.passed,
        algebra: algebra.passed,
        commutator: commutator.passed,
        ground_state: gs.as_ref().is_ok_and(|r| ground_ok(r, &sys)),
        ladder_action: ladder.as_ref().is_ok_and(|r| {
            r.min_similarity > 1.0 - SIMILARITY_TOL && r.max_gap_error < GAP_TOL && r.nodes_ok
        }),
    };
    let passed = checks.constraints
        && checks.algebra
        && checks.commutator
        && checks.ground_state
        && checks.ladder_action;
    let doc = VerifyDoc {
        case: sys.case,
        params: sys.params.clone(),
        constraints,
        algebra,
        commutator,
        ground_state: gs,
        ladder,
        checks,
        passed,
    };
    Ok(Outcome::json(&doc, if passed { 0 } else { 2 }))
}

#[derive(Serialize)]
struct GroundDoc {
    case: CaseId,
    ground_state: GroundStateReport,
    tol: f64,
    passed: bool,
}

fn groundstate(cfg: &RunConfig) -> Result<Outcome, String> {
    let sys = system(cfg)?;
    let grid = grid_for(cfg, Some(&sys))?;
    let spec = grid_spectrum(&sys.h, &grid, 1).map_err(|e| e.to_string())?;
    let report = ground_state_oracle(&sys, &spec).map_err(|e| e.to_string())?;
    let passed = ground_ok(&report, &sys);
    let doc = GroundDoc {
        case: sys.case,
        ground_state: report,
        tol: E0_TOL,
        passed,
    };
    Ok(Outcome::json(&doc, if passed { 0 } else { 2 }))
}

#[derive(Serialize)]
struct SearchDoc {
    fit: FitResult,
    catalog: Option<CatalogMatch>,
    system: Option<LadderDocument>,
    constraints: Option<ConstraintReport>,
    algebra: Option<AlgebraReport>,
    passed: bool,
}

fn search(cfg: &RunConfig) -> Result<Outcome, String> {
    let opts = FitOptions {
        seed: cfg.seed,
        ..FitOptions::default()
    };
    if let Some(path) = &cfg.ansatz {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let ansatz = Ansatz::from_json(&text).map_err(|e| e.to_string())?;
        let result = fit(&ansatz, None, &opts).map_err(|e| e.to_string())?;
        if !result.converged {
            let doc = SearchDoc {
                fit: result,
                catalog: None,
                system: None,
                constraints: None,
                algebra: None,
                passed: false,
            };
            return Ok(Outcome::json(&doc, 3));
        }
        let sys = assemble(&ansatz, &result).map_err(|e| e.to_string())?;
        return Ok(verified_search(result, None, &sys, cfg.seed));
    }
    let (Some(x), Some(y)) = (cfg.custom("X"), cfg.custom("Y")) else {
        return Err("search needs --ansatz FILE or --custom X=.. --custom Y=..".into());
    };
    match recover_case_with(x, y, &cfg.params, cfg.seed) {
        Ok(r) => Ok(verified_search(r.fit, r.catalog, &r.system, cfg.seed)),
        Err(SearchError::NotFound) => Ok(Outcome {
            output: None,
            message: Some("no solvable family found for this (X, Y)".into()),
            code: 3,
        }),
        Err(e) => Err(e.to_string()),
    }
}

fn verified_search(
    fit: FitResult,
    catalog: Option<CatalogMatch>,
    sys: &LadderSystem,
    seed: u64,
) -> Outcome {
    let constraints = check_constraints(sys, seed);
    let algebra = algebra_relations(sys, seed);
    let passed = constraints.passed && algebra.passed;
    let doc = SearchDoc {
        fit,
        catalog,
        system: Some(sys.document()),
        constraints: Some(constraints),
        algebra: Some(algebra),
        passed,
    };
    Outcome::json(&doc, if passed { 0 } else { 2 })
}
