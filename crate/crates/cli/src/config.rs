//! Command-line flags and the resolved run configuration.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use ladderlab_core::expr::{parse, Expr, ParamBinding};

#[derive(Debug, Parser)]
#[command(
    name = "ladderlab",
    version,
    about = "Shift operators for exactly solvable 1-D Hamiltonians"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Catalog family, 1..6.
    #[arg(long, global = true)]
    pub case: Option<u32>,

    /// Parameter override `name=value`; repeatable.
    #[arg(long = "set", value_name = "NAME=VALUE", global = true)]
    pub set: Vec<String>,

    /// Custom coefficient `name=expr` (X, V for spectra; X, Y for search).
    #[arg(long = "custom", value_name = "NAME=EXPR", global = true)]
    pub custom: Vec<String>,

    /// Grid `a,b,n`; defaults to the family's natural grid with 4001 points.
    #[arg(long, value_name = "A,B,N", global = true)]
    pub grid: Option<String>,

    /// Number of levels to compute.
    #[arg(long, default_value_t = 6, global = true)]
    pub levels: usize,

    /// Seed for every random choice (sampling points, fit restarts).
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    pub format: Format,

    /// Ansatz JSON file for `search`.
    #[arg(long, global = true)]
    pub ansatz: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// List the six families.
    Catalog,
    /// Build one family and report its operators and checks.
    Derive,
    /// Grid and ladder spectra.
    Spectrum,
    /// Run every symbolic and numeric check on one family.
    Verify,
    /// Fit an ansatz file, or recover a family from `--custom X=.. --custom Y=..`.
    Search,
    /// Closed-form ground state confirmed by the grid oracle.
    Groundstate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

/// Everything a command needs. Defaults: no case, no overrides, natural
/// grid, 6 levels, seed 0 (or `LADDERLAB_SEED`), stdout, JSON.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub case: Option<u32>,
    pub params: ParamBinding,
    pub custom: Vec<(String, Expr)>,
    pub grid: Option<GridSpec>,
    pub levels: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub ansatz: Option<PathBuf>,
}

impl RunConfig {
    /// `env_seed` is the value of `LADDERLAB_SEED`, which wins over `--seed`.
    pub fn from_cli(cli: Cli, env_seed: Option<String>) -> Result<Self, String> {
        let mut params = ParamBinding::new();
        for item in &cli.set {
            let (name, value) = split_pair(item, "--set")?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("--set {item}: `{value}` is not a number"))?;
            params
                .insert(name.trim(), v)
                .map_err(|e| format!("--set {item}: {e}"))?;
        }
        let mut custom = Vec::new();
        for item in &cli.custom {
            let (name, src) = split_pair(item, "--custom")?;
            let name = name.trim().to_string();
            if custom.iter().any(|(n, _)| *n == name) {
                return Err(format!("--custom {name} given twice"));
            }
            let e = parse(src).map_err(|e| format!("--custom {item}: {e}"))?;
            custom.push((name, e));
        }
        let grid = cli.grid.as_deref().map(parse_grid).transpose()?;
        if cli.levels == 0 {
            return Err("--levels must be at least 1".into());
        }
        let seed = match env_seed {
            Some(s) => s
                .trim()
                .parse()
                .map_err(|_| format!("LADDERLAB_SEED=`{s}` is not an unsigned integer"))?,
            None => cli.seed,
        };
        Ok(RunConfig {
            command: cli.command,
            case: cli.case,
            params,
            custom,
            grid,
            levels: cli.levels,
            seed,
            out: cli.out,
            format: cli.format,
            ansatz: cli.ansatz,
        })
    }

    pub fn custom(&self, name: &str) -> Option<&Expr> {
        self.custom.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

fn split_pair<'a>(item: &'a str, flag: &str) -> Result<(&'a str, &'a str), String> {
    item.split_once('=')
        .filter(|(n, _)| !n.trim().is_empty())
        .ok_or_else(|| format!("{flag} expects NAME=VALUE, got `{item}`"))
}

fn parse_grid(s: &str) -> Result<GridSpec, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || format!("--grid expects a,b,n, got `{s}`");
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if !(a < b) || n < 3 {
        return Err(format!("--grid {s}: need a < b and n >= 3"));
    }
    Ok(GridSpec { a, b, n })
}
