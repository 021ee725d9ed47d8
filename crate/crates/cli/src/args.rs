//! Command-line flags and the `key=value` config file.
//!
//! A config file is spliced into the argument list ahead of the real flags,
//! so keys go through exactly the same parser and later flags win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "relu-minres", version, about, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one model problem and write samples, history and a report.
    Case(CaseArgs),
    /// Run a case over a list of mesh sizes and tabulate the errors.
    Study(StudyArgs),
    /// Fit a shallow 2D ReLU network to the vertical-advection residual.
    Demo2d(DemoArgs),
    /// Print the discrete operator constants for a configuration.
    Constants(ConstantsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Varpro,
    Joint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    pub fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MRule {
    #[value(name = "N")]
    N,
    #[value(name = "2N")]
    TwoN,
    #[value(name = "4N")]
    FourN,
    #[value(name = "fixed")]
    Fixed,
}

impl MRule {
    pub fn breakpoints(self, n: usize, fixed: usize) -> usize {
        match self {
            MRule::N => n,
            MRule::TwoN => 2 * n,
            MRule::FourN => 4 * n,
            MRule::Fixed => fixed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    #[arg(long = "case", value_enum, default_value = "case2")]
    pub case: CaseId,
    /// Advection speed; overrides the case value.
    #[arg(long = "beta")]
    pub beta: Option<f64>,
    /// Reaction coefficient; overrides the case value.
    #[arg(long = "gamma")]
    pub gamma: Option<f64>,
    /// `dirac:X`, `dirac:X:WIDTH`, `constant:V` or `piecewise:B1,B2:V0,V1,V2`.
    #[arg(long = "source")]
    pub source: Option<String>,
    #[arg(long = "u-in")]
    pub u_in: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Trial polynomial degree.
    #[arg(long = "p", default_value_t = 0)]
    pub p: usize,
    /// Relaxation parameter; default `1 / C_b^2` from the measured constants.
    #[arg(long = "rho")]
    pub rho: Option<f64>,
    #[arg(long = "eps", default_value_t = 1e-6)]
    pub eps: f64,
    #[arg(long = "max-iters", default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long = "mode", value_enum, default_value = "varpro")]
    pub mode: Mode,
    #[arg(long = "multistart", default_value_t = 1, value_parser = positive)]
    pub multistart: usize,
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
    /// Refinement factor of the fine test space used for constants and oracles.
    #[arg(long = "fine-r", default_value_t = 64, value_parser = positive)]
    pub fine_r: usize,
    /// Simplex restarts per inner solve.
    #[arg(long = "restarts", default_value_t = 0)]
    pub restarts: usize,
    /// Simplex evaluation budget per start; default 400 per parameter.
    #[arg(long = "max-evals")]
    pub max_evals: Option<usize>,
    /// Knots stay in `[a + margin (b - a), b]`.
    #[arg(long = "margin", default_value_t = 1e-3)]
    pub margin: f64,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long = "out", default_value = "out")]
    pub out: PathBuf,
    #[arg(long = "svg", value_enum, default_value = "on")]
    pub svg: Switch,
}

#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Number of mesh elements.
    #[arg(long = "N", default_value_t = 4, value_parser = positive)]
    pub n: usize,
    /// Number of ReLU breakpoints; default `2N`.
    #[arg(long = "M", value_parser = positive)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated increasing mesh sizes.
    #[arg(long = "N-list", default_value = "1,2,4,8,16", value_parser = parse_n_list)]
    pub n_list: NList,
    #[arg(long = "M-rule", value_enum, default_value = "2N")]
    pub m_rule: MRule,
    /// Breakpoint count for `--M-rule fixed`.
    #[arg(long = "M", default_value_t = 8, value_parser = positive)]
    pub m: usize,
    /// Record wall-clock seconds; off writes 0 so reruns are bit-identical.
    #[arg(long = "timing", value_enum, default_value = "off")]
    pub timing: Switch,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn at_least_two(s: &str) -> Result<usize, String> {
    match positive(s)? {
        1 => Err("must be at least 2".into()),
        v => Ok(v),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NList(pub Vec<usize>);

fn parse_n_list(s: &str) -> Result<NList, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad mesh size {t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    if v.is_empty() || v.contains(&0) {
        return Err("mesh sizes must be positive".into());
    }
    if v.windows(2).any(|w| w[0] >= w[1]) {
        return Err("mesh sizes must be strictly increasing".into());
    }
    Ok(NList(v))
}

#[derive(Debug, Clone, Args)]
pub struct DemoArgs {
    #[arg(long = "n-neurons", default_value_t = 8, value_parser = at_least_two)]
    pub neurons: usize,
    /// Collocation grid `NXxNY` or a single size for a square grid.
    #[arg(long = "grid", default_value = "32", value_parser = parse_grid)]
    pub grid: Grid,
    #[arg(long = "seed", default_value_t = 0)]
    pub seed: u64,
    /// Random parameter draws screened before the simplex search.
    #[arg(long = "draws", default_value_t = 200)]
    pub draws: usize,
    #[arg(long = "restarts", default_value_t = 2)]
    pub restarts: usize,
    /// Total simplex evaluation budget; default 400 per parameter.
    #[arg(long = "max-evals")]
    pub max_evals: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("bad grid size {t:?}: {e}"));
    let g = match s.split_once(['x', 'X']) {
        Some((a, b)) => Grid { nx: parse(a)?, ny: parse(b)? },
        None => {
            let n = parse(s)?;
            Grid { nx: n, ny: n }
        }
    };
    if g.nx < 8 || g.ny < 8 {
        return Err("collocation grid must be at least 8x8".into());
    }
    Ok(g)
}

#[derive(Debug, Clone, Args)]
pub struct ConstantsArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long = "N", default_value_t = 4, value_parser = positive)]
    pub n: usize,
    #[arg(long = "p", default_value_t = 0)]
    pub p: usize,
    #[arg(long = "rho")]
    pub rho: Option<f64>,
    #[arg(long = "fine-r", default_value_t = 64, value_parser = positive)]
    pub fine_r: usize,
    #[arg(long = "config")]
    pub config: Option<PathBuf>,
}

/// Reads `key=value` lines; blank lines and `#` comments are skipped.
pub fn read_config(path: &Path) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("{}:{}: expected key=value", path.display(), i + 1)));
        };
        let key = k.trim().trim_start_matches("--");
        if key == "config" {
            return Err(CliError::Usage(format!("{}:{}: config files cannot nest", path.display(), i + 1)));
        }
        out.push((key.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Inserts config-file entries as flags directly after the subcommand.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = config_path(&args) else { return Ok(args) };
    if args.len() < 2 || args[1].to_string_lossy().starts_with('-') {
        return Ok(args);
    }
    let mut out: Vec<OsString> = args[..2].to_vec();
    for (k, v) in read_config(&path)? {
        out.push(format!("--{k}").into());
        out.push(v.into());
    }
    out.extend(args[2..].iter().cloned());
    Ok(out)
}

pub fn parse_from(args: Vec<OsString>) -> Result<Cli, CliError> {
    let args = expand_config(args)?;
    Cli::try_parse_from(args).map_err(CliError::Clap)
}
