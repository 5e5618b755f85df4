//! Run configurations. Every subcommand's flags map onto one of the
//! parameter structs below, so a command line and its `--save-config` file
//! describe the same run.

use clap::{Args, ValueEnum};
use num_complex::Complex64;
use resolvex::estimator::Mode;
use resolvex::kreiss::Contour;
use resolvex::matgen::Problem;
use resolvex::paramcurve::FamilySpec;
use resolvex::resolvent::SolveMode;
use resolvex::suites::Suite;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker-thread hint; `RESOLVEX_THREADS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Gen(GenParams),
    Estimate(EstimateParams),
    Verify(VerifyParams),
    Kreiss(KreissParams),
    CurveCheck(CurveCheckParams),
    CurveEstimate(CurveEstimateParams),
    SweepGrid(SweepGridParams),
    SweepRadial(SweepRadialParams),
    Cost(CostParams),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gen(_) => "gen",
            Command::Estimate(_) => "estimate",
            Command::Verify(_) => "verify",
            Command::Kreiss(_) => "kreiss",
            Command::CurveCheck(_) => "curve-check",
            Command::CurveEstimate(_) => "curve-estimate",
            Command::SweepGrid(_) => "sweep-grid",
            Command::SweepRadial(_) => "sweep-radial",
            Command::Cost(_) => "cost",
        }
    }

    pub fn default_format(&self) -> Format {
        match self {
            Command::Verify(_) | Command::SweepGrid(_) => Format::Csv,
            _ => Format::Json,
        }
    }

    pub fn supports_csv(&self) -> bool {
        self.default_format() == Format::Csv
    }
}

/// `;`-separated `[[re,im],d]` items, e.g. `[[1,0],1];[[-1,0],2]`. A single
/// JSON array of items is accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Blocks(pub Vec<(Complex64, usize)>);

impl FromStr for Blocks {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with("[[[") {
            return serde_json::from_str(s).map(Blocks).map_err(|e| format!("{e}; expected [[[re,im],d],...]"));
        }
        s.split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                serde_json::from_str::<(Complex64, usize)>(p.trim())
                    .map_err(|e| format!("bad block {p:?}: {e}; expected [[re,im],d]"))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Blocks)
    }
}

/// Comma-separated reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Reals(pub Vec<f64>);

impl FromStr for Reals {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad number {x:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Reals)
    }
}

/// `;`-separated complex coefficients `re,im` (or bare `re`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coefficients(pub Vec<Complex64>);

impl FromStr for Coefficients {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(';')
            .map(|item| {
                let parts = Reals::from_str(item)?.0;
                match parts.as_slice() {
                    [re] => Ok(Complex64::new(*re, 0.0)),
                    [re, im] => Ok(Complex64::new(*re, *im)),
                    _ => Err(format!("bad coefficient {item:?}; expected re or re,im")),
                }
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Coefficients)
    }
}

/// A single suite or `all`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SuiteChoice {
    All,
    One(Suite),
}

impl SuiteChoice {
    pub fn suites(self) -> Vec<Suite> {
        match self {
            SuiteChoice::All => Suite::ALL.to_vec(),
            SuiteChoice::One(s) => vec![s],
        }
    }
}

impl FromStr for SuiteChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(SuiteChoice::All);
        }
        s.parse::<Suite>().map(SuiteChoice::One).map_err(|e| e.to_string())
    }
}

impl TryFrom<String> for SuiteChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<SuiteChoice> for String {
    fn from(c: SuiteChoice) -> Self {
        c.to_string()
    }
}

impl fmt::Display for SuiteChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuiteChoice::All => f.write_str("all"),
            SuiteChoice::One(s) => f.write_str(s.name()),
        }
    }
}

/// Trial counts used when `--trials` is absent.
pub fn default_trials(s: Suite) -> usize {
    match s {
        Suite::QeueLemmas | Suite::QereLemmas => 50,
        Suite::Solver | Suite::Propagation => 100,
        Suite::Kreiss => 200,
    }
}

fn parse_problem(s: &str) -> Result<Problem, String> {
    match s {
        "qeue" => Ok(Problem::Qeue),
        "qere" => Ok(Problem::Qere),
        _ => Err(format!("unknown problem {s:?}; expected qeue or qere")),
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    match s {
        "feasible" => Ok(Mode::Feasible),
        "strict" | "strict-theorem" | "strict_theorem" => Ok(Mode::StrictTheorem),
        _ => Err(format!("unknown mode {s:?}; expected feasible or strict-theorem")),
    }
}

fn parse_solve_mode(s: &str) -> Result<SolveMode, String> {
    match s {
        "analytic" => Ok(SolveMode::Analytic),
        "direct" => Ok(SolveMode::Direct),
        _ => Err(format!("unknown solve mode {s:?}; expected analytic or direct")),
    }
}

fn parse_contour(s: &str) -> Result<Contour, String> {
    match s {
        "circle" => Ok(Contour::Circle),
        "line" => Ok(Contour::Line),
        _ => Err(format!("unknown contour {s:?}; expected circle or line")),
    }
}

fn parse_family(s: &str) -> Result<FamilySpec, String> {
    s.parse::<FamilySpec>().map_err(|e| e.to_string())
}

fn parse_domain(s: &str) -> Result<(f64, f64), String> {
    match Reals::from_str(s)?.0.as_slice() {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(format!("bad domain {s:?}; expected lo,hi")),
    }
}

fn default_eps_st() -> f64 {
    0.1
}

fn default_samples() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    /// Jordan blocks, `[[re,im],d];...`.
    #[arg(long)]
    pub blocks: Blocks,
    /// Target `cond(T)`.
    #[arg(long, default_value_t = 1.0)]
    pub cond: f64,
    /// Use `T = I` instead of a random similarity.
    #[arg(long)]
    #[serde(default)]
    pub identity: bool,
    /// Designated block indices, comma-separated; all blocks when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_curve: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct EstimateParams {
    #[arg(value_parser = parse_problem)]
    pub problem: Problem,
    /// Matrix file written by `gen` (or a bare Jordan spec).
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub eps_eig: f64,
    #[arg(long, default_value_t = 0.1)]
    #[serde(default = "default_eps_st")]
    pub eps_st: f64,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<u32>,
    #[arg(long, value_parser = parse_mode, default_value = "feasible")]
    #[serde(default)]
    pub mode: Mode,
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "default_samples")]
    pub samples: u64,
    /// Input coefficients `re,im;...`; equal weights when absent.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Coefficients>,
    #[arg(long, value_parser = parse_solve_mode, default_value = "analytic")]
    #[serde(default)]
    pub solve_mode: SolveMode,
    /// Perturb the joint state by `eps_st / 2` before sampling.
    #[arg(long)]
    #[serde(default)]
    pub perturb: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct VerifyParams {
    /// qeue-lemmas, qere-lemmas, solver, kreiss, propagation or all.
    #[arg(long)]
    pub suite: SuiteChoice,
    /// Trials per suite; 50/50/100/200/100 when absent.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct KreissParams {
    #[arg(long)]
    pub matrix: PathBuf,
    /// `circle` for `A`, `line` for `-iA`.
    #[arg(long, value_parser = parse_contour, default_value = "circle")]
    pub contour: Contour,
    #[arg(long)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CurveCheckParams {
    /// circle, segment(rho), ellipse(a,b) or figure-eight.
    #[arg(long, value_parser = parse_family)]
    pub family: FamilySpec,
    #[arg(long)]
    pub deltas: Reals,
    #[arg(long)]
    pub epsilons: Reals,
    #[arg(long, default_value_t = 64)]
    pub probes: usize,
    /// Probe range `lo,hi` in curve parameter.
    #[arg(long, value_parser = parse_domain)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CurveEstimateParams {
    #[arg(long, value_parser = parse_family)]
    pub family: FamilySpec,
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub eps_eig: f64,
    #[arg(long, default_value_t = 0.1)]
    #[serde(default = "default_eps_st")]
    pub eps_st: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub a: u32,
    #[arg(long, default_value_t = 1000)]
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Coefficients>,
    /// Window half-widths for the conformance check run before estimating.
    #[arg(long, default_value = "0.05,0.1,0.2")]
    pub epsilons: Reals,
    #[arg(long, default_value_t = 64)]
    pub probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SweepGridParams {
    #[arg(long, value_parser = parse_problem)]
    pub problem: Problem,
    /// Base spec; its `transform_cond` is replaced by each of `--conds`.
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub conds: Reals,
    #[arg(long)]
    pub deltas: Reals,
    #[arg(long)]
    pub eps_eigs: Reals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SweepRadialParams {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long)]
    pub r_min: f64,
    #[arg(long)]
    pub r_max: f64,
    #[arg(long)]
    pub k_delta: f64,
    #[arg(long)]
    pub eps_eig: f64,
    #[arg(long, default_value_t = 0.1)]
    #[serde(default = "default_eps_st")]
    pub eps_st: f64,
    #[arg(long)]
    pub delta: f64,
    #[arg(long)]
    pub a: u32,
    #[arg(long, default_value_t = 200)]
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub kappa_s: f64,
    /// Kreiss constant, sampled or from the Jordan bound.
    #[arg(long)]
    pub kreiss: f64,
    #[arg(long)]
    pub eps_eig: f64,
    #[arg(long)]
    pub eps_st: f64,
}

/// An example configuration for `command`, printed with config errors.
pub fn schema_example(command: &str) -> Option<RunConfig> {
    let m = || PathBuf::from("A.json");
    let command = match command {
        "gen" => Command::Gen(GenParams {
            blocks: Blocks(vec![(Complex64::new(1.0, 0.0), 1), (Complex64::new(-1.0, 0.0), 1)]),
            cond: 1.0,
            identity: false,
            on_curve: None,
        }),
        "estimate" => Command::Estimate(EstimateParams {
            problem: Problem::Qeue,
            matrix: m(),
            eps_eig: 0.1,
            eps_st: 0.1,
            delta: Some(0.001),
            a: Some(17),
            mode: Mode::Feasible,
            samples: 1000,
            betas: None,
            solve_mode: SolveMode::Analytic,
            perturb: false,
        }),
        "verify" => Command::Verify(VerifyParams {
            suite: SuiteChoice::One(Suite::QeueLemmas),
            trials: Some(50),
        }),
        "kreiss" => Command::Kreiss(KreissParams {
            matrix: m(),
            contour: Contour::Circle,
            delta: 0.1,
        }),
        "curve-check" => Command::CurveCheck(CurveCheckParams {
            family: FamilySpec::Circle,
            deltas: Reals(vec![0.01, 0.005]),
            epsilons: Reals(vec![0.05, 0.1]),
            probes: 64,
            domain: None,
        }),
        "curve-estimate" => Command::CurveEstimate(CurveEstimateParams {
            family: FamilySpec::Ellipse { a: 1.0, b: 0.6 },
            matrix: m(),
            eps_eig: 0.1,
            eps_st: 0.1,
            delta: 0.001,
            a: 14,
            samples: 1000,
            betas: None,
            epsilons: Reals(vec![0.05, 0.1, 0.2]),
            probes: 64,
        }),
        "sweep-grid" => Command::SweepGrid(SweepGridParams {
            problem: Problem::Qeue,
            matrix: m(),
            conds: Reals(vec![1.0, 10.0]),
            deltas: Reals(vec![0.01, 0.005]),
            eps_eigs: Reals(vec![0.1]),
        }),
        "sweep-radial" => Command::SweepRadial(SweepRadialParams {
            matrix: m(),
            r_min: 0.5,
            r_max: 0.8,
            k_delta: 0.05,
            eps_eig: 0.1,
            eps_st: 0.1,
            delta: 0.005,
            a: 14,
            samples: 200,
        }),
        "cost" => Command::Cost(CostParams {
            alpha: 1.0,
            kappa_s: 1.0,
            kreiss: 1.0,
            eps_eig: 0.1,
            eps_st: 0.1,
        }),
        _ => return None,
    };
    Some(RunConfig {
        seed: 1,
        threads: None,
        output: None,
        format: None,
        command,
    })
}

pub const COMMAND_NAMES: [&str; 9] = [
    "gen",
    "estimate",
    "verify",
    "kreiss",
    "curve-check",
    "curve-estimate",
    "sweep-grid",
    "sweep-radial",
    "cost",
];
