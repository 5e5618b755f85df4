//! Randomized verification suites. Each produces one [`CheckRow`] per
//! measured inequality: the measured value, the bound it must respect and
//! the slack left over.

use crate::curves::{discretize, Curve};
use crate::estimator::{
    component_masses, normalized_error, propagation_bounds, resolve_parameters, ComponentMass, EstimatorError,
    LemmaBounds, Mode, ParameterRequest, Relation,
};
use crate::kreiss::{jordan_kreiss_bound, kreiss_circle, kreiss_generated, Contour, KreissError};
use crate::matgen::{generate, jordan_block, JordanSpec, MatgenError, Problem};
use crate::numkit::{ComplexVector, NumError};
use crate::resolvent::{build_system, curve_prefactor, resolvent_state, ResolventError, SolveMode};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Agreement required between the direct and analytic solve paths.
pub const SOLVER_REL_TOL: f64 = 1e-8;
/// Relative slack on the sampled-versus-Jordan Kreiss comparison.
pub const KREISS_REL_SLACK: f64 = 1e-6;
/// Circle Kreiss value of `J(0, 2)` at `delta = 0.5`, from the largest
/// singular value of `[[1/z, 0], [1/z^2, 1/z]]` with `|z| = 3/2`.
pub const NILPOTENT_KREISS: f64 = 0.46248;
/// Relative allowance for bounds that are attained with equality (a single
/// eigenvector makes both propagation bounds exact).
const ROUNDING: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("unknown suite {0:?}; expected one of qeue-lemmas, qere-lemmas, solver, kreiss, propagation, all")]
    UnknownSuite(String),
    #[error("joint state too large to materialize")]
    JointTooLarge,
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Matgen(#[from] MatgenError),
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error(transparent)]
    Kreiss(#[from] KreissError),
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type SuiteResult<T> = Result<T, SuiteError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    QeueLemmas,
    QereLemmas,
    Solver,
    Kreiss,
    Propagation,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::QeueLemmas,
        Suite::QereLemmas,
        Suite::Solver,
        Suite::Kreiss,
        Suite::Propagation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::QeueLemmas => "qeue-lemmas",
            Suite::QereLemmas => "qere-lemmas",
            Suite::Solver => "solver",
            Suite::Kreiss => "kreiss",
            Suite::Propagation => "propagation",
        }
    }

    pub fn run(self, trials: usize, seed: u64) -> SuiteResult<SuiteReport> {
        let rows = match self {
            Suite::QeueLemmas => lemma_suite(Problem::Qeue, trials, seed)?,
            Suite::QereLemmas => lemma_suite(Problem::Qere, trials, seed)?,
            Suite::Solver => solver_suite(trials, seed)?,
            Suite::Kreiss => kreiss_suite(trials, seed)?,
            Suite::Propagation => propagation_suite(trials, seed)?,
        };
        Ok(SuiteReport::new(self, trials, seed, rows))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = SuiteError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SuiteError::UnknownSuite(s.to_string()))
    }
}

/// One measured inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub suite: String,
    pub trial: usize,
    pub case: String,
    pub quantity: String,
    pub measured: f64,
    pub bound: f64,
    /// `le`: measured <= bound; `ge`: measured >= bound.
    pub relation: Relation,
    /// Distance to the bound in the passing direction; negative on failure.
    pub slack: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn new(suite: impl fmt::Display, trial: usize, case: String, quantity: &str, measured: f64, relation: Relation, bound: f64) -> Self {
        let slack = match relation {
            Relation::Le => bound - measured,
            Relation::Ge => measured - bound,
        };
        Self {
            suite: suite.to_string(),
            trial,
            case,
            quantity: quantity.to_string(),
            measured,
            bound,
            relation,
            slack,
            pass: slack >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub checks: usize,
    pub violations: usize,
    pub rows: Vec<CheckRow>,
}

impl SuiteReport {
    fn new(suite: Suite, trials: usize, seed: u64, rows: Vec<CheckRow>) -> Self {
        Self {
            suite,
            trials,
            seed,
            checks: rows.len(),
            violations: rows.iter().filter(|r| !r.pass).count(),
            rows,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn gaussian_c(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| gaussian_c(rng)).collect()
}

/// Random Jordan spec with `1..=3` blocks on the problem's curve (listed
/// first) and up to three blocks well away from it; dimension at most
/// `max_dim`, blocks at most 3, `cond(T)` log-uniform in `[1, max_cond]`.
pub fn random_spec(rng: &mut ChaCha8Rng, problem: Problem, max_dim: usize, max_cond: f64, seed: u64) -> JordanSpec {
    let on = rng.random_range(1..=3usize);
    let off = rng.random_range(0..=3usize);
    let mut blocks = Vec::new();
    let mut dim = 0;
    for k in 0..on + off {
        let d = rng.random_range(1..=3usize).min(max_dim - dim);
        if d == 0 {
            break;
        }
        let lambda = match (problem, k < on) {
            (Problem::Qeue, true) => Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI)),
            (Problem::Qeue, false) => Complex64::from_polar(rng.random_range(0.0..0.9), rng.random_range(0.0..2.0 * PI)),
            (Problem::Qere, true) => Complex64::new(rng.random_range(-1.0..1.0), 0.0),
            (Problem::Qere, false) => Complex64::new(rng.random_range(-1.0..1.0), -rng.random_range(0.05..1.0)),
        };
        blocks.push((lambda, d));
        dim += d;
    }
    let on_count = on.min(blocks.len());
    let cond = max_cond.powf(rng.random::<f64>());
    JordanSpec::new(blocks, cond, seed).with_on_curve((0..on_count).collect())
}

/// `(delta, eps_eig)` grid of the lemma suites.
pub fn lemma_cases() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for eps in [0.3, 0.1] {
        for div in [4.0, 10.0, 40.0] {
            out.push((eps / div, eps));
        }
    }
    out
}

fn mass_rows(suite: &str, trial: usize, case: &str, comps: &[ComponentMass], bounds: &LemmaBounds) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    let Some(first) = comps.first() else { return rows };
    let lo = |c: &ComponentMass| (c.a_sq - c.interval).max(0.0).sqrt();
    let hi = |c: &ComponentMass| (c.a_sq + c.interval).sqrt();
    for (l, c) in comps.iter().enumerate() {
        let case = format!("{case},l={l},path={:?}", c.path).to_lowercase();
        let ratio = (1.0 - lo(first) / hi(c)).abs().max((hi(first) / lo(c) - 1.0).abs());
        let b_hi = (c.b_sq + 2.0 * c.interval).sqrt();
        rows.push(CheckRow::new(suite, trial, case.clone(), "a_lower", lo(c), Relation::Ge, bounds.a_min));
        rows.push(CheckRow::new(suite, trial, case.clone(), "a_upper", hi(c), Relation::Le, bounds.a_max));
        rows.push(CheckRow::new(suite, trial, case.clone(), "ratio", ratio, Relation::Le, bounds.ratio_max));
        rows.push(CheckRow::new(suite, trial, case.clone(), "b", b_hi, Relation::Le, bounds.b_max));
        if c.interval == 0.0 {
            if let (Some(w), Some(f)) = (c.window_integral, c.full_integral) {
                rows.push(CheckRow::new(suite, trial, case.clone(), "disc_window", (c.a_sq - w).abs(), Relation::Le, bounds.disc));
                rows.push(CheckRow::new(suite, trial, case.clone(), "disc_full", (c.full_sq - f).abs(), Relation::Le, bounds.disc));
            }
        }
    }
    rows
}

fn lemma_trial(problem: Problem, trial: usize, seed: u64) -> SuiteResult<Vec<CheckRow>> {
    let suite = match problem {
        Problem::Qeue => Suite::QeueLemmas,
        Problem::Qere => Suite::QereLemmas,
    };
    let mut rng = trial_rng(seed, trial);
    let spec = random_spec(&mut rng, problem, 16, 50.0, seed.wrapping_add(trial as u64));
    let gm = generate(&spec)?;
    let eigen: Vec<(usize, Complex64)> = gm.designated.iter().map(|&k| (k, gm.eigenvalue(k))).collect();
    let mut rows = Vec::new();
    for (delta, eps) in lemma_cases() {
        let cfg = resolve_parameters(&ParameterRequest {
            problem,
            eps_eig: eps,
            eps_st: 0.1,
            kappa_s: gm.kappa_s,
            alpha_a: gm.alpha,
            mode: Mode::Feasible,
            delta: Some(delta),
            a: None,
        })?;
        let dc = discretize(&cfg.curve()?, cfg.a, delta).map_err(EstimatorError::from)?;
        let prefactor = curve_prefactor(&dc).expect("built-in curve");
        let comps = component_masses(&dc, prefactor, &eigen, eps)?;
        let case = match cfg.rho {
            Some(rho) => format!("eps={eps},delta={delta},a={},rho={rho}", cfg.a),
            None => format!("eps={eps},delta={delta},a={}", cfg.a),
        };
        rows.extend(mass_rows(suite.name(), trial, &case, &comps, &LemmaBounds::new(delta, eps)));
    }
    Ok(rows)
}

/// Failure-probability lemma and discretization bounds on random matrices,
/// over [`lemma_cases`] with the smallest admissible grid.
pub fn lemma_suite(problem: Problem, trials: usize, seed: u64) -> SuiteResult<Vec<CheckRow>> {
    let per: Vec<Vec<CheckRow>> = (0..trials)
        .into_par_iter()
        .map(|t| lemma_trial(problem, t, seed))
        .collect::<SuiteResult<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Lemma rows over a `(transform_cond, delta, eps_eig)` grid for one base
/// spec, at the smallest admissible `a`; one trial per condition number.
/// Pairs with `delta > eps_eig / 4` are skipped.
pub fn mass_sweep(
    problem: Problem,
    base: &JordanSpec,
    conds: &[f64],
    deltas: &[f64],
    eps_eigs: &[f64],
) -> SuiteResult<Vec<CheckRow>> {
    let mut rows = Vec::new();
    for (trial, &cond) in conds.iter().enumerate() {
        let spec = JordanSpec {
            transform_cond: cond,
            ..base.clone()
        };
        let gm = generate(&spec)?.designate_for(problem)?;
        let eigen: Vec<(usize, Complex64)> = gm.designated.iter().map(|&k| (k, gm.eigenvalue(k))).collect();
        for &eps in eps_eigs {
            for &delta in deltas.iter().filter(|&&d| d <= eps / 4.0) {
                let cfg = resolve_parameters(&ParameterRequest {
                    problem,
                    eps_eig: eps,
                    eps_st: 0.1,
                    kappa_s: gm.kappa_s,
                    alpha_a: gm.alpha,
                    mode: Mode::Feasible,
                    delta: Some(delta),
                    a: None,
                })?;
                let dc = discretize(&cfg.curve()?, cfg.a, delta).map_err(EstimatorError::from)?;
                let prefactor = curve_prefactor(&dc).expect("built-in curve");
                let comps = component_masses(&dc, prefactor, &eigen, eps)?;
                let case = format!("cond={cond},kappa_s={:.6},eps={eps},delta={delta},a={}", gm.kappa_s, cfg.a);
                rows.extend(mass_rows("sweep", trial, &case, &comps, &LemmaBounds::new(delta, eps)));
            }
        }
    }
    Ok(rows)
}

/// Joint resolvent states from direct block solves against the analytic
/// Jordan resolvent, for random systems with `dim <= 16` and `a <= 14` and a
/// random `psi` in the span of the designated eigenvectors.
pub fn solver_suite(trials: usize, seed: u64) -> SuiteResult<Vec<CheckRow>> {
    let per: Vec<CheckRow> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let problem = if rng.random::<bool>() { Problem::Qeue } else { Problem::Qere };
            let spec = random_spec(&mut rng, problem, 16, 50.0, seed.wrapping_add(trial as u64));
            let gm = generate(&spec)?;
            let a = rng.random_range(4..=14u32);
            let delta = 10f64.powf(rng.random_range(-3.0..-1.0));
            let curve = match problem {
                Problem::Qeue => Curve::UnitCircle,
                Problem::Qere => Curve::real_segment(gm.alpha + 0.1).map_err(EstimatorError::from)?,
            };
            let dc = discretize(&curve, a, delta).map_err(EstimatorError::from)?;
            let direct = build_system(&gm, &dc, SolveMode::Direct)?;
            let analytic = build_system(&gm, &dc, SolveMode::Analytic)?;
            let mut psi = ComplexVector::zeros(gm.dim());
            for s in &gm.eigvec_columns {
                psi.axpy(gaussian_c(&mut rng), s);
            }
            let x = resolvent_state(&direct, &psi)?.joint.ok_or(SuiteError::JointTooLarge)?;
            let y = resolvent_state(&analytic, &psi)?.joint.ok_or(SuiteError::JointTooLarge)?;
            let (x, y) = (ComplexVector(x), ComplexVector(y));
            let rel = x.distance(&y) / y.norm();
            let case = format!(
                "{problem:?},dim={},d={},cond={:.2},a={a},delta={delta:.3e}",
                gm.dim(),
                gm.spec.max_block(),
                gm.spec.transform_cond
            )
            .to_lowercase();
            Ok(CheckRow::new(Suite::Solver, trial, case, "rel_diff", rel, Relation::Le, SOLVER_REL_TOL))
        })
        .collect::<SuiteResult<_>>()?;
    Ok(per)
}

/// Sampled circle Kreiss values against the Jordan bound on random
/// matrices with spectra in the closed unit disk; every fourth trial is a
/// normal matrix, checked against `delta / dist`. A final row checks the
/// nilpotent `J(0, 2)` value at `delta = 0.5`.
pub fn kreiss_suite(trials: usize, seed: u64) -> SuiteResult<Vec<CheckRow>> {
    let per: Vec<Vec<CheckRow>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let normal = trial % 4 == 3;
            let n = rng.random_range(1..=4usize);
            let blocks: Vec<(Complex64, usize)> = (0..n)
                .map(|k| {
                    let r = if k == 0 { 1.0 } else { rng.random_range(0.0..1.0) };
                    let d = if normal { 1 } else { rng.random_range(1..=2usize) };
                    (Complex64::from_polar(r, rng.random_range(0.0..2.0 * PI)), d)
                })
                .collect();
            let mut spec = JordanSpec::new(blocks, 50f64.powf(rng.random::<f64>()), seed.wrapping_add(trial as u64));
            if normal {
                spec = spec.with_identity_transform();
            }
            let gm = generate(&spec)?;
            let mut rows = Vec::new();
            for delta in [0.5, 0.1, 0.02] {
                let est = kreiss_generated(&gm, Contour::Circle, delta)?;
                let bound = jordan_kreiss_bound(gm.kappa_bar_witness, gm.spec.max_block(), delta);
                let case = format!("dim={},d={},delta={delta},normal={normal}", gm.dim(), gm.spec.max_block());
                rows.push(CheckRow::new(
                    Suite::Kreiss,
                    trial,
                    case.clone(),
                    "sampled_vs_jordan_bound",
                    est.value,
                    Relation::Le,
                    bound * (1.0 + KREISS_REL_SLACK),
                ));
                if normal {
                    let max_r = gm.spec.blocks.iter().map(|b| b.0.norm()).fold(0.0, f64::max);
                    let exact = delta / (1.0 + delta - max_r);
                    rows.push(CheckRow::new(
                        Suite::Kreiss,
                        trial,
                        case,
                        "normal_rel_error",
                        (est.value - exact).abs() / exact,
                        Relation::Le,
                        1e-3,
                    ));
                }
            }
            Ok(rows)
        })
        .collect::<SuiteResult<_>>()?;
    let mut rows: Vec<CheckRow> = per.into_iter().flatten().collect();
    let est = kreiss_circle(&jordan_block(Complex64::new(0.0, 0.0), 2), 0.5, crate::kreiss::default_circle_samples(0.5))?;
    rows.push(CheckRow::new(
        Suite::Kreiss,
        trials,
        "nilpotent J(0,2),delta=0.5".into(),
        "abs_error",
        (est.value - NILPOTENT_KREISS).abs(),
        Relation::Le,
        1e-4,
    ));
    Ok(rows)
}

/// Propagation bounds for random eigenvector sets and ancilla vectors, and
/// the normalized-error bound for random perturbations.
pub fn propagation_suite(trials: usize, seed: u64) -> SuiteResult<Vec<CheckRow>> {
    let per: Vec<Vec<CheckRow>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            let m = rng.random_range(1..=4usize);
            let n = rng.random_range(m..=8usize);
            let columns: Vec<ComplexVector> = (0..m).map(|_| ComplexVector(gaussian_vec(&mut rng, n)).normalized()).collect();
            let betas = gaussian_vec(&mut rng, m);
            let len = 1usize << rng.random_range(1..=6u32);
            let chis: Vec<Vec<Complex64>> = (0..m)
                .map(|_| {
                    let scale = 10f64.powf(rng.random_range(-1.0..1.0));
                    gaussian_vec(&mut rng, len).into_iter().map(|z| z * scale).collect()
                })
                .collect();
            let check = propagation_bounds(&columns, &betas, &chis)?;
            let case = format!("m={m},n={n},ancilla={len},kappa={:.4}", check.kappa_s);
            let mut rows = vec![
                CheckRow::new(Suite::Propagation, trial, case.clone(), "propagation_lower", check.measured, Relation::Ge, check.lower * (1.0 - ROUNDING)),
                CheckRow::new(Suite::Propagation, trial, case, "propagation_upper", check.measured, Relation::Le, check.upper * (1.0 + ROUNDING)),
            ];
            let dim = rng.random_range(1..=16usize);
            let x = ComplexVector(gaussian_vec(&mut rng, dim));
            let eps = x.norm() * rng.random_range(0.001..0.5);
            let e = ComplexVector(gaussian_vec(&mut rng, dim)).normalized();
            let y = ComplexVector(x.0.iter().zip(&e.0).map(|(a, b)| a + b * (eps * rng.random::<f64>())).collect());
            let (measured, _) = normalized_error(&x, &y);
            rows.push(CheckRow::new(
                Suite::Propagation,
                trial,
                format!("dim={dim},eps={eps:.4e}"),
                "normalized_error",
                measured,
                Relation::Le,
                2.0 * eps / x.norm(),
            ));
            Ok(rows)
        })
        .collect::<SuiteResult<_>>()?;
    Ok(per.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("lemmas".parse::<Suite>().is_err());
    }

    #[test]
    fn random_specs_respect_limits() {
        for t in 0..50 {
            let mut rng = trial_rng(3, t);
            for problem in [Problem::Qeue, Problem::Qere] {
                let spec = random_spec(&mut rng, problem, 16, 50.0, 0);
                assert!(spec.dim() <= 16 && spec.max_block() <= 3);
                assert!(spec.transform_cond >= 1.0 && spec.transform_cond <= 50.0);
                for &k in spec.on_curve.as_ref().unwrap() {
                    assert!(problem.on_curve(spec.blocks[k].0));
                }
            }
        }
    }

    #[test]
    fn small_runs_pass() {
        for s in [Suite::Solver, Suite::Propagation] {
            let r = s.run(6, 1).unwrap();
            assert!(r.passed(), "{:?}", r.rows.iter().find(|r| !r.pass));
            assert_eq!(r, s.run(6, 1).unwrap());
        }
    }

    #[test]
    fn sweep_skips_wide_deltas() {
        let base = JordanSpec::new(vec![(Complex64::new(0.0, 1.0), 1), (Complex64::new(0.3, 0.0), 2)], 1.0, 4);
        let rows = mass_sweep(Problem::Qeue, &base, &[1.0, 5.0], &[0.01, 0.2], &[0.1]).unwrap();
        assert!(!rows.is_empty() && rows.iter().all(|r| r.pass && r.suite == "sweep"));
        assert!(rows.iter().all(|r| r.case.contains("delta=0.01")));
        assert_eq!(rows.iter().map(|r| r.trial).max(), Some(1));
    }

    #[test]
    fn slack_sign() {
        let r = CheckRow::new(Suite::Solver, 0, String::new(), "x", 2.0, Relation::Ge, 1.0);
        assert!(r.pass && r.slack == 1.0);
        let r = CheckRow::new(Suite::Solver, 0, String::new(), "x", 2.0, Relation::Le, 1.0);
        assert!(!r.pass && r.slack == -1.0);
    }
}
