//! End-to-end estimation run producing an [`EstimationReport`].

use super::certificate::{certificate_from_report, Certificate};
use super::masses::{success_masses_unchecked, SuccessReport};
use super::readout::{readout_with_masses, ReadoutReport};
use super::{cost_score, CostScore, EstimationConfig, EstimatorError, EstimatorResult};
use crate::curves::discretize;
use crate::kreiss::{
    default_circle_samples, default_line_range, default_line_samples, jordan_kreiss_bound, kreiss_generated,
    Contour,
};
use crate::matgen::{validate_exclusion, GeneratedMatrix, Problem};
use crate::numkit::ComplexVector;
use crate::resolvent::{build_system, ResolventSystem, SolveMode};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Contour sample counts above this use the analytic Jordan bound instead.
pub const KREISS_SAMPLE_LIMIT: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub samples: u64,
    pub seed: u64,
    pub solve_mode: SolveMode,
    /// Seed for the `eps_st / 2` solver-error perturbation; none disables it.
    pub perturb_seed: Option<u64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            solve_mode: SolveMode::Analytic,
            perturb_seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KreissSource {
    Sampled,
    JordanBound,
    Supplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KreissSummary {
    pub value: f64,
    pub source: KreissSource,
    pub analytic_bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationReport {
    pub version: String,
    pub config: EstimationConfig,
    pub options: EstimateOptions,
    pub curve: String,
    pub grid_points: u64,
    pub prefactor: f64,
    pub alpha_m: f64,
    pub kreiss: KreissSummary,
    pub success: SuccessReport,
    pub certificate: Certificate,
    pub readout: Option<ReadoutReport>,
    pub cost: CostScore,
    /// `||perturbed - exact|| / ||exact||` of the joint state, when perturbed.
    pub perturbation: Option<f64>,
    #[serde(skip)]
    pub wall_time_secs: f64,
}

pub(crate) fn kreiss_summary(gm: &GeneratedMatrix, problem: Problem, delta: f64) -> EstimatorResult<KreissSummary> {
    let (contour, samples) = match problem {
        Problem::Qeue => (Contour::Circle, default_circle_samples(delta)),
        Problem::Qere => {
            let c = gm.matrix.scaled(Complex64::new(0.0, -1.0));
            (Contour::Line, default_line_samples(default_line_range(&c), delta))
        }
    };
    if samples <= KREISS_SAMPLE_LIMIT {
        let est = kreiss_generated(gm, contour, delta)?;
        return Ok(KreissSummary {
            value: est.value,
            source: KreissSource::Sampled,
            analytic_bound: est.analytic_bound,
        });
    }
    let bound = jordan_kreiss_bound(gm.kappa_bar_witness, gm.spec.max_block(), delta);
    Ok(KreissSummary {
        value: bound,
        source: KreissSource::JordanBound,
        analytic_bound: Some(bound),
    })
}

/// QEUE or QERE run: checks that the designated eigenvalues sit on the
/// curve and that the exclusion band is empty, then solves, measures,
/// certifies and samples.
pub fn estimate(
    gm: &GeneratedMatrix,
    psi: &ComplexVector,
    cfg: &EstimationConfig,
    opts: &EstimateOptions,
) -> EstimatorResult<EstimationReport> {
    for lambda in gm.designated_eigenvalues() {
        if !cfg.problem.on_curve(lambda) {
            return Err(EstimatorError::OffCurve(format!("{lambda}")));
        }
    }
    if !validate_exclusion(gm, cfg.problem, cfg.eps_eig) {
        return Err(EstimatorError::ExclusionViolated(format!("eps_eig = {}", cfg.eps_eig)));
    }
    let dc = discretize(&cfg.curve()?, cfg.a, cfg.delta)?;
    let sys = build_system(gm, &dc, opts.solve_mode)?;
    let kreiss = kreiss_summary(gm, cfg.problem, cfg.delta)?;
    run_system(&sys, psi, cfg, opts, kreiss)
}

/// Shared tail of every pipeline, including custom curve families.
pub fn run_system(
    sys: &ResolventSystem,
    psi: &ComplexVector,
    cfg: &EstimationConfig,
    opts: &EstimateOptions,
    kreiss: KreissSummary,
) -> EstimatorResult<EstimationReport> {
    let start = Instant::now();
    let gm = &sys.gm;
    let rs = crate::resolvent::resolvent_state(sys, psi)?;
    let success = success_masses_unchecked(&rs, cfg, gm)?;
    let certificate = certificate_from_report(&success, cfg, gm);
    let (sampled, perturbation) = match opts.perturb_seed {
        Some(seed) if rs.joint.is_some() => {
            let p = rs.perturbed(cfg.eps_st, seed)?;
            let exact = rs.joint.as_ref().map(|v| v.as_slice()).unwrap_or(&[]);
            let noisy = p.joint.as_ref().map(|v| v.as_slice()).unwrap_or(&[]);
            let diff: f64 = exact.iter().zip(noisy).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let rel = diff / rs.joint_norm_sqr().unwrap_or(1.0).sqrt();
            (p, Some(rel))
        }
        _ => (rs, None),
    };
    let readout = if opts.samples > 0 {
        Some(readout_with_masses(&sampled, cfg, gm, opts.samples, opts.seed, Some(&success))?)
    } else {
        None
    };
    let cost = cost_score(cfg, gm.alpha, kreiss.value, gm.kappa_s);
    Ok(EstimationReport {
        version: crate::VERSION.to_string(),
        config: cfg.clone(),
        options: opts.clone(),
        curve: sys.dcurve.curve.name().to_string(),
        grid_points: sys.dcurve.len(),
        prefactor: sys.prefactor,
        alpha_m: sys.alpha_m,
        kreiss,
        success,
        certificate,
        readout,
        cost,
        perturbation,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}
