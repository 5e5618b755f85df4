//! Unimodular (QEUE) and real (QERE) eigenvalue estimation: parameter
//! selection, success masses, certificates, sampled readout and cost.

mod baseline;
mod certificate;
mod masses;
mod pipeline;
mod readout;

pub use baseline::{baseline_error_bound, baseline_expectation, perturbed_eigvec, BaselineResult};
pub use certificate::{
    certificate_from_report, normalized_error, propagation_bounds, Relation, state_error_certificate, CertCheck, Certificate, PropagationCheck,
};
pub use masses::{
    component_masses, component_window, exact_full_sum, success_masses, success_masses_unchecked, window_integrals, Aggregate,
    ComponentMass, LemmaBounds, MassPath, SuccessReport, DIRECT_MAX_POINTS, GRAM_MAX_POINTS, WINDOWED_MAX_POINTS,
};
pub(crate) use pipeline::kreiss_summary;
pub use pipeline::{estimate, run_system, KREISS_SAMPLE_LIMIT, EstimateOptions, EstimationReport, KreissSource, KreissSummary};
pub use readout::{readout, EigenReadout, ReadoutReport, Sample, READOUT_MAX_POINTS};

use crate::curves::{Curve, CurveError, MAX_GRID_EXPONENT};
use crate::kreiss::KreissError;
use crate::matgen::{MatgenError, Problem};
use crate::numkit::NumError;
use crate::resolvent::ResolventError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// `3 sqrt(2) pi + 6`, the circle grid constant.
pub const QEUE_GRID_CONSTANT: f64 = 3.0 * std::f64::consts::SQRT_2 * PI + 6.0;

/// Largest grid exponent for which per-point work is attempted.
pub const DIRECT_MAX_EXPONENT: u32 = 26;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("grid bound needs a = {required_a}, beyond the maximum of {max}")]
    InfeasibleGrid { required_a: u32, max: u32 },
    #[error("lemma hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("certificate failed: {0}")]
    CertificateFailed(String),
    #[error("eigenvalue {0} lies in the excluded band next to the curve")]
    ExclusionViolated(String),
    #[error("designated eigenvalue {0} is not on the curve")]
    OffCurve(String),
    #[error("{what} needs {points} grid points, above the limit of {limit}")]
    TooLarge { what: &'static str, points: u64, limit: u64 },
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error(transparent)]
    Matgen(#[from] MatgenError),
    #[error(transparent)]
    Curve(#[from] CurveError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Kreiss(#[from] KreissError),
}

pub type EstimatorResult<T> = Result<T, EstimatorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// `delta` from the theorem proof; typically forces closed-form masses.
    StrictTheorem,
    /// Any `delta <= eps_eig / 4`; lemma-level guarantees only.
    #[default]
    Feasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Auto,
    User,
}

/// Everything a run needs to know about `delta`, `a` and the accuracy targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub problem: Problem,
    pub eps_eig: f64,
    pub eps_st: f64,
    pub kappa_s: f64,
    pub alpha_a: f64,
    pub delta: f64,
    pub a: u32,
    pub mode: Mode,
    pub delta_source: Source,
    pub a_source: Source,
    /// Half-length of the real segment, `alpha_A + eps_eig`; QERE only.
    pub rho: Option<f64>,
    /// `min{eps_st eps_eig / (32 sqrt5 kappa^2), eps_st^2 eps_eig / (512 (1 + 1/pi) kappa^4)}`.
    pub strict_delta: f64,
    /// Lower bound on `2^a` from the failure-probability lemma.
    pub required_grid: f64,
    pub required_a: u32,
    pub grid_bound_met: bool,
    /// `a <= 26`: per-point simulation is possible.
    pub direct_feasible: bool,
    /// `delta / (eps_eig eps_st^2 / kappa^4)`; bounded by `1 / (512 (1 + 1/pi))` in strict mode.
    pub theta_ratio: f64,
}

/// Inputs to [`resolve_parameters`]; `delta` and `a` are chosen
/// automatically when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRequest {
    pub problem: Problem,
    pub eps_eig: f64,
    pub eps_st: f64,
    pub kappa_s: f64,
    pub alpha_a: f64,
    pub mode: Mode,
    pub delta: Option<f64>,
    pub a: Option<u32>,
}

pub fn strict_delta(eps_eig: f64, eps_st: f64, kappa_s: f64) -> f64 {
    let k2 = kappa_s * kappa_s;
    let first = eps_st * eps_eig / (32.0 * 5f64.sqrt() * k2);
    let second = eps_st * eps_st * eps_eig / (512.0 * (1.0 + 1.0 / PI) * k2 * k2);
    first.min(second)
}

/// Lower bound on `2^a`: `(3 sqrt2 pi + 6) eps / delta^3` on the circle,
/// `5 rho eps / (pi delta^3)` on the segment.
pub fn required_grid(problem: Problem, eps_eig: f64, delta: f64, rho: f64) -> f64 {
    let d3 = delta * delta * delta;
    match problem {
        Problem::Qeue => QEUE_GRID_CONSTANT * eps_eig / d3,
        Problem::Qere => 5.0 * rho * eps_eig / (PI * d3),
    }
}

/// Smallest `a >= 1` with `2^a >= required`; may exceed 63.
pub fn min_exponent(required: f64) -> u32 {
    if !(required > 2.0) {
        return 1;
    }
    let mut a = required.log2().ceil().max(1.0) as u32;
    while a < 1100 && (a as f64).exp2() < required {
        a += 1;
    }
    while a > 1 && ((a - 1) as f64).exp2() >= required {
        a -= 1;
    }
    a
}

pub fn select_parameters(
    problem: Problem,
    eps_eig: f64,
    eps_st: f64,
    kappa_s: f64,
    alpha_a: f64,
    mode: Mode,
) -> EstimatorResult<EstimationConfig> {
    resolve_parameters(&ParameterRequest {
        problem,
        eps_eig,
        eps_st,
        kappa_s,
        alpha_a,
        mode,
        delta: None,
        a: None,
    })
}

pub fn resolve_parameters(req: &ParameterRequest) -> EstimatorResult<EstimationConfig> {
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(EstimatorError::BadParameter(format!("{name} must be positive, got {v}")))
        }
    };
    positive("eps_eig", req.eps_eig)?;
    positive("eps_st", req.eps_st)?;
    positive("alpha_a", req.alpha_a)?;
    if req.eps_st >= 1.0 {
        return Err(EstimatorError::BadParameter(format!("eps_st must be below 1, got {}", req.eps_st)));
    }
    if !(req.kappa_s >= 1.0) {
        return Err(EstimatorError::BadParameter(format!("kappa_s must be >= 1, got {}", req.kappa_s)));
    }
    let strict = strict_delta(req.eps_eig, req.eps_st, req.kappa_s);
    let (delta, delta_source) = match req.delta {
        Some(d) => {
            positive("delta", d)?;
            let limit = match req.mode {
                Mode::StrictTheorem => strict,
                Mode::Feasible => req.eps_eig / 4.0,
            };
            if d > limit * (1.0 + 1e-12) {
                return Err(EstimatorError::BadParameter(format!(
                    "delta {d} exceeds the {:?} limit {limit}",
                    req.mode
                )));
            }
            (d, Source::User)
        }
        None => match req.mode {
            Mode::StrictTheorem => (strict, Source::Auto),
            Mode::Feasible => (req.eps_eig / 4.0, Source::Auto),
        },
    };
    let rho = match req.problem {
        Problem::Qeue => None,
        Problem::Qere => Some(req.alpha_a + req.eps_eig),
    };
    let required = required_grid(req.problem, req.eps_eig, delta, rho.unwrap_or(0.0));
    let required_a = min_exponent(required);
    let (a, a_source) = match req.a {
        Some(a) => {
            if a == 0 || a > MAX_GRID_EXPONENT {
                return Err(EstimatorError::BadParameter(format!("a must be in 1..={MAX_GRID_EXPONENT}, got {a}")));
            }
            (a, Source::User)
        }
        None => {
            if required_a > MAX_GRID_EXPONENT {
                return Err(EstimatorError::InfeasibleGrid {
                    required_a,
                    max: MAX_GRID_EXPONENT,
                });
            }
            (required_a, Source::Auto)
        }
    };
    let k4 = req.kappa_s.powi(4);
    Ok(EstimationConfig {
        problem: req.problem,
        eps_eig: req.eps_eig,
        eps_st: req.eps_st,
        kappa_s: req.kappa_s,
        alpha_a: req.alpha_a,
        delta,
        a,
        mode: req.mode,
        delta_source,
        a_source,
        rho,
        strict_delta: strict,
        required_grid: required,
        required_a,
        grid_bound_met: (a as f64).exp2() >= required,
        direct_feasible: a <= DIRECT_MAX_EXPONENT,
        theta_ratio: delta / (req.eps_eig * req.eps_st * req.eps_st / k4),
    })
}

impl EstimationConfig {
    pub fn curve(&self) -> EstimatorResult<Curve> {
        Ok(match self.problem {
            Problem::Qeue => Curve::UnitCircle,
            Problem::Qere => Curve::real_segment(self.rho.unwrap_or(self.alpha_a + self.eps_eig))?,
        })
    }

    /// Half-width of the success window in curve parameter:
    /// `eps_eig / 2pi` on the circle, `eps_eig / 2rho` on the segment.
    pub fn window_eps(&self) -> f64 {
        match self.problem {
            Problem::Qeue => self.eps_eig / (2.0 * PI),
            Problem::Qere => self.eps_eig / (2.0 * self.rho.unwrap_or(self.alpha_a + self.eps_eig)),
        }
    }

    /// The wider `eps_eig / rho` window named in the real-eigenvalue problem
    /// statement, reported alongside the lemma window.
    pub fn wide_window_eps(&self) -> Option<f64> {
        self.rho.map(|rho| self.eps_eig / rho)
    }

    pub fn hypotheses_met(&self) -> bool {
        self.delta <= self.eps_eig / 4.0 && self.grid_bound_met
    }

    pub fn hypothesis_violation(&self) -> Option<String> {
        if self.delta > self.eps_eig / 4.0 {
            Some(format!("delta {} > eps_eig / 4 = {}", self.delta, self.eps_eig / 4.0))
        } else if !self.grid_bound_met {
            Some(format!(
                "2^{} < required grid size {:.6e} (a >= {})",
                self.a, self.required_grid, self.required_a
            ))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostScore {
    /// `alpha kappa^4 K / (eps_eig eps_st^2) ln(1 / eps_st)`; a scaling
    /// product with no hidden constant, not a gate count.
    pub score: f64,
    pub kreiss_value: f64,
    /// Set when `eps_st` is so close to 1 that the log factor vanishes.
    pub degenerate: bool,
}

pub fn cost_score(cfg: &EstimationConfig, alpha_a: f64, kreiss_value: f64, kappa_s: f64) -> CostScore {
    cost_product(alpha_a, kappa_s, kreiss_value, cfg.eps_eig, cfg.eps_st)
}

pub fn cost_product(alpha_a: f64, kappa_s: f64, kreiss_value: f64, eps_eig: f64, eps_st: f64) -> CostScore {
    let log = (1.0 / eps_st).ln();
    CostScore {
        score: alpha_a * kappa_s.powi(4) * kreiss_value / (eps_eig * eps_st * eps_st) * log,
        kreiss_value,
        degenerate: log <= 1e-12,
    }
}
