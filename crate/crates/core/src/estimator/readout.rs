//! Sampling the ancilla register of the resolvent state and attributing each
//! outcome to an eigenvalue.

use super::masses::{component_window, SuccessReport};
use super::{EstimationConfig, EstimatorError, EstimatorResult};
use crate::curves::{Curve, DiscretizedCurve, WindowProjector};
use crate::matgen::GeneratedMatrix;
use crate::numkit::DualBasis;
use crate::resolvent::ResolventState;
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// The marginal over `j` is tabulated, so the grid must fit in memory.
pub const READOUT_MAX_POINTS: u64 = 1 << 26;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub j: u64,
    /// Index into the designated components.
    pub component: usize,
    pub parameter: f64,
    pub estimate: Complex64,
    /// Distance in curve parameter to the attributed eigenvalue, mod 1 on
    /// closed curves.
    pub parameter_error: f64,
    /// `|gamma(t) - lambda|`: phase error on the circle, absolute error on
    /// the segment.
    pub value_error: f64,
    pub in_window: bool,
    /// Membership in the `eps_eig / rho` window (QERE only).
    pub in_wide_window: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReadout {
    pub component: usize,
    pub block: usize,
    pub lambda: Complex64,
    pub true_parameter: f64,
    pub count: u64,
    pub successes: u64,
    pub modal_j: Option<u64>,
    pub modal_parameter: Option<f64>,
    pub modal_estimate: Option<Complex64>,
    pub modal_value_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutReport {
    pub n_samples: u64,
    pub seed: u64,
    pub per_eigen: Vec<EigenReadout>,
    /// Fraction of samples outside the attributed eigenvalue's window.
    pub failure_rate: f64,
    pub wide_failure_rate: Option<f64>,
    /// `kappa_S^2 sum_l |beta_l|^2 b_l^2 / ||psi||^2`.
    pub predicted_failure_bound: Option<f64>,
    /// Binomial standard deviation at the predicted rate.
    pub sigma: Option<f64>,
    pub samples: Vec<Sample>,
}

fn parameter_distance(curve: &Curve, t: f64, t0: f64) -> f64 {
    let d = (t - t0).abs();
    if curve.is_closed() {
        d.min(1.0 - d)
    } else {
        d
    }
}

fn value_error(curve: &Curve, t: f64, t0: f64, lambda: Complex64) -> f64 {
    match curve {
        Curve::UnitCircle | Curve::RealSegment { .. } => curve.max_speed() * parameter_distance(curve, t, t0),
        Curve::Custom(_) => (curve.eval(t) - lambda).norm(),
    }
}

/// Draws `n_samples` grid indices from `p(j) = ||psi_j||^2 / ||psi||^2` and
/// attributes each to the component with the largest coefficient in the
/// dual basis of the eigenvectors (ties to the lowest index).
pub fn readout(
    rs: &ResolventState,
    cfg: &EstimationConfig,
    gm: &GeneratedMatrix,
    n_samples: u64,
    rng_seed: u64,
) -> EstimatorResult<ReadoutReport> {
    readout_with_masses(rs, cfg, gm, n_samples, rng_seed, None)
}

pub(crate) fn readout_with_masses(
    rs: &ResolventState,
    cfg: &EstimationConfig,
    gm: &GeneratedMatrix,
    n_samples: u64,
    rng_seed: u64,
    masses: Option<&SuccessReport>,
) -> EstimatorResult<ReadoutReport> {
    let dc: &DiscretizedCurve = &rs.dcurve;
    let n = dc.len();
    if n > READOUT_MAX_POINTS {
        return Err(EstimatorError::TooLarge {
            what: "readout",
            points: n,
            limit: READOUT_MAX_POINTS,
        });
    }
    let m = rs.components.len();
    let dual = DualBasis::new(&gm.eigvec_columns)?;
    let row = |j: u64| -> Vec<Complex64> {
        match rs.joint_row(j) {
            Some(r) => r.to_vec(),
            None => rs.reconstructed_row(j),
        }
    };
    let weights: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| row(j).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|e| EstimatorError::BadParameter(format!("degenerate readout distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let draws: Vec<u64> = (0..n_samples).map(|_| dist.sample(&mut rng) as u64).collect();

    let windows: Vec<WindowProjector> = rs
        .components
        .iter()
        .map(|c| component_window(dc, c.lambda, cfg.eps_eig))
        .collect::<EstimatorResult<_>>()?;
    let wide: Option<Vec<WindowProjector>> = match cfg.wide_window_eps() {
        Some(eps) => Some(
            windows
                .iter()
                .map(|w| crate::curves::window(w.center, eps, dc.a, dc.curve.is_closed()))
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };

    let mut samples = Vec::with_capacity(draws.len());
    let mut memo: BTreeMap<u64, usize> = BTreeMap::new();
    for &j in &draws {
        let l = *memo.entry(j).or_insert_with(|| {
            let coeffs = dual.coefficients(&row(j));
            let mut best = 0;
            for k in 1..m {
                if coeffs[k].norm() > coeffs[best].norm() {
                    best = k;
                }
            }
            best
        });
        let t = dc.t(j);
        let lambda = rs.components[l].lambda;
        let t0 = windows[l].center;
        samples.push(Sample {
            j,
            component: l,
            parameter: t,
            estimate: dc.curve.eval(t),
            parameter_error: parameter_distance(&dc.curve, t, t0),
            value_error: value_error(&dc.curve, t, t0, lambda),
            in_window: windows[l].contains(j),
            in_wide_window: wide.as_ref().map(|w| w[l].contains(j)),
        });
    }

    let per_eigen = (0..m)
        .map(|l| {
            let mut counts: BTreeMap<u64, u64> = BTreeMap::new();
            let mut count = 0;
            let mut successes = 0;
            for s in samples.iter().filter(|s| s.component == l) {
                *counts.entry(s.j).or_default() += 1;
                count += 1;
                successes += s.in_window as u64;
            }
            // Highest count, lowest j on ties.
            let modal = counts.iter().fold(None, |best: Option<(u64, u64)>, (&j, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((j, c)),
            });
            let c = &rs.components[l];
            let t0 = windows[l].center;
            EigenReadout {
                component: l,
                block: c.block,
                lambda: c.lambda,
                true_parameter: t0,
                count,
                successes,
                modal_j: modal.map(|m| m.0),
                modal_parameter: modal.map(|m| dc.t(m.0)),
                modal_estimate: modal.map(|m| dc.curve.eval(dc.t(m.0))),
                modal_value_error: modal.map(|m| value_error(&dc.curve, dc.t(m.0), t0, c.lambda)),
            }
        })
        .collect();

    let total = samples.len().max(1) as f64;
    let failure_rate = samples.iter().filter(|s| !s.in_window).count() as f64 / total;
    let wide_failure_rate = wide
        .as_ref()
        .map(|_| samples.iter().filter(|s| s.in_wide_window == Some(false)).count() as f64 / total);
    let predicted = masses.and_then(|rep| {
        let norm_sq: f64 = weights.iter().sum();
        let tail: f64 = rep
            .components
            .iter()
            .zip(&rs.components)
            .map(|(cm, c)| c.beta.norm_sqr() * c.eigvec.norm_sqr() * cm.b_sq)
            .sum();
        (norm_sq > 0.0).then(|| (gm.kappa_s * gm.kappa_s * tail / norm_sq).min(1.0))
    });
    let sigma = predicted.map(|p| (p * (1.0 - p) / total).sqrt());
    Ok(ReadoutReport {
        n_samples,
        seed: rng_seed,
        per_eigen,
        failure_rate,
        wide_failure_rate,
        predicted_failure_bound: predicted,
        sigma,
        samples,
    })
}
