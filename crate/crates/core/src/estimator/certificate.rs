//! Theorem-level certificate on the output state, and the two auxiliary
//! inequalities it rests on (failure propagation through non-orthogonal
//! eigenvectors, and the normalized-error bound).

use super::masses::{success_masses_unchecked, SuccessReport};
use super::{EstimationConfig, EstimatorError, EstimatorResult, Mode};
use crate::matgen::GeneratedMatrix;
use crate::numkit::{svd_extremes, ComplexVector, RectMatrix};
use crate::resolvent::ResolventState;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl CertCheck {
    fn new(name: &str, measured: f64, relation: Relation, bound: f64) -> Self {
        let pass = match relation {
            Relation::Le => measured <= bound,
            Relation::Ge => measured >= bound,
        };
        Self {
            name: name.to_string(),
            measured,
            bound,
            relation,
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kappa_s: f64,
    pub a0: f64,
    pub psi1: Option<f64>,
    pub psi2: Option<f64>,
    pub psi3: Option<f64>,
    /// `a_0 / kappa_S`.
    pub psi1_lower: f64,
    /// `kappa_S max_l |a_l - a_0|`.
    pub psi2_upper: f64,
    /// `kappa_S 2 sqrt5 delta / eps_eig`, valid under the lemma hypotheses.
    pub psi2_upper_lemma: f64,
    /// `kappa_S max_l b_l`.
    pub psi3_upper: f64,
    /// `kappa_S sqrt(2 (1 + 1/pi) delta / eps_eig)`.
    pub psi3_upper_lemma: f64,
    /// `2 (psi2 + psi3) / psi1` from measured norms when available, else
    /// from the upper bounds.
    pub distance_bound: f64,
    /// The same quantity from the lemma bounds alone.
    pub distance_bound_lemma: f64,
    pub normalized_distance: Option<f64>,
    pub checks: Vec<CertCheck>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Builds the certificate from freshly computed success masses.
pub fn state_error_certificate(
    rs: &ResolventState,
    cfg: &EstimationConfig,
    gm: &GeneratedMatrix,
) -> EstimatorResult<Certificate> {
    let report = success_masses_unchecked(rs, cfg, gm)?;
    let cert = certificate_from_report(&report, cfg, gm);
    match cert.checks.iter().find(|c| !c.pass) {
        Some(c) => Err(EstimatorError::CertificateFailed(format!(
            "{}: measured {:.6e} vs bound {:.6e}",
            c.name, c.measured, c.bound
        ))),
        None => Ok(cert),
    }
}

/// Certificate for an existing report; failed checks are recorded, not raised.
pub fn certificate_from_report(report: &SuccessReport, cfg: &EstimationConfig, gm: &GeneratedMatrix) -> Certificate {
    let kappa = gm.kappa_s;
    let comps = &report.components;
    let a0 = comps.first().map_or(0.0, |c| c.a);
    let max_gap = comps.iter().map(|c| (c.a - a0).abs()).fold(0.0, f64::max);
    let max_b = comps.iter().map(|c| c.b).fold(0.0, f64::max);
    let r = cfg.delta / cfg.eps_eig;
    let psi1_lower = a0 / kappa;
    let psi2_upper = kappa * max_gap;
    let psi3_upper = kappa * max_b;
    let psi2_upper_lemma = kappa * 2.0 * 5f64.sqrt() * r;
    let psi3_upper_lemma = kappa * (2.0 * (1.0 + 1.0 / PI) * r).sqrt();
    let exact = comps.iter().all(|c| c.interval == 0.0);
    let agg = report.aggregate.filter(|_| exact);

    let mut checks = Vec::new();
    if let Some(g) = agg {
        // Small absolute slack for the rounding in the Gram-form sums.
        let tol = 1e-12 * g.total.max(1.0);
        checks.push(CertCheck::new("psi1 >= a0/kappa", g.psi1 + tol, Relation::Ge, psi1_lower));
        checks.push(CertCheck::new("psi2 <= kappa*max|a_l-a0|", g.psi2 - tol, Relation::Le, psi2_upper));
        checks.push(CertCheck::new("psi3 <= kappa*max b_l", g.psi3 - tol, Relation::Le, psi3_upper));
        if report.hypotheses_met {
            checks.push(CertCheck::new("psi2 <= kappa*2sqrt5*delta/eps", g.psi2 - tol, Relation::Le, psi2_upper_lemma));
            checks.push(CertCheck::new("psi3 <= kappa*b_max", g.psi3 - tol, Relation::Le, psi3_upper_lemma));
        }
    }
    let (p1, p2, p3) = match agg {
        Some(g) => (g.psi1, g.psi2, g.psi3),
        None => (psi1_lower, psi2_upper, psi3_upper),
    };
    let distance_bound = if p1 > 0.0 { 2.0 * (p2 + p3) / p1 } else { f64::INFINITY };
    let distance_bound_lemma = if a0 > 0.0 {
        2.0 * (psi2_upper_lemma + psi3_upper_lemma) / psi1_lower.min(0.5 / kappa)
    } else {
        f64::INFINITY
    };
    if let Some(g) = agg {
        checks.push(CertCheck::new(
            "normalized distance <= 2(psi2+psi3)/psi1",
            g.normalized_distance - 1e-12,
            Relation::Le,
            distance_bound,
        ));
    }
    if cfg.mode == Mode::StrictTheorem {
        let limit = cfg.eps_st / 8.0;
        checks.push(CertCheck::new("psi2/psi1 <= eps_st/8", p2 / p1, Relation::Le, limit));
        checks.push(CertCheck::new("psi3/psi1 <= eps_st/8", p3 / p1, Relation::Le, limit));
    }
    Certificate {
        kappa_s: kappa,
        a0,
        psi1: agg.map(|g| g.psi1),
        psi2: agg.map(|g| g.psi2),
        psi3: agg.map(|g| g.psi3),
        psi1_lower,
        psi2_upper,
        psi2_upper_lemma,
        psi3_upper,
        psi3_upper_lemma,
        distance_bound,
        distance_bound_lemma,
        normalized_distance: agg.map(|g| g.normalized_distance),
        checks,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationCheck {
    pub measured: f64,
    /// `min_l ||chi_l|| ||psi|| / kappa_S`.
    pub lower: f64,
    /// `kappa_S max_l ||chi_l|| ||psi||`.
    pub upper: f64,
    pub kappa_s: f64,
    pub pass: bool,
}

/// `|| sum_l beta_l chi_l (x) s_l ||` against the propagation bounds, with
/// `psi = sum_l beta_l s_l` (the bounds scale with `||psi||`).
pub fn propagation_bounds(
    columns: &[ComplexVector],
    betas: &[Complex64],
    chis: &[Vec<Complex64>],
) -> EstimatorResult<PropagationCheck> {
    let m = columns.len();
    if betas.len() != m || chis.len() != m || chis.iter().any(|c| c.len() != chis[0].len()) {
        return Err(EstimatorError::BadParameter("mismatched propagation inputs".into()));
    }
    let (hi, lo) = svd_extremes(&RectMatrix::from_columns(columns)?)?;
    let kappa = hi / lo;
    let n = columns[0].len();
    let mut psi = ComplexVector::zeros(n);
    for (b, s) in betas.iter().zip(columns) {
        psi.axpy(*b, s);
    }
    let mut sq = 0.0;
    for j in 0..chis[0].len() {
        let mut row = ComplexVector::zeros(n);
        for l in 0..m {
            row.axpy(betas[l] * chis[l][j], &columns[l]);
        }
        sq += row.norm_sqr();
    }
    let norms: Vec<f64> = chis.iter().map(|c| c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()).collect();
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let measured = sq.sqrt();
    let lower = min * psi.norm() / kappa;
    let upper = kappa * max * psi.norm();
    let tol = 1e-12 * upper.max(1e-300);
    Ok(PropagationCheck {
        measured,
        lower,
        upper,
        kappa_s: kappa,
        pass: measured + tol >= lower && measured - tol <= upper,
    })
}

/// `(|| x/||x|| - y/||y|| ||, 2 ||x - y|| / ||x||)`.
pub fn normalized_error(x: &ComplexVector, y: &ComplexVector) -> (f64, f64) {
    let measured = x.normalized().distance(&y.normalized());
    (measured, 2.0 * x.distance(y) / x.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curves::discretize;
    use crate::estimator::{resolve_parameters, ParameterRequest};
    use crate::matgen::{generate, input_state, JordanSpec, Problem};
    use crate::resolvent::{build_system, resolvent_state, SolveMode};
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn run(spec: JordanSpec, betas: &[Complex64]) -> (Certificate, SuccessReport) {
        let gm = generate(&spec).unwrap();
        let cfg = resolve_parameters(&ParameterRequest {
            problem: Problem::Qeue,
            eps_eig: 0.3,
            eps_st: 0.1,
            kappa_s: gm.kappa_s,
            alpha_a: gm.alpha,
            mode: Mode::Feasible,
            delta: Some(0.03),
            a: None,
        })
        .unwrap();
        let dc = discretize(&cfg.curve().unwrap(), cfg.a, cfg.delta).unwrap();
        let rs = resolvent_state(
            &build_system(&gm, &dc, SolveMode::Analytic).unwrap(),
            &input_state(&gm, betas).unwrap().0,
        )
        .unwrap();
        let rep = success_masses_unchecked(&rs, &cfg, &gm).unwrap();
        (state_error_certificate(&rs, &cfg, &gm).unwrap(), rep)
    }

    #[test]
    fn single_eigenvalue_has_no_ratio_part() {
        let (cert, _) = run(JordanSpec::new(vec![(c(0.0, 1.0), 1), (c(0.1, 0.0), 2)], 4.0, 1).with_on_curve(vec![0]), &[c(1.0, 0.0)]);
        assert_eq!(cert.psi2, Some(0.0));
        assert!(cert.passed());
    }

    #[test]
    fn orthonormal_eigenvectors_pythagoras() {
        let spec = JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(0.0, 1.0), 1), (c(-1.0, 0.0), 1)], 1.0, 0)
            .with_identity_transform();
        let betas = [c(0.6, 0.0), c(0.0, 0.48), c(0.64, 0.0)];
        let (cert, rep) = run(spec, &betas);
        let want: f64 = rep.components.iter().zip(&betas).map(|(m, b)| b.norm_sqr() * m.b_sq).sum();
        assert_relative_eq!(cert.psi3.unwrap().powi(2), want, max_relative = 1e-9);
        assert!(cert.psi3.unwrap() <= cert.psi3_upper * (1.0 + 1e-12));
    }

    #[test]
    fn skewed_pair() {
        // s_0 = e_0, s_1 = (e_0 + e_1)/sqrt2 has kappa_S = 1 + sqrt2.
        let r = 0.5f64.sqrt();
        let t = crate::numkit::ComplexMatrix::from_real_rows(&[vec![1.0, r], vec![0.0, r]]);
        let t_inv = crate::numkit::ComplexMatrix::from_real_rows(&[vec![1.0, -1.0], vec![0.0, 1.0 / r]]);
        let spec = JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(0.0, 1.0), 1)], 1.0, 0);
        let gm = GeneratedMatrix::from_parts(spec, t, t_inv).unwrap();
        assert_relative_eq!(gm.kappa_s, 1.0 + 2f64.sqrt(), max_relative = 1e-10);
        let chis = vec![vec![c(1.0, 0.0), c(0.5, 0.0)], vec![c(0.0, 1.0), c(-2.0, 0.0)]];
        let chk = propagation_bounds(&gm.eigvec_columns, &[c(0.3, 0.0), c(-0.8, 0.2)], &chis).unwrap();
        assert!(chk.pass && chk.measured > chk.lower && chk.measured < chk.upper);
    }

    #[test]
    fn normalized_error_bound() {
        let x = ComplexVector(vec![c(3.0, 0.0), c(0.0, 4.0)]);
        let y = ComplexVector(vec![c(3.1, 0.0), c(0.1, 3.9)]);
        let (m, b) = normalized_error(&x, &y);
        assert!(m <= b);
    }
}
