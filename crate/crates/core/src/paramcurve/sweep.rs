//! Estimation on a registered family, and the sweep over circles of radius
//! `k * k_delta`.

use super::conformance::ConformanceReport;
use super::{CurveFamily, ParamCurveError, ParamCurveResult};
use crate::curves::{discretize, Curve};
use crate::estimator::{
    kreiss_summary, resolve_parameters, run_system, EstimateOptions, EstimationConfig, EstimationReport, EstimatorError,
    KreissSource, KreissSummary, Mode, ParameterRequest,
};
use crate::matgen::{input_state, validate_exclusion, GeneratedMatrix, MatgenResult, Problem, TransformKind};
use crate::numkit::ComplexVector;
use crate::resolvent::{build_system, build_system_with_prefactor, ResolventSystem};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Eigenvalues closer than this to a swept contour skip that radius.
pub const RADIAL_MARGIN: f64 = 1e-6;

const ON_CURVE_TOLERANCE: f64 = 1e-9;
const DISTANCE_GRID: usize = 1 << 14;
const KREISS_POINTS: u64 = 1024;

/// Smallest `|gamma(t) - z|` from a grid scan refined around the best point.
fn curve_distance(curve: &Curve, z: Complex64) -> f64 {
    let n = DISTANCE_GRID;
    let h = 1.0 / n as f64;
    let (k, _) = (0..=n)
        .map(|k| (k, (curve.eval(k as f64 * h) - z).norm_sqr()))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let (mut a, mut b) = (((k as f64) - 1.0) * h, ((k as f64) + 1.0) * h);
    if !curve.is_closed() {
        a = a.max(0.0);
        b = b.min(1.0);
    }
    let f = |t: f64| (curve.eval(t) - z).norm();
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    f(0.5 * (a + b))
}

fn sampled_kreiss(sys: &ResolventSystem) -> ParamCurveResult<KreissSummary> {
    let n = sys.dcurve.len();
    let step = (n / KREISS_POINTS).max(1);
    let mut best = 0.0f64;
    for j in (0..n).step_by(step as usize) {
        best = best.max(sys.block_norm(j)?);
    }
    Ok(KreissSummary {
        value: sys.dcurve.delta * best,
        source: KreissSource::Sampled,
        analytic_bound: None,
    })
}

/// Runs the resolvent pipeline on `z_j = gamma_delta(j / 2^a)`. Requires a
/// passing conformance report for this family that covers `cfg.delta`. On
/// the circle and segment families this is the same computation as
/// [`crate::estimator::estimate`]; other families sum success masses
/// directly.
pub fn generalized_estimate(
    fam: &CurveFamily,
    gm: &GeneratedMatrix,
    psi: &ComplexVector,
    cfg: &EstimationConfig,
    opts: &EstimateOptions,
    conformance: Option<&ConformanceReport>,
) -> ParamCurveResult<EstimationReport> {
    let report = conformance.ok_or_else(|| ParamCurveError::ConformanceRequired("conditions unchecked".into()))?;
    if report.family != fam.name {
        return Err(ParamCurveError::ConformanceRequired(format!(
            "report is for {}, not {}",
            report.family, fam.name
        )));
    }
    if !report.passed() {
        return Err(ParamCurveError::ConformanceRequired(format!(
            "{} failed for {}",
            report.failed_conditions().join(", "),
            fam.name
        )));
    }
    if !report.covers_delta(cfg.delta) {
        return Err(ParamCurveError::ConformanceRequired(format!(
            "delta {} was not among the checked deltas {:?}",
            cfg.delta, report.request.deltas
        )));
    }

    match &fam.curve {
        Curve::UnitCircle | Curve::RealSegment { .. } => {
            let want = cfg.curve()?;
            let same = match (&fam.curve, &want) {
                (Curve::UnitCircle, Curve::UnitCircle) => true,
                (Curve::RealSegment { rho: a }, Curve::RealSegment { rho: b }) => a == b,
                _ => false,
            };
            if !same {
                return Err(ParamCurveError::BadRequest(format!(
                    "family {} does not match the configured {:?} curve",
                    fam.name, cfg.problem
                )));
            }
            for lambda in gm.designated_eigenvalues() {
                if !cfg.problem.on_curve(lambda) {
                    return Err(EstimatorError::OffCurve(format!("{lambda}")).into());
                }
            }
            if !validate_exclusion(gm, cfg.problem, cfg.eps_eig) {
                return Err(EstimatorError::ExclusionViolated(format!("eps_eig = {}", cfg.eps_eig)).into());
            }
            let dc = discretize(&fam.curve, cfg.a, cfg.delta)?;
            let sys = build_system(gm, &dc, opts.solve_mode)?;
            let kreiss = kreiss_summary(gm, cfg.problem, cfg.delta)?;
            Ok(run_system(&sys, psi, cfg, opts, kreiss)?)
        }
        Curve::Custom(_) => {
            for (k, &(lambda, _)) in gm.spec.blocks.iter().enumerate() {
                let dist = curve_distance(&fam.curve, lambda);
                if gm.designated.contains(&k) {
                    if dist > ON_CURVE_TOLERANCE {
                        return Err(EstimatorError::OffCurve(format!("{lambda} is {dist:e} from {}", fam.name)).into());
                    }
                } else if dist < cfg.eps_eig {
                    return Err(EstimatorError::ExclusionViolated(format!(
                        "{lambda} is {dist} from {}, inside eps_eig = {}",
                        fam.name, cfg.eps_eig
                    ))
                    .into());
                }
            }
            let dc = discretize(&fam.curve, cfg.a, cfg.delta)?;
            let prefactor = fam
                .prefactor(&dc)
                .ok_or_else(|| ParamCurveError::BadRequest(format!("family {} has no prefactor", fam.name)))?;
            let sys = build_system_with_prefactor(gm, &dc, opts.solve_mode, prefactor)?;
            let kreiss = sampled_kreiss(&sys)?;
            Ok(run_system(&sys, psi, cfg, opts, kreiss)?)
        }
    }
}

/// `A / r` with its Jordan data. `J(lambda, d) / r = D J(lambda / r, d) D^{-1}`
/// with `D = diag(r^{-i})` on each block, so the transform becomes `T D`.
pub fn rescaled(gm: &GeneratedMatrix, r: f64) -> MatgenResult<GeneratedMatrix> {
    let mut spec = gm.spec.clone();
    for b in spec.blocks.iter_mut() {
        b.0 /= r;
    }
    spec.transform = TransformKind::Supplied;
    let mut t = gm.t.clone();
    let mut t_inv = gm.t_inv.clone();
    let n = gm.dim();
    for (k, &(_, d)) in gm.spec.blocks.iter().enumerate() {
        let off = gm.block_offsets[k];
        for i in 0..d {
            let s = r.powi(-(i as i32));
            for row in 0..n {
                t[(row, off + i)] *= s;
                t_inv[(off + i, row)] /= s;
            }
        }
    }
    let mut out = GeneratedMatrix::from_parts(spec, t, t_inv)?;
    if out.designated != gm.designated {
        out = out.designate(gm.designated.clone())?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialEntry {
    pub radius: f64,
    /// `r (1 + delta)`, the contour in the original scale.
    pub contour_radius: f64,
    /// Largest designated-component window mass `a_l^2`.
    pub peak_mass: Option<f64>,
    /// Phase of the modal readout for the component with the peak mass.
    pub phase_estimate: Option<f64>,
    pub report: Option<EstimationReport>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialSearch {
    pub k_delta: f64,
    pub entries: Vec<RadialEntry>,
    /// Index into `entries` with the largest peak mass; lowest radius on ties.
    pub best: Option<usize>,
    pub best_radius: Option<f64>,
    /// `2 delta / (pi eps_eig) + 2 delta / eps_eig`, the failure-mass level.
    pub mass_threshold: f64,
    /// Whether the best peak mass exceeds `mass_threshold`.
    pub detected: bool,
}

fn radial_entry(
    gm: &GeneratedMatrix,
    psi: &ComplexVector,
    r: f64,
    cfg: &EstimationConfig,
    opts: &EstimateOptions,
) -> RadialEntry {
    let contour_radius = r * (1.0 + cfg.delta);
    let skipped = |why: String| RadialEntry {
        radius: r,
        contour_radius,
        peak_mass: None,
        phase_estimate: None,
        report: None,
        skipped: Some(why),
    };
    if let Some(&(lambda, _)) = gm
        .spec
        .blocks
        .iter()
        .find(|b| (b.0.norm() - contour_radius).abs() < RADIAL_MARGIN)
    {
        return skipped(format!("eigenvalue {lambda} within {RADIAL_MARGIN:e} of the contour"));
    }
    let run = || -> ParamCurveResult<EstimationReport> {
        let scaled = rescaled(gm, r)?;
        let local = resolve_parameters(&ParameterRequest {
            problem: Problem::Qeue,
            eps_eig: cfg.eps_eig,
            eps_st: cfg.eps_st,
            kappa_s: scaled.kappa_s,
            alpha_a: scaled.alpha,
            mode: Mode::Feasible,
            delta: Some(cfg.delta),
            a: Some(cfg.a),
        })?;
        let dc = discretize(&Curve::UnitCircle, local.a, local.delta)?;
        let sys = build_system(&scaled, &dc, opts.solve_mode)?;
        let kreiss = kreiss_summary(&scaled, Problem::Qeue, local.delta)?;
        Ok(run_system(&sys, psi, &local, opts, kreiss)?)
    };
    match run() {
        Ok(report) => {
            let best = report
                .success
                .components
                .iter()
                .enumerate()
                .fold(None, |acc: Option<(usize, f64)>, (l, c)| match acc {
                    Some((_, m)) if m >= c.a_sq => acc,
                    _ => Some((l, c.a_sq)),
                });
            let phase = best.and_then(|(l, _)| {
                report
                    .readout
                    .as_ref()
                    .and_then(|ro| ro.per_eigen.get(l))
                    .and_then(|e| e.modal_estimate)
                    .map(|z| z.arg())
            });
            RadialEntry {
                radius: r,
                contour_radius,
                peak_mass: best.map(|b| b.1),
                phase_estimate: phase,
                report: Some(report),
                skipped: None,
            }
        }
        Err(e) => skipped(e.to_string()),
    }
}

/// Sweeps radii `r = k k_delta` in `[r_min, r_max]`, running the circle
/// pipeline on `A / r` with `cfg`'s `delta`, `a` and accuracies. The input
/// state is the equal superposition of the designated eigenvectors.
/// Radii whose contour passes within [`RADIAL_MARGIN`] of an eigenvalue,
/// or whose run fails, are kept as skipped entries.
pub fn radial_search(
    gm: &GeneratedMatrix,
    r_min: f64,
    r_max: f64,
    k_delta: f64,
    cfg: &EstimationConfig,
    opts: &EstimateOptions,
) -> ParamCurveResult<RadialSearch> {
    if !(k_delta.is_finite() && k_delta > 0.0) {
        return Err(ParamCurveError::BadRequest(format!("k_delta must be positive, got {k_delta}")));
    }
    if !(r_min.is_finite() && r_max.is_finite() && r_min > 0.0 && r_min <= r_max) {
        return Err(ParamCurveError::BadRequest(format!("need 0 < r_min <= r_max, got [{r_min}, {r_max}]")));
    }
    let k_lo = (r_min / k_delta - 1e-9).ceil() as u64;
    let k_hi = (r_max / k_delta + 1e-9).floor() as u64;
    let ones = vec![Complex64::new(1.0, 0.0); gm.designated.len()];
    let (psi, _) = input_state(gm, &ones)?;
    let entries: Vec<RadialEntry> = (k_lo.max(1)..=k_hi)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| radial_entry(gm, &psi, k as f64 * k_delta, cfg, opts))
        .collect();
    let best = entries
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.peak_mass.map(|m| (i, m)))
        .fold(None, |acc: Option<(usize, f64)>, (i, m)| match acc {
            Some((_, bm)) if bm >= m => acc,
            _ => Some((i, m)),
        });
    let mass_threshold = 2.0 * cfg.delta / (std::f64::consts::PI * cfg.eps_eig) + 2.0 * cfg.delta / cfg.eps_eig;
    Ok(RadialSearch {
        k_delta,
        best: best.map(|b| b.0),
        best_radius: best.map(|b| entries[b.0].radius),
        detected: best.is_some_and(|b| b.1 > mass_threshold),
        mass_threshold,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{check_conditions, check_conditions_on, ConformanceRequest};
    use super::*;
    use crate::estimator::{estimate, ParameterRequest};
    use crate::matgen::{generate, JordanSpec};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn feasible(problem: Problem, gm: &GeneratedMatrix, delta: f64, a: u32) -> EstimationConfig {
        resolve_parameters(&ParameterRequest {
            problem,
            eps_eig: 0.1,
            eps_st: 0.1,
            kappa_s: gm.kappa_s,
            alpha_a: gm.alpha,
            mode: Mode::Feasible,
            delta: Some(delta),
            a: Some(a),
        })
        .unwrap()
    }

    #[test]
    fn circle_family_reproduces_estimate() {
        let gm = generate(&JordanSpec::new(vec![(c(0.6, 0.8), 1), (c(0.1, 0.2), 2)], 5.0, 9).with_on_curve(vec![0]))
            .unwrap();
        let cfg = feasible(Problem::Qeue, &gm, 0.01, 12);
        let fam = CurveFamily::circle();
        let conf = check_conditions(&fam, &[0.01], &[0.02, 0.05, 0.5], 16).unwrap();
        let psi = input_state(&gm, &[c(1.0, 0.0)]).unwrap().0;
        let opts = EstimateOptions {
            samples: 200,
            seed: 4,
            ..Default::default()
        };
        let a = estimate(&gm, &psi, &cfg, &opts).unwrap();
        let b = generalized_estimate(&fam, &gm, &psi, &cfg, &opts, Some(&conf)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(matches!(
            generalized_estimate(&fam, &gm, &psi, &cfg, &opts, None),
            Err(ParamCurveError::ConformanceRequired(_))
        ));
        let other = check_conditions(&fam, &[0.02], &[0.05, 0.5], 16).unwrap();
        assert!(matches!(
            generalized_estimate(&fam, &gm, &psi, &cfg, &opts, Some(&other)),
            Err(ParamCurveError::ConformanceRequired(_))
        ));
    }

    #[test]
    fn segment_family_reproduces_estimate() {
        let gm = generate(&JordanSpec::new(vec![(c(0.5, 0.0), 1), (c(-0.3, -0.4), 1)], 3.0, 2).with_on_curve(vec![0]))
            .unwrap();
        let cfg = feasible(Problem::Qere, &gm, 0.001, 12);
        let fam = CurveFamily::segment(cfg.rho.unwrap()).unwrap();
        let conf = ConformanceRequest {
            deltas: vec![0.001],
            epsilons: vec![0.02, 0.05],
            t_probes: 16,
            domain: None,
        };
        let conf = check_conditions_on(&fam, &conf).unwrap();
        let psi = input_state(&gm, &[c(1.0, 0.0)]).unwrap().0;
        let opts = EstimateOptions::default();
        let a = estimate(&gm, &psi, &cfg, &opts).unwrap();
        let b = generalized_estimate(&fam, &gm, &psi, &cfg, &opts, Some(&conf)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn ellipse_recovers_two_eigenvalues() {
        let fam = CurveFamily::ellipse(1.0, 0.6).unwrap();
        let conf = check_conditions(&fam, &[0.0005], &[0.01, 0.02, 0.05], 16).unwrap();
        assert!(conf.passed(), "{conf:?}");
        let l1 = fam.curve.eval(0.15);
        let l2 = fam.curve.eval(0.6);
        let gm = generate(
            &JordanSpec::new(vec![(l1, 1), (l2, 1), (c(0.1, 0.1), 1), (c(-0.2, 0.0), 1)], 5.0, 11).with_on_curve(vec![0, 1]),
        )
        .unwrap();
        let cfg = feasible(Problem::Qeue, &gm, 0.0005, 14);
        let psi = input_state(&gm, &[c(1.0, 0.0), c(0.0, 1.0)]).unwrap().0;
        let opts = EstimateOptions {
            samples: 500,
            seed: 1,
            ..Default::default()
        };
        let rep = generalized_estimate(&fam, &gm, &psi, &cfg, &opts, Some(&conf)).unwrap();
        let ro = rep.readout.unwrap();
        for e in &ro.per_eigen {
            assert!(e.modal_value_error.unwrap() <= 0.1, "{e:?}");
        }
        for m in &rep.success.components {
            assert!(m.a_sq > 0.9, "{m:?}");
        }
        assert!(ro.failure_rate < 0.1);
    }

    #[test]
    fn rescaling_preserves_jordan_structure() {
        let gm = generate(&JordanSpec::new(vec![(c(0.3, 0.4), 2), (c(-0.5, 0.0), 1)], 4.0, 3)).unwrap();
        let s = rescaled(&gm, 0.5).unwrap();
        let diff = s.matrix.sub(&gm.matrix.scaled(c(2.0, 0.0))).max_abs();
        assert!(diff < 1e-12, "{diff}");
        assert_eq!(s.eigenvalue(0), c(0.6, 0.8));
        assert!(s.block_eigvec(0).distance(&gm.block_eigvec(0)) < 1e-12);
    }

    #[test]
    fn radial_search_finds_the_radius() {
        let lambda = Complex64::from_polar(0.7, PI / 3.0);
        let gm = generate(&JordanSpec::new(vec![(lambda, 1), (c(0.1, -0.1), 1)], 3.0, 5).with_on_curve(vec![0])).unwrap();
        let cfg = feasible(Problem::Qeue, &gm, 0.001, 12);
        let opts = EstimateOptions {
            samples: 300,
            seed: 2,
            ..Default::default()
        };
        let rs = radial_search(&gm, 0.5, 0.8, 0.1, &cfg, &opts).unwrap();
        let radii: Vec<f64> = rs.entries.iter().map(|e| e.radius).collect();
        assert_eq!(radii.len(), 4);
        assert!((rs.best_radius.unwrap() - 0.7).abs() < 1e-12);
        assert!(rs.detected);
        let best = &rs.entries[rs.best.unwrap()];
        assert!((best.phase_estimate.unwrap() - PI / 3.0).abs() <= 0.1);

        let empty = radial_search(&gm, 0.3, 0.5, 0.1, &cfg, &opts).unwrap();
        assert!(!empty.detected);
        for e in &empty.entries {
            assert!(e.peak_mass.unwrap() < empty.mass_threshold);
        }
        assert!(radial_search(&gm, 0.71, 0.79, 0.1, &cfg, &opts).unwrap().entries.is_empty());
    }
}
