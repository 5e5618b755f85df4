//! Numeric checks of the three family conditions: a window integral that
//! does not depend on `t`, a tail ratio of order `delta / eps`, and a
//! derivative that grows polynomially in `1 / delta`.

use super::quadrature::{integrate, QUAD_REL_TOL};
use super::{CurveFamily, ParamCurveError, ParamCurveResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const MIN_PROBES: usize = 16;
pub const COND1_MAX_DEVIATION: f64 = 1e-2;
pub const COND2_MIN_R_SQUARED: f64 = 0.9;
pub const COND3_MAX_EXPONENT: f64 = 6.0;

/// Fewer requested deltas than this are extended by halving the smallest.
const MIN_FIT_DELTAS: usize = 3;
const PIECES_PER_UNIT: f64 = 256.0;
const COARSE_POINTS: usize = 2048;
const FINE_POINTS: usize = 4000;
const APPROACHES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformanceRequest {
    pub deltas: Vec<f64>,
    /// Window half-widths in curve parameter.
    pub epsilons: Vec<f64>,
    pub t_probes: usize,
    /// Probe range; defaults to all of [0, 1) on closed curves and
    /// `[eps, 1 - eps]` on open ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub cond1_max_deviation: f64,
    pub cond2_min_r_squared: f64,
    pub cond3_max_exponent: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            cond1_max_deviation: COND1_MAX_DEVIATION,
            cond2_min_r_squared: COND2_MIN_R_SQUARED,
            cond3_max_exponent: COND3_MAX_EXPONENT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond1Case {
    pub delta: f64,
    pub eps: f64,
    pub mean: f64,
    pub max_rel_deviation: f64,
    /// Deviation with probes over all of [0, 1]; open curves only.
    pub full_domain_deviation: Option<f64>,
    /// Largest relative gap to the registered closed form.
    pub closed_form_rel_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond2Case {
    pub delta: f64,
    pub eps: f64,
    /// `max_t (1 - window / full)`.
    pub max_tail_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cond3Case {
    pub delta: f64,
    /// `max_t sup_t' |d/dt' f|` for the density normalized to unit integral.
    pub max_derivative: f64,
    /// False for deltas added to reach the minimum fit size.
    pub requested: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub family: String,
    pub request: ConformanceRequest,
    pub interior_only: bool,
    pub cond1_cases: Vec<Cond1Case>,
    pub cond1_max_rel_deviation: f64,
    pub cond1_full_domain_deviation: Option<f64>,
    pub closed_form_max_rel_error: Option<f64>,
    pub cond2_cases: Vec<Cond2Case>,
    /// Smallest `C` with `tail <= C delta / eps` on every case.
    pub cond2_measured_ratio_bound: f64,
    /// Least-squares `C` in `tail ~ C delta / eps`.
    pub cond2_fitted_constant: f64,
    pub cond2_r_squared: f64,
    pub cond3_cases: Vec<Cond3Case>,
    /// Slope of `ln max|f'|` against `ln(1 / delta)`.
    pub cond3_fitted_poly_degree: f64,
    pub cond3_r_squared: f64,
    /// Closest approach of `gamma_delta` to a probed `gamma(t)`.
    pub min_separation: f64,
    pub thresholds: Thresholds,
    pub pass_cond1: bool,
    pub pass_cond2: bool,
    pub pass_cond3: bool,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.pass_cond1 && self.pass_cond2 && self.pass_cond3
    }

    pub fn failed_conditions(&self) -> Vec<&'static str> {
        [
            (self.pass_cond1, "cond1"),
            (self.pass_cond2, "cond2"),
            (self.pass_cond3, "cond3"),
        ]
        .into_iter()
        .filter(|p| !p.0)
        .map(|p| p.1)
        .collect()
    }

    pub fn covers_delta(&self, delta: f64) -> bool {
        self.request.deltas.iter().any(|&d| (d - delta).abs() <= 1e-12 * d)
    }
}

pub fn check_conditions(
    fam: &CurveFamily,
    deltas: &[f64],
    epsilons: &[f64],
    t_probes: usize,
) -> ParamCurveResult<ConformanceReport> {
    check_conditions_on(
        fam,
        &ConformanceRequest {
            deltas: deltas.to_vec(),
            epsilons: epsilons.to_vec(),
            t_probes,
            domain: None,
        },
    )
}

struct Kernel<'a> {
    fam: &'a CurveFamily,
    t: f64,
    delta: f64,
}

impl Kernel<'_> {
    fn d2(&self, tp: f64) -> f64 {
        (self.fam.curve.eval(self.t) - self.fam.shifted(tp, self.delta)).norm_sqr()
    }

    fn g(&self, tp: f64) -> f64 {
        1.0 / self.d2(tp)
    }

    fn integral(&self, lo: f64, hi: f64) -> ParamCurveResult<f64> {
        let mut cuts = vec![lo];
        if lo < self.t && self.t < hi {
            cuts.push(self.t);
        }
        cuts.push(hi);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let pieces = ((w[1] - w[0]) * PIECES_PER_UNIT).ceil() as usize;
            let r = integrate(|x| self.g(x), w[0], w[1], pieces, QUAD_REL_TOL);
            if !r.converged {
                return Err(ParamCurveError::QuadratureFailure {
                    t: self.t,
                    delta: self.delta,
                    value: r.value,
                    error: r.error,
                });
            }
            total += r.value;
        }
        Ok(total)
    }

    /// `(window, complement)` integrals for half-width `eps`.
    fn split(&self, eps: f64) -> ParamCurveResult<(f64, f64)> {
        let t = self.t;
        if self.fam.curve.is_closed() {
            if eps >= 0.5 {
                return Ok((self.integral(t - 0.5, t + 0.5)?, 0.0));
            }
            Ok((self.integral(t - eps, t + eps)?, self.integral(t + eps, t + 1.0 - eps)?))
        } else {
            let lo = (t - eps).max(0.0);
            let hi = (t + eps).min(1.0);
            Ok((self.integral(lo, hi)?, self.integral(0.0, lo)? + self.integral(hi, 1.0)?))
        }
    }

    fn full(&self) -> ParamCurveResult<f64> {
        if self.fam.curve.is_closed() {
            self.integral(self.t - 0.5, self.t + 0.5)
        } else {
            self.integral(0.0, 1.0)
        }
    }

    fn range(&self) -> (f64, f64) {
        if self.fam.curve.is_closed() {
            (self.t - 0.5, self.t + 0.5)
        } else {
            (0.0, 1.0)
        }
    }

    /// Up to three local minima of the squared distance, refined.
    fn approaches(&self) -> Vec<(f64, f64)> {
        let (lo, hi) = self.range();
        let h = (hi - lo) / COARSE_POINTS as f64;
        let vals: Vec<f64> = (0..=COARSE_POINTS).map(|k| self.d2(lo + h * k as f64)).collect();
        let mut minima: Vec<(f64, f64)> = (0..=COARSE_POINTS)
            .filter(|&k| (k == 0 || vals[k] <= vals[k - 1]) && (k == COARSE_POINTS || vals[k] <= vals[k + 1]))
            .map(|k| {
                let x = lo + h * k as f64;
                golden_min(|y| self.d2(y), (x - h).max(lo), (x + h).min(hi))
            })
            .collect();
        minima.sort_by(|a, b| a.1.total_cmp(&b.1));
        minima.truncate(APPROACHES);
        minima
    }

    fn max_derivative(&self) -> f64 {
        let (lo, hi) = self.range();
        let h = (hi - lo) / COARSE_POINTS as f64;
        let mut best = 0.0f64;
        let mut prev = self.g(lo);
        for k in 1..=COARSE_POINTS {
            let cur = self.g(lo + h * k as f64);
            best = best.max(((cur - prev) / h).abs());
            prev = cur;
        }
        for (tc, d2) in self.approaches() {
            let eta = 1e-6 * h;
            let speed = (self.fam.shifted(tc + eta, self.delta) - self.fam.shifted(tc - eta, self.delta)).norm() / (2.0 * eta);
            let ell = d2.sqrt() / speed;
            if !(ell.is_finite() && ell > 0.0) {
                continue;
            }
            let a = (tc - 8.0 * ell).max(lo);
            let b = (tc + 8.0 * ell).min(hi);
            let step = 1e-4 * ell;
            for k in 0..=FINE_POINTS {
                let x = a + (b - a) * k as f64 / FINE_POINTS as f64;
                let d = (self.g(x + step) - self.g(x - step)) / (2.0 * step);
                if d.is_finite() {
                    best = best.max(d.abs());
                }
            }
        }
        best
    }
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Ordinary least squares `y = slope x + intercept`, with `R^2`.
fn fit_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, r2)
}

/// Least squares `y = c x` through the origin, with `R^2` against the mean.
fn fit_proportional(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let c = xs.iter().zip(ys).map(|(x, y)| x * y).sum::<f64>() / xs.iter().map(|x| x * x).sum::<f64>();
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - c * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    (c, r2)
}

fn probes(lo: f64, hi: f64, n: usize, closed_full: bool) -> Vec<f64> {
    if closed_full {
        return (0..n).map(|k| k as f64 / n as f64).collect();
    }
    if hi <= lo {
        return vec![0.5 * (lo + hi); n];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn validate(req: &ConformanceRequest) -> ParamCurveResult<()> {
    let bad = |m: String| Err(ParamCurveError::BadRequest(m));
    for (name, xs) in [("deltas", &req.deltas), ("epsilons", &req.epsilons)] {
        if xs.is_empty() {
            return bad(format!("{name} is empty"));
        }
        if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad(format!("{name} must be positive and finite"));
        }
        if xs.windows(2).any(|w| w[1] < w[0]) && xs.windows(2).any(|w| w[1] > w[0]) {
            return bad(format!("{name} must be sorted"));
        }
    }
    if req.t_probes < MIN_PROBES {
        return bad(format!("t_probes must be at least {MIN_PROBES}, got {}", req.t_probes));
    }
    if let Some((lo, hi)) = req.domain {
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return bad(format!("domain ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"));
        }
    }
    Ok(())
}

fn deviation(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let dev = values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean;
    (mean, dev)
}

/// Runs the three checks. Deltas are extended downward by halving to at
/// least three values for the tail-ratio and derivative fits; cond1 uses
/// only the requested deltas. Descending inputs are reordered.
pub fn check_conditions_on(fam: &CurveFamily, req: &ConformanceRequest) -> ParamCurveResult<ConformanceReport> {
    validate(req)?;
    let mut req = req.clone();
    req.deltas.sort_by(f64::total_cmp);
    req.epsilons.sort_by(f64::total_cmp);
    let req = &req;
    let closed = fam.curve.is_closed();
    let p = req.t_probes;
    let mut fit_deltas: Vec<(f64, bool)> = req.deltas.iter().map(|&d| (d, true)).collect();
    fit_deltas.dedup_by(|a, b| a.0 == b.0);
    while fit_deltas.len() < MIN_FIT_DELTAS {
        let d = fit_deltas[0].0 / 2.0;
        fit_deltas.insert(0, (d, false));
    }
    let probe_set = |eps: f64| -> Vec<f64> {
        match (req.domain, closed) {
            (Some((lo, hi)), _) => probes(lo, hi, p, false),
            (None, true) => probes(0.0, 1.0, p, true),
            (None, false) => probes(eps, 1.0 - eps, p, false),
        }
    };

    let mut cond1_cases = Vec::new();
    let mut cond2_cases = Vec::new();
    for &(delta, requested) in &fit_deltas {
        for &eps in &req.epsilons {
            let ts = probe_set(eps);
            let parts: Vec<(f64, f64)> = ts
                .par_iter()
                .map(|&t| Kernel { fam, t, delta }.split(eps))
                .collect::<ParamCurveResult<_>>()?;
            let tail = parts.iter().map(|(w, c)| c / (w + c)).fold(0.0, f64::max);
            if !(closed && eps >= 0.5) {
                cond2_cases.push(Cond2Case {
                    delta,
                    eps,
                    max_tail_ratio: tail,
                });
            }
            if !requested {
                continue;
            }
            let windows: Vec<f64> = parts.iter().map(|p| p.0).collect();
            let (mean, dev) = deviation(&windows);
            let closed_form_rel_error = fam.window_integral.as_ref().map(|wf| {
                ts.iter()
                    .zip(&windows)
                    .map(|(&t, &w)| {
                        let exact = wf(delta, t, eps);
                        (w - exact).abs() / exact
                    })
                    .fold(0.0, f64::max)
            });
            let full_domain_deviation = if !closed && req.domain.is_none() {
                let all = probes(0.0, 1.0, p, false);
                let ws: Vec<f64> = all
                    .par_iter()
                    .map(|&t| Kernel { fam, t, delta }.split(eps).map(|x| x.0))
                    .collect::<ParamCurveResult<_>>()?;
                Some(deviation(&ws).1)
            } else {
                None
            };
            cond1_cases.push(Cond1Case {
                delta,
                eps,
                mean,
                max_rel_deviation: dev,
                full_domain_deviation,
                closed_form_rel_error,
            });
        }
    }

    let eps_min = req.epsilons[0];
    let d_probes = probe_set(eps_min);
    let mut cond3_cases = Vec::new();
    for &(delta, requested) in &fit_deltas {
        let ds: Vec<f64> = d_probes
            .par_iter()
            .map(|&t| {
                let k = Kernel { fam, t, delta };
                Ok(k.max_derivative() / k.full()?)
            })
            .collect::<ParamCurveResult<_>>()?;
        cond3_cases.push(Cond3Case {
            delta,
            max_derivative: ds.into_iter().fold(0.0, f64::max),
            requested,
        });
    }

    let min_separation = req
        .deltas
        .iter()
        .flat_map(|&delta| {
            d_probes
                .par_iter()
                .map(|&t| Kernel { fam, t, delta }.approaches().first().map_or(f64::INFINITY, |a| a.1.sqrt()))
                .collect::<Vec<_>>()
        })
        .fold(f64::INFINITY, f64::min);

    let cond1_max = cond1_cases.iter().map(|c| c.max_rel_deviation).fold(0.0, f64::max);
    let full_dev = cond1_cases
        .iter()
        .filter_map(|c| c.full_domain_deviation)
        .reduce(f64::max);
    let closed_err = cond1_cases
        .iter()
        .filter_map(|c| c.closed_form_rel_error)
        .reduce(f64::max);

    let (c2_bound, c2_const, c2_r2) = if cond2_cases.len() >= 2 {
        let xs: Vec<f64> = cond2_cases.iter().map(|c| c.delta / c.eps).collect();
        let ys: Vec<f64> = cond2_cases.iter().map(|c| c.max_tail_ratio).collect();
        let bound = xs.iter().zip(&ys).map(|(x, y)| y / x).fold(0.0, f64::max);
        let (c, r2) = fit_proportional(&xs, &ys);
        (bound, c, r2)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    let xs: Vec<f64> = cond3_cases.iter().map(|c| (1.0 / c.delta).ln()).collect();
    let ys: Vec<f64> = cond3_cases.iter().map(|c| c.max_derivative.ln()).collect();
    let (degree, c3_r2) = fit_line(&xs, &ys);

    let thresholds = Thresholds::default();
    Ok(ConformanceReport {
        family: fam.name.clone(),
        request: req.clone(),
        interior_only: !closed && req.domain.is_none(),
        pass_cond1: cond1_max <= thresholds.cond1_max_deviation,
        pass_cond2: c2_const.is_finite() && c2_r2 >= thresholds.cond2_min_r_squared,
        pass_cond3: degree.is_finite() && degree <= thresholds.cond3_max_exponent,
        cond1_cases,
        cond1_max_rel_deviation: cond1_max,
        cond1_full_domain_deviation: full_dev,
        closed_form_max_rel_error: closed_err,
        cond2_cases,
        cond2_measured_ratio_bound: c2_bound,
        cond2_fitted_constant: c2_const,
        cond2_r_squared: c2_r2,
        cond3_cases,
        cond3_fitted_poly_degree: degree,
        cond3_r_squared: c3_r2,
        min_separation,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle_passes() {
        let fam = CurveFamily::circle();
        let r = check_conditions(&fam, &[0.0025, 0.005, 0.01], &[0.01, 0.02, 0.05, 0.5], 16).unwrap();
        assert!(r.cond1_max_rel_deviation <= 1e-6, "{}", r.cond1_max_rel_deviation);
        assert!(r.closed_form_max_rel_error.unwrap() <= 1e-6);
        assert!((r.cond3_fitted_poly_degree - 2.0).abs() <= 0.2, "{}", r.cond3_fitted_poly_degree);
        assert!(r.passed(), "{:?}", r.failed_conditions());
        // Window tail of the Poisson kernel: (2/pi) atan(delta / ((2 + delta) tan(pi eps))).
        let c = r.cond2_cases.iter().find(|c| c.delta == 0.01 && c.eps == 0.05).unwrap();
        let exact = 2.0 / PI * (0.01 / (2.01 * (PI * 0.05).tan())).atan();
        assert!((c.max_tail_ratio - exact).abs() < 1e-6 * exact.max(1e-3));
        assert!((r.min_separation - 0.0025).abs() < 1e-9);
    }

    #[test]
    fn derivative_matches_analytic_peak() {
        let fam = CurveFamily::circle();
        let delta = 0.01;
        let k = Kernel { fam: &fam, t: 0.3, delta };
        let big_r = 1.0 + delta;
        // Independent evaluation: dense scan of the analytic derivative.
        let analytic = (0..200_000)
            .map(|i| i as f64 * 1e-7)
            .map(|u| {
                let s = (PI * u).sin();
                4.0 * big_r * PI * (2.0 * PI * u).sin() / (delta * delta + 4.0 * big_r * s * s).powi(2)
            })
            .fold(0.0, f64::max);
        let fd = k.max_derivative();
        assert!((fd / analytic - 1.0).abs() < 1e-3, "{fd} vs {analytic}");
    }

    #[test]
    fn input_order_does_not_matter() {
        let fam = CurveFamily::segment(1.0).unwrap();
        let up = check_conditions(&fam, &[0.002, 0.004], &[0.05, 0.1], 16).unwrap();
        let down = check_conditions(&fam, &[0.004, 0.002], &[0.1, 0.05], 16).unwrap();
        assert_eq!(up, down);
        assert!(check_conditions(&fam, &[0.002, 0.004, 0.003], &[0.05], 16).is_err());
    }

    #[test]
    fn segment_interior() {
        let fam = CurveFamily::segment(1.0).unwrap();
        let req = ConformanceRequest {
            deltas: vec![0.001],
            epsilons: vec![0.05],
            t_probes: 16,
            domain: Some((0.2, 0.8)),
        };
        let r = check_conditions_on(&fam, &req).unwrap();
        assert!(r.cond1_max_rel_deviation <= 1e-4);
        assert!(!r.interior_only);
        assert!((r.cond3_fitted_poly_degree - 2.0).abs() <= 0.2, "{}", r.cond3_fitted_poly_degree);
        assert!(r.closed_form_max_rel_error.unwrap() < 1e-6);

        let r = check_conditions(&fam, &[0.001], &[0.05], 16).unwrap();
        assert!(r.interior_only);
        assert!(r.cond1_max_rel_deviation <= 1e-4);
        // Windows clipped at the endpoints lose about half their mass.
        assert!(r.cond1_full_domain_deviation.unwrap() > 0.3);
        assert!(r.pass_cond1);
    }

    #[test]
    fn figure_eight_fails_cond1() {
        let fam = CurveFamily::figure_eight();
        let r = check_conditions(&fam, &[0.01], &[0.05, 0.5], 16).unwrap();
        assert!(r.cond1_max_rel_deviation > 0.3, "{}", r.cond1_max_rel_deviation);
        assert!(!r.pass_cond1);
    }

    #[test]
    fn requests_are_validated() {
        let fam = CurveFamily::circle();
        assert!(check_conditions(&fam, &[0.01], &[0.05], 8).is_err());
        assert!(check_conditions(&fam, &[0.02, 0.01, 0.03], &[0.05], 16).is_err());
        assert!(check_conditions(&fam, &[], &[0.05], 16).is_err());
        assert!(check_conditions(&fam, &[0.01], &[-0.05], 16).is_err());
    }

    #[test]
    fn fits() {
        let (s, r2) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((s - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (c, r2) = fit_proportional(&[1.0, 2.0], &[3.0, 6.0]);
        assert!((c - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
