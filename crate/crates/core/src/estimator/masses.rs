//! Success masses `a_l = ||P phi_l||` and failure masses `b_l = ||Q phi_l||`
//! of each eigencomponent, and the aggregate split of the joint state into
//! the rescaled in-window, ratio-error and out-of-window parts.

use super::{EstimationConfig, EstimatorError, EstimatorResult};
use crate::curves::{window, Curve, DiscretizedCurve, WindowProjector};
use crate::matgen::GeneratedMatrix;
use crate::numkit::{det_sum, det_sum_n, digamma, ComplexVector};
use crate::resolvent::ResolventState;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Grid sizes up to this are summed term by term.
pub const DIRECT_MAX_POINTS: u64 = 1 << 26;

/// Above [`DIRECT_MAX_POINTS`], windows up to this size are still summed
/// directly when the full-grid sum has an exact closed form.
pub const WINDOWED_MAX_POINTS: u64 = 1 << 27;

/// Grid sizes up to this get the aggregate Gram-form norms.
pub const GRAM_MAX_POINTS: u64 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassPath {
    /// Window and full sums evaluated term by term.
    Direct,
    /// Window summed term by term, full sum from an exact identity.
    Windowed,
    /// Integrals standing in for both sums, with a `delta / eps_eig` interval.
    ClosedForm,
}

/// The three inequalities of the failure-probability lemma plus the
/// discretization bound, for one `(delta, eps_eig)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaBounds {
    pub a_min: f64,
    pub a_max: f64,
    /// `4 delta / eps_eig`.
    pub ratio_max: f64,
    /// `sqrt(2 (1 + 1/pi) delta / eps_eig)`.
    pub b_max: f64,
    /// `2 delta / (pi eps_eig) + 2 delta / eps_eig`.
    pub b_sq_max: f64,
    /// `delta / eps_eig`.
    pub disc: f64,
}

impl LemmaBounds {
    pub fn new(delta: f64, eps_eig: f64) -> Self {
        let r = delta / eps_eig;
        Self {
            a_min: 0.5,
            a_max: 5f64.sqrt() / 2.0,
            ratio_max: 4.0 * r,
            b_max: (2.0 * (1.0 + 1.0 / PI) * r).sqrt(),
            b_sq_max: 2.0 * r / PI + 2.0 * r,
            disc: r,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMass {
    pub block: usize,
    pub lambda: Complex64,
    /// Curve parameter of `lambda`.
    pub t_center: f64,
    pub window_len: u64,
    pub window_ranges: Vec<(u64, u64)>,
    pub path: MassPath,
    pub a_sq: f64,
    pub b_sq: f64,
    pub full_sq: f64,
    pub a: f64,
    pub b: f64,
    /// Half-width of the uncertainty on `a_sq` and `full_sq`; zero unless
    /// the closed-form path was used.
    pub interval: f64,
    pub window_integral: Option<f64>,
    pub full_integral: Option<f64>,
    /// Riemann-sum error bound over the window with the density's
    /// derivative and maximum bounds.
    pub riemann_bound_window: Option<f64>,
    pub riemann_bound_full: Option<f64>,
    /// `|1 - a_0 / a_l|`.
    pub ratio_deviation: f64,
    /// Flags for the lemma inequalities; evaluated at the interval ends on
    /// the closed-form path.
    pub a_in_range: bool,
    pub ratio_ok: bool,
    pub b_ok: bool,
    /// `|a_sq - window_integral| <= delta / eps_eig`; `None` when not measured.
    pub disc_window_ok: Option<bool>,
    pub disc_full_ok: Option<bool>,
}

/// Norms of the joint-state split `psi = psi_1 + psi_2 + psi_3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// `|| sum_l beta_l (a_0 / a_l) P_l phi_l (x) s_l ||`.
    pub psi1: f64,
    /// `|| sum_l beta_l (1 - a_0 / a_l) P_l phi_l (x) s_l ||`.
    pub psi2: f64,
    /// `|| sum_l beta_l Q_l phi_l (x) s_l ||`.
    pub psi3: f64,
    pub total: f64,
    /// `psi3^2 / total^2`.
    pub failure_mass: f64,
    /// `|| psi_1 / ||psi_1|| - psi / ||psi|| ||`.
    pub normalized_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub eps_window: f64,
    /// The wider `eps_eig / rho` convention; QERE only.
    pub wide_eps_window: Option<f64>,
    pub hypotheses_met: bool,
    pub hypothesis_note: Option<String>,
    pub bounds: LemmaBounds,
    pub components: Vec<ComponentMass>,
    pub aggregate: Option<Aggregate>,
    pub all_lemmas_hold: bool,
}

/// Geometry of `|z_j - lambda|^2` for one component.
enum Distance {
    /// `(R - r)^2 + 4 R r sin^2(pi (j/N - t_c))`.
    Circle { rr: f64, four_rr: f64, t_c: f64 },
    /// `(rho (2j/N - 1) - Re lambda)^2 + (delta - Im lambda)^2`.
    Segment { rho: f64, re: f64, v2: f64 },
    Generic { lambda: Complex64 },
}

impl Distance {
    fn new(dc: &DiscretizedCurve, lambda: Complex64) -> Self {
        match dc.curve {
            Curve::UnitCircle => {
                let big_r = 1.0 + dc.delta;
                let r = lambda.norm();
                let t_c = Curve::UnitCircle.parameter_of(lambda).unwrap_or(0.0);
                Distance::Circle {
                    rr: (big_r - r) * (big_r - r),
                    four_rr: 4.0 * big_r * r,
                    t_c,
                }
            }
            Curve::RealSegment { rho } => {
                let v = dc.delta - lambda.im;
                Distance::Segment {
                    rho,
                    re: lambda.re,
                    v2: v * v,
                }
            }
            Curve::Custom(_) => Distance::Generic { lambda },
        }
    }

    fn sq(&self, dc: &DiscretizedCurve, j: u64) -> f64 {
        let n = dc.n_f64();
        match *self {
            Distance::Circle { rr, four_rr, t_c } => {
                let s = (PI * (j as f64 / n - t_c)).sin();
                rr + four_rr * s * s
            }
            Distance::Segment { rho, re, v2 } => {
                let x = rho * (2.0 * j as f64 / n - 1.0) - re;
                x * x + v2
            }
            Distance::Generic { lambda } => (dc.point(j) - lambda).norm_sqr(),
        }
    }
}

/// `sum_{j < N} prefactor^2 / |z_j - lambda|^2` from an exact identity, where
/// one exists: the discrete Poisson kernel on the circle (for `|lambda|`
/// inside the contour) and a digamma difference on the segment (for
/// `lambda` below the contour).
pub fn exact_full_sum(dc: &DiscretizedCurve, prefactor: f64, lambda: Complex64) -> Option<f64> {
    let n = dc.n_f64();
    let p2 = prefactor * prefactor;
    match dc.curve {
        Curve::UnitCircle => {
            let big_r = 1.0 + dc.delta;
            let r = lambda.norm();
            if !(r < big_r) {
                return None;
            }
            let t_c = Curve::UnitCircle.parameter_of(lambda)?;
            // (r / R)^N and N arg(lambda) mod 2pi; N t_c is exact for N = 2^a.
            let q = (n * (r.ln() - dc.delta.ln_1p())).exp();
            let theta = 2.0 * PI * (n * t_c).fract();
            let denom = (Complex64::new(1.0, 0.0) - Complex64::from_polar(q, theta)).norm_sqr();
            let gap = (big_r - r) * (big_r + r);
            Some(p2 * n * (1.0 - q * q) / (gap * denom))
        }
        Curve::RealSegment { rho } => {
            let v_abs = dc.delta - lambda.im;
            if !(v_abs > 0.0) {
                return None;
            }
            let h = 2.0 * rho / n;
            let u = (-rho - lambda.re) / h;
            let v = v_abs / h;
            let lo = digamma(Complex64::new(u, v)).im;
            let hi = digamma(Complex64::new(u + n, v)).im;
            Some(p2 / (h * h) * (lo - hi) / v)
        }
        Curve::Custom(_) => None,
    }
}

/// Integrals of the prefactored density over the success window and the
/// whole parameter interval, for eigenvalues on a built-in curve.
pub fn window_integrals(curve: &Curve, delta: f64, eps_eig: f64, lambda: Complex64) -> Option<(f64, f64)> {
    match *curve {
        Curve::UnitCircle => {
            let w = if eps_eig >= PI {
                1.0
            } else {
                2.0 / PI * ((2.0 + delta) / delta * (eps_eig / 2.0).tan()).atan()
            };
            Some((w, 1.0))
        }
        Curve::RealSegment { rho } => {
            let x = lambda.re;
            let up = (rho - x).max(0.0);
            let down = (rho + x).max(0.0);
            let w = ((up.min(eps_eig) / delta).atan() + (down.min(eps_eig) / delta).atan()) / PI;
            let f = ((up / delta).atan() + (down / delta).atan()) / PI;
            Some((w, f))
        }
        Curve::Custom(_) => None,
    }
}

/// Density maximum and derivative bounds used in the Riemann-sum error.
fn density_bounds(curve: &Curve, delta: f64) -> Option<(f64, f64)> {
    match *curve {
        Curve::UnitCircle => Some(((2.0 + delta) / delta, 6.0 * 2f64.sqrt() * PI / (delta * delta))),
        Curve::RealSegment { rho } => Some((2.0 * rho / (PI * delta), 2.0 * rho / (PI * delta * delta))),
        Curve::Custom(_) => None,
    }
}

/// Success window of `lambda` with half-width `eps_eig / max_speed` in
/// curve parameter.
pub fn component_window(dc: &DiscretizedCurve, lambda: Complex64, eps_eig: f64) -> EstimatorResult<WindowProjector> {
    let t_c = dc
        .curve
        .parameter_of(lambda)
        .ok_or_else(|| EstimatorError::OffCurve(format!("{lambda}")))?;
    Ok(window(t_c, eps_eig / dc.curve.max_speed(), dc.a, dc.curve.is_closed())?)
}

struct RawMass {
    a_sq: f64,
    full_sq: f64,
    path: MassPath,
    interval: f64,
}

fn raw_mass(
    dc: &DiscretizedCurve,
    prefactor: f64,
    lambda: Complex64,
    win: &WindowProjector,
    integrals: Option<(f64, f64)>,
    disc: f64,
) -> EstimatorResult<RawMass> {
    let n = dc.len();
    let p2 = prefactor * prefactor;
    let dist = Distance::new(dc, lambda);
    let term = |j: u64| p2 / dist.sq(dc, j);
    let window_sum = || win.ranges.iter().map(|&(l, h)| det_sum(l..h + 1, term)).sum::<f64>();
    if n <= DIRECT_MAX_POINTS {
        return Ok(RawMass {
            a_sq: window_sum(),
            full_sq: det_sum(0..n, term),
            path: MassPath::Direct,
            interval: 0.0,
        });
    }
    if win.len() <= WINDOWED_MAX_POINTS {
        if let Some(full) = exact_full_sum(dc, prefactor, lambda) {
            return Ok(RawMass {
                a_sq: window_sum(),
                full_sq: full,
                path: MassPath::Windowed,
                interval: 0.0,
            });
        }
    }
    match integrals {
        Some((w, f)) => Ok(RawMass {
            a_sq: w,
            full_sq: f,
            path: MassPath::ClosedForm,
            interval: disc,
        }),
        None => Err(EstimatorError::TooLarge {
            what: "success masses without a closed form",
            points: n,
            limit: DIRECT_MAX_POINTS,
        }),
    }
}

/// Checks the lemma hypotheses (`delta <= eps_eig / 4` and the grid bound)
/// and computes the report.
pub fn success_masses(rs: &ResolventState, cfg: &EstimationConfig, gm: &GeneratedMatrix) -> EstimatorResult<SuccessReport> {
    if let Some(note) = cfg.hypothesis_violation() {
        return Err(EstimatorError::HypothesisViolated(note));
    }
    success_masses_unchecked(rs, cfg, gm)
}

/// Masses and lemma flags for eigenvalues `(block, lambda)` on the
/// discretized curve. The first entry is the reference `a_0` of the ratio
/// check.
pub fn component_masses(
    dc: &DiscretizedCurve,
    prefactor: f64,
    eigen: &[(usize, Complex64)],
    eps_eig: f64,
) -> EstimatorResult<Vec<ComponentMass>> {
    let delta = dc.delta;
    let bounds = LemmaBounds::new(delta, eps_eig);
    let mut comps = Vec::with_capacity(eigen.len());
    for &(block, lambda) in eigen {
        let win = component_window(dc, lambda, eps_eig)?;
        let on_curve = dc.curve.parameter_of(lambda).map(|t| (dc.curve.eval(t) - lambda).norm() < 1e-9);
        let integrals = if on_curve == Some(true) {
            window_integrals(&dc.curve, delta, eps_eig, lambda)
        } else {
            None
        };
        let raw = raw_mass(dc, prefactor, lambda, &win, integrals, bounds.disc)?;
        let riemann = density_bounds(&dc.curve, delta).filter(|_| integrals.is_some()).map(|(max_abs, max_d)| {
            let width = (2.0 * win.eps).min(1.0);
            let nf = dc.n_f64();
            ((width * width / 2.0 * max_d + 2.0 * max_abs) / nf, (max_d / 2.0 + 2.0 * max_abs) / nf)
        });
        let b_sq = (raw.full_sq - raw.a_sq).max(0.0);
        let (disc_window_ok, disc_full_ok) = match (raw.path, integrals) {
            (MassPath::ClosedForm, _) | (_, None) => (None, None),
            (_, Some((w, f))) => (
                Some((raw.a_sq - w).abs() <= bounds.disc),
                Some((raw.full_sq - f).abs() <= bounds.disc),
            ),
        };
        comps.push(ComponentMass {
            block,
            lambda,
            t_center: win.center,
            window_len: win.len(),
            window_ranges: win.ranges.clone(),
            path: raw.path,
            a_sq: raw.a_sq,
            b_sq,
            full_sq: raw.full_sq,
            a: raw.a_sq.sqrt(),
            b: b_sq.sqrt(),
            interval: raw.interval,
            window_integral: integrals.map(|p| p.0),
            full_integral: integrals.map(|p| p.1),
            riemann_bound_window: riemann.map(|p| p.0),
            riemann_bound_full: riemann.map(|p| p.1),
            ratio_deviation: 0.0,
            a_in_range: false,
            ratio_ok: false,
            b_ok: false,
            disc_window_ok,
            disc_full_ok,
        });
    }
    if let Some(first) = comps.first().cloned() {
        let lo = |c: &ComponentMass| (c.a_sq - c.interval).max(0.0).sqrt();
        let hi = |c: &ComponentMass| (c.a_sq + c.interval).sqrt();
        for c in comps.iter_mut() {
            c.ratio_deviation = (1.0 - first.a / c.a).abs();
            let worst_ratio = (1.0 - lo(&first) / hi(c)).abs().max((hi(&first) / lo(c) - 1.0).abs());
            let b_hi = (c.b_sq + 2.0 * c.interval).sqrt();
            c.a_in_range = lo(c) >= bounds.a_min && hi(c) <= bounds.a_max;
            c.ratio_ok = worst_ratio <= bounds.ratio_max;
            c.b_ok = b_hi <= bounds.b_max;
        }
    }
    Ok(comps)
}

/// [`success_masses`] without the hypothesis check; the report records
/// whether the hypotheses held.
pub fn success_masses_unchecked(
    rs: &ResolventState,
    cfg: &EstimationConfig,
    _gm: &GeneratedMatrix,
) -> EstimatorResult<SuccessReport> {
    let dc = &rs.dcurve;
    let bounds = LemmaBounds::new(dc.delta, cfg.eps_eig);
    let eigen: Vec<(usize, Complex64)> = rs.components.iter().map(|c| (c.block, c.lambda)).collect();
    let comps = component_masses(dc, rs.prefactor, &eigen, cfg.eps_eig)?;
    let all_lemmas_hold = comps
        .iter()
        .all(|c| c.a_in_range && c.ratio_ok && c.b_ok && c.disc_window_ok != Some(false) && c.disc_full_ok != Some(false));
    let aggregate = if dc.len() <= GRAM_MAX_POINTS && !comps.is_empty() {
        Some(aggregate(rs, &comps))
    } else {
        None
    };
    Ok(SuccessReport {
        eps_window: cfg.eps_eig / dc.curve.max_speed(),
        wide_eps_window: cfg.wide_window_eps(),
        hypotheses_met: cfg.hypotheses_met(),
        hypothesis_note: cfg.hypothesis_violation(),
        bounds,
        components: comps,
        aggregate,
        all_lemmas_hold,
    })
}

fn quad_form(gram: &[Complex64], m: usize, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let mut s = Complex64::new(0.0, 0.0);
    for l in 0..m {
        if x[l] == Complex64::new(0.0, 0.0) {
            continue;
        }
        let mut row = Complex64::new(0.0, 0.0);
        for k in 0..m {
            row += gram[l * m + k] * y[k];
        }
        s += x[l].conj() * row;
    }
    s
}

/// Streams over the grid accumulating `x^H G y` for the coefficient vectors
/// of `psi_1`, `psi_2`, `psi_3` and the whole state, `G` the Gram matrix of
/// the eigenvectors. O(N m^2) time, O(m^2) memory.
fn aggregate(rs: &ResolventState, comps: &[ComponentMass]) -> Aggregate {
    let m = rs.components.len();
    let vecs: Vec<&ComplexVector> = rs.components.iter().map(|c| &c.eigvec).collect();
    let gram: Vec<Complex64> = (0..m * m).map(|i| vecs[i / m].dot(vecs[i % m])).collect();
    let a0 = comps[0].a;
    let scale1: Vec<f64> = comps.iter().map(|c| a0 / c.a).collect();
    let in_window = |l: usize, j: u64| comps[l].window_ranges.iter().any(|&(lo, hi)| lo <= j && j <= hi);
    let sums = det_sum_n::<6, _>(0..rs.grid_len(), |j| {
        let zero = Complex64::new(0.0, 0.0);
        let mut x1 = [zero; 16];
        let mut x2 = [zero; 16];
        let mut x3 = [zero; 16];
        let mut xt = [zero; 16];
        let (mut b1, mut b2, mut b3, mut bt);
        let (x1, x2, x3, xt) = if m <= 16 {
            (&mut x1[..m], &mut x2[..m], &mut x3[..m], &mut xt[..m])
        } else {
            b1 = vec![zero; m];
            b2 = vec![zero; m];
            b3 = vec![zero; m];
            bt = vec![zero; m];
            (&mut b1[..], &mut b2[..], &mut b3[..], &mut bt[..])
        };
        for l in 0..m {
            let v = rs.components[l].beta * rs.amplitude(l, j);
            xt[l] = v;
            if in_window(l, j) {
                x1[l] = v * scale1[l];
                x2[l] = v * (1.0 - scale1[l]);
            } else {
                x3[l] = v;
            }
        }
        let cross = quad_form(&gram, m, x1, xt);
        [
            quad_form(&gram, m, x1, x1).re,
            quad_form(&gram, m, x2, x2).re,
            quad_form(&gram, m, x3, x3).re,
            quad_form(&gram, m, xt, xt).re,
            cross.re,
            cross.im,
        ]
    });
    let psi1 = sums[0].max(0.0).sqrt();
    let total = sums[3].max(0.0).sqrt();
    let cos = if psi1 > 0.0 && total > 0.0 {
        sums[4] / (psi1 * total)
    } else {
        0.0
    };
    Aggregate {
        psi1,
        psi2: sums[1].max(0.0).sqrt(),
        psi3: sums[2].max(0.0).sqrt(),
        total,
        failure_mass: if total > 0.0 { sums[2] / sums[3] } else { 0.0 },
        normalized_distance: (2.0 - 2.0 * cos).max(0.0).sqrt(),
    }
}
