//! Curve families beyond the circle and the segment: numeric checks of the
//! window-integral, tail-ratio and derivative conditions, a pipeline for
//! registered families, and the radial circle sweep.

mod conformance;
mod quadrature;
mod sweep;

pub use conformance::{
    check_conditions, check_conditions_on, Cond1Case, Cond2Case, Cond3Case, ConformanceReport, ConformanceRequest,
    Thresholds, COND1_MAX_DEVIATION, COND2_MIN_R_SQUARED, COND3_MAX_EXPONENT, MIN_PROBES,
};
pub use quadrature::{integrate, Integral, QUAD_REL_TOL};
pub use sweep::{generalized_estimate, radial_search, rescaled, RadialEntry, RadialSearch, RADIAL_MARGIN};

use crate::curves::{unit_phase, Curve, CurveError, CustomCurve, DiscretizedCurve};
use crate::estimator::EstimatorError;
use crate::matgen::MatgenError;
use crate::resolvent::{curve_prefactor, ResolventError};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamCurveError {
    #[error("invalid request: {0}")]
    BadRequest(String),
    #[error("unknown curve family {0:?}; expected circle, segment[(rho)], ellipse(a,b) or figure-eight")]
    UnknownFamily(String),
    #[error("quadrature did not converge at t = {t}, delta = {delta}: error estimate {error:e} on {value:e}")]
    QuadratureFailure { t: f64, delta: f64, value: f64, error: f64 },
    #[error("conformance required: {0}")]
    ConformanceRequired(String),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error(transparent)]
    Matgen(#[from] MatgenError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

pub type ParamCurveResult<T> = Result<T, ParamCurveError>;

/// Closed form of `int_{t-eps}^{t+eps} |gamma(t) - gamma_delta(t')|^{-2} dt'`
/// as a function of `(delta, t, eps)`.
pub type WindowIntegralFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Names in the built-in registry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Circle,
    Segment { rho: f64 },
    Ellipse { a: f64, b: f64 },
    /// `(cos 2 pi t, sin 4 pi t / 2)`, crossing itself at the origin.
    FigureEight,
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::Circle => write!(f, "circle"),
            FamilySpec::Segment { rho } => write!(f, "segment({rho})"),
            FamilySpec::Ellipse { a, b } => write!(f, "ellipse({a},{b})"),
            FamilySpec::FigureEight => write!(f, "figure-eight"),
        }
    }
}

impl FromStr for FamilySpec {
    type Err = ParamCurveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let unknown = || ParamCurveError::UnknownFamily(s.to_string());
        let (head, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..].strip_suffix(')').ok_or_else(unknown)?;
                let args = inner
                    .split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|_| unknown()))
                    .collect::<Result<Vec<_>, _>>()?;
                (s[..i].trim(), args)
            }
            None => (s, Vec::new()),
        };
        match (head, args.as_slice()) {
            ("circle", []) => Ok(FamilySpec::Circle),
            ("segment", []) => Ok(FamilySpec::Segment { rho: 1.0 }),
            ("segment", &[rho]) => Ok(FamilySpec::Segment { rho }),
            ("ellipse", &[a, b]) => Ok(FamilySpec::Ellipse { a, b }),
            ("figure-eight" | "figure_eight", []) => Ok(FamilySpec::FigureEight),
            _ => Err(unknown()),
        }
    }
}

/// A curve together with its shift rule `delta -> gamma_delta`.
#[derive(Clone)]
pub struct CurveFamily {
    pub name: String,
    /// Base curve; its `shifted` rule is the family.
    pub curve: Curve,
    /// `v0` for normal-shift families: `gamma + delta (v0 / |gamma'|) n`,
    /// with amplitude prefactor `sqrt(v0 delta / (pi N))`.
    pub shift_speed: Option<f64>,
    pub window_integral: Option<WindowIntegralFn>,
}

impl fmt::Debug for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CurveFamily")
            .field("name", &self.name)
            .field("curve", &self.curve)
            .field("shift_speed", &self.shift_speed)
            .field("window_integral", &self.window_integral.is_some())
            .finish()
    }
}

impl CurveFamily {
    pub fn from_spec(spec: &FamilySpec) -> ParamCurveResult<Self> {
        match *spec {
            FamilySpec::Circle => Ok(Self::circle()),
            FamilySpec::Segment { rho } => Self::segment(rho),
            FamilySpec::Ellipse { a, b } => Self::ellipse(a, b),
            FamilySpec::FigureEight => Ok(Self::figure_eight()),
        }
    }

    pub fn by_name(name: &str) -> ParamCurveResult<Self> {
        Self::from_spec(&name.parse()?)
    }

    /// `(1 + delta) e^{2 pi i t}`.
    pub fn circle() -> Self {
        let window: WindowIntegralFn = Arc::new(|delta: f64, _t: f64, eps: f64| {
            let full = 1.0 / (delta * (2.0 + delta));
            if eps >= 0.5 {
                return full;
            }
            2.0 * full / PI * ((2.0 + delta) / delta * (PI * eps).tan()).atan()
        });
        Self {
            name: "circle".into(),
            curve: Curve::UnitCircle,
            shift_speed: None,
            window_integral: Some(window),
        }
    }

    /// `rho (2t - 1) + i delta`.
    pub fn segment(rho: f64) -> ParamCurveResult<Self> {
        let curve = Curve::real_segment(rho)?;
        let window: WindowIntegralFn = Arc::new(move |delta: f64, t: f64, eps: f64| {
            let lo = (t - eps).max(0.0);
            let hi = (t + eps).min(1.0);
            let k = 2.0 * rho / delta;
            ((k * (hi - t)).atan() - (k * (lo - t)).atan()) / (2.0 * rho * delta)
        });
        Ok(Self {
            name: format!("segment({rho})"),
            curve,
            shift_speed: None,
            window_integral: Some(window),
        })
    }

    /// `a cos 2 pi t + i b sin 2 pi t`, shifted along the outward normal.
    pub fn ellipse(a: f64, b: f64) -> ParamCurveResult<Self> {
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(ParamCurveError::BadRequest(format!("ellipse axes must be positive, got ({a}, {b})")));
        }
        let gamma = move |t: f64| {
            let z = unit_phase(t);
            Complex64::new(a * z.re, b * z.im)
        };
        let dgamma = move |t: f64| {
            let z = unit_phase(t);
            Complex64::new(-a * z.im, b * z.re) * (2.0 * PI)
        };
        let inverse = move |lambda: Complex64| {
            let t = (lambda.im / b).atan2(lambda.re / a) / (2.0 * PI);
            Some(t.rem_euclid(1.0))
        };
        Ok(Self::normal_shift(
            format!("ellipse({a},{b})"),
            true,
            gamma,
            dgamma,
            inverse,
            2.0 * PI * a.max(b),
        ))
    }

    /// Lemniscate of Gerono, which passes through the origin at `t = 1/4`
    /// and `t = 3/4`.
    pub fn figure_eight() -> Self {
        let gamma = |t: f64| {
            let z = unit_phase(t);
            Complex64::new(z.re, z.re * z.im)
        };
        let dgamma = |t: f64| {
            let z = unit_phase(t);
            let c2 = z.re * z.re - z.im * z.im;
            Complex64::new(-z.im, c2) * (2.0 * PI)
        };
        let inverse = |lambda: Complex64| {
            let theta = lambda.re.clamp(-1.0, 1.0).acos();
            let pick = if (theta.sin() * theta.cos() - lambda.im).abs() <= (-theta.sin() * theta.cos() - lambda.im).abs() {
                theta
            } else {
                -theta
            };
            Some((pick / (2.0 * PI)).rem_euclid(1.0))
        };
        Self::normal_shift(
            "figure-eight".into(),
            true,
            gamma,
            dgamma,
            inverse,
            2.0 * PI * 2f64.sqrt(),
        )
    }

    /// Family `gamma(t) + delta (v0 / |gamma'(t)|) n(t)` with `n = -i gamma' / |gamma'|`
    /// and `v0 = max_speed`. Scaling the offset by the inverse speed makes
    /// the leading part of the window integral `pi / (delta v0)` for every `t`.
    pub fn normal_shift<G, D, I>(name: String, closed: bool, gamma: G, dgamma: D, inverse: I, max_speed: f64) -> Self
    where
        G: Fn(f64) -> Complex64 + Send + Sync + 'static,
        D: Fn(f64) -> Complex64 + Send + Sync + 'static,
        I: Fn(Complex64) -> Option<f64> + Send + Sync + 'static,
    {
        let wrap = move |t: f64| if closed { t.rem_euclid(1.0) } else { t };
        let gamma = Arc::new(gamma);
        let g2 = gamma.clone();
        let v0 = max_speed;
        let shifted = move |t: f64, delta: f64| {
            let t = wrap(t);
            let d = dgamma(t);
            let s = d.norm();
            let normal = Complex64::new(d.im, -d.re) / s;
            g2(t) + normal * (delta * v0 / s)
        };
        let curve = Curve::Custom(CustomCurve {
            name: name.clone(),
            closed,
            base: Arc::new(move |t| gamma(wrap(t))),
            shifted: Some(Arc::new(shifted)),
            inverse: Some(Arc::new(inverse)),
            max_speed,
        });
        Self {
            name,
            curve,
            shift_speed: Some(v0),
            window_integral: None,
        }
    }

    pub fn is_builtin(&self) -> bool {
        !matches!(self.curve, Curve::Custom(_))
    }

    /// Amplitude prefactor making the full Riemann sum close to one.
    pub fn prefactor(&self, dc: &DiscretizedCurve) -> Option<f64> {
        curve_prefactor(dc).or_else(|| self.shift_speed.map(|v0| (v0 * dc.delta / (PI * dc.n_f64())).sqrt()))
    }

    pub(crate) fn shifted(&self, t: f64, delta: f64) -> Complex64 {
        self.curve.shifted(t, delta).expect("families always carry a shift rule")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_round_trip() {
        for name in ["circle", "segment(1.5)", "ellipse(2,1)", "figure-eight"] {
            let spec: FamilySpec = name.parse().unwrap();
            assert_eq!(spec.to_string(), name);
            assert_eq!(CurveFamily::from_spec(&spec).unwrap().name, name);
        }
        assert_eq!("segment".parse::<FamilySpec>().unwrap(), FamilySpec::Segment { rho: 1.0 });
        assert!(matches!("spiral".parse::<FamilySpec>(), Err(ParamCurveError::UnknownFamily(_))));
        assert!("ellipse(1)".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn normal_shift_offsets() {
        let fam = CurveFamily::ellipse(2.0, 1.0).unwrap();
        let v0 = 4.0 * PI;
        for &t in &[0.0, 0.1, 0.25, 0.6] {
            let base = fam.curve.eval(t);
            let shifted = fam.shifted(t, 0.01);
            let z = unit_phase(t);
            let speed = 2.0 * PI * (4.0 * z.im * z.im + z.re * z.re).sqrt();
            assert!(((shifted - base).norm() - 0.01 * v0 / speed).abs() < 1e-12);
            // Outward: the shifted point leaves the ellipse.
            let q = (shifted.re / 2.0).powi(2) + shifted.im.powi(2);
            assert!(q > 1.0);
        }
        let lambda = fam.curve.eval(0.3);
        assert!((fam.curve.parameter_of(lambda).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn custom_prefactor_matches_builtins_in_form() {
        // For the circle, v0 = 2 pi gives sqrt(2 delta / N), the leading
        // term of sqrt(delta (2 + delta) / N).
        let f = CurveFamily::normal_shift(
            "round".into(),
            true,
            unit_phase,
            |t| unit_phase(t) * Complex64::new(0.0, 2.0 * PI),
            |z| Some((z.arg() / (2.0 * PI)).rem_euclid(1.0)),
            2.0 * PI,
        );
        let dc = crate::curves::discretize(&f.curve, 10, 1e-3).unwrap();
        let p = f.prefactor(&dc).unwrap();
        assert!((p * p - 2e-3 / 1024.0).abs() < 1e-15);
        assert!((dc.point(0) - Complex64::new(1.001, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn figure_eight_crosses_itself() {
        let f = CurveFamily::figure_eight();
        assert!(f.curve.eval(0.25).norm() < 1e-15);
        assert!(f.curve.eval(0.75).norm() < 1e-15);
        let z = f.curve.eval(0.1);
        assert!((f.curve.parameter_of(z).unwrap() - 0.1).abs() < 1e-12);
    }
}
