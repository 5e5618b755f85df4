//! Parametrized curves on [0, 1], their shifted discretizations, Riemann sums
//! and index windows around a parameter value.

use crate::numkit::det_sum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

/// Largest supported discretization exponent.
pub const MAX_GRID_EXPONENT: u32 = 63;

/// Largest grid that [`DiscretizedCurve::points`] will materialize.
pub const MAX_MATERIALIZED_POINTS: u64 = 1 << 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("grid exponent {a} is outside 1..={max}")]
    BadExponent { a: u32, max: u32 },
    #[error("shift delta must be finite and non-negative, got {0}")]
    BadShift(f64),
    #[error("segment half-length must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("curve {0} has no registered shift rule")]
    UnsupportedCurve(String),
    #[error("grid of 2^{a} points is too large to materialize")]
    TooLarge { a: u32 },
    #[error("window half-width must be non-negative, got {0}")]
    BadWindow(f64),
}

pub type CurveResult<T> = Result<T, CurveError>;

type PointFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
type ShiftFn = Arc<dyn Fn(f64, f64) -> Complex64 + Send + Sync>;
type InverseFn = Arc<dyn Fn(Complex64) -> Option<f64> + Send + Sync>;

/// A user-supplied curve. `shifted(t, delta)` gives the contour point
/// displaced off the curve by `delta`.
#[derive(Clone)]
pub struct CustomCurve {
    pub name: String,
    pub closed: bool,
    pub base: PointFn,
    pub shifted: Option<ShiftFn>,
    pub inverse: Option<InverseFn>,
    /// Upper bound on `|gamma'(t)|`.
    pub max_speed: f64,
}

impl fmt::Debug for CustomCurve {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomCurve")
            .field("name", &self.name)
            .field("closed", &self.closed)
            .field("max_speed", &self.max_speed)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "CurveRepr", into = "CurveRepr")]
pub enum Curve {
    /// `e^{2 pi i t}`, shifted radially to `(1 + delta) e^{2 pi i t}`.
    UnitCircle,
    /// `rho (2t - 1)`, shifted to `rho (2t - 1) + i delta`.
    RealSegment { rho: f64 },
    Custom(CustomCurve),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

impl TryFrom<CurveRepr> for Curve {
    type Error = String;

    fn try_from(r: CurveRepr) -> Result<Self, String> {
        match (r.kind.as_str(), r.rho) {
            ("unit_circle", None) => Ok(Curve::UnitCircle),
            ("real_segment", Some(rho)) => Curve::real_segment(rho).map_err(|e| e.to_string()),
            ("real_segment", None) => Err("real_segment needs rho".into()),
            (kind, _) => Err(format!("unknown or non-serializable curve kind {kind:?}")),
        }
    }
}

impl From<Curve> for CurveRepr {
    fn from(c: Curve) -> Self {
        match c {
            Curve::UnitCircle => CurveRepr {
                kind: "unit_circle".into(),
                rho: None,
            },
            Curve::RealSegment { rho } => CurveRepr {
                kind: "real_segment".into(),
                rho: Some(rho),
            },
            Curve::Custom(c) => CurveRepr {
                kind: c.name,
                rho: None,
            },
        }
    }
}

impl Curve {
    pub fn real_segment(rho: f64) -> CurveResult<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(CurveError::BadRadius(rho));
        }
        Ok(Curve::RealSegment { rho })
    }

    pub fn name(&self) -> &str {
        match self {
            Curve::UnitCircle => "unit_circle",
            Curve::RealSegment { .. } => "real_segment",
            Curve::Custom(c) => &c.name,
        }
    }

    pub fn is_closed(&self) -> bool {
        match self {
            Curve::UnitCircle => true,
            Curve::RealSegment { .. } => false,
            Curve::Custom(c) => c.closed,
        }
    }

    pub fn eval(&self, t: f64) -> Complex64 {
        match self {
            Curve::UnitCircle => unit_phase(t),
            Curve::RealSegment { rho } => Complex64::new(rho * (2.0 * t - 1.0), 0.0),
            Curve::Custom(c) => (c.base)(t),
        }
    }

    pub fn shifted(&self, t: f64, delta: f64) -> CurveResult<Complex64> {
        match self {
            Curve::UnitCircle => Ok(unit_phase(t) * (1.0 + delta)),
            Curve::RealSegment { rho } => Ok(Complex64::new(rho * (2.0 * t - 1.0), delta)),
            Curve::Custom(c) => c
                .shifted
                .as_ref()
                .map(|f| f(t, delta))
                .ok_or_else(|| CurveError::UnsupportedCurve(c.name.clone())),
        }
    }

    /// Parameter `t` with `gamma(t) = lambda`, for points on the curve. For
    /// the circle this is the phase of `lambda` over `2 pi`, in [0, 1).
    pub fn parameter_of(&self, lambda: Complex64) -> Option<f64> {
        match self {
            Curve::UnitCircle => {
                let t = lambda.arg() / (2.0 * PI);
                Some(if t < 0.0 { (t + 1.0).min(next_below_one()) } else { t })
            }
            Curve::RealSegment { rho } => Some((lambda.re / rho + 1.0) / 2.0),
            Curve::Custom(c) => c.inverse.as_ref().and_then(|f| f(lambda)),
        }
    }

    pub fn max_speed(&self) -> f64 {
        match self {
            Curve::UnitCircle => 2.0 * PI,
            Curve::RealSegment { rho } => 2.0 * rho,
            Curve::Custom(c) => c.max_speed,
        }
    }
}

fn next_below_one() -> f64 {
    1.0 - f64::EPSILON / 2.0
}

/// `e^{2 pi i t}`, exact at multiples of 1/8.
pub fn unit_phase(t: f64) -> Complex64 {
    let (s, c) = (2.0 * PI * t).sin_cos();
    let eighths = t * 8.0;
    if eighths == eighths.round() {
        let k = (eighths.round() as i64).rem_euclid(8);
        let r = 0.5f64.sqrt();
        let exact = [
            (1.0, 0.0),
            (r, r),
            (0.0, 1.0),
            (-r, r),
            (-1.0, 0.0),
            (-r, -r),
            (0.0, -1.0),
            (r, -r),
        ][k as usize];
        return Complex64::new(exact.0, exact.1);
    }
    Complex64::new(c, s)
}

/// Grid `z_j = gamma_delta(j / 2^a)` for `j = 0..2^a`. Points are generated
/// on demand so exponents up to 63 can be described without storage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscretizedCurve {
    pub curve: Curve,
    pub a: u32,
    pub delta: f64,
}

pub fn discretize(curve: &Curve, a: u32, delta: f64) -> CurveResult<DiscretizedCurve> {
    if a == 0 || a > MAX_GRID_EXPONENT {
        return Err(CurveError::BadExponent {
            a,
            max: MAX_GRID_EXPONENT,
        });
    }
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(CurveError::BadShift(delta));
    }
    curve.shifted(0.0, delta)?;
    Ok(DiscretizedCurve {
        curve: curve.clone(),
        a,
        delta,
    })
}

impl DiscretizedCurve {
    pub fn len(&self) -> u64 {
        1u64 << self.a
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_f64(&self) -> f64 {
        (self.a as f64).exp2()
    }

    pub fn t(&self, j: u64) -> f64 {
        j as f64 / self.n_f64()
    }

    pub fn point(&self, j: u64) -> Complex64 {
        self.curve
            .shifted(self.t(j), self.delta)
            .expect("shift rule checked at construction")
    }

    pub fn points(&self) -> CurveResult<Vec<Complex64>> {
        if self.len() > MAX_MATERIALIZED_POINTS {
            return Err(CurveError::TooLarge { a: self.a });
        }
        Ok((0..self.len()).map(|j| self.point(j)).collect())
    }
}

/// `(1/N) sum_{j = ceil(N t_min)}^{floor(N t_max)} f(j/N)` with `N = 2^a`,
/// both ends inclusive.
pub fn riemann_sum<F>(f: F, a: u32, t_min: f64, t_max: f64) -> f64
where
    F: Fn(f64) -> f64 + Sync,
{
    let n = (a as f64).exp2();
    let lo = (n * t_min).ceil() as i64;
    let hi = (n * t_max).floor() as i64;
    if hi < lo {
        return 0.0;
    }
    let count = (hi - lo + 1) as u64;
    det_sum(0..count, |k| f((lo + k as i64) as f64 / n)) / n
}

/// Bound on `|integral - riemann_sum|` for the inclusive left-point sum.
pub fn riemann_error_bound(max_deriv: f64, max_abs: f64, a: u32, t_min: f64, t_max: f64) -> f64 {
    let n = (a as f64).exp2();
    let w = t_max - t_min;
    (w * w / 2.0 * max_deriv + 2.0 * max_abs) / n
}

/// Grid indices `j` with `|j/N - center| <= eps`, distance taken mod 1 when
/// `modular`. Stored as at most two inclusive index ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowProjector {
    pub center: f64,
    pub eps: f64,
    pub a: u32,
    pub modular: bool,
    pub ranges: Vec<(u64, u64)>,
}

pub fn window(center: f64, eps: f64, a: u32, modular: bool) -> CurveResult<WindowProjector> {
    if a == 0 || a > MAX_GRID_EXPONENT {
        return Err(CurveError::BadExponent {
            a,
            max: MAX_GRID_EXPONENT,
        });
    }
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(CurveError::BadWindow(eps));
    }
    let n_u = 1u64 << a;
    let n = n_u as f64;
    let inside = |j: i128| -> bool {
        let d = (j as f64 / n - center).abs();
        if modular {
            let d = d.rem_euclid(1.0);
            d.min(1.0 - d) <= eps
        } else {
            d <= eps
        }
    };
    let mut ranges = Vec::new();
    if modular && eps >= 0.5 {
        ranges.push((0, n_u - 1));
    } else {
        let mut lo = (n * (center - eps)).ceil() as i128;
        let mut hi = (n * (center + eps)).floor() as i128;
        while inside(lo - 1) && lo - 1 >= hi - n_u as i128 {
            lo -= 1;
        }
        while lo <= hi && !inside(lo) {
            lo += 1;
        }
        while inside(hi + 1) && hi + 1 <= lo + n_u as i128 {
            hi += 1;
        }
        while hi >= lo && !inside(hi) {
            hi -= 1;
        }
        if modular {
            if hi - lo + 1 >= n_u as i128 {
                ranges.push((0, n_u - 1));
            } else if hi >= lo {
                let l = lo.rem_euclid(n_u as i128) as u64;
                let h = hi.rem_euclid(n_u as i128) as u64;
                if l <= h {
                    ranges.push((l, h));
                } else {
                    ranges.push((0, h));
                    ranges.push((l, n_u - 1));
                }
            }
        } else {
            let l = lo.max(0);
            let h = hi.min(n_u as i128 - 1);
            if h >= l {
                ranges.push((l as u64, h as u64));
            }
        }
    }
    Ok(WindowProjector {
        center,
        eps,
        a,
        modular,
        ranges,
    })
}

impl WindowProjector {
    pub fn contains(&self, j: u64) -> bool {
        self.ranges.iter().any(|&(l, h)| l <= j && j <= h)
    }

    pub fn len(&self) -> u64 {
        self.ranges.iter().map(|&(l, h)| h - l + 1).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = u64> + '_ {
        self.ranges.iter().flat_map(|&(l, h)| l..=h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn discretize_examples() {
        let d = discretize(&Curve::UnitCircle, 2, 0.0).unwrap();
        let want = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, w) in d.points().unwrap().iter().zip(want) {
            assert_eq!(*p, Complex64::new(w.0, w.1));
        }

        let d = discretize(&Curve::UnitCircle, 1, 0.5).unwrap();
        let pts = d.points().unwrap();
        assert_eq!(pts, vec![Complex64::new(1.5, 0.0), Complex64::new(-1.5, 0.0)]);

        let d = discretize(&Curve::real_segment(1.0).unwrap(), 2, 0.1).unwrap();
        let want = [-1.0, -0.5, 0.0, 0.5];
        for (p, w) in d.points().unwrap().iter().zip(want) {
            assert!(close(*p, Complex64::new(w, 0.1)));
        }
    }

    #[test]
    fn discretize_rejects_bad_input() {
        assert!(discretize(&Curve::UnitCircle, 0, 0.1).is_err());
        assert!(discretize(&Curve::UnitCircle, 64, 0.1).is_err());
        assert!(discretize(&Curve::UnitCircle, 3, -0.1).is_err());
        assert!(Curve::real_segment(0.0).is_err());
        let big = discretize(&Curve::UnitCircle, 40, 0.1).unwrap();
        assert!(matches!(big.points(), Err(CurveError::TooLarge { a: 40 })));
        assert!(close(big.point(1 << 38), Complex64::new(0.0, 1.1)));
    }

    #[test]
    fn riemann_sum_examples() {
        assert_eq!(riemann_sum(|_| 1.0, 3, 0.0, 1.0), 9.0 / 8.0);
        assert_eq!(riemann_sum(|t| t, 2, 0.0, 1.0), 0.625);
        assert_eq!(riemann_sum(|t| t, 2, 0.3, 0.6), 0.125);
    }

    #[test]
    fn riemann_error_bound_examples() {
        assert_eq!(riemann_error_bound(1.0, 1.0, 2, 0.0, 1.0), 0.625);
        assert_eq!(riemann_error_bound(0.0, 0.0, 10, 0.0, 1.0), 0.0);
        // Circle density bounds at delta = 0.1: |g'| <= 6 sqrt(2) pi / delta^2,
        // |g| <= 1 + 2 / delta.
        let deriv = 6.0 * 2f64.sqrt() * PI / 0.01;
        let bound = riemann_error_bound(deriv, 21.0, 10, 0.0, 1.0);
        assert_relative_eq!(bound, (0.5 * deriv + 42.0) / 1024.0, max_relative = 1e-15);
        assert_relative_eq!(bound, 1.34264, max_relative = 1e-5);
    }

    #[test]
    fn window_examples() {
        let w = window(0.5, 0.1, 3, false).unwrap();
        assert_eq!(w.indices().collect::<Vec<_>>(), vec![4]);

        let w = window(0.0, 0.13, 3, true).unwrap();
        let mut idx: Vec<u64> = w.indices().collect();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 7]);
        assert!(w.contains(7) && w.contains(0) && w.contains(1) && !w.contains(2));

        let w = window(0.3, 1.0, 4, true).unwrap();
        assert_eq!(w.len(), 16);
    }

    #[test]
    fn window_clips_open_curves() {
        let w = window(0.02, 0.1, 4, false).unwrap();
        assert_eq!(w.ranges, vec![(0, 1)]);
        let w = window(0.98, 0.1, 4, false).unwrap();
        assert_eq!(w.ranges, vec![(15, 15)]);
    }

    #[test]
    fn parameter_inverts_curve() {
        for &t in &[0.0, 0.125, 0.3, 0.75, 0.999] {
            let z = Curve::UnitCircle.eval(t);
            assert_relative_eq!(Curve::UnitCircle.parameter_of(z).unwrap(), t, epsilon = 1e-12);
            let seg = Curve::real_segment(0.6).unwrap();
            assert_relative_eq!(seg.parameter_of(seg.eval(t)).unwrap(), t, epsilon = 1e-12);
        }
    }

    #[test]
    fn curve_json() {
        let s = serde_json::to_string(&Curve::real_segment(0.6).unwrap()).unwrap();
        assert_eq!(s, r#"{"kind":"real_segment","rho":0.6}"#);
        let c: Curve = serde_json::from_str(r#"{"kind":"unit_circle"}"#).unwrap();
        assert!(matches!(c, Curve::UnitCircle));
        assert!(serde_json::from_str::<Curve>(r#"{"kind":"spiral"}"#).is_err());
    }
}
