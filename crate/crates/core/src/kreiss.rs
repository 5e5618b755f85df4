//! Sampled Kreiss constants on a shifted circle or a shifted imaginary line,
//! and the closed-form bounds for Jordan-structured matrices.

use crate::curves::unit_phase;
use crate::matgen::GeneratedMatrix;
use crate::numkit::{spectral_norm, ComplexMatrix, LuFactors, NumError};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SAMPLES: usize = 4096;
pub const REFINEMENT_PASSES: usize = 3;
const REFINED_PEAKS: usize = 3;
const GOLDEN_ITERATIONS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KreissError {
    #[error("contour point {z} hits the spectrum")]
    ContourHitsSpectrum { z: Complex64 },
    #[error("delta must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("need at least 3 samples, got {0}")]
    BadSamples(usize),
    #[error("line half-range must be positive, got {0}")]
    BadRange(f64),
}

pub type KreissResult<T> = Result<T, KreissError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contour {
    /// `|z| = 1 + delta`.
    Circle,
    /// `Re z = delta`.
    Line,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KreissEstimate {
    /// `delta * sup ||(zI - C)^{-1}||` over the sampled and refined points.
    pub value: f64,
    /// Same, over the uniform grid only.
    pub grid_value: f64,
    pub delta: f64,
    pub contour: Contour,
    pub samples: usize,
    pub refinement_passes: usize,
    pub analytic_bound: Option<f64>,
    pub argmax_z: Complex64,
}

/// `||(zI - C)^{-1}||` via an LU inverse.
pub fn resolvent_norm(c: &ComplexMatrix, z: Complex64) -> KreissResult<f64> {
    match LuFactors::new(&c.shifted_resolvent_operand(z)) {
        Ok(lu) => Ok(spectral_norm(&lu.inverse())),
        Err(NumError::SingularMatrix { .. }) => Err(KreissError::ContourHitsSpectrum { z }),
        Err(e) => panic!("unexpected factorization error: {e}"),
    }
}

/// Sample count that resolves peaks of width `delta` along a contour of the
/// given length: at least 8 points per `delta`.
pub fn adaptive_samples(length: f64, delta: f64) -> usize {
    DEFAULT_SAMPLES.max((8.0 * length / delta).ceil() as usize)
}

pub fn default_circle_samples(delta: f64) -> usize {
    adaptive_samples(2.0 * std::f64::consts::PI * (1.0 + delta), delta)
}

pub fn default_line_range(c: &ComplexMatrix) -> f64 {
    2.0 * (spectral_norm(c) + 1.0)
}

pub fn default_line_samples(y_range: f64, delta: f64) -> usize {
    adaptive_samples(2.0 * y_range, delta)
}

fn golden_max<F>(f: &F, mut lo: f64, mut hi: f64) -> KreissResult<(f64, f64)>
where
    F: Fn(f64) -> KreissResult<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 >= f2 { (x1, f1) } else { (x2, f2) })
}

/// Uniform sampling of `f` on `[lo, hi]` (right end excluded when
/// `periodic`) followed by golden-section refinement around the largest
/// local maxima. Returns `(grid max, refined max, argmax)`.
fn sample_sup<F>(f: F, lo: f64, hi: f64, samples: usize, periodic: bool) -> KreissResult<(f64, f64, f64)>
where
    F: Fn(f64) -> KreissResult<f64> + Sync,
{
    let step = if periodic {
        (hi - lo) / samples as f64
    } else {
        (hi - lo) / (samples - 1) as f64
    };
    let xs: Vec<f64> = (0..samples).map(|k| lo + step * k as f64).collect();
    let vals: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect::<KreissResult<_>>()?;
    let n = samples;
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&k| {
            let (prev, next) = if periodic {
                ((k + n - 1) % n, (k + 1) % n)
            } else {
                (k.saturating_sub(1), (k + 1).min(n - 1))
            };
            vals[k] >= vals[prev] && vals[k] >= vals[next]
        })
        .collect();
    peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    peaks.truncate(REFINED_PEAKS);
    let grid_best = (0..n).fold(0, |b, k| if vals[k] > vals[b] { k } else { b });
    let mut best = (xs[grid_best], vals[grid_best]);
    let clip = |x: f64| if periodic { x } else { x.clamp(lo, hi) };
    for k in peaks {
        let mut center = xs[k];
        let mut half = step;
        for _ in 0..REFINEMENT_PASSES {
            let (x, v) = golden_max(&f, clip(center - half), clip(center + half))?;
            if v > best.1 {
                best = (x, v);
            }
            center = x;
            half /= 16.0;
        }
    }
    Ok((vals[grid_best], best.1, best.0))
}

fn check_args(delta: f64, samples: usize) -> KreissResult<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(KreissError::BadDelta(delta));
    }
    if samples < 3 {
        return Err(KreissError::BadSamples(samples));
    }
    Ok(())
}

/// `delta * sup_{|z| = 1 + delta} ||(zI - C)^{-1}||`.
pub fn kreiss_circle(c: &ComplexMatrix, delta: f64, samples: usize) -> KreissResult<KreissEstimate> {
    check_args(delta, samples)?;
    let z_of = |t: f64| unit_phase(t) * (1.0 + delta);
    let (grid, refined, t) = sample_sup(|t| resolvent_norm(c, z_of(t)), 0.0, 1.0, samples, true)?;
    Ok(KreissEstimate {
        value: delta * refined,
        grid_value: delta * grid,
        delta,
        contour: Contour::Circle,
        samples,
        refinement_passes: REFINEMENT_PASSES,
        analytic_bound: None,
        argmax_z: z_of(t),
    })
}

/// `delta * sup_{|y| <= y_range} ||((delta + iy)I - C)^{-1}||`.
pub fn kreiss_line(c: &ComplexMatrix, delta: f64, y_range: f64, samples: usize) -> KreissResult<KreissEstimate> {
    check_args(delta, samples)?;
    if !(y_range.is_finite() && y_range > 0.0) {
        return Err(KreissError::BadRange(y_range));
    }
    let z_of = |y: f64| Complex64::new(delta, y);
    let (grid, refined, y) = sample_sup(|y| resolvent_norm(c, z_of(y)), -y_range, y_range, samples, false)?;
    Ok(KreissEstimate {
        value: delta * refined,
        grid_value: delta * grid,
        delta,
        contour: Contour::Line,
        samples,
        refinement_passes: REFINEMENT_PASSES,
        analytic_bound: None,
        argmax_z: z_of(y),
    })
}

/// `kappa_bar (1/delta)^{d-1} (1 - delta^d) / (1 - delta)`, written as
/// `kappa_bar sum_{k<d} delta^{-k}` so `delta = 1` needs no special case.
pub fn jordan_kreiss_bound(kappa_bar: f64, d: usize, delta: f64) -> f64 {
    kappa_bar * (0..d).map(|k| delta.powi(-(k as i32))).sum::<f64>()
}

/// `kappa_bar (1 - dist^d) / (dist^d (1 - dist)) = kappa_bar sum_{k=1}^d dist^{-k}`.
pub fn resolvent_norm_bound(kappa_bar: f64, d: usize, dist: f64) -> f64 {
    kappa_bar * (1..=d).map(|k| dist.powi(-(k as i32))).sum::<f64>()
}

/// Whether every eigenvalue keeps distance at least `delta` from the contour
/// in the sense required by [`jordan_kreiss_bound`].
pub fn bound_hypothesis_holds(gm: &GeneratedMatrix, contour: Contour, delta: f64) -> bool {
    gm.spec.blocks.iter().all(|&(lambda, _)| match contour {
        Contour::Circle => {
            let r = lambda.norm();
            !(r > 1.0 && r < 1.0 + 2.0 * delta)
        }
        // C = -iA, so Re lambda(C) = Im lambda(A).
        Contour::Line => !(lambda.im > 0.0 && lambda.im < 2.0 * delta),
    })
}

/// Kreiss estimate for a generated matrix: `A` on the circle, `-iA` on the
/// line, with the Jordan bound attached when its hypothesis holds.
pub fn kreiss_generated(gm: &GeneratedMatrix, contour: Contour, delta: f64) -> KreissResult<KreissEstimate> {
    let mut est = match contour {
        Contour::Circle => kreiss_circle(&gm.matrix, delta, default_circle_samples(delta))?,
        Contour::Line => {
            let c = gm.matrix.scaled(Complex64::new(0.0, -1.0));
            let y = default_line_range(&c);
            kreiss_line(&c, delta, y, default_line_samples(y, delta))?
        }
    };
    if bound_hypothesis_holds(gm, contour, delta) {
        est.analytic_bound = Some(jordan_kreiss_bound(gm.kappa_bar_witness, gm.spec.max_block(), delta));
    }
    Ok(est)
}

/// `exp(C)` by scaling and squaring a truncated Taylor series.
pub fn expm(c: &ComplexMatrix) -> ComplexMatrix {
    let n = c.dim();
    let norm1 = (0..n)
        .map(|j| (0..n).map(|i| c[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let b = c.scaled(Complex64::new(0.5f64.powi(squarings), 0.0));
    let mut term = ComplexMatrix::identity(n);
    let mut sum = ComplexMatrix::identity(n);
    for k in 1..=20 {
        term = term.matmul(&b).scaled(Complex64::new(1.0 / k as f64, 0.0));
        for (s, t) in (0..n * n).map(|i| (i / n, i % n)).map(|(i, j)| ((i, j), term[(i, j)])) {
            sum[s] += t;
        }
    }
    for _ in 0..squarings {
        sum = sum.matmul(&sum);
    }
    sum
}

/// Largest `||exp(C t)||` over `t = k t_max / steps`, `k = 0..=steps`.
/// Diagnostic for transient growth; returns `(t, norm)`.
pub fn transient_growth(c: &ComplexMatrix, t_max: f64, steps: usize) -> (f64, f64) {
    (0..=steps)
        .map(|k| {
            let t = t_max * k as f64 / steps.max(1) as f64;
            (t, spectral_norm(&expm(&c.scaled(Complex64::new(t, 0.0)))))
        })
        .fold((0.0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best })
}

/// Largest `||C^k||` for `k = 0..=k_max`; returns `(k, norm)`.
pub fn power_growth(c: &ComplexMatrix, k_max: usize) -> (usize, f64) {
    let mut p = ComplexMatrix::identity(c.dim());
    let mut best = (0, 1.0);
    for k in 1..=k_max {
        p = p.matmul(c);
        let v = spectral_norm(&p);
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}
