//! The discretized resolvent state `sum_j |j> (z_j I - A)^{-1} psi` and its
//! per-eigenvalue decomposition. The block-diagonal operator `M` is never
//! formed; each block is solved on its own.

use crate::curves::{Curve, CurveError, DiscretizedCurve};
use crate::matgen::GeneratedMatrix;
use crate::numkit::{spectral_norm, ComplexVector, DualBasis, LuFactors, NumError};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Grid points closer than this to an eigenvalue are rejected.
pub const MIN_CONTOUR_DISTANCE: f64 = 1e-10;

/// Largest joint state (grid points times dimension) that is materialized.
pub const JOINT_CAP: u64 = 1 << 26;

/// Relative tolerance for `psi` lying in the span of the eigenvector columns.
pub const SPAN_TOLERANCE: f64 = 1e-8;

/// Grid size up to which `m_inverse_norm_bound` scans every block.
const FULL_SCAN_POINTS: u64 = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResolventError {
    #[error("grid point {j} is {distance:.3e} from eigenvalue {lambda}")]
    SpectrumOnContour {
        j: u64,
        lambda: Complex64,
        distance: f64,
    },
    #[error("input state is not in the span of the eigenvector columns (residual {residual:.3e})")]
    NotInSpan { residual: f64 },
    #[error("joint state with {entries} entries exceeds the cap of {cap}")]
    TooLarge { entries: u64, cap: u64 },
    #[error("measured block norm {measured:.6e} exceeds the Kreiss bound {bound:.6e}")]
    BoundViolated { measured: f64, bound: f64 },
    #[error("curve {0} has no closed-form amplitude prefactor")]
    MissingPrefactor(String),
    #[error("state dimension {actual} does not match matrix dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Curve(#[from] CurveError),
}

pub type ResolventResult<T> = Result<T, ResolventError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMode {
    /// LU solve of each block `z_j I - A`.
    Direct,
    /// `T (z_j I - J)^{-1} T^{-1}` with the Toeplitz Jordan-block inverse.
    #[default]
    Analytic,
}

#[derive(Debug, Clone)]
pub struct ResolventSystem {
    pub gm: GeneratedMatrix,
    pub dcurve: DiscretizedCurve,
    /// Amplitude normalization: `sqrt(delta (2 + delta) / N)` on the circle,
    /// `sqrt(2 rho delta / (pi N))` on the segment.
    pub prefactor: f64,
    /// Block-encoding normalization of `M`: `max |z_j| + alpha_A`.
    pub alpha_m: f64,
    pub mode: SolveMode,
}

/// Closed-form prefactor for the built-in curves.
pub fn curve_prefactor(dcurve: &DiscretizedCurve) -> Option<f64> {
    let n = dcurve.n_f64();
    let d = dcurve.delta;
    match dcurve.curve {
        Curve::UnitCircle => Some((d * (2.0 + d) / n).sqrt()),
        Curve::RealSegment { rho } => Some((2.0 * rho * d / (PI * n)).sqrt()),
        Curve::Custom(_) => None,
    }
}

fn contour_radius(dcurve: &DiscretizedCurve) -> f64 {
    let d = dcurve.delta;
    match dcurve.curve {
        Curve::UnitCircle => 1.0 + d,
        Curve::RealSegment { rho } => (rho * rho + d * d).sqrt(),
        Curve::Custom(_) => {
            let step = (dcurve.len() / 4096).max(1);
            (0..dcurve.len())
                .step_by(step as usize)
                .map(|j| dcurve.point(j).norm())
                .fold(0.0, f64::max)
        }
    }
}

/// Grid indices worth checking for the closest approach to `lambda`.
fn candidate_indices(dcurve: &DiscretizedCurve, lambda: Complex64) -> Vec<u64> {
    let n = dcurve.len();
    if n <= FULL_SCAN_POINTS * 64 || matches!(dcurve.curve, Curve::Custom(_)) {
        return (0..n).collect();
    }
    let nf = dcurve.n_f64();
    let t = match dcurve.curve {
        Curve::UnitCircle => Curve::UnitCircle.parameter_of(lambda).unwrap_or(0.0),
        Curve::RealSegment { rho } => ((lambda.re / rho + 1.0) / 2.0).clamp(0.0, 1.0),
        Curve::Custom(_) => unreachable!(),
    };
    let j0 = (t * nf).round() as i128;
    (j0 - 2..=j0 + 2)
        .map(|j| j.rem_euclid(n as i128) as u64)
        .collect()
}

pub fn build_system(gm: &GeneratedMatrix, dcurve: &DiscretizedCurve, mode: SolveMode) -> ResolventResult<ResolventSystem> {
    let prefactor =
        curve_prefactor(dcurve).ok_or_else(|| ResolventError::MissingPrefactor(dcurve.curve.name().to_string()))?;
    build_system_with_prefactor(gm, dcurve, mode, prefactor)
}

pub fn build_system_with_prefactor(
    gm: &GeneratedMatrix,
    dcurve: &DiscretizedCurve,
    mode: SolveMode,
    prefactor: f64,
) -> ResolventResult<ResolventSystem> {
    for &(lambda, _) in &gm.spec.blocks {
        let closest = candidate_indices(dcurve, lambda)
            .into_par_iter()
            .map(|j| (j, (dcurve.point(j) - lambda).norm()))
            .reduce(|| (0, f64::INFINITY), |a, b| if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
        if closest.1 < MIN_CONTOUR_DISTANCE {
            return Err(ResolventError::SpectrumOnContour {
                j: closest.0,
                lambda,
                distance: closest.1,
            });
        }
    }
    Ok(ResolventSystem {
        gm: gm.clone(),
        dcurve: dcurve.clone(),
        prefactor,
        alpha_m: contour_radius(dcurve) + gm.alpha,
        mode,
    })
}

/// `(zI - J)^{-1} w` for the block-diagonal Jordan matrix. On a block
/// `J(lambda, d)` the inverse is lower-triangular Toeplitz with entries
/// `(z - lambda)^{-(r - c + 1)}`.
pub fn jordan_resolvent_apply(blocks: &[(Complex64, usize)], z: Complex64, w: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w.len()];
    let mut off = 0;
    for &(lambda, d) in blocks {
        let inv = (z - lambda).inv();
        let mut powers = Vec::with_capacity(d);
        let mut p = inv;
        for _ in 0..d {
            powers.push(p);
            p *= inv;
        }
        for r in 0..d {
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..=r {
                s += powers[r - c] * w[off + c];
            }
            out[off + r] = s;
        }
        off += d;
    }
    out
}

impl ResolventSystem {
    pub fn dim(&self) -> usize {
        self.gm.dim()
    }

    /// `(z_j I - A)^{-1} v`.
    pub fn apply_block(&self, j: u64, v: &[Complex64]) -> ResolventResult<Vec<Complex64>> {
        let z = self.dcurve.point(j);
        match self.mode {
            SolveMode::Direct => {
                let op = self.gm.matrix.shifted_resolvent_operand(z);
                Ok(LuFactors::new(&op)?.solve(v)?)
            }
            SolveMode::Analytic => {
                let w = self.gm.t_inv.matvec(v);
                let y = jordan_resolvent_apply(&self.gm.spec.blocks, z, &w);
                Ok(self.gm.t.matvec(&y))
            }
        }
    }

    fn apply_block_with_tinv(&self, j: u64, v: &[Complex64], w: &[Complex64]) -> ResolventResult<Vec<Complex64>> {
        match self.mode {
            SolveMode::Direct => self.apply_block(j, v),
            SolveMode::Analytic => {
                let y = jordan_resolvent_apply(&self.gm.spec.blocks, self.dcurve.point(j), w);
                Ok(self.gm.t.matvec(&y))
            }
        }
    }

    /// `||(z_j I - A)^{-1}||`.
    pub fn block_norm(&self, j: u64) -> ResolventResult<f64> {
        let z = self.dcurve.point(j);
        let op = self.gm.matrix.shifted_resolvent_operand(z);
        Ok(spectral_norm(&LuFactors::new(&op)?.inverse()))
    }
}

/// One term `beta_l phi_l (x) s_l` of the joint state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigenComponent {
    pub block: usize,
    pub lambda: Complex64,
    pub beta: Complex64,
    pub eigvec: ComplexVector,
}

/// Joint state `prefactor * sum_j |j> (z_j I - A)^{-1} psi`, i.e. the
/// unnormalized output of the block solve scaled so that each on-curve
/// component `prefactor / (z_j - lambda_l)` has norm close to one.
/// Multiply by [`ResolventState::qlsa_scale`] to get `M^{-1} |+>|psi>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventState {
    pub dcurve: DiscretizedCurve,
    pub prefactor: f64,
    pub dim: usize,
    pub components: Vec<EigenComponent>,
    /// Row-major `N x dim`; absent when larger than [`JOINT_CAP`].
    pub joint: Option<Vec<Complex64>>,
    pub perturbed: bool,
}

impl ResolventState {
    pub fn grid_len(&self) -> u64 {
        self.dcurve.len()
    }

    pub fn qlsa_scale(&self) -> f64 {
        1.0 / (self.prefactor * self.dcurve.n_f64().sqrt())
    }

    /// `prefactor / (z_j - lambda_l)`.
    pub fn amplitude(&self, l: usize, j: u64) -> Complex64 {
        (self.dcurve.point(j) - self.components[l].lambda).inv() * self.prefactor
    }

    pub fn component_vector(&self, l: usize) -> ResolventResult<Vec<Complex64>> {
        if self.grid_len() > JOINT_CAP {
            return Err(ResolventError::TooLarge {
                entries: self.grid_len(),
                cap: JOINT_CAP,
            });
        }
        Ok((0..self.grid_len()).map(|j| self.amplitude(l, j)).collect())
    }

    pub fn joint_row(&self, j: u64) -> Option<&[Complex64]> {
        let n = self.dim;
        self.joint.as_ref().map(|v| &v[j as usize * n..(j as usize + 1) * n])
    }

    /// `sum_l beta_l amplitude_l(j) s_l`, the row implied by the decomposition.
    pub fn reconstructed_row(&self, j: u64) -> Vec<Complex64> {
        let mut row = ComplexVector::zeros(self.dim);
        for (l, c) in self.components.iter().enumerate() {
            row.axpy(c.beta * self.amplitude(l, j), &c.eigvec);
        }
        row.0
    }

    pub fn joint_norm_sqr(&self) -> Option<f64> {
        self.joint.as_ref().map(|v| v.iter().map(|z| z.norm_sqr()).sum())
    }

    /// Copy with a random perturbation of norm `eps_st / 2` times the joint
    /// norm added, modelling an inexact linear solve.
    pub fn perturbed(&self, eps_st: f64, seed: u64) -> ResolventResult<Self> {
        let joint = self.joint.as_ref().ok_or(ResolventError::TooLarge {
            entries: self.grid_len() * self.dim as u64,
            cap: JOINT_CAP,
        })?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<Complex64> = joint
            .iter()
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect();
        let noise_norm = noise.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let scale = 0.5 * eps_st * self.joint_norm_sqr().unwrap_or(0.0).sqrt() / noise_norm;
        let mut out = self.clone();
        out.joint = Some(joint.iter().zip(&noise).map(|(a, e)| a + e * scale).collect());
        out.perturbed = true;
        Ok(out)
    }
}

/// Decomposes `psi` over the designated eigenvectors and, when it fits,
/// materializes the joint state.
pub fn resolvent_state(sys: &ResolventSystem, psi: &ComplexVector) -> ResolventResult<ResolventState> {
    let n = sys.dim();
    if psi.len() != n {
        return Err(ResolventError::DimensionMismatch {
            expected: n,
            actual: psi.len(),
        });
    }
    let dual = DualBasis::new(&sys.gm.eigvec_columns)?;
    let betas = dual.coefficients(psi.as_slice());
    let residual = dual.combine(&betas).distance(psi);
    if residual > SPAN_TOLERANCE * psi.norm().max(1.0) {
        return Err(ResolventError::NotInSpan { residual });
    }
    let components = sys
        .gm
        .designated
        .iter()
        .zip(&betas)
        .zip(&sys.gm.eigvec_columns)
        .map(|((&block, &beta), s)| EigenComponent {
            block,
            lambda: sys.gm.eigenvalue(block),
            beta,
            eigvec: s.clone(),
        })
        .collect();
    let grid = sys.dcurve.len();
    let joint = if grid.saturating_mul(n as u64) <= JOINT_CAP {
        let w = sys.gm.t_inv.matvec(psi.as_slice());
        let rows: Vec<Vec<Complex64>> = (0..grid)
            .into_par_iter()
            .map(|j| sys.apply_block_with_tinv(j, psi.as_slice(), &w))
            .collect::<ResolventResult<_>>()?;
        Some(
            rows.into_iter()
                .flatten()
                .map(|z| z * sys.prefactor)
                .collect(),
        )
    } else {
        None
    };
    Ok(ResolventState {
        dcurve: sys.dcurve.clone(),
        prefactor: sys.prefactor,
        dim: n,
        components,
        joint,
        perturbed: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MInverseCheck {
    /// `K / delta`.
    pub bound: f64,
    /// Largest `||(z_j I - A)^{-1}||` found.
    pub measured: f64,
    pub argmax_j: u64,
    /// Whether every block was examined (otherwise a subsample plus the
    /// points nearest each eigenvalue).
    pub exhaustive: bool,
}

/// Checks `||M^{-1}|| = max_j ||(z_j I - A)^{-1}|| <= K / delta`.
pub fn m_inverse_norm_bound(sys: &ResolventSystem, kreiss_value: f64) -> ResolventResult<MInverseCheck> {
    let bound = kreiss_value / sys.dcurve.delta;
    let grid = sys.dcurve.len();
    let exhaustive = grid <= FULL_SCAN_POINTS;
    let mut idx: Vec<u64> = if exhaustive {
        (0..grid).collect()
    } else {
        let step = grid / FULL_SCAN_POINTS;
        let mut v: Vec<u64> = (0..FULL_SCAN_POINTS).map(|k| k * step).collect();
        for &(lambda, _) in &sys.gm.spec.blocks {
            v.extend(candidate_indices(&sys.dcurve, lambda).into_iter().take(64));
        }
        v
    };
    idx.sort_unstable();
    idx.dedup();
    let norms: Vec<(u64, f64)> = idx
        .par_iter()
        .map(|&j| sys.block_norm(j).map(|v| (j, v)))
        .collect::<ResolventResult<_>>()?;
    let (argmax_j, measured) = norms
        .into_iter()
        .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
    if measured > bound * (1.0 + 1e-6) {
        return Err(ResolventError::BoundViolated { measured, bound });
    }
    Ok(MInverseCheck {
        bound,
        measured,
        argmax_j,
        exhaustive,
    })
}
