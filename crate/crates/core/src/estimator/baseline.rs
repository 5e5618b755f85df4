//! Classical baseline: estimate a real eigenvalue as the expectation of the
//! Hermitian part of `A` in an approximate eigenvector.

use super::{EstimatorError, EstimatorResult};
use crate::matgen::GeneratedMatrix;
use crate::numkit::ComplexVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub estimate: f64,
    /// `2 alpha e + alpha e^2` for a state at distance `e` from the eigenvector.
    pub error_bound: f64,
    pub state_error: f64,
}

pub fn baseline_error_bound(alpha_a: f64, state_error: f64) -> f64 {
    2.0 * alpha_a * state_error + alpha_a * state_error * state_error
}

/// `<v| (A + A^H)/2 |v> / <v|v>`.
pub fn baseline_expectation(gm: &GeneratedMatrix, state: &ComplexVector) -> f64 {
    let av = gm.matrix.matvec(state.as_slice());
    let num: Complex64 = state.0.iter().zip(&av).map(|(v, w)| v.conj() * w).sum();
    num.re / state.norm_sqr()
}

/// Unit eigenvector of block `k` plus a random perturbation of norm
/// `state_error` orthogonal to it.
pub fn perturbed_eigvec(gm: &GeneratedMatrix, k: usize, state_error: f64, seed: u64) -> EstimatorResult<ComplexVector> {
    if k >= gm.spec.blocks.len() {
        return Err(EstimatorError::BadParameter(format!("block {k} out of range")));
    }
    let s = gm.block_eigvec(k).normalized();
    if state_error == 0.0 {
        return Ok(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = ComplexVector(
        (0..s.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im)
            })
            .collect(),
    );
    let overlap = s.dot(&e);
    e.axpy(-overlap, &s);
    let e = e.normalized().scaled(Complex64::new(state_error, 0.0));
    let mut out = s;
    out.axpy(Complex64::new(1.0, 0.0), &e);
    Ok(out)
}

impl BaselineResult {
    pub fn for_block(gm: &GeneratedMatrix, k: usize, state_error: f64, seed: u64) -> EstimatorResult<Self> {
        let v = perturbed_eigvec(gm, k, state_error, seed)?;
        Ok(Self {
            estimate: baseline_expectation(gm, &v),
            error_bound: baseline_error_bound(gm.alpha, state_error),
            state_error,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matgen::{generate, JordanSpec};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn exact_eigenvector_of_hermitian() {
        let gm = generate(&JordanSpec::new(vec![(c(0.5), 1), (c(-0.5), 1)], 1.0, 0).with_identity_transform()).unwrap();
        let r = BaselineResult::for_block(&gm, 0, 0.0, 0).unwrap();
        assert!((r.estimate - 0.5).abs() < 1e-15);
    }

    #[test]
    fn orthogonal_perturbation_within_bound() {
        let gm = generate(&JordanSpec::new(vec![(c(0.5), 1), (c(-0.5), 1)], 1.0, 0).with_identity_transform()).unwrap();
        for seed in 0..20 {
            let r = BaselineResult::for_block(&gm, 0, 1e-3, seed).unwrap();
            assert!((r.estimate - 0.5).abs() <= 1e-3 + 1e-6);
            assert!((r.estimate - 0.5).abs() <= r.error_bound);
        }
    }

    #[test]
    fn non_normal_real_eigenvalue() {
        let spec = JordanSpec::new(vec![(c(0.3), 1), (Complex64::new(0.1, -0.4), 2)], 10.0, 4);
        let gm = generate(&spec).unwrap();
        let r = BaselineResult::for_block(&gm, 0, 0.0, 0).unwrap();
        assert!((r.estimate - 0.3).abs() < 1e-9);
    }
}
