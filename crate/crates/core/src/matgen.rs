//! Test matrices `A = T J T^{-1}` with prescribed Jordan structure, plus the
//! ground truth the estimators are checked against.

use crate::numkit::{spectral_norm, svd_extremes, ComplexMatrix, ComplexVector, NumError, RectMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for deciding that an eigenvalue sits on the target curve.
pub const ON_CURVE_TOLERANCE: f64 = 1e-12;

/// Input states with norm below this are rejected.
pub const ZERO_STATE_NORM: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatgenError {
    #[error("bad spec: {0}")]
    BadSpec(String),
    #[error("input state has norm {norm:.3e}")]
    ZeroState { norm: f64 },
    #[error("expected {expected} coefficients, got {actual}")]
    CoefficientCount { expected: usize, actual: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

pub type MatgenResult<T> = Result<T, MatgenError>;

/// Which curve the target eigenvalues live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    /// Unimodular eigenvalues, estimated on the unit circle.
    Qeue,
    /// Real eigenvalues, estimated on a real segment.
    Qere,
}

impl Problem {
    pub fn on_curve(self, lambda: Complex64) -> bool {
        match self {
            Problem::Qeue => (lambda.norm() - 1.0).abs() <= ON_CURVE_TOLERANCE,
            Problem::Qere => lambda.im.abs() <= ON_CURVE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// `T = Q1 D Q2` with Haar unitaries and a geometric singular-value ramp.
    #[default]
    Random,
    /// `T = I`.
    Identity,
    /// `T` was given directly (presets); the spec only records the blocks.
    Supplied,
}

fn is_default_transform(t: &TransformKind) -> bool {
    *t == TransformKind::Random
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JordanSpec {
    /// `(eigenvalue, block size)`, serialized as `[[re, im], d]`.
    pub blocks: Vec<(Complex64, usize)>,
    pub transform_cond: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "is_default_transform")]
    pub transform: TransformKind,
    /// Block indices whose eigenvectors make up `S`; all blocks when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub on_curve: Option<Vec<usize>>,
}

impl JordanSpec {
    pub fn new(blocks: Vec<(Complex64, usize)>, transform_cond: f64, seed: u64) -> Self {
        Self {
            blocks,
            transform_cond,
            seed,
            transform: TransformKind::Random,
            on_curve: None,
        }
    }

    pub fn with_identity_transform(mut self) -> Self {
        self.transform = TransformKind::Identity;
        self
    }

    pub fn with_on_curve(mut self, blocks: Vec<usize>) -> Self {
        self.on_curve = Some(blocks);
        self
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn max_block(&self) -> usize {
        self.blocks.iter().map(|b| b.1).max().unwrap_or(0)
    }

    fn validate(&self) -> MatgenResult<()> {
        if self.blocks.is_empty() {
            return Err(MatgenError::BadSpec("no blocks".into()));
        }
        if let Some(k) = self.blocks.iter().position(|b| b.1 == 0) {
            return Err(MatgenError::BadSpec(format!("block {k} has size 0")));
        }
        if let Some(k) = self
            .blocks
            .iter()
            .position(|b| !(b.0.re.is_finite() && b.0.im.is_finite()))
        {
            return Err(MatgenError::BadSpec(format!("block {k} eigenvalue is not finite")));
        }
        if !(self.transform_cond.is_finite() && self.transform_cond >= 1.0) {
            return Err(MatgenError::BadSpec(format!(
                "transform_cond must be >= 1, got {}",
                self.transform_cond
            )));
        }
        if let Some(on) = &self.on_curve {
            if let Some(&k) = on.iter().find(|&&k| k >= self.blocks.len()) {
                return Err(MatgenError::BadSpec(format!("on_curve block {k} out of range")));
            }
            if on.is_empty() {
                return Err(MatgenError::BadSpec("on_curve list is empty".into()));
            }
        }
        Ok(())
    }
}

/// Generated matrix with its Jordan data and the eigenvector columns of the
/// designated blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeneratedMatrix {
    pub spec: JordanSpec,
    pub matrix: ComplexMatrix,
    pub t: ComplexMatrix,
    pub t_inv: ComplexMatrix,
    pub j: ComplexMatrix,
    /// `cond(T)`, an upper bound on the best achievable diagonalizing condition number.
    pub kappa_bar_witness: f64,
    /// `||A||` rounded up to two significant figures.
    pub alpha: f64,
    pub block_offsets: Vec<usize>,
    pub designated: Vec<usize>,
    pub eigvec_columns: Vec<ComplexVector>,
    pub kappa_s: f64,
}

/// Jordan block with `lambda` on the diagonal and ones on the subdiagonal.
pub fn jordan_block(lambda: Complex64, d: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::from_diag(&vec![lambda; d]);
    for i in 1..d {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    m
}

fn block_diag(blocks: &[(Complex64, usize)]) -> ComplexMatrix {
    let n: usize = blocks.iter().map(|b| b.1).sum();
    let mut m = ComplexMatrix::zeros(n);
    let mut off = 0;
    for &(lambda, d) in blocks {
        let b = jordan_block(lambda, d);
        for i in 0..d {
            for k in 0..d {
                m[(off + i, off + k)] = b[(i, k)];
            }
        }
        off += d;
    }
    m
}

fn haar_unitary(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
    let scale = 0.5f64.sqrt();
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for k in 0..n {
        let d = r[(k, k)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, k)] *= phase;
        }
    }
    q
}

fn from_nalgebra(m: &DMatrix<Complex64>) -> ComplexMatrix {
    let n = m.nrows();
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..n {
        for k in 0..n {
            out[(i, k)] = m[(i, k)];
        }
    }
    out
}

/// Returns `(T, T^{-1})` for the spec's transform.
fn transform_pair(spec: &JordanSpec) -> (ComplexMatrix, ComplexMatrix) {
    let n = spec.dim();
    match spec.transform {
        TransformKind::Identity | TransformKind::Supplied => {
            (ComplexMatrix::identity(n), ComplexMatrix::identity(n))
        }
        TransformKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let q1 = haar_unitary(n, &mut rng);
            let q2 = haar_unitary(n, &mut rng);
            let sigma: Vec<f64> = (0..n)
                .map(|k| {
                    if n == 1 {
                        1.0
                    } else {
                        spec.transform_cond.powf(-(k as f64) / (n as f64 - 1.0))
                    }
                })
                .collect();
            let d = DMatrix::from_fn(n, n, |i, k| {
                if i == k { Complex64::new(sigma[i], 0.0) } else { Complex64::new(0.0, 0.0) }
            });
            let d_inv = DMatrix::from_fn(n, n, |i, k| {
                if i == k { Complex64::new(1.0 / sigma[i], 0.0) } else { Complex64::new(0.0, 0.0) }
            });
            let t = &q1 * d * &q2;
            let t_inv = q2.adjoint() * d_inv * q1.adjoint();
            (from_nalgebra(&t), from_nalgebra(&t_inv))
        }
    }
}

/// Rounds `x > 0` up to two significant figures.
pub fn round_up_two_sig(x: f64) -> f64 {
    if x <= 0.0 || !x.is_finite() {
        return x.max(0.0);
    }
    let scale = 10f64.powi(x.log10().floor() as i32 - 1);
    let m = x / scale;
    (m * (1.0 - 1e-12)).ceil() * scale
}

pub fn generate(spec: &JordanSpec) -> MatgenResult<GeneratedMatrix> {
    spec.validate()?;
    let (t, t_inv) = transform_pair(spec);
    GeneratedMatrix::from_parts(spec.clone(), t, t_inv)
}

impl GeneratedMatrix {
    /// Builds `A = T J T^{-1}` from an explicit transform pair.
    pub fn from_parts(spec: JordanSpec, t: ComplexMatrix, t_inv: ComplexMatrix) -> MatgenResult<Self> {
        spec.validate()?;
        let j = block_diag(&spec.blocks);
        let matrix = t.matmul(&j).matmul(&t_inv);
        let (hi, lo) = svd_extremes(&t.to_rect())?;
        let mut block_offsets = Vec::with_capacity(spec.blocks.len());
        let mut off = 0;
        for b in &spec.blocks {
            block_offsets.push(off);
            off += b.1;
        }
        let designated = spec
            .on_curve
            .clone()
            .unwrap_or_else(|| (0..spec.blocks.len()).collect());
        let alpha = round_up_two_sig(spectral_norm(&matrix));
        let mut gm = Self {
            spec,
            matrix,
            t,
            t_inv,
            j,
            kappa_bar_witness: hi / lo,
            alpha,
            block_offsets,
            designated: Vec::new(),
            eigvec_columns: Vec::new(),
            kappa_s: 1.0,
        };
        gm.set_designated(designated)?;
        Ok(gm)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Unit eigenvector of block `k`. With subdiagonal ones, the eigenvector
    /// of `J(lambda, d)` is the last basis vector of the block.
    pub fn block_eigvec(&self, k: usize) -> ComplexVector {
        let (_, d) = self.spec.blocks[k];
        self.t.column(self.block_offsets[k] + d - 1).normalized()
    }

    pub fn eigenvalue(&self, k: usize) -> Complex64 {
        self.spec.blocks[k].0
    }

    pub fn designated_eigenvalues(&self) -> Vec<Complex64> {
        self.designated.iter().map(|&k| self.eigenvalue(k)).collect()
    }

    pub fn designated_block_sizes(&self) -> Vec<usize> {
        self.designated.iter().map(|&k| self.spec.blocks[k].1).collect()
    }

    fn set_designated(&mut self, blocks: Vec<usize>) -> MatgenResult<()> {
        if blocks.is_empty() {
            return Err(MatgenError::BadSpec("no designated blocks".into()));
        }
        if let Some(&k) = blocks.iter().find(|&&k| k >= self.spec.blocks.len()) {
            return Err(MatgenError::BadSpec(format!("block {k} out of range")));
        }
        let cols: Vec<ComplexVector> = blocks.iter().map(|&k| self.block_eigvec(k)).collect();
        let (hi, lo) = svd_extremes(&RectMatrix::from_columns(&cols)?)?;
        self.designated = blocks;
        self.eigvec_columns = cols;
        self.kappa_s = hi / lo;
        Ok(())
    }

    /// Copy with `S` rebuilt from the given blocks.
    pub fn designate(&self, blocks: Vec<usize>) -> MatgenResult<Self> {
        let mut out = self.clone();
        out.spec.on_curve = Some(blocks.clone());
        out.set_designated(blocks)?;
        Ok(out)
    }

    /// Copy with `S` built from every block whose eigenvalue lies on the
    /// problem's curve.
    pub fn designate_for(&self, problem: Problem) -> MatgenResult<Self> {
        let on: Vec<usize> = (0..self.spec.blocks.len())
            .filter(|&k| problem.on_curve(self.eigenvalue(k)))
            .collect();
        self.designate(on)
    }
}

/// True when no eigenvalue falls in the excluded band next to the curve:
/// `1 < |lambda| < 1 + eps` for the circle, `0 < Im lambda < eps` for the line.
pub fn validate_exclusion(gm: &GeneratedMatrix, problem: Problem, eps: f64) -> bool {
    gm.spec.blocks.iter().all(|&(lambda, _)| match problem {
        Problem::Qeue => {
            let r = lambda.norm();
            !(r > 1.0 + ON_CURVE_TOLERANCE && r < 1.0 + eps)
        }
        Problem::Qere => !(lambda.im > ON_CURVE_TOLERANCE && lambda.im < eps),
    })
}

/// `psi = sum_l beta_l s_l`, normalized, together with the rescaled betas.
pub fn input_state(
    gm: &GeneratedMatrix,
    betas: &[Complex64],
) -> MatgenResult<(ComplexVector, Vec<Complex64>)> {
    if betas.len() != gm.eigvec_columns.len() {
        return Err(MatgenError::CoefficientCount {
            expected: gm.eigvec_columns.len(),
            actual: betas.len(),
        });
    }
    let mut psi = ComplexVector::zeros(gm.dim());
    for (b, s) in betas.iter().zip(&gm.eigvec_columns) {
        psi.axpy(*b, s);
    }
    let norm = psi.norm();
    if norm < ZERO_STATE_NORM {
        return Err(MatgenError::ZeroState { norm });
    }
    let inv = Complex64::new(1.0 / norm, 0.0);
    Ok((psi.scaled(inv), betas.iter().map(|b| b * inv).collect()))
}

/// Two-site PT-symmetric dimer `[[i g, s], [s, -i g]]`, with eigenvalues
/// `+-sqrt(s^2 - g^2)`; real (unbroken) when `s > g`.
pub fn pt_symmetric_dimer(coupling: f64, gain: f64) -> MatgenResult<GeneratedMatrix> {
    if coupling == gain {
        return Err(MatgenError::BadSpec("exceptional point s = g is defective".into()));
    }
    let mu = Complex64::new(coupling * coupling - gain * gain, 0.0).sqrt();
    let ig = Complex64::new(0.0, gain);
    let s = Complex64::new(coupling, 0.0);
    let t = ComplexMatrix::from_rows(&[vec![s, s], vec![mu - ig, -mu - ig]]);
    let t_inv = crate::numkit::LuFactors::new(&t)?.inverse();
    let (hi, lo) = svd_extremes(&t.to_rect())?;
    let spec = JordanSpec {
        blocks: vec![(mu, 1), (-mu, 1)],
        transform_cond: hi / lo,
        seed: 0,
        transform: TransformKind::Supplied,
        on_curve: None,
    };
    GeneratedMatrix::from_parts(spec, t, t_inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::spectral_norm;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn eig_residual(gm: &GeneratedMatrix, k: usize) -> f64 {
        let s = gm.block_eigvec(k);
        let lam = gm.eigenvalue(k);
        let a_s = ComplexVector(gm.matrix.matvec(s.as_slice()));
        a_s.sub(&s.scaled(lam)).norm()
    }

    #[test]
    fn unitary_diagonal_example() {
        let gm = generate(&JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(-1.0, 0.0), 1)], 1.0, 3)).unwrap();
        assert_relative_eq!(gm.kappa_bar_witness, 1.0, max_relative = 1e-12);
        assert_relative_eq!(gm.kappa_s, 1.0, max_relative = 1e-12);
        assert_relative_eq!(gm.alpha, 1.0);
        // Unitary similarity keeps A normal.
        let a = &gm.matrix;
        let comm = a.matmul(&a.adjoint()).sub(&a.adjoint().matmul(a));
        assert!(comm.max_abs() < 1e-13);
    }

    #[test]
    fn identity_transform_gives_jordan_block() {
        let gm = generate(&JordanSpec::new(vec![(c(0.0, 0.0), 2)], 1.0, 0).with_identity_transform()).unwrap();
        assert_eq!(gm.matrix, ComplexMatrix::from_real_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]));
        assert_eq!(gm.eigvec_columns, vec![ComplexVector(vec![c(0.0, 0.0), c(1.0, 0.0)])]);
    }

    #[test]
    fn conditioned_transform_example() {
        let gm = generate(&JordanSpec::new(vec![(c(0.0, 1.0), 1), (c(0.5, 0.0), 1)], 10.0, 11)).unwrap();
        assert!((gm.kappa_bar_witness - 10.0).abs() <= 1.0);
        for k in 0..2 {
            assert!(eig_residual(&gm, k) <= 1e-10 * spectral_norm(&gm.matrix));
        }
        assert!(gm.alpha >= spectral_norm(&gm.matrix) * (1.0 - 1e-12));
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(matches!(
            generate(&JordanSpec::new(vec![(c(1.0, 0.0), 0)], 1.0, 0)),
            Err(MatgenError::BadSpec(_))
        ));
        assert!(matches!(
            generate(&JordanSpec::new(vec![(c(1.0, 0.0), 1)], 0.5, 0)),
            Err(MatgenError::BadSpec(_))
        ));
    }

    #[test]
    fn exclusion_examples() {
        let ok = generate(&JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(2.0, 0.0), 1)], 1.0, 0)).unwrap();
        assert!(validate_exclusion(&ok, Problem::Qeue, 0.1));
        let bad = generate(&JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(1.05, 0.0), 1)], 1.0, 0)).unwrap();
        assert!(!validate_exclusion(&bad, Problem::Qeue, 0.1));
        let line = generate(&JordanSpec::new(vec![(c(0.3, 0.0), 1), (c(0.7, -0.2), 1)], 1.0, 0)).unwrap();
        assert!(validate_exclusion(&line, Problem::Qere, 0.1));
        let line_bad = generate(&JordanSpec::new(vec![(c(0.3, 0.0), 1), (c(0.7, 0.05), 1)], 1.0, 0)).unwrap();
        assert!(!validate_exclusion(&line_bad, Problem::Qere, 0.1));
    }

    #[test]
    fn input_state_normalizes_sixty_degree_pair() {
        // Eigenvectors 60 degrees apart: |s0 - s1|^2 = 2 - 2 cos 60 = 1.
        let h = 3f64.sqrt() / 2.0;
        let t = ComplexMatrix::from_real_rows(&[vec![1.0, 0.5], vec![0.0, h]]);
        let t_inv = crate::numkit::LuFactors::new(&t).unwrap().inverse();
        let spec = JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(-1.0, 0.0), 1)], 1.0, 0);
        let gm = GeneratedMatrix::from_parts(spec, t, t_inv).unwrap();
        let (psi, betas) = input_state(&gm, &[c(1.0, 0.0), c(-1.0, 0.0)]).unwrap();
        assert_relative_eq!(psi.norm(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(betas[0].re, 1.0, max_relative = 1e-14);
        assert!(matches!(
            input_state(&gm, &[c(0.0, 0.0), c(0.0, 0.0)]),
            Err(MatgenError::ZeroState { .. })
        ));
    }

    #[test]
    fn designate_for_picks_curve_blocks() {
        let spec = JordanSpec::new(vec![(c(0.0, 1.0), 2), (c(0.5, 0.0), 1), (c(-1.0, 0.0), 1)], 5.0, 9);
        let gm = generate(&spec).unwrap().designate_for(Problem::Qeue).unwrap();
        assert_eq!(gm.designated, vec![0, 2]);
        assert_eq!(gm.eigvec_columns.len(), 2);
        assert!(eig_residual(&gm, 0) < 1e-10 * gm.alpha);
    }

    #[test]
    fn pt_dimer_eigenpairs() {
        let gm = pt_symmetric_dimer(1.0, 0.6).unwrap();
        assert_relative_eq!(gm.eigenvalue(0).re, 0.8, max_relative = 1e-14);
        let want = ComplexMatrix::from_rows(&[vec![c(0.0, 0.6), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, -0.6)]]);
        assert!(gm.matrix.sub(&want).max_abs() < 1e-14);
        for k in 0..2 {
            assert!(eig_residual(&gm, k) < 1e-14);
        }
        assert!(pt_symmetric_dimer(1.0, 1.0).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = JordanSpec::new(vec![(c(1.0, 0.0), 1), (c(-1.0, 0.5), 2)], 2.0, 7);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"blocks":[[[1.0,0.0],1],[[-1.0,0.5],2]],"transform_cond":2.0,"seed":7}"#);
        let back: JordanSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn alpha_rounding() {
        assert_eq!(round_up_two_sig(1.0), 1.0);
        assert_relative_eq!(round_up_two_sig(1.234), 1.3, max_relative = 1e-12);
        assert_relative_eq!(round_up_two_sig(0.0456), 0.046, max_relative = 1e-12);
        assert_relative_eq!(round_up_two_sig(97.1), 98.0, max_relative = 1e-12);
    }
}
