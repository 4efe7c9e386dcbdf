//! Dense complex linear algebra for small quantum states.
//!
//! Pure states are normalized amplitude vectors; density matrices are
//! Hermitian, positive semidefinite and unit trace. Both are validated at
//! construction, so every value of these types satisfies its invariants.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const NORM_TOL: f64 = 1e-9;
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-9;
/// Eigenvalues down to this value are treated as numerical zero.
pub const NEG_EIGEN_TOL: f64 = 1e-8;

pub(crate) const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: CVector,
}

impl PureState {
    /// Wraps already-normalized amplitudes.
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::Domain("state must have dimension ≥ 1".into()));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm_sq });
        }
        Ok(Self {
            amplitudes: CVector::from_vec(amplitudes),
        })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: Vec<Complex64>) -> Result<Self> {
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if amplitudes.is_empty() || norm_sq == 0.0 || !norm_sq.is_finite() {
            return Err(Error::NotNormalized { norm_sq });
        }
        let scale = 1.0 / norm_sq.sqrt();
        Ok(Self {
            amplitudes: CVector::from_iterator(
                amplitudes.len(),
                amplitudes.into_iter().map(|a| a * scale),
            ),
        })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim, "basis index {index} out of range for dim {dim}");
        let mut amplitudes = CVector::zeros(dim);
        amplitudes[index] = ONE;
        Self { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        check_dim(self.dim(), other.dim())?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// |self⟩ ⊗ |other⟩, with `self` as the slow (arm A) index.
    pub fn tensor(&self, other: &PureState) -> PureState {
        PureState {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotPhysical(format!(
                "matrix is {}×{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::NotPhysical(format!("trace = {trace}")));
        }
        let min_eig = hermitian_eigen(&matrix)
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min_eig < -NEG_EIGEN_TOL {
            return Err(Error::NotPhysical(format!("minimum eigenvalue {min_eig:e}")));
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        debug_assert!(matrix.is_square());
        Self { matrix }
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        Self {
            matrix: a * a.adjoint(),
        }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim) * Complex64::new(1.0 / dim as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// ⟨ψ|ρ|ψ⟩
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        check_dim(self.dim(), psi.dim())?;
        let a = psi.amplitudes();
        Ok(a.dotc(&(&self.matrix * a)).re)
    }

    /// Reduced state of one arm of a `dim_a × dim_b` bipartite state.
    pub fn partial_trace(&self, dim_a: usize, dim_b: usize, keep_a: bool) -> Result<DensityMatrix> {
        check_dim(self.dim(), dim_a * dim_b)?;
        let keep = if keep_a { dim_a } else { dim_b };
        let mut out = CMatrix::zeros(keep, keep);
        for i in 0..keep {
            for j in 0..keep {
                let mut acc = ZERO;
                if keep_a {
                    for k in 0..dim_b {
                        acc += self.matrix[(i * dim_b + k, j * dim_b + k)];
                    }
                } else {
                    for k in 0..dim_a {
                        acc += self.matrix[(k * dim_b + i, k * dim_b + j)];
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(DensityMatrix::from_matrix_unchecked(out))
    }

    pub fn to_json(&self) -> DensityMatrixJson {
        let d = self.dim();
        let mut re = Vec::with_capacity(d * d);
        let mut im = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                re.push(self.matrix[(i, j)].re);
                im.push(self.matrix[(i, j)].im);
            }
        }
        DensityMatrixJson { dim: d, re, im }
    }

    pub fn from_json(json: &DensityMatrixJson) -> Result<Self> {
        let n = json.dim * json.dim;
        if json.re.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: json.re.len(),
            });
        }
        if json.im.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: json.im.len(),
            });
        }
        let matrix = CMatrix::from_fn(json.dim, json.dim, |i, j| {
            let k = i * json.dim + j;
            Complex64::new(json.re[k], json.im[k])
        });
        DensityMatrix::new(matrix)
    }
}

/// Row-major JSON form of a density matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixJson {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

pub fn density_from_pure(psi: &PureState) -> DensityMatrix {
    DensityMatrix::from_pure(psi)
}

pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_hermitian(h: &CMatrix) -> Result<()> {
    if !h.is_square() {
        return Err(Error::Domain(format!(
            "matrix is {}×{}, expected square",
            h.nrows(),
            h.ncols()
        )));
    }
    let scale = h.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let deviation = hermitian_deviation(h);
    if deviation > HERMITIAN_TOL * scale {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

fn hermitian_eigen(h: &CMatrix) -> SymmetricEigen<Complex64, nalgebra::Dyn> {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym)
}

/// V·diag(f(λ))·Vᴴ
fn reassemble(eig: &SymmetricEigen<Complex64, nalgebra::Dyn>, values: &[f64]) -> CMatrix {
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (k, &lambda) in values.iter().enumerate() {
        let factor = Complex64::new(lambda, 0.0);
        for entry in scaled.column_mut(k).iter_mut() {
            *entry *= factor;
        }
    }
    &scaled * v.adjoint()
}

/// Principal square root of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues in `[-1e-8, 0)` are clamped to zero; anything more negative is
/// rejected.
pub fn matrix_sqrt_psd(h: &CMatrix) -> Result<CMatrix> {
    check_hermitian(h)?;
    let eig = hermitian_eigen(h);
    let scale = eig.eigenvalues.iter().map(|l| l.abs()).fold(1.0, f64::max);
    let mut roots = Vec::with_capacity(eig.eigenvalues.len());
    for &lambda in eig.eigenvalues.iter() {
        if lambda < -NEG_EIGEN_TOL * scale {
            return Err(Error::Domain(format!(
                "matrix is not positive semidefinite (eigenvalue {lambda:e})"
            )));
        }
        roots.push(lambda.max(0.0).sqrt());
    }
    Ok(reassemble(&eig, &roots))
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))², evaluated as the squared nuclear norm
/// of √ρ·√σ.
pub fn uhlmann_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dim(rho.dim(), sigma.dim())?;
    let a = matrix_sqrt_psd(rho.matrix())?;
    let b = matrix_sqrt_psd(sigma.matrix())?;
    let svd = SVD::new(&a * &b, false, false);
    let nuclear: f64 = svd.singular_values.iter().sum();
    Ok((nuclear * nuclear).clamp(0.0, 1.0))
}

/// Closest unit-trace PSD matrix in Frobenius norm.
///
/// Eigenvalues are projected onto the probability simplex: starting from the
/// most negative, each eigenvalue that would stay negative after receiving its
/// share of the accumulated deficit is zeroed and its weight joins the
/// deficit; the remainder is spread uniformly over the surviving eigenvalues.
pub fn project_to_physical(h: &CMatrix) -> Result<DensityMatrix> {
    check_hermitian(h)?;
    let eig = hermitian_eigen(h);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut values: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    // Surplus still to be distributed; for unit-trace input it starts at 0.
    let mut surplus = 1.0 - values.iter().sum::<f64>();
    let mut remaining = n;
    while remaining > 0 {
        let idx = order[remaining - 1];
        let share = surplus / remaining as f64;
        if values[idx] + share < 0.0 {
            surplus += values[idx];
            values[idx] = 0.0;
            remaining -= 1;
        } else {
            for &k in &order[..remaining] {
                values[k] += share;
            }
            break;
        }
    }
    let mut matrix = reassemble(&eig, &values);
    // Re-symmetrize away rounding so the result passes the strict invariants.
    matrix = (&matrix + matrix.adjoint()) * Complex64::new(0.5, 0.0);
    let trace = matrix.trace().re;
    matrix /= Complex64::new(trace, 0.0);
    Ok(DensityMatrix::from_matrix_unchecked(matrix))
}

pub fn kron_product(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn diag(values: &[f64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_iterator(
            values.len(),
            values.iter().map(|&v| c(v, 0.0)),
        ))
    }

    fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn ideal_qutrit() -> PureState {
        let s = 1.0 / 3f64.sqrt();
        let mut amps = vec![ZERO; 9];
        for k in 0..3 {
            amps[k * 3 + k] = c(s, 0.0);
        }
        PureState::new(amps).unwrap()
    }

    #[test]
    fn density_of_basis_and_plus_states() {
        let rho = density_from_pure(&PureState::basis(2, 0));
        assert!(max_abs_diff(rho.matrix(), &diag(&[1.0, 0.0])) < 1e-15);

        let s = 1.0 / 2f64.sqrt();
        let plus = PureState::new(vec![c(s, 0.0), c(s, 0.0)]).unwrap();
        let rho = density_from_pure(&plus);
        for z in rho.matrix().iter() {
            assert!((z - c(0.5, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn density_of_ideal_qutrit_pair() {
        let rho = density_from_pure(&ideal_qutrit());
        let corr = [0usize, 4, 8];
        for i in 0..9 {
            for j in 0..9 {
                let expected = if corr.contains(&i) && corr.contains(&j) { 1.0 / 3.0 } else { 0.0 };
                assert!((rho.matrix()[(i, j)] - c(expected, 0.0)).norm() < 1e-15);
            }
        }
        assert!((rho.purity() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_state_rejected() {
        assert!(matches!(
            PureState::new(vec![c(1.0, 0.0), c(1.0, 0.0)]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let id = CMatrix::identity(3, 3);
        assert!(max_abs_diff(&matrix_sqrt_psd(&id).unwrap(), &id) < 1e-12);
        let s = matrix_sqrt_psd(&diag(&[4.0, 9.0])).unwrap();
        assert!(max_abs_diff(&s, &diag(&[2.0, 3.0])) < 1e-12);
    }

    #[test]
    fn sqrt_rejects_non_hermitian() {
        let mut m = CMatrix::identity(2, 2);
        m[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(matrix_sqrt_psd(&m), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn sqrt_clamps_tiny_negative_eigenvalues() {
        let s = matrix_sqrt_psd(&diag(&[1.0, -5e-9])).unwrap();
        assert!(max_abs_diff(&s, &diag(&[1.0, 0.0])) < 1e-12);
        assert!(matrix_sqrt_psd(&diag(&[1.0, -1e-3])).is_err());
    }

    #[test]
    fn fidelity_basics() {
        let rho = density_from_pure(&ideal_qutrit());
        assert!((uhlmann_fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
        let mixed = DensityMatrix::maximally_mixed(9);
        assert!((uhlmann_fidelity(&rho, &mixed).unwrap() - 1.0 / 9.0).abs() < 1e-9);
        let zero = density_from_pure(&PureState::basis(2, 0));
        let one = density_from_pure(&PureState::basis(2, 1));
        assert!(uhlmann_fidelity(&zero, &one).unwrap().abs() < 1e-12);
        assert!(matches!(
            uhlmann_fidelity(&zero, &mixed),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_fixed_point_and_truncation() {
        let rho = density_from_pure(&ideal_qutrit());
        let p = project_to_physical(rho.matrix()).unwrap();
        assert!(max_abs_diff(p.matrix(), rho.matrix()) < 1e-12);

        let p = project_to_physical(&diag(&[1.2, -0.2])).unwrap();
        assert!(max_abs_diff(p.matrix(), &diag(&[1.0, 0.0])) < 1e-12);
    }

    #[test]
    fn projection_matches_truncation_oracle() {
        // Oracle: sort descending, zero the most negative eigenvalue while it
        // stays negative after taking its share of the deficit.
        fn oracle(mut ev: Vec<f64>) -> Vec<f64> {
            let n = ev.len();
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| ev[b].partial_cmp(&ev[a]).unwrap());
            let mut a = 0.0;
            for i in (0..n).rev() {
                if ev[idx[i]] + a / (i + 1) as f64 >= 0.0 {
                    for &k in &idx[..=i] {
                        ev[k] += a / (i + 1) as f64;
                    }
                    break;
                }
                a += ev[idx[i]];
                ev[idx[i]] = 0.0;
            }
            ev
        }
        let input = vec![0.5, 0.5, -0.2, 0.2];
        let expected = oracle(input.clone());
        // 0.5 - 0.2/3 = 0.43333.., 0.2 - 0.2/3 = 0.13333..
        assert!((expected[0] - 0.4333333333333333).abs() < 1e-12);
        assert!((expected[3] - 0.1333333333333333).abs() < 1e-12);
        let p = project_to_physical(&diag(&input)).unwrap();
        assert!(max_abs_diff(p.matrix(), &diag(&expected)) < 1e-12);
    }

    #[test]
    fn kron_examples() {
        let i2 = CMatrix::identity(2, 2);
        assert_eq!(kron_product(&i2, &i2), CMatrix::identity(4, 4));
        let z = diag(&[1.0, -1.0]);
        assert!(max_abs_diff(&kron_product(&z, &z), &diag(&[1.0, -1.0, -1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rho = density_from_pure(&ideal_qutrit());
        let json = serde_json::to_string(&rho.to_json()).unwrap();
        let back: DensityMatrixJson = serde_json::from_str(&json).unwrap();
        assert_eq!(DensityMatrix::from_json(&back).unwrap(), rho);

        let bad = DensityMatrixJson {
            dim: 2,
            re: vec![1.2, 0.0, 0.0, -0.2],
            im: vec![0.0; 4],
        };
        assert!(matches!(DensityMatrix::from_json(&bad), Err(Error::NotPhysical(_))));
    }

    #[test]
    fn partial_trace_of_product() {
        let psi = PureState::basis(2, 1).tensor(&PureState::basis(3, 2));
        let rho = density_from_pure(&psi);
        let a = rho.partial_trace(2, 3, true).unwrap();
        let b = rho.partial_trace(2, 3, false).unwrap();
        assert!(max_abs_diff(a.matrix(), &diag(&[0.0, 1.0])) < 1e-15);
        assert!(max_abs_diff(b.matrix(), &diag(&[0.0, 0.0, 1.0])) < 1e-15);
    }
}
