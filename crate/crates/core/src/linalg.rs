//! Dense complex linear algebra: Hermitian operators, their eigensystems,
//! spectral matrix functions, propagators and basis conjugation.
//!
//! Everything goes through a full Hermitian eigendecomposition. The systems
//! handled here are small (a few dozen levels), so exactness beats speed.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest tolerated `‖A − A†‖_max` when wrapping a matrix as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Relative width (w.r.t. the spectral range) under which eigenvalues are
/// treated as one degenerate cluster.
pub const DEGENERACY_REL_TOL: f64 = 1e-9;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// `‖A − B‖_max`; panics on shape mismatch.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// `Tr[A B]` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = C0;
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// `‖U†U − 𝟙‖_max`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    max_abs_diff(&(u.adjoint() * u), &identity(n))
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

/// Entrywise complex conjugate in the fixed computational basis.
///
/// This realizes `Θ X Θ†` for the antiunitary time reversal `Θ = K`
/// (spinless systems, all observables even under reversal). Since `Θ† = Θ`
/// the same map also gives `Θ† X Θ`.
pub fn conjugate_in_basis(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

/// A finite-dimensional Hermitian observable.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    /// Wraps `m` after checking shape, finiteness and Hermiticity. The stored
    /// matrix is the Hermitian part `(m + m†)/2`, so downstream code sees an
    /// exactly Hermitian operator.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::EmptyOrNonSquare);
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let defect = hermiticity_defect(&m);
        if defect > HERMITICITY_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let matrix = (&m + m.adjoint()).map(|z| z * 0.5);
        Ok(Self { matrix })
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| c(x, 0.0)))
    }

    pub fn from_real_diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = c(v, 0.0);
        }
        Self::new(m)
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

    /// `Θ A Θ†`.
    pub fn time_reversed(&self) -> Self {
        Self {
            matrix: conjugate_in_basis(&self.matrix),
        }
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }
}

/// Ascending eigenvalues with orthonormal eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn spectral_range(&self) -> f64 {
        self.eigenvalues[self.dim() - 1] - self.eigenvalues[0]
    }

    /// Absolute tolerance used for degeneracy clustering.
    pub fn degeneracy_tol(&self) -> f64 {
        DEGENERACY_REL_TOL * self.spectral_range()
    }

    /// `Σ_{j ∈ indices} |ε_j⟩⟨ε_j|`.
    pub fn projector<I: IntoIterator<Item = usize>>(&self, indices: I) -> CMatrix {
        let n = self.dim();
        let mut p = CMatrix::zeros(n, n);
        for j in indices {
            let v = self.eigenvectors.column(j);
            p += v * v.adjoint();
        }
        p
    }

    /// `V diag(d) V†` for complex diagonal values `d`.
    pub fn compose(&self, diag: &[Complex64]) -> CMatrix {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &d) in diag.iter().enumerate() {
            for z in scaled.column_mut(j).iter_mut() {
                *z *= d;
            }
        }
        scaled * v.adjoint()
    }

    /// Applies `f` to the spectrum. Fails with a domain error when `f`
    /// produces a non-finite value on some eigenvalue.
    pub fn apply<F: Fn(f64) -> Complex64>(&self, f: F) -> Result<CMatrix> {
        let mut diag = Vec::with_capacity(self.dim());
        for &lambda in &self.eigenvalues {
            let y = f(lambda);
            if !y.re.is_finite() || !y.im.is_finite() {
                return Err(Error::Domain(format!(
                    "function undefined at eigenvalue {lambda:e}"
                )));
            }
            diag.push(y);
        }
        Ok(self.compose(&diag))
    }
}

/// Hermitian eigendecomposition with deterministic output.
///
/// Eigenvalues come back ascending. Inside a numerically degenerate cluster
/// vectors are ordered by the index of their dominant component, and every
/// vector is phased so that its dominant component is real and positive.
pub fn hermitian_eig(a: &HermitianOperator) -> Result<EigenSystem> {
    let n = a.dim();
    let max_iter = 1000 * n.max(1);
    let eig = SymmetricEigen::try_new(a.matrix().clone(), f64::EPSILON, max_iter)
        .ok_or(Error::EigenDecomposition)?;
    if eig.eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenDecomposition);
    }

    let dominant = |col: usize| -> usize {
        let v = eig.eigenvectors.column(col);
        let mut best = 0;
        let mut best_abs = -1.0;
        for (i, z) in v.iter().enumerate() {
            // first index wins ties up to rounding noise
            if z.norm() > best_abs + 1e-12 {
                best_abs = z.norm();
                best = i;
            }
        }
        best
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let lo = eig.eigenvalues[order[0]];
    let hi = eig.eigenvalues[order[n - 1]];
    let tol = DEGENERACY_REL_TOL * (hi - lo);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.eigenvalues[order[end]] - eig.eigenvalues[order[end - 1]] <= tol {
            end += 1;
        }
        if end - start > 1 {
            order[start..end].sort_by_key(|&col| dominant(col));
        }
        start = end;
    }

    let mut eigenvectors = CMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, &col) in order.iter().enumerate() {
        eigenvalues.push(eig.eigenvalues[col]);
        let v = eig.eigenvectors.column(col);
        let d = v[dominant(col)];
        let phase = if d.norm() > 0.0 {
            d.conj() / d.norm()
        } else {
            C1
        };
        for i in 0..n {
            eigenvectors[(i, k)] = v[i] * phase;
        }
    }

    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// `V f(Λ) V†`.
pub fn matrix_function<F: Fn(f64) -> Complex64>(a: &HermitianOperator, f: F) -> Result<CMatrix> {
    hermitian_eig(a)?.apply(f)
}

/// `exp(−i H t / ħ)` for a time-independent Hamiltonian.
pub fn propagator(h: &HermitianOperator, t: f64, hbar: f64) -> Result<CMatrix> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "propagation time must be >= 0, got {t}"
        )));
    }
    if !(hbar > 0.0) {
        return Err(Error::Domain(format!("hbar must be > 0, got {hbar}")));
    }
    if t == 0.0 {
        return Ok(identity(h.dim()));
    }
    let s = t / hbar;
    matrix_function(h, |lambda| Complex64::from_polar(1.0, -lambda * s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{LN_2, PI};

    fn pauli_x() -> HermitianOperator {
        HermitianOperator::from_real(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap()
    }

    fn oscillator(levels: usize, omega: f64) -> HermitianOperator {
        let e: Vec<f64> = (0..levels).map(|n| omega * (n as f64 + 0.5)).collect();
        HermitianOperator::from_real_diagonal(&e).unwrap()
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_row_slice(2, 2, &[C0, C1, C0, C0]);
        assert!(matches!(
            HermitianOperator::new(m),
            Err(Error::NotHermitian { .. })
        ));
        assert_eq!(
            HermitianOperator::new(CMatrix::zeros(0, 0)),
            Err(Error::EmptyOrNonSquare)
        );
        let mut nan = identity(2);
        nan[(0, 0)] = c(f64::NAN, 0.0);
        assert_eq!(HermitianOperator::new(nan), Err(Error::NonFinite));
    }

    #[test]
    fn diagonal_eig_is_permutation() {
        let a = HermitianOperator::from_real_diagonal(&[3.0, 1.0, 2.0]).unwrap();
        let e = hermitian_eig(&a).unwrap();
        assert_eq!(e.eigenvalues(), &[1.0, 2.0, 3.0]);
        let v = e.eigenvectors();
        let expected = [1usize, 2, 0];
        for (k, &row) in expected.iter().enumerate() {
            assert!((v[(row, k)] - C1).norm() < 1e-15);
        }
    }

    #[test]
    fn pauli_x_eigenvectors() {
        let e = hermitian_eig(&pauli_x()).unwrap();
        assert!((e.eigenvalues()[0] + 1.0).abs() < 1e-14);
        assert!((e.eigenvalues()[1] - 1.0).abs() < 1e-14);
        let v = e.eigenvectors();
        let s = 1.0 / 2f64.sqrt();
        // (1, -1)/√2 up to the dominant-component phase convention
        assert!((v[(0, 0)].norm() - s).abs() < 1e-14);
        assert!((v[(0, 0)] + v[(1, 0)]).norm() < 1e-14);
        assert!((v[(0, 1)] - v[(1, 1)]).norm() < 1e-14);
    }

    #[test]
    fn oscillator_spectrum() {
        let e = hermitian_eig(&oscillator(12, 2.0)).unwrap();
        for (j, &x) in e.eigenvalues().iter().enumerate() {
            assert!((x - (2 * j + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_cluster_keeps_input_order() {
        let a = HermitianOperator::from_real_diagonal(&[2.0, 1.0, 2.0, 1.0]).unwrap();
        let e = hermitian_eig(&a).unwrap();
        let v = e.eigenvectors();
        assert!((v[(1, 0)] - C1).norm() < 1e-15);
        assert!((v[(3, 1)] - C1).norm() < 1e-15);
        assert!((v[(0, 2)] - C1).norm() < 1e-15);
        assert!((v[(2, 3)] - C1).norm() < 1e-15);
    }

    #[test]
    fn matrix_function_examples() {
        let a = pauli_x();
        let same = matrix_function(&a, |x| c(x, 0.0)).unwrap();
        assert!(max_abs_diff(&same, a.matrix()) < 1e-10);

        let d = HermitianOperator::from_real_diagonal(&[0.0, LN_2]).unwrap();
        let ex = matrix_function(&d, |x| c(x.exp(), 0.0)).unwrap();
        assert!((ex[(0, 0)] - C1).norm() < 1e-14);
        assert!((ex[(1, 1)] - c(2.0, 0.0)).norm() < 1e-14);

        let boltz = matrix_function(&oscillator(12, 2.0), |x| c((-x).exp(), 0.0)).unwrap();
        for j in 0..12 {
            let expected = (-((2 * j + 1) as f64)).exp();
            assert!((boltz[(j, j)].re - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn log_of_nonpositive_is_domain_error() {
        let d = HermitianOperator::from_real_diagonal(&[0.0, 1.0]).unwrap();
        assert!(matches!(
            matrix_function(&d, |x| c(x.ln(), 0.0)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn propagator_examples() {
        let h = oscillator(12, 2.0);
        assert_eq!(propagator(&h, 0.0, 1.0).unwrap(), identity(12));

        let d = HermitianOperator::from_real_diagonal(&[0.0, PI]).unwrap();
        let u = propagator(&d, 1.0, 1.0).unwrap();
        assert!((u[(0, 0)] - C1).norm() < 1e-15);
        assert!((u[(1, 1)] + C1).norm() < 1e-15);

        let u = propagator(&h, 1.0, 1.0).unwrap();
        for j in 0..12 {
            let phase = Complex64::from_polar(1.0, -((2 * j + 1) as f64));
            assert!((u[(j, j)] - phase).norm() < 1e-14);
        }
        assert!(unitarity_defect(&u) < 1e-10);
        assert!(propagator(&h, -1.0, 1.0).is_err());
    }

    #[test]
    fn conjugation_examples() {
        let real = pauli_x().into_matrix();
        assert_eq!(conjugate_in_basis(&real), real);
        let m = CMatrix::from_row_slice(2, 2, &[C0, c(0.0, 1.0), c(0.0, -1.0), C0]);
        let expected = CMatrix::from_row_slice(2, 2, &[C0, c(0.0, -1.0), c(0.0, 1.0), C0]);
        assert_eq!(conjugate_in_basis(&m), expected);
        assert_eq!(conjugate_in_basis(&conjugate_in_basis(&m)), m);
    }
}
