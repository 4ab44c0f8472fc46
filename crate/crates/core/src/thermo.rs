//! Density matrices, Gibbs ensembles, entropies and free energies.
//!
//! Entropies are in nats and `k_B = 1`, so temperatures carry energy units.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    c, hermitian_eig, max_abs_diff, trace, trace_product, CMatrix, EigenSystem, HermitianOperator,
};

pub const TRACE_TOL: f64 = 1e-10;
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Eigenvalues at or below this are dropped from `−Σ λ ln λ`.
pub const ENTROPY_CUTOFF: f64 = 1e-14;
/// Eigenvalues of the second argument of `S(ρ‖σ)` below this count as outside the support.
pub const SUPPORT_CUTOFF: f64 = 1e-12;
/// Weight of `ρ` on the kernel of `σ` above which `S(ρ‖σ) = +∞`.
pub const SUPPORT_WEIGHT_TOL: f64 = 1e-10;

/// A quantum state: Hermitian, positive semidefinite, unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        let op = HermitianOperator::new(m)?;
        let tr = trace(op.matrix()).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = hermitian_eig(&op)?.eigenvalues()[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { op })
    }

    /// `𝟙/N`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let m = CMatrix::identity(dim, dim).map(|z| z / dim as f64);
        Self {
            op: HermitianOperator::new(m).expect("identity is Hermitian"),
        }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v = nalgebra::DVector::from_iterator(psi.len(), psi.iter().map(|z| z / norm2.sqrt()));
        Self::new(&v * v.adjoint())
    }

    pub fn from_real_diagonal(p: &[f64]) -> Result<Self> {
        Self::new(HermitianOperator::from_real_diagonal(p)?.into_matrix())
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.matrix()
    }

    pub fn as_operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn eigensystem(&self) -> Result<EigenSystem> {
        hermitian_eig(&self.op)
    }

    /// `U ρ U†`, unchecked beyond Hermiticity (unitary conjugation keeps the invariants).
    pub fn evolve(&self, u: &CMatrix) -> Result<Self> {
        let m = u * self.matrix() * u.adjoint();
        Ok(Self {
            op: HermitianOperator::new(m)?,
        })
    }

    /// `Θ ρ Θ†`.
    pub fn time_reversed(&self) -> Self {
        Self {
            op: self.op.time_reversed(),
        }
    }
}

/// Gibbs state `τ_β = e^{−β(H − F)}` together with its partition function and free energy.
#[derive(Debug, Clone)]
pub struct ThermalEnsemble {
    pub hamiltonian: HermitianOperator,
    pub beta: f64,
    pub eigensystem: EigenSystem,
    /// Boltzmann populations in ascending-energy order.
    pub populations: Vec<f64>,
    pub state: DensityMatrix,
    pub ln_partition_function: f64,
    pub partition_function: f64,
    pub free_energy: f64,
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "inverse temperature must be > 0, got {beta}"
        )))
    }
}

/// Boltzmann weights of a spectrum shifted by its minimum, plus `ln Z`.
pub(crate) fn shifted_boltzmann(energies: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies
        .iter()
        .map(|&e| (-beta * (e - min)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    (w, -beta * min + s.ln())
}

pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<ThermalEnsemble> {
    check_beta(beta)?;
    let eig = hermitian_eig(h)?;
    gibbs_from_eigensystem(h.clone(), eig, beta)
}

pub(crate) fn gibbs_from_eigensystem(
    hamiltonian: HermitianOperator,
    eig: EigenSystem,
    beta: f64,
) -> Result<ThermalEnsemble> {
    check_beta(beta)?;
    let (w, ln_z) = shifted_boltzmann(eig.eigenvalues(), beta);
    let total: f64 = w.iter().sum();
    let populations: Vec<f64> = w.iter().map(|x| x / total).collect();
    let diag: Vec<Complex64> = populations.iter().map(|&p| c(p, 0.0)).collect();
    let state = DensityMatrix {
        op: HermitianOperator::new(eig.compose(&diag))?,
    };
    Ok(ThermalEnsemble {
        hamiltonian,
        beta,
        eigensystem: eig,
        populations,
        state,
        ln_partition_function: ln_z,
        partition_function: ln_z.exp(),
        free_energy: -ln_z / beta,
    })
}

/// `−Σ λ ln λ` over eigenvalues above [`ENTROPY_CUTOFF`].
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    let eig = rho.eigensystem()?;
    Ok(shannon_entropy(eig.eigenvalues()))
}

pub(crate) fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > ENTROPY_CUTOFF)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `S(ρ‖σ) = Tr[ρ(ln ρ − ln σ)]`. Returns `f64::INFINITY` when the support
/// of `ρ` is not contained in that of `σ`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let r = rho.eigensystem()?;
    let s = sigma.eigensystem()?;
    // overlaps[i][k] = |⟨r_i|s_k⟩|²
    let overlap = r.eigenvectors().adjoint() * s.eigenvectors();
    let n = rho.dim();

    let mut cross = 0.0;
    for k in 0..n {
        let mu = s.eigenvalues()[k];
        let weight: f64 = (0..n)
            .map(|i| r.eigenvalues()[i].max(0.0) * overlap[(i, k)].norm_sqr())
            .sum();
        if mu < SUPPORT_CUTOFF {
            if weight > SUPPORT_WEIGHT_TOL {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        cross += weight * mu.ln();
    }
    Ok(-shannon_entropy(r.eigenvalues()) - cross)
}

/// `S(ρ‖τ_β)` with `ln τ_β` taken from the Hamiltonian's spectrum,
/// `ln p_k = −βε_k − ln Z`, rather than from the eigenvalues of the state
/// matrix. This stays accurate when `τ_β` has populations far below machine
/// precision relative to its largest one.
pub fn relative_entropy_to_thermal(rho: &DensityMatrix, tau: &ThermalEnsemble) -> Result<f64> {
    if rho.dim() != tau.eigensystem.dim() {
        return Err(Error::DimensionMismatch {
            expected: tau.eigensystem.dim(),
            found: rho.dim(),
        });
    }
    let v = tau.eigensystem.eigenvectors();
    let diag = (v.adjoint() * rho.matrix() * v).diagonal();
    let cross: f64 = tau
        .eigensystem
        .eigenvalues()
        .iter()
        .zip(diag.iter())
        .map(|(&e, d)| d.re * (-tau.beta * e - tau.ln_partition_function))
        .sum();
    Ok(-von_neumann_entropy(rho)? - cross)
}

/// `Re Tr[H ρ]`; the imaginary residual must stay below 1e-10.
pub fn average_energy(rho: &DensityMatrix, h: &HermitianOperator) -> Result<f64> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: rho.dim(),
        });
    }
    let e = trace_product(h.matrix(), rho.matrix());
    debug_assert!(e.im.abs() <= 1e-10 * (1.0 + h.max_abs()));
    Ok(e.re)
}

/// `𝓕(ρ) = Tr[Hρ] − S(ρ)/β`.
pub fn nonequilibrium_free_energy(
    rho: &DensityMatrix,
    h: &HermitianOperator,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    Ok(average_energy(rho, h)? - von_neumann_entropy(rho)? / beta)
}

impl ThermalEnsemble {
    /// Largest entrywise gap between the stored state and `e^{−β(H−F)}`.
    pub fn state_defect(&self) -> Result<f64> {
        let (beta, f) = (self.beta, self.free_energy);
        let direct = self
            .eigensystem
            .apply(|e| c((-beta * (e - f)).exp(), 0.0))?;
        Ok(max_abs_diff(&direct, self.state.matrix()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn oscillator(levels: usize) -> HermitianOperator {
        let e: Vec<f64> = (0..levels).map(|n| 2.0 * (n as f64 + 0.5)).collect();
        HermitianOperator::from_real_diagonal(&e).unwrap()
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix::from_real_diagonal(&[0.5, 0.6]).is_err());
        assert!(DensityMatrix::from_real_diagonal(&[1.5, -0.5]).is_err());
        assert!(DensityMatrix::from_real_diagonal(&[0.25, 0.75]).is_ok());
    }

    #[test]
    fn gibbs_high_temperature_is_flat() {
        let g = gibbs_state(&oscillator(12), 1e-12).unwrap();
        for p in &g.populations {
            assert!((p - 1.0 / 12.0).abs() < 1e-10);
        }
    }

    #[test]
    fn gibbs_two_level() {
        let (eps, beta) = (1.7, 0.8);
        let h = HermitianOperator::from_real_diagonal(&[0.0, eps]).unwrap();
        let g = gibbs_state(&h, beta).unwrap();
        let z = 1.0 + (-beta * eps).exp();
        assert!((g.populations[0] - 1.0 / z).abs() < 1e-15);
        assert!((g.populations[1] - (-beta * eps).exp() / z).abs() < 1e-15);
        assert!((g.partition_function - z).abs() < 1e-12 * z);
        assert!((g.free_energy + z.ln() / beta).abs() < 1e-12);
        assert!(g.state_defect().unwrap() < 1e-10);
    }

    #[test]
    fn gibbs_oscillator_populations() {
        let beta = 0.1;
        let g = gibbs_state(&oscillator(12), beta).unwrap();
        let w: Vec<f64> = (0..12)
            .map(|j| (-beta * (2 * j + 1) as f64).exp())
            .collect();
        let z: f64 = w.iter().sum();
        assert!((g.partition_function - z).abs() < 1e-12 * z);
        for (j, wj) in w.iter().enumerate() {
            assert!((g.state.matrix()[(j, j)].re - wj / z).abs() < 1e-14);
        }
        assert!(gibbs_state(&oscillator(3), 0.0).is_err());
        assert!(gibbs_state(&oscillator(3), -1.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        let pure = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 1.0)]).unwrap();
        assert!(von_neumann_entropy(&pure).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(5);
        assert!((von_neumann_entropy(&mixed).unwrap() - 5f64.ln()).abs() < 1e-12);
        let d = DensityMatrix::from_real_diagonal(&[0.5, 0.3, 0.2]).unwrap();
        // -(0.5 ln 0.5 + 0.3 ln 0.3 + 0.2 ln 0.2)
        assert!((von_neumann_entropy(&d).unwrap() - 1.029_653_014_064_573_5).abs() < 1e-12);
    }

    #[test]
    fn relative_entropy_examples() {
        let d = DensityMatrix::from_real_diagonal(&[0.5, 0.3, 0.2]).unwrap();
        assert!(relative_entropy(&d, &d).unwrap().abs() < 1e-12);

        let half = DensityMatrix::maximally_mixed(2);
        let up = DensityMatrix::from_real_diagonal(&[1.0, 0.0]).unwrap();
        assert!((relative_entropy(&up, &half).unwrap() - LN_2).abs() < 1e-12);

        let p = DensityMatrix::from_real_diagonal(&[0.9, 0.1]).unwrap();
        // 0.9 ln 1.8 + 0.1 ln 0.2
        let expected = 0.368_064_207_168_497;
        assert!((relative_entropy(&p, &half).unwrap() - expected).abs() < 1e-12);

        assert_eq!(relative_entropy(&half, &up).unwrap(), f64::INFINITY);
        assert!(matches!(
            relative_entropy(&half, &DensityMatrix::maximally_mixed(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn average_energy_examples() {
        let h = oscillator(12);
        let mean = average_energy(&DensityMatrix::maximally_mixed(12), &h).unwrap();
        assert!((mean - 12.0).abs() < 1e-12);
        let mut ground = vec![c(0.0, 0.0); 12];
        ground[0] = c(1.0, 0.0);
        let g = DensityMatrix::pure(&ground).unwrap();
        assert!((average_energy(&g, &h).unwrap() - 1.0).abs() < 1e-14);

        let thermal = gibbs_state(&h, 1.0).unwrap();
        // Σ ε e^{−ε} / Σ e^{−ε}, ε = 1, 3, …, 23
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..12 {
            let e = (2 * j + 1) as f64;
            num += e * (-e).exp();
            den += (-e).exp();
        }
        let mean = average_energy(&thermal.state, &h).unwrap();
        assert!((mean - num / den).abs() < 1e-12);
        assert!((mean - 1.313_035_284_593_299).abs() < 1e-12);
    }

    #[test]
    fn free_energy_examples() {
        let h = oscillator(6);
        let g = gibbs_state(&h, 0.7).unwrap();
        let f = nonequilibrium_free_energy(&g.state, &h, 0.7).unwrap();
        assert!((f - g.free_energy).abs() < 1e-10);

        let mut ground = vec![c(0.0, 0.0); 6];
        ground[0] = c(1.0, 0.0);
        let gs = DensityMatrix::pure(&ground).unwrap();
        assert!((nonequilibrium_free_energy(&gs, &h, 0.7).unwrap() - 1.0).abs() < 1e-12);

        let two = HermitianOperator::from_real_diagonal(&[0.0, 1.0]).unwrap();
        let f = nonequilibrium_free_energy(&DensityMatrix::maximally_mixed(2), &two, 1.0).unwrap();
        assert!((f - (0.5 - LN_2)).abs() < 1e-12);
    }
}
