//! Work and entropy bookkeeping of coarse graining as a thermodynamic
//! operation: the work a fine agent can extract from a coarse state, the
//! least work needed to prepare `𝒞(ρ)` from `ρ`, and the three-stage
//! protocol that attains it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_grain, flat_state_entropy, SlotPartition};
use crate::error::Result;
use crate::linalg::{c, hermitian_eig, EigenSystem, HermitianOperator};
use crate::thermo::{
    average_energy, check_beta, gibbs_from_eigensystem, relative_entropy_to_thermal,
    von_neumann_entropy, DensityMatrix,
};

/// Eigenvalues of a state are floored here before taking `−T ln ρ`.
pub const SPECTRAL_FLOOR: f64 = 1e-14;

fn prepared(h: &HermitianOperator, partition: &SlotPartition) -> Result<EigenSystem> {
    let eig = hermitian_eig(h)?;
    partition.check_matches(&eig)?;
    Ok(eig)
}

/// `k_B T S(σ ‖ τ_β)`, the most work a fine agent can extract while
/// relaxing `σ` to `τ_β`. A Gibbs state at finite `β` has full support, so
/// the value is always finite.
pub fn extractable_work(sigma: &DensityMatrix, h: &HermitianOperator, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let tau = gibbs_from_eigensystem(h.clone(), hermitian_eig(h)?, beta)?;
    Ok(relative_entropy_to_thermal(sigma, &tau)? / beta)
}

/// The two closed forms of the least preparation work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimalWork {
    /// `𝓕(𝒞(ρ)) − 𝓕(ρ)`.
    pub free_energy_form: f64,
    /// `k_B T [S(𝒞(ρ) ‖ τ_β) − S(ρ ‖ τ_β)]`.
    pub relative_entropy_form: f64,
}

impl MinimalWork {
    pub fn value(&self) -> f64 {
        self.free_energy_form
    }

    pub fn discrepancy(&self) -> f64 {
        (self.free_energy_form - self.relative_entropy_form).abs()
    }
}

/// `W_min` for turning `ρ` into `𝒞(ρ)` in contact with a bath at `β`.
pub fn preparation_work_min(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    h: &HermitianOperator,
    beta: f64,
) -> Result<MinimalWork> {
    check_beta(beta)?;
    let eig = prepared(h, partition)?;
    let crho = coarse_grain(rho, partition, &eig)?;
    let s_rho = von_neumann_entropy(rho)?;
    let s_crho = coarse_entropy(rho, partition, &eig);
    let de = average_energy(&crho, h)? - average_energy(rho, h)?;
    let tau = gibbs_from_eigensystem(h.clone(), eig, beta)?;
    Ok(MinimalWork {
        free_energy_form: de - (s_crho - s_rho) / beta,
        relative_entropy_form: (relative_entropy_to_thermal(&crho, &tau)?
            - relative_entropy_to_thermal(rho, &tau)?)
            / beta,
    })
}

fn coarse_entropy(rho: &DensityMatrix, partition: &SlotPartition, eig: &EigenSystem) -> f64 {
    let p = partition.populations(rho.matrix(), eig);
    flat_state_entropy(&p, &partition.multiplicities())
}

/// `−T ln ρ` after flooring the spectrum of `ρ` at [`SPECTRAL_FLOOR`].
fn log_hamiltonian(rho: &DensityMatrix, beta: f64) -> Result<HermitianOperator> {
    let eig = rho.eigensystem()?;
    let floored: Vec<f64> = eig
        .eigenvalues()
        .iter()
        .map(|&x| x.max(SPECTRAL_FLOOR))
        .collect();
    let total: f64 = floored.iter().sum();
    let diag: Vec<Complex64> = floored
        .iter()
        .map(|&x| c(-(x / total).ln() / beta, 0.0))
        .collect();
    HermitianOperator::new(eig.compose(&diag))
}

/// Energy bookkeeping of the reversible three-stage preparation of `𝒞(ρ)`:
/// quench `H → H₀′ = −T ln ρ`, quasi-static change `H₀′ → H₁ = −T ln 𝒞(ρ)`
/// on the bath, quench `H₁ → H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEnergetics {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Heat absorbed in the isothermal stage.
    pub q2: f64,
    pub delta_e2: f64,
    pub w_total: f64,
    /// `S(𝒞(ρ)) − S(ρ)` in nats.
    pub s_change: f64,
}

pub fn protocol_energetics(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    h: &HermitianOperator,
    beta: f64,
) -> Result<ProtocolEnergetics> {
    check_beta(beta)?;
    let eig = prepared(h, partition)?;
    let crho = coarse_grain(rho, partition, &eig)?;
    let h0p = log_hamiltonian(rho, beta)?;
    let h1 = log_hamiltonian(&crho, beta)?;

    let e_h_rho = average_energy(rho, h)?;
    let e_h0p_rho = average_energy(rho, &h0p)?;
    let e_h1_crho = average_energy(&crho, &h1)?;
    let e_h_crho = average_energy(&crho, h)?;

    let s_change = coarse_entropy(rho, partition, &eig) - von_neumann_entropy(rho)?;
    let w1 = e_h0p_rho - e_h_rho;
    let q2 = s_change / beta;
    let delta_e2 = e_h1_crho - e_h0p_rho;
    let w2 = delta_e2 - q2;
    let w3 = e_h_crho - e_h1_crho;
    Ok(ProtocolEnergetics {
        w1,
        w2,
        w3,
        q2,
        delta_e2,
        w_total: w1 + w2 + w3,
        s_change,
    })
}

/// `ΔE_C = Tr[H 𝒞(ρ)] − Tr[H ρ]` against the instrument resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyChange {
    pub delta_e_c: f64,
    /// `δε` of the partition, or its widest slot span when built from sizes.
    pub resolution: f64,
    pub within_resolution: bool,
}

pub fn coarse_graining_energy_change(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    h: &HermitianOperator,
) -> Result<EnergyChange> {
    let eig = prepared(h, partition)?;
    let crho = coarse_grain(rho, partition, &eig)?;
    let delta_e_c = average_energy(&crho, h)? - average_energy(rho, h)?;
    let resolution = partition
        .resolution()
        .unwrap_or_else(|| partition.effective_resolution());
    Ok(EnergyChange {
        delta_e_c,
        resolution,
        within_resolution: delta_e_c <= resolution + 1e-10,
    })
}

/// `W_min ≤ ΔE_C ≤ δε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundChain {
    pub w_min: MinimalWork,
    pub energy: EnergyChange,
    pub holds: bool,
}

pub fn bound_chain(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    h: &HermitianOperator,
    beta: f64,
) -> Result<BoundChain> {
    let w_min = preparation_work_min(rho, partition, h, beta)?;
    let energy = coarse_graining_energy_change(rho, partition, h)?;
    Ok(BoundChain {
        holds: energy.within_resolution && w_min.value() <= energy.delta_e_c + 1e-9,
        w_min,
        energy,
    })
}

/// Entropy production of a preparation of `𝒞(ρ)` that cost work `W` and
/// absorbed heat `Q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProduction {
    /// `ΔS − βQ`.
    pub sigma: f64,
    /// `β(W − W_min)`; equals `sigma` when `W + Q = ΔE_C`.
    pub sigma_from_work: f64,
    /// `W + Q − ΔE_C`.
    pub first_law_residual: f64,
}

pub fn entropy_production(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    h: &HermitianOperator,
    beta: f64,
    w_actual: f64,
    q_actual: f64,
) -> Result<EntropyProduction> {
    let w_min = preparation_work_min(rho, partition, h, beta)?;
    let eig = prepared(h, partition)?;
    let ds = coarse_entropy(rho, partition, &eig) - von_neumann_entropy(rho)?;
    let de = coarse_graining_energy_change(rho, partition, h)?.delta_e_c;
    Ok(EntropyProduction {
        sigma: ds - beta * q_actual,
        sigma_from_work: beta * (w_actual - w_min.value()),
        first_law_residual: w_actual + q_actual - de,
    })
}

/// Free-energy change seen by the coarse agent when `τ_β` is replaced by
/// `τ̆_β`, evaluated with `H̆`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyDrop {
    /// `𝓕̆(τ̆_β) − 𝓕̆(τ_β)`.
    pub drop: f64,
    /// `(S(τ_β) − S(τ̆_β))/β`.
    pub entropy_form: f64,
}

pub fn coarse_free_energy_drop(
    h: &HermitianOperator,
    partition: &SlotPartition,
    beta: f64,
) -> Result<FreeEnergyDrop> {
    check_beta(beta)?;
    let eig = prepared(h, partition)?;
    let coarse = crate::coarse::coarse_thermal_state_on(&eig, partition, beta)?;
    let hb = coarse.hamiltonian.matrix();
    let tau = gibbs_from_eigensystem(h.clone(), eig, beta)?;
    let s_tau = von_neumann_entropy(&tau.state)?;
    let s_breve = flat_state_entropy(&coarse.slot_probabilities, &partition.multiplicities());
    let f_breve = average_energy(&coarse.state, &hb)? - s_breve / beta;
    let f_fine = average_energy(&tau.state, &hb)? - s_tau / beta;
    Ok(FreeEnergyDrop {
        drop: f_breve - f_fine,
        entropy_form: (s_tau - s_breve) / beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coarse::coarse_thermal_state_on;
    use crate::dynamics::oscillator_hamiltonian;
    use crate::thermo::gibbs_state;

    fn osc() -> (HermitianOperator, EigenSystem, SlotPartition) {
        let h = oscillator_hamiltonian(12, 2.0, 1.0).unwrap();
        let eig = hermitian_eig(&h).unwrap();
        let p = SlotPartition::from_resolution(&eig, 6.0).unwrap();
        (h, eig, p)
    }

    #[test]
    fn extractable_work_examples() {
        let (h, eig, p) = osc();
        let tau = gibbs_state(&h, 1.0).unwrap();
        assert!(extractable_work(&tau.state, &h, 1.0).unwrap().abs() < 1e-12);
        let tb = coarse_thermal_state_on(&eig, &p, 1.0).unwrap();
        let w = extractable_work(&tb.state, &h, 1.0).unwrap();
        assert!(w > 1e-3);
        // cycle consistency
        let wmin = preparation_work_min(&tau.state, &p, &h, 1.0).unwrap();
        assert!(wmin.discrepancy() < 1e-9);
        assert!((wmin.value() - w).abs() < 1e-9);
    }

    #[test]
    fn fixed_points_cost_nothing() {
        let (h, eig, p) = osc();
        let flat = DensityMatrix::maximally_mixed(12);
        assert!(
            preparation_work_min(&flat, &p, &h, 1.0)
                .unwrap()
                .value()
                .abs()
                < 1e-12
        );
        let tb = coarse_thermal_state_on(&eig, &p, 0.3).unwrap();
        let e = protocol_energetics(&tb.state, &p, &h, 0.3).unwrap();
        assert!(e.w_total.abs() < 1e-9);
        assert!(e.s_change.abs() < 1e-12);
        let fine = SlotPartition::singletons(&eig);
        let mut psi = vec![c(0.0, 0.0); 12];
        psi[0] = c(1.0, 0.0);
        let ground = DensityMatrix::pure(&psi).unwrap();
        let e = protocol_energetics(&ground, &fine, &h, 1.0).unwrap();
        assert!(e.w_total.abs() < 1e-9);
    }

    #[test]
    fn energetics_telescope_to_w_min() {
        let (h, _, p) = osc();
        let tau = gibbs_state(&h, 1.0).unwrap();
        let e = protocol_energetics(&tau.state, &p, &h, 1.0).unwrap();
        let w = preparation_work_min(&tau.state, &p, &h, 1.0).unwrap();
        assert!((e.w_total - (e.w1 + e.w2 + e.w3)).abs() < 1e-10);
        assert!((e.w_total - w.value()).abs() < 1e-9);
        assert!((e.q2 - e.s_change).abs() < 1e-10);
        assert!(e.w_total > 0.0);
    }

    #[test]
    fn ground_state_in_triplet() {
        let h = HermitianOperator::from_real_diagonal(&[1.0, 3.0, 5.0]).unwrap();
        let eig = hermitian_eig(&h).unwrap();
        let p = SlotPartition::from_resolution(&eig, 6.0).unwrap();
        assert_eq!(p.len(), 1);
        let rho = DensityMatrix::from_real_diagonal(&[1.0, 0.0, 0.0]).unwrap();
        let e = coarse_graining_energy_change(&rho, &p, &h).unwrap();
        assert!((e.delta_e_c - 2.0).abs() < 1e-12);
        assert!(e.within_resolution);
        assert!(bound_chain(&rho, &p, &h, 1.0).unwrap().holds);
    }

    #[test]
    fn entropy_production_bookkeeping() {
        let (h, _, p) = osc();
        let tau = gibbs_state(&h, 0.7).unwrap();
        let e = protocol_energetics(&tau.state, &p, &h, 0.7).unwrap();
        let rev = entropy_production(&tau.state, &p, &h, 0.7, e.w_total, e.q2).unwrap();
        assert!(rev.sigma.abs() < 1e-9);
        assert!(rev.sigma_from_work.abs() < 1e-9);
        assert!(rev.first_law_residual.abs() < 1e-9);
        let extra =
            entropy_production(&tau.state, &p, &h, 0.7, e.w_total + 0.5, e.q2 - 0.5).unwrap();
        assert!((extra.sigma - 0.35).abs() < 1e-9);
        assert!((extra.sigma_from_work - 0.35).abs() < 1e-9);
    }

    #[test]
    fn free_energy_drops() {
        let (h, _, p) = osc();
        for beta in [0.1, 1.0, 3.0] {
            let d = coarse_free_energy_drop(&h, &p, beta).unwrap();
            assert!(d.drop <= 1e-9);
            assert!((d.drop - d.entropy_form).abs() < 1e-9);
        }
    }
}
