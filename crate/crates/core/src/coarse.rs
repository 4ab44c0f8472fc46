//! Energy-resolution coarse-graining.
//!
//! A [`SlotPartition`] groups the ascending eigenvalues of a Hamiltonian into
//! contiguous slots that an instrument of resolution `δε` cannot tell apart.
//! From it follow the coarse Hamiltonian `H̆ = Σ_J E_J Π_J` with
//! temperature-dependent levels, the flattening channel `𝒞`, and the coarse
//! thermal state `τ̆_β = 𝒞(τ_β)`.

use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eig, max_abs_diff, CMatrix, EigenSystem, HermitianOperator};
use crate::thermo::{check_beta, gibbs_from_eigensystem, shannon_entropy, DensityMatrix};

/// Partition of a spectrum into contiguous, nonempty slots.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotPartition {
    resolution: Option<f64>,
    slots: Vec<Range<usize>>,
    spectrum: Vec<f64>,
}

impl SlotPartition {
    /// Bins levels by `(J−1)δε ≤ ε_j − ε_min < Jδε`, anchored at the ground
    /// state. Empty bins are dropped. Numerically degenerate levels always
    /// share a slot, and a level within the degeneracy tolerance of a bin
    /// edge is placed in the bin that starts at that edge.
    pub fn from_resolution(spectrum: &EigenSystem, delta_eps: f64) -> Result<Self> {
        if !(delta_eps > 0.0) || !delta_eps.is_finite() {
            return Err(Error::Domain(format!(
                "energy resolution must be > 0, got {delta_eps}"
            )));
        }
        let e = spectrum.eigenvalues();
        let tol = spectrum.degeneracy_tol();
        let e0 = e[0];
        let bin_of = |x: f64| -> u64 {
            let r = (x - e0) / delta_eps;
            let k = r.floor();
            if (k + 1.0 - r) * delta_eps <= tol {
                (k + 1.0) as u64
            } else {
                k as u64
            }
        };

        let mut slots = Vec::new();
        let mut start = 0;
        let mut current = bin_of(e[0]);
        for j in 1..e.len() {
            if e[j] - e[j - 1] <= tol {
                continue;
            }
            let b = bin_of(e[j]);
            if b != current {
                slots.push(start..j);
                start = j;
                current = b;
            }
        }
        slots.push(start..e.len());
        Ok(Self {
            resolution: Some(delta_eps),
            slots,
            spectrum: e.to_vec(),
        })
    }

    /// Slots given by explicit sizes in ascending-energy order.
    pub fn from_slot_sizes(spectrum: &EigenSystem, sizes: &[usize]) -> Result<Self> {
        let n = spectrum.dim();
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidPartition("slots must be nonempty".into()));
        }
        let total: usize = sizes.iter().sum();
        if total != n {
            return Err(Error::InvalidPartition(format!(
                "slot sizes cover {total} levels, spectrum has {n}"
            )));
        }
        let e = spectrum.eigenvalues();
        let tol = spectrum.degeneracy_tol();
        let mut slots = Vec::with_capacity(sizes.len());
        let mut start = 0;
        for &s in sizes {
            let end = start + s;
            if end < n && e[end] - e[end - 1] <= tol {
                return Err(Error::InvalidPartition(format!(
                    "slot boundary at level {end} splits a degenerate eigenvalue"
                )));
            }
            slots.push(start..end);
            start = end;
        }
        Ok(Self {
            resolution: None,
            slots,
            spectrum: e.to_vec(),
        })
    }

    /// One level per slot: the fine-grained limit.
    pub fn singletons(spectrum: &EigenSystem) -> Self {
        Self {
            resolution: None,
            slots: (0..spectrum.dim()).map(|j| j..j + 1).collect(),
            spectrum: spectrum.eigenvalues().to_vec(),
        }
    }

    /// Everything in one slot: zero resolution.
    pub fn single_slot(spectrum: &EigenSystem) -> Self {
        Self {
            resolution: None,
            #[allow(clippy::single_range_in_vec_init)]
            slots: vec![0..spectrum.dim()],
            spectrum: spectrum.eigenvalues().to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn slots(&self) -> &[Range<usize>] {
        &self.slots
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.slots.iter().map(|r| r.len()).collect()
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    /// `δε` when the partition was built by binning.
    pub fn resolution(&self) -> Option<f64> {
        self.resolution
    }

    /// `δε`, or for explicit lists the widest slot's energy span.
    pub fn effective_resolution(&self) -> f64 {
        self.resolution.unwrap_or_else(|| {
            self.slots
                .iter()
                .map(|r| self.spectrum[r.end - 1] - self.spectrum[r.start])
                .fold(0.0, f64::max)
        })
    }

    /// Slot index of every level.
    pub fn slot_index(&self) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for (k, r) in self.slots.iter().enumerate() {
            for j in r.clone() {
                idx[j] = k;
            }
        }
        idx
    }

    /// Whether every slot has one level.
    pub fn is_fine(&self) -> bool {
        self.slots.iter().all(|r| r.len() == 1)
    }

    /// `min_{j ∈ J} ε_j` per slot.
    pub fn slot_minima(&self) -> Vec<f64> {
        self.slots.iter().map(|r| self.spectrum[r.start]).collect()
    }

    /// `Ē_J` per slot.
    pub fn slot_means(&self) -> Vec<f64> {
        self.slots
            .iter()
            .map(|r| self.spectrum[r.clone()].iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    /// Checks that this partition was built on `eig`'s spectrum.
    pub fn check_matches(&self, eig: &EigenSystem) -> Result<()> {
        if eig.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: eig.dim(),
            });
        }
        let tol = 1e-9 * (1.0 + eig.spectral_range());
        let same = eig
            .eigenvalues()
            .iter()
            .zip(&self.spectrum)
            .all(|(a, b)| (a - b).abs() <= tol);
        if same {
            Ok(())
        } else {
            Err(Error::InvalidPartition(
                "partition was built on a different spectrum".into(),
            ))
        }
    }

    /// `Π_J` expressed in the computational basis.
    pub fn projector(&self, eig: &EigenSystem, slot: usize) -> CMatrix {
        eig.projector(self.slots[slot].clone())
    }

    /// Slot populations `Tr[ρ Π_J]`.
    pub fn populations(&self, rho: &CMatrix, eig: &EigenSystem) -> Vec<f64> {
        let diag = energy_diagonal(rho, eig);
        self.slots
            .iter()
            .map(|r| diag[r.clone()].iter().sum())
            .collect()
    }

    /// Block-flat operator `Σ_J (w_J / N_J) Π_J`.
    pub fn flat_operator(&self, eig: &EigenSystem, slot_weights: &[f64]) -> CMatrix {
        let mut diag = vec![c(0.0, 0.0); self.dim()];
        for (r, &w) in self.slots.iter().zip(slot_weights) {
            let v = w / r.len() as f64;
            for j in r.clone() {
                diag[j] = c(v, 0.0);
            }
        }
        eig.compose(&diag)
    }
}

/// Diagonal of `ρ` in the eigenbasis: `⟨ε_j|ρ|ε_j⟩`.
pub(crate) fn energy_diagonal(rho: &CMatrix, eig: &EigenSystem) -> Vec<f64> {
    let v = eig.eigenvectors();
    let rv = rho * v;
    (0..eig.dim())
        .map(|j| {
            v.column(j)
                .iter()
                .zip(rv.column(j).iter())
                .map(|(a, b)| (a.conj() * b).re)
                .sum()
        })
        .collect()
}

/// `H̆ = Σ_J E_J Π_J` at a given inverse temperature.
#[derive(Debug, Clone)]
pub struct CoarseHamiltonian {
    pub partition: SlotPartition,
    /// `E_J = −(1/β) ln(Z_J / N_J)`.
    pub energies: Vec<f64>,
    /// `ln Z_J` with `Z_J = Σ_{j ∈ J} e^{−β ε_j}`.
    pub ln_slot_partition_functions: Vec<f64>,
    pub beta: f64,
    pub basis: EigenSystem,
}

impl CoarseHamiltonian {
    /// The coarse Hamiltonian in the computational basis.
    pub fn matrix(&self) -> HermitianOperator {
        let idx = self.partition.slot_index();
        let diag: Vec<Complex64> = idx.iter().map(|&k| c(self.energies[k], 0.0)).collect();
        HermitianOperator::new(self.basis.compose(&diag)).expect("H̆ is Hermitian")
    }

    /// `Σ_J E_J Tr[ρ Π_J]`.
    pub fn expectation(&self, rho: &CMatrix) -> f64 {
        self.partition
            .populations(rho, &self.basis)
            .iter()
            .zip(&self.energies)
            .map(|(p, e)| p * e)
            .sum()
    }

    pub fn to_record(&self) -> PartitionRecord {
        PartitionRecord {
            delta_eps: self.partition.resolution,
            slots: self
                .partition
                .slots
                .iter()
                .map(|r| [r.start, r.end - 1])
                .collect(),
            energies: self.energies.clone(),
            beta: self.beta,
        }
    }
}

/// JSON form of a partition with its coarse levels. `slots` holds inclusive
/// `[lo, hi]` level indices in ascending-energy order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionRecord {
    pub delta_eps: Option<f64>,
    pub slots: Vec<[usize; 2]>,
    pub energies: Vec<f64>,
    pub beta: f64,
}

impl PartitionRecord {
    /// Rebuilds the partition on `eig` (which must carry the same spectrum size).
    pub fn to_partition(&self, eig: &EigenSystem) -> Result<SlotPartition> {
        let mut sizes = Vec::with_capacity(self.slots.len());
        let mut next = 0;
        for &[lo, hi] in &self.slots {
            if lo != next || hi < lo {
                return Err(Error::InvalidPartition(format!(
                    "slot [{lo}, {hi}] is not contiguous with the previous one"
                )));
            }
            sizes.push(hi - lo + 1);
            next = hi + 1;
        }
        let mut p = SlotPartition::from_slot_sizes(eig, &sizes)?;
        p.resolution = self.delta_eps;
        Ok(p)
    }
}

fn slot_log_partition(energies: &[f64], beta: f64) -> f64 {
    let min = energies[0];
    let s: f64 = energies.iter().map(|&e| (-beta * (e - min)).exp()).sum();
    -beta * min + s.ln()
}

/// Coarse levels on an already diagonalized Hamiltonian.
pub fn coarse_energies_on(
    eig: &EigenSystem,
    partition: &SlotPartition,
    beta: f64,
) -> Result<CoarseHamiltonian> {
    check_beta(beta)?;
    partition.check_matches(eig)?;
    let e = eig.eigenvalues();
    let mut energies = Vec::with_capacity(partition.len());
    let mut ln_z = Vec::with_capacity(partition.len());
    for r in partition.slots() {
        let slot = &e[r.clone()];
        let min = slot[0];
        let mean_weight: f64 =
            slot.iter().map(|&x| (-beta * (x - min)).exp()).sum::<f64>() / r.len() as f64;
        energies.push(min - mean_weight.ln() / beta);
        ln_z.push(slot_log_partition(slot, beta));
    }
    Ok(CoarseHamiltonian {
        partition: partition.clone(),
        energies,
        ln_slot_partition_functions: ln_z,
        beta,
        basis: eig.clone(),
    })
}

pub fn coarse_energies(
    h: &HermitianOperator,
    partition: &SlotPartition,
    beta: f64,
) -> Result<CoarseHamiltonian> {
    coarse_energies_on(&hermitian_eig(h)?, partition, beta)
}

/// `𝒞(ρ) = Σ_J (Tr[ρ Π_J] / N_J) Π_J`.
pub fn coarse_grain(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    basis: &EigenSystem,
) -> Result<DensityMatrix> {
    if rho.dim() != partition.dim() || basis.dim() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            found: rho.dim(),
        });
    }
    let p = partition.populations(rho.matrix(), basis);
    DensityMatrix::new(partition.flat_operator(basis, &p))
}

/// Coarse Gibbs state `τ̆_β = Σ_J e^{−βE_J} Π_J / Z̆`.
#[derive(Debug, Clone)]
pub struct CoarseThermalState {
    pub hamiltonian: CoarseHamiltonian,
    pub state: DensityMatrix,
    /// `p̆_J = e^{−βE_J} N_J / Z̆`.
    pub slot_probabilities: Vec<f64>,
    pub ln_partition_function: f64,
    pub partition_function: f64,
    pub free_energy: f64,
}

pub fn coarse_thermal_state_on(
    eig: &EigenSystem,
    partition: &SlotPartition,
    beta: f64,
) -> Result<CoarseThermalState> {
    let hamiltonian = coarse_energies_on(eig, partition, beta)?;
    let mult = partition.multiplicities();
    let min = hamiltonian
        .energies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = hamiltonian
        .energies
        .iter()
        .zip(&mult)
        .map(|(&e, &n)| (-beta * (e - min)).exp() * n as f64)
        .collect();
    let total: f64 = w.iter().sum();
    let slot_probabilities: Vec<f64> = w.iter().map(|x| x / total).collect();
    let ln_z = -beta * min + total.ln();
    let state = DensityMatrix::new(partition.flat_operator(eig, &slot_probabilities))?;
    Ok(CoarseThermalState {
        hamiltonian,
        state,
        slot_probabilities,
        ln_partition_function: ln_z,
        partition_function: ln_z.exp(),
        free_energy: -ln_z / beta,
    })
}

pub fn coarse_thermal_state(
    h: &HermitianOperator,
    partition: &SlotPartition,
    beta: f64,
) -> Result<CoarseThermalState> {
    coarse_thermal_state_on(&hermitian_eig(h)?, partition, beta)
}

/// Observational entropy `S(𝒞(ρ)) = −Σ_J p̆_J ln(p̆_J / N_J)`.
pub fn observational_entropy(
    rho: &DensityMatrix,
    partition: &SlotPartition,
    basis: &EigenSystem,
) -> Result<f64> {
    if rho.dim() != partition.dim() {
        return Err(Error::DimensionMismatch {
            expected: partition.dim(),
            found: rho.dim(),
        });
    }
    let p = partition.populations(rho.matrix(), basis);
    let h: f64 = p
        .iter()
        .zip(partition.multiplicities())
        .filter(|(&q, _)| q > crate::thermo::ENTROPY_CUTOFF)
        .map(|(&q, n)| -q * (q / n as f64).ln())
        .sum();
    Ok(h)
}

/// Residuals of the thermodynamic-consistency identities for one partition.
#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    /// `|e^{−βE_J} N_J / Z_J − 1|` per slot.
    pub slot_residuals: Vec<f64>,
    /// `|F̆ − F|`.
    pub free_energy_gap: f64,
    /// `‖𝒞(τ_β) − τ̆_β‖_max`.
    pub state_gap: f64,
    /// `E_J^min ≤ E_J ≤ Ē_J` for every slot (1e-12 slack).
    pub bounds_hold: bool,
}

impl ConsistencyReport {
    pub fn max_slot_residual(&self) -> f64 {
        self.slot_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_slot_residual() <= tol
            && self.free_energy_gap <= tol
            && self.state_gap <= tol
            && self.bounds_hold
    }
}

/// Checks `e^{−βE_J} N_J = Σ_{j∈J} e^{−βε_j}`, `F̆ = F` and `𝒞(τ_β) = τ̆_β`
/// for the given coarse levels (normally those from [`coarse_energies`]).
pub fn verify_energies(
    eig: &EigenSystem,
    partition: &SlotPartition,
    beta: f64,
    energies: &[f64],
) -> Result<ConsistencyReport> {
    check_beta(beta)?;
    partition.check_matches(eig)?;
    if energies.len() != partition.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.len(),
            found: energies.len(),
        });
    }
    let e = eig.eigenvalues();
    let mult = partition.multiplicities();
    let slot_residuals: Vec<f64> = partition
        .slots()
        .iter()
        .zip(energies)
        .zip(&mult)
        .map(|((r, &ej), &n)| {
            let ln_zj = slot_log_partition(&e[r.clone()], beta);
            ((-beta * ej + (n as f64).ln() - ln_zj).exp() - 1.0).abs()
        })
        .collect();

    let spectrum: Vec<Complex64> = e.iter().map(|&x| c(x, 0.0)).collect();
    let fine = gibbs_from_eigensystem(
        HermitianOperator::new(eig.compose(&spectrum))?,
        eig.clone(),
        beta,
    )?;
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = energies
        .iter()
        .zip(&mult)
        .map(|(&x, &n)| (-beta * (x - min)).exp() * n as f64)
        .collect();
    let total: f64 = w.iter().sum();
    let coarse_f = min - total.ln() / beta;
    let probs: Vec<f64> = w.iter().map(|x| x / total).collect();
    let coarse_state = partition.flat_operator(eig, &probs);
    let flattened = coarse_grain(&fine.state, partition, eig)?;

    let minima = partition.slot_minima();
    let means = partition.slot_means();
    let bounds_hold = energies
        .iter()
        .zip(minima.iter().zip(&means))
        .all(|(&x, (&lo, &hi))| {
            let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
            x >= lo - slack && x <= hi + slack
        });

    Ok(ConsistencyReport {
        slot_residuals,
        free_energy_gap: (coarse_f - fine.free_energy).abs(),
        state_gap: max_abs_diff(flattened.matrix(), &coarse_state),
        bounds_hold,
    })
}

pub fn verify_consistency(
    h: &HermitianOperator,
    partition: &SlotPartition,
    beta: f64,
) -> Result<ConsistencyReport> {
    let eig = hermitian_eig(h)?;
    let ch = coarse_energies_on(&eig, partition, beta)?;
    verify_energies(&eig, partition, beta, &ch.energies)
}

/// Shannon entropy of slot populations with the within-slot flat part,
/// i.e. the von Neumann entropy of a block-flat state.
pub(crate) fn flat_state_entropy(slot_probabilities: &[f64], mult: &[usize]) -> f64 {
    let per_level: Vec<f64> = slot_probabilities
        .iter()
        .zip(mult)
        .flat_map(|(&p, &n)| std::iter::repeat_n(p / n as f64, n))
        .collect();
    shannon_entropy(&per_level)
}

/// How to cut a spectrum into slots. The same rule is applied to the
/// Hamiltonians at both ends of a protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Resolution {
    /// One level per slot.
    Fine,
    /// All levels in one slot.
    Whole,
    /// Ground-state-anchored bins of width `δε`.
    Width(f64),
    /// Explicit slot sizes in ascending-energy order.
    Sizes(Vec<usize>),
}

impl Resolution {
    pub fn partition(&self, eig: &EigenSystem) -> Result<SlotPartition> {
        match self {
            Resolution::Fine => Ok(SlotPartition::singletons(eig)),
            Resolution::Whole => Ok(SlotPartition::single_slot(eig)),
            Resolution::Width(d) => SlotPartition::from_resolution(eig, *d),
            Resolution::Sizes(s) => SlotPartition::from_slot_sizes(eig, s),
        }
    }
}
