//! Two-point-measurement work statistics at fine and finite energy
//! resolution, and the fluctuation relations they satisfy.
//!
//! Tables are indexed `[I][J]` with `I` an outcome of the measurement of
//! `H₀` at `t = 0` and `J` an outcome of the measurement of `H_τ` at `t = τ`.
//! Reverse tables keep this indexing and the forward work convention
//! `W_IJ = E_J^(τ) − E_I^(0)`; the reverse process itself performs `−W_IJ`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_thermal_state_on, CoarseThermalState, Resolution, SlotPartition};
use crate::dynamics::{reverse_protocol, Protocol};
use crate::error::{Error, Result};
use crate::linalg::{
    c, conjugate_in_basis, hermitian_eig, max_abs_diff, trace_product, unitarity_defect, CMatrix,
    HermitianOperator,
};
use crate::numfmt::sig17;
use crate::thermo::{gibbs_from_eigensystem, ThermalEnsemble};

/// Largest tolerated `‖U†U − 𝟙‖_max` for a propagator handed to a TPM table.
pub const UNITARITY_TOL: f64 = 1e-8;
/// Atoms below this probability are left out of fluctuation-theorem checks.
pub const ATOM_FLOOR: f64 = 1e-14;

/// One end of a protocol as seen by a measuring agent: the Hamiltonian, its
/// Gibbs state, the slots the agent resolves, and the coarse Gibbs state.
#[derive(Debug, Clone)]
pub struct MeasurementFrame {
    pub thermal: ThermalEnsemble,
    pub partition: SlotPartition,
    pub coarse: CoarseThermalState,
}

impl MeasurementFrame {
    pub fn new(h: &HermitianOperator, resolution: &Resolution, beta: f64) -> Result<Self> {
        let eig = hermitian_eig(h)?;
        let partition = resolution.partition(&eig)?;
        let coarse = coarse_thermal_state_on(&eig, &partition, beta)?;
        let thermal = gibbs_from_eigensystem(h.clone(), eig, beta)?;
        Ok(Self {
            thermal,
            partition,
            coarse,
        })
    }

    pub fn with_partition(
        h: &HermitianOperator,
        partition: SlotPartition,
        beta: f64,
    ) -> Result<Self> {
        let eig = hermitian_eig(h)?;
        let coarse = coarse_thermal_state_on(&eig, &partition, beta)?;
        let thermal = gibbs_from_eigensystem(h.clone(), eig, beta)?;
        Ok(Self {
            thermal,
            partition,
            coarse,
        })
    }

    pub fn dim(&self) -> usize {
        self.partition.dim()
    }

    pub fn beta(&self) -> f64 {
        self.thermal.beta
    }

    pub fn coarse_energies(&self) -> &[f64] {
        &self.coarse.hamiltonian.energies
    }

    /// `ln τ̆` built from the coarse levels, exact even where `τ̆` underflows.
    fn coarse_log(&self) -> CMatrix {
        let beta = self.beta();
        let e = self.coarse_energies();
        let ln_z = self.coarse.ln_partition_function;
        let diag: Vec<Complex64> = self
            .partition
            .slot_index()
            .iter()
            .map(|&k| c(-beta * e[k] - ln_z, 0.0))
            .collect();
        self.thermal.eigensystem.compose(&diag)
    }

    fn thermal_log(&self) -> CMatrix {
        let t = &self.thermal;
        let diag: Vec<Complex64> = t
            .eigensystem
            .eigenvalues()
            .iter()
            .map(|&e| c(-t.beta * e - t.ln_partition_function, 0.0))
            .collect();
        t.eigensystem.compose(&diag)
    }

    fn projectors(&self) -> Vec<CMatrix> {
        (0..self.partition.len())
            .map(|k| self.partition.projector(&self.thermal.eigensystem, k))
            .collect()
    }
}

/// Frames for both ends of `p` with the same slot rule applied to each.
pub fn protocol_frames(
    p: &Protocol,
    resolution: &Resolution,
    beta: f64,
) -> Result<(MeasurementFrame, MeasurementFrame)> {
    Ok((
        MeasurementFrame::new(p.initial_hamiltonian(), resolution, beta)?,
        MeasurementFrame::new(p.final_hamiltonian(), resolution, beta)?,
    ))
}

fn check_frames(initial: &MeasurementFrame, terminal: &MeasurementFrame) -> Result<()> {
    if initial.dim() != terminal.dim() {
        return Err(Error::DimensionMismatch {
            expected: initial.dim(),
            found: terminal.dim(),
        });
    }
    if initial.beta() != terminal.beta() {
        return Err(Error::Domain(format!(
            "frames disagree on beta: {} vs {}",
            initial.beta(),
            terminal.beta()
        )));
    }
    Ok(())
}

fn check_unitary(u: &CMatrix, dim: usize) -> Result<()> {
    if u.nrows() != dim || u.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: u.nrows(),
        });
    }
    let defect = unitarity_defect(u);
    if defect > UNITARITY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    Ok(())
}

fn check_protocol_frames(
    p: &Protocol,
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
) -> Result<()> {
    check_frames(initial, terminal)?;
    let tol = 1e-12 * (1.0 + p.initial_hamiltonian().max_abs());
    if max_abs_diff(
        p.initial_hamiltonian().matrix(),
        initial.thermal.hamiltonian.matrix(),
    ) > tol
        || max_abs_diff(
            p.final_hamiltonian().matrix(),
            terminal.thermal.hamiltonian.matrix(),
        ) > tol
    {
        return Err(Error::InvalidPartition(
            "frames were not built on the protocol's end Hamiltonians".into(),
        ));
    }
    Ok(())
}

/// Joint outcome probabilities of a two-point measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointOutcomeTable {
    pub probs: Vec<Vec<f64>>,
    pub work_values: Vec<Vec<f64>>,
    pub initial_levels: Vec<f64>,
    pub final_levels: Vec<f64>,
    pub beta: f64,
    /// Fine-grained `F_τ − F₀`.
    pub delta_f: f64,
}

impl JointOutcomeTable {
    fn build(
        probs: Vec<Vec<f64>>,
        initial_levels: &[f64],
        final_levels: &[f64],
        beta: f64,
        delta_f: f64,
    ) -> Self {
        let work_values = initial_levels
            .iter()
            .map(|ei| final_levels.iter().map(|ej| ej - ei).collect())
            .collect();
        Self {
            probs,
            work_values,
            initial_levels: initial_levels.to_vec(),
            final_levels: final_levels.to_vec(),
            beta,
            delta_f,
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().flatten().sum()
    }

    pub fn min_entry(&self) -> f64 {
        self.probs
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks normalization to 1e-10 and entries above −1e-12.
    pub fn validate(&self) -> Result<()> {
        let total = self.total();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("table sums to {total}")));
        }
        let min = self.min_entry();
        if min < -1e-12 {
            return Err(Error::InvalidState(format!("negative table entry {min}")));
        }
        Ok(())
    }

    /// `⟨W⟩ = Σ P_IJ W_IJ`.
    pub fn mean_work(&self) -> f64 {
        self.probs
            .iter()
            .flatten()
            .zip(self.work_values.iter().flatten())
            .map(|(p, w)| p * w)
            .sum()
    }

    /// Both measurements have a single outcome, so the work is deterministic
    /// and no free-energy information can be read off the distribution.
    pub fn single_outcome(&self) -> bool {
        self.initial_levels.len() == 1 && self.final_levels.len() == 1
    }

    /// Largest `|W_IJ|`, the scale for merging work atoms.
    pub fn work_scale(&self) -> f64 {
        self.work_values
            .iter()
            .flatten()
            .fold(0.0, |m: f64, w| m.max(w.abs()))
    }
}

fn delta_f(initial: &MeasurementFrame, terminal: &MeasurementFrame) -> f64 {
    terminal.thermal.free_energy - initial.thermal.free_energy
}

/// `P_nm = p_n |⟨ε_m^(τ)|U|ε_n^(0)⟩|²`.
pub fn tpm_fine(
    h0: &HermitianOperator,
    htau: &HermitianOperator,
    u: &CMatrix,
    beta: f64,
) -> Result<JointOutcomeTable> {
    let initial = MeasurementFrame::new(h0, &Resolution::Fine, beta)?;
    let terminal = MeasurementFrame::new(htau, &Resolution::Fine, beta)?;
    tpm_fine_on(&initial, &terminal, u)
}

/// Fine table on prepared frames. The frames' slots are ignored.
pub fn tpm_fine_on(
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    u: &CMatrix,
) -> Result<JointOutcomeTable> {
    check_frames(initial, terminal)?;
    let n = initial.dim();
    check_unitary(u, n)?;
    let amp = terminal.thermal.eigensystem.eigenvectors().adjoint()
        * u
        * initial.thermal.eigensystem.eigenvectors();
    let p = &initial.thermal.populations;
    let probs = (0..n)
        .map(|i| (0..n).map(|m| p[i] * amp[(m, i)].norm_sqr()).collect())
        .collect();
    Ok(JointOutcomeTable::build(
        probs,
        initial.thermal.eigensystem.eigenvalues(),
        terminal.thermal.eigensystem.eigenvalues(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

/// `Tr[Π_J U Π_I U†] = Σ_{m ∈ J, n ∈ I} |⟨b_m|U|a_n⟩|²` for orthonormal bases
/// `a` (columns of `from`) and `b` (columns of `to`). Summing squared
/// amplitudes keeps small transition weights accurate to a relative error
/// of order `ε/|amplitude|`, where a dense trace only reaches `ε` absolute.
fn slot_transitions(
    to: &CMatrix,
    u: &CMatrix,
    from: &CMatrix,
    to_slots: &SlotPartition,
    from_slots: &SlotPartition,
) -> Vec<Vec<f64>> {
    let amp = to.adjoint() * u * from;
    from_slots
        .slots()
        .iter()
        .map(|i| {
            to_slots
                .slots()
                .iter()
                .map(|j| {
                    let mut t = 0.0;
                    for n in i.clone() {
                        for m in j.clone() {
                            t += amp[(m, n)].norm_sqr();
                        }
                    }
                    t
                })
                .collect()
        })
        .collect()
}

/// `P̆_IJ = p̆_I Tr[Π_J U Π_I U†] / N_I`: measure, reprepare `Π_I/N_I`,
/// evolve, measure again.
pub fn tpm_coarse_forward(
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    u: &CMatrix,
) -> Result<JointOutcomeTable> {
    check_frames(initial, terminal)?;
    check_unitary(u, initial.dim())?;
    let t = slot_transitions(
        terminal.thermal.eigensystem.eigenvectors(),
        u,
        initial.thermal.eigensystem.eigenvectors(),
        &terminal.partition,
        &initial.partition,
    );
    let mult = initial.partition.multiplicities();
    let pbreve = &initial.coarse.slot_probabilities;
    let probs = t
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .map(|x| pbreve[i] * x / mult[i] as f64)
                .collect()
        })
        .collect();
    Ok(JointOutcomeTable::build(
        probs,
        initial.coarse_energies(),
        terminal.coarse_energies(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

/// `P̃̆_IJ = p̆_J^(τ) Tr[Θ Π_I^(0) Θ† Ũ Θ Π_J^(τ) Θ† Ũ†] / N_J^(τ)` with `Ũ`
/// the propagator of the time-reversed protocol over its full duration.
pub fn tpm_coarse_reverse(
    p: &Protocol,
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
) -> Result<JointOutcomeTable> {
    check_protocol_frames(p, initial, terminal)?;
    let ut = reverse_protocol(p).forward_propagator(p.duration())?;
    // Θ maps the eigenbases of H₀ and H_τ to those of ΘH₀Θ† and ΘH_τΘ†
    let t = slot_transitions(
        &conjugate_in_basis(initial.thermal.eigensystem.eigenvectors()),
        &ut,
        &conjugate_in_basis(terminal.thermal.eigensystem.eigenvectors()),
        &initial.partition,
        &terminal.partition,
    );
    let mult = terminal.partition.multiplicities();
    let pbreve = &terminal.coarse.slot_probabilities;
    let probs = (0..initial.partition.len())
        .map(|i| {
            (0..terminal.partition.len())
                .map(|j| pbreve[j] * t[j][i] / mult[j] as f64)
                .collect()
        })
        .collect();
    Ok(JointOutcomeTable::build(
        probs,
        initial.coarse_energies(),
        terminal.coarse_energies(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

/// `P̄_IJ = Tr[Π_J U Π_I τ_β Π_I U†]`: projection without repreparation.
pub fn tpm_noninvasive(
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    u: &CMatrix,
) -> Result<JointOutcomeTable> {
    check_frames(initial, terminal)?;
    check_unitary(u, initial.dim())?;
    let tau0 = initial.thermal.state.matrix();
    let pit = terminal.projectors();
    let probs = initial
        .projectors()
        .iter()
        .map(|a| {
            let evolved = u * (a * tau0 * a) * u.adjoint();
            pit.iter().map(|b| trace_product(b, &evolved).re).collect()
        })
        .collect();
    Ok(JointOutcomeTable::build(
        probs,
        initial.coarse_energies(),
        terminal.coarse_energies(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

/// Time-reversed counterpart of [`tpm_noninvasive`], started from the
/// projected reversed Gibbs state `Σ_J Θ Π_J τ_β^(τ) Π_J Θ†`.
pub fn tpm_noninvasive_reverse(
    p: &Protocol,
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
) -> Result<JointOutcomeTable> {
    check_protocol_frames(p, initial, terminal)?;
    let ut = reverse_protocol(p).forward_propagator(p.duration())?;
    let tau = conjugate_in_basis(terminal.thermal.state.matrix());
    let pi0: Vec<CMatrix> = initial
        .projectors()
        .iter()
        .map(conjugate_in_basis)
        .collect();
    let evolved: Vec<CMatrix> = terminal
        .projectors()
        .iter()
        .map(conjugate_in_basis)
        .map(|b| &ut * (&b * &tau * &b) * ut.adjoint())
        .collect();
    let probs = pi0
        .iter()
        .map(|a| evolved.iter().map(|e| trace_product(a, e).re).collect())
        .collect();
    Ok(JointOutcomeTable::build(
        probs,
        initial.coarse_energies(),
        terminal.coarse_energies(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

/// Largest dimension accepted by [`brute_force_oracle`].
pub const ORACLE_MAX_DIM: usize = 6;

/// Independent evaluation of the coarse forward table by enumerating fine
/// transition amplitudes. Slot populations come from the fine Gibbs
/// populations rather than the coarse levels, and the repreparation is an
/// equal-weight mixture over slot members.
pub fn brute_force_oracle(
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    u: &CMatrix,
) -> Result<JointOutcomeTable> {
    check_frames(initial, terminal)?;
    let n = initial.dim();
    if n > ORACLE_MAX_DIM {
        return Err(Error::OracleTooLarge {
            dim: n,
            max: ORACLE_MAX_DIM,
        });
    }
    check_unitary(u, n)?;
    let v0 = initial.thermal.eigensystem.eigenvectors();
    let vt = terminal.thermal.eigensystem.eigenvectors();
    let slot0 = initial.partition.slot_index();
    let slott = terminal.partition.slot_index();
    let mult = initial.partition.multiplicities();

    let mut slot_pop = vec![0.0; initial.partition.len()];
    for (k, &p) in initial.thermal.populations.iter().enumerate() {
        slot_pop[slot0[k]] += p;
    }

    let mut probs = vec![vec![0.0; terminal.partition.len()]; initial.partition.len()];
    for nn in 0..n {
        let i = slot0[nn];
        let weight = slot_pop[i] / mult[i] as f64;
        for m in 0..n {
            let mut amp = c(0.0, 0.0);
            for k in 0..n {
                for l in 0..n {
                    amp += vt[(k, m)].conj() * u[(k, l)] * v0[(l, nn)];
                }
            }
            probs[i][slott[m]] += weight * amp.norm_sqr();
        }
    }
    Ok(JointOutcomeTable::build(
        probs,
        initial.coarse_energies(),
        terminal.coarse_energies(),
        initial.beta(),
        delta_f(initial, terminal),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkAtom {
    pub w: f64,
    pub p: f64,
}

/// Discrete work distribution with atoms strictly increasing in `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistribution {
    pub atoms: Vec<WorkAtom>,
    /// Work values closer than this were merged into one atom.
    pub tolerance: f64,
}

impl WorkDistribution {
    /// Probability of the atom at `w`, matched within the merge tolerance.
    pub fn probability_at(&self, w: f64) -> Option<f64> {
        let k = self.atoms.partition_point(|a| a.w < w - self.tolerance);
        self.atoms
            .get(k)
            .filter(|a| (a.w - w).abs() <= self.tolerance)
            .map(|a| a.p)
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|a| a.w * a.p).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,p\n");
        for a in &self.atoms {
            s.push_str(&format!("{},{}\n", sig17(a.w), sig17(a.p)));
        }
        s
    }
}

/// Relative tolerance for merging work atoms. Work values that agree to
/// rounding are merged; values that merely lie close are kept apart, since
/// pooling them would shift the pooled atom off the fluctuation relation by
/// up to `β` times their spread.
pub const MERGE_REL_TOL: f64 = 1e-12;

/// Atoms `(sign · W_IJ, P_IJ)`, merged when consecutive work values differ
/// by at most `MERGE_REL_TOL · max(1, max|W|)`. A merged atom sits at the mean of its
/// members, so the forward and sign-flipped reverse atoms line up exactly.
pub fn work_distribution(table: &JointOutcomeTable, sign: f64) -> WorkDistribution {
    let tolerance = MERGE_REL_TOL * table.work_scale().max(1.0);
    let mut entries: Vec<(f64, f64)> = table
        .work_values
        .iter()
        .flatten()
        .zip(table.probs.iter().flatten())
        .map(|(&w, &p)| (sign * w, p.max(0.0)))
        .collect();
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));

    let total: f64 = entries.iter().map(|e| e.1).sum();
    let mut atoms = Vec::new();
    let mut k = 0;
    while k < entries.len() {
        let mut end = k + 1;
        while end < entries.len() && entries[end].0 - entries[end - 1].0 <= tolerance {
            end += 1;
        }
        let members = &entries[k..end];
        let w = members.iter().map(|e| e.0).sum::<f64>() / members.len() as f64;
        let p = members.iter().map(|e| e.1).sum::<f64>() / total;
        atoms.push(WorkAtom { w, p });
        k = end;
    }
    WorkDistribution { atoms, tolerance }
}

/// `⟨e^{−β(W − ΔF)}⟩`.
pub fn jarzynski_check(forward: &WorkDistribution, beta: f64, delta_f: f64) -> f64 {
    forward
        .atoms
        .iter()
        .map(|a| a.p * (-beta * (a.w - delta_f)).exp())
        .sum()
}

/// `⟨W⟩ − ΔF` of a table.
pub fn dissipated_work(table: &JointOutcomeTable) -> f64 {
    table.mean_work() - table.delta_f
}

/// One forward atom compared with the reverse atom at `−w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrooksAtom {
    pub w: f64,
    pub p_forward: f64,
    /// `P̃(−w)`, zero when the reverse distribution has no such atom.
    pub p_reverse_neg: f64,
    /// `ln(P(w)/P̃(−w))`, `None` when either side is below [`ATOM_FLOOR`].
    pub ln_ratio: Option<f64>,
    pub beta_w_minus_df: f64,
    /// `w − ln(P(w)/P̃(−w))/β`.
    pub delta_f_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtReport {
    pub beta: f64,
    pub delta_f: f64,
    pub jarzynski_value: f64,
    pub max_crooks_log_residual: f64,
    pub max_delta_f_error: f64,
    pub delta_f_estimates: Vec<f64>,
    /// Work values with probability above [`ATOM_FLOOR`] on one side and
    /// none at all on the other.
    pub one_sided: Vec<f64>,
    pub atoms: Vec<CrooksAtom>,
    pub jarzynski_pass: bool,
    pub crooks_pass: bool,
    pub delta_f_pass: bool,
}

impl FtReport {
    pub fn passes(&self) -> bool {
        self.jarzynski_pass && self.crooks_pass && self.delta_f_pass
    }

    /// Columns `w, p_forward, p_reverse_neg, ln_ratio, beta_w_minus_dF`;
    /// `ln_ratio` is empty where undefined.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("w,p_forward,p_reverse_neg,ln_ratio,beta_w_minus_dF\n");
        for a in &self.atoms {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                sig17(a.w),
                sig17(a.p_forward),
                sig17(a.p_reverse_neg),
                a.ln_ratio.map(sig17).unwrap_or_default(),
                sig17(a.beta_w_minus_df)
            ));
        }
        s
    }
}

/// Compares `ln P(w) − ln P̃(−w)` with `β(w − ΔF)` on every forward atom.
/// `reverse` must hold the reverse-process work, i.e. come from
/// `work_distribution(reverse_table, -1.0)`.
pub fn detailed_ft_check(
    forward: &WorkDistribution,
    reverse: &WorkDistribution,
    beta: f64,
    delta_f: f64,
) -> FtReport {
    let mut atoms = Vec::with_capacity(forward.atoms.len());
    let mut estimates = Vec::new();
    let mut one_sided = Vec::new();
    let mut max_res: f64 = 0.0;
    let mut max_df: f64 = 0.0;
    for a in &forward.atoms {
        let q = reverse.probability_at(-a.w).unwrap_or(0.0);
        let bw = beta * (a.w - delta_f);
        let (ln_ratio, est) = if a.p > ATOM_FLOOR && q > ATOM_FLOOR {
            let lr = (a.p / q).ln();
            let est = a.w - lr / beta;
            max_res = max_res.max((lr - bw).abs());
            max_df = max_df.max((est - delta_f).abs());
            estimates.push(est);
            (Some(lr), Some(est))
        } else {
            if a.p > ATOM_FLOOR && q <= 0.0 {
                one_sided.push(a.w);
            }
            (None, None)
        };
        atoms.push(CrooksAtom {
            w: a.w,
            p_forward: a.p,
            p_reverse_neg: q,
            ln_ratio,
            beta_w_minus_df: bw,
            delta_f_estimate: est,
        });
    }
    for b in &reverse.atoms {
        if b.p > ATOM_FLOOR && forward.probability_at(-b.w).unwrap_or(0.0) <= 0.0 {
            one_sided.push(-b.w);
        }
    }
    let jarzynski_value = jarzynski_check(forward, beta, delta_f);
    FtReport {
        beta,
        delta_f,
        jarzynski_value,
        max_crooks_log_residual: max_res,
        max_delta_f_error: max_df,
        delta_f_estimates: estimates,
        jarzynski_pass: (jarzynski_value - 1.0).abs() <= 1e-10,
        crooks_pass: max_res <= 1e-10 && one_sided.is_empty(),
        delta_f_pass: max_df <= 1e-9,
        one_sided,
        atoms,
    }
}

/// `S(ρ̆(t) ‖ Θ† ρ̃̆(τ−t) Θ)` with `ρ̆(t) = U(t,0) τ̆_β^(0) U†(t,0)` and
/// `ρ̃̆(τ−t) = Ũ(τ−t,0) Θ τ̆_β^(τ) Θ† Ũ†(τ−t,0)`. With fine frames this is
/// the fine-grained forward/reverse relative entropy.
pub fn forward_reverse_relative_entropy(
    p: &Protocol,
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    t: f64,
) -> Result<f64> {
    check_protocol_frames(p, initial, terminal)?;
    relative_entropy_at(
        p,
        initial.coarse.state.matrix(),
        &initial.coarse_log(),
        &terminal.coarse_log(),
        t,
    )
}

/// `S(U ρ₀ U† ‖ Θ†Ũ Θρ_τΘ† Ũ†Θ)` given `ρ₀`, `ln ρ₀` and `ln ρ_τ`.
/// Evolving the logarithms instead of taking them afresh keeps the cross
/// term accurate when the states have populations near underflow.
fn relative_entropy_at(
    p: &Protocol,
    rho0: &CMatrix,
    ln_rho0: &CMatrix,
    ln_rhot: &CMatrix,
    t: f64,
) -> Result<f64> {
    let tau = p.duration();
    let u = p.forward_propagator(t)?;
    let ut = reverse_protocol(p).forward_propagator((tau - t).max(0.0))?;
    let fwd = &u * rho0 * u.adjoint();
    let ln_fwd = &u * ln_rho0 * u.adjoint();
    let ln_back = conjugate_in_basis(&(&ut * conjugate_in_basis(ln_rhot) * ut.adjoint()));
    Ok((fwd * (ln_fwd - ln_back)).trace().re)
}

/// Quantities on both sides of the non-invasive dissipation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoninvasiveReport {
    /// `β(⟨W⟩ − ΔF)` from the fine table.
    pub beta_dissipated_fine: f64,
    /// `S(ρ(t) ‖ Θ†ρ̃(τ−t)Θ)`.
    pub relative_entropy_fine: f64,
    /// `S(ρ̄(t) ‖ Θ†ρ̄̃(τ−t)Θ)` with projected Gibbs states.
    pub relative_entropy_projected: f64,
    /// `β(⟨W̄⟩ − ΔF)` from the non-invasive table.
    pub beta_dissipated_projected: f64,
    /// `|β(⟨W⟩ − ΔF) − S(ρ(t)‖…)|`.
    pub identity_residual: f64,
    pub contractivity_holds: bool,
    /// `S(ρ̄‖…) − β(⟨W̄⟩ − ΔF)`, generically nonzero.
    pub mismatch: f64,
}

fn pinch(state: &CMatrix, projectors: &[CMatrix]) -> CMatrix {
    let n = state.nrows();
    projectors
        .iter()
        .fold(CMatrix::zeros(n, n), |acc, a| acc + a * state * a)
}

pub fn noninvasive_bound_check(
    p: &Protocol,
    initial: &MeasurementFrame,
    terminal: &MeasurementFrame,
    t: f64,
) -> Result<NoninvasiveReport> {
    check_protocol_frames(p, initial, terminal)?;
    let beta = initial.beta();
    let u = p.forward_propagator(p.duration())?;
    let fine = tpm_fine_on(initial, terminal, &u)?;
    let bar = tpm_noninvasive(initial, terminal, &u)?;
    let tau0 = initial.thermal.state.matrix();
    let (ln0, lnt) = (initial.thermal_log(), terminal.thermal_log());
    let s_fine = relative_entropy_at(p, tau0, &ln0, &lnt, t)?;
    // Pinching commutes with the logarithm for block-diagonal states.
    let (p0, pt) = (initial.projectors(), terminal.projectors());
    let s_bar = relative_entropy_at(
        p,
        &pinch(tau0, &p0),
        &pinch(&ln0, &p0),
        &pinch(&lnt, &pt),
        t,
    )?;
    let bd_fine = beta * dissipated_work(&fine);
    let bd_bar = beta * dissipated_work(&bar);
    Ok(NoninvasiveReport {
        beta_dissipated_fine: bd_fine,
        relative_entropy_fine: s_fine,
        relative_entropy_projected: s_bar,
        beta_dissipated_projected: bd_bar,
        identity_residual: (bd_fine - s_fine).abs(),
        contractivity_holds: s_fine >= s_bar - 1e-9,
        mismatch: s_bar - bd_bar,
    })
}

/// Fine, coarse forward and coarse reverse tables of one protocol.
#[derive(Debug, Clone)]
pub struct TpmSet {
    pub fine: JointOutcomeTable,
    pub fine_reverse: JointOutcomeTable,
    pub forward: JointOutcomeTable,
    pub reverse: JointOutcomeTable,
}

/// All four tables for `p` with the given slot rule at both ends.
pub fn tpm_tables(p: &Protocol, resolution: &Resolution, beta: f64) -> Result<TpmSet> {
    let (i0, it) = protocol_frames(p, resolution, beta)?;
    let (f0, ft) = protocol_frames(p, &Resolution::Fine, beta)?;
    let u = p.forward_propagator(p.duration())?;
    Ok(TpmSet {
        fine: tpm_fine_on(&f0, &ft, &u)?,
        fine_reverse: tpm_coarse_reverse(p, &f0, &ft)?,
        forward: tpm_coarse_forward(&i0, &it, &u)?,
        reverse: tpm_coarse_reverse(p, &i0, &it)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::case_study_protocol;
    use crate::linalg::identity;

    fn frames(p: &Protocol, r: Resolution, beta: f64) -> (MeasurementFrame, MeasurementFrame) {
        protocol_frames(p, &r, beta).unwrap()
    }

    #[test]
    fn identity_evolution_is_diagonal() {
        let h = HermitianOperator::from_real_diagonal(&[0.0, 1.0, 2.5]).unwrap();
        let t = tpm_fine(&h, &h, &identity(3), 0.7).unwrap();
        let gibbs = crate::thermo::gibbs_state(&h, 0.7).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { gibbs.populations[i] } else { 0.0 };
                assert!((t.probs[i][j] - expected).abs() < 1e-15);
            }
            assert_eq!(t.work_values[i][i], 0.0);
        }
        let d = work_distribution(&t, 1.0);
        assert!(d
            .atoms
            .iter()
            .any(|a| a.w == 0.0 && (a.p - 1.0).abs() < 1e-15));
    }

    #[test]
    fn swap_permutes_populations() {
        let h = HermitianOperator::from_real_diagonal(&[0.0, 1.0]).unwrap();
        let x =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let t = tpm_fine(&h, &h, &x, 1.0).unwrap();
        let p0 = 1.0 / (1.0 + (-1f64).exp());
        assert!((t.probs[0][1] - p0).abs() < 1e-15);
        assert!((t.probs[1][0] - (1.0 - p0)).abs() < 1e-15);
        assert_eq!(t.probs[0][0], 0.0);
        assert!(tpm_fine(&h, &h, &(x * c(1.1, 0.0)), 1.0).is_err());
    }

    #[test]
    fn fine_slots_reduce_to_fine_table() {
        let p = case_study_protocol(8, 2.0, 2.0, 1.0, 1.0).unwrap();
        let (i0, it) = frames(&p, Resolution::Fine, 0.5);
        let u = p.forward_propagator(1.0).unwrap();
        let fine = tpm_fine_on(&i0, &it, &u).unwrap();
        for t in [
            tpm_coarse_forward(&i0, &it, &u).unwrap(),
            tpm_noninvasive(&i0, &it, &u).unwrap(),
        ] {
            for (a, b) in t.probs.iter().flatten().zip(fine.probs.iter().flatten()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in t
                .work_values
                .iter()
                .flatten()
                .zip(fine.work_values.iter().flatten())
            {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_slots_give_one_atom() {
        let p = case_study_protocol(6, 2.0, 1.5, 1.0, 1.0).unwrap();
        let (i0, it) = frames(&p, Resolution::Whole, 1.0);
        let r = tpm_coarse_reverse(&p, &i0, &it).unwrap();
        assert!(r.single_outcome());
        assert!((r.probs[0][0] - 1.0).abs() < 1e-12);
        let d = work_distribution(&r, -1.0);
        assert_eq!(d.atoms.len(), 1);
        let w = it.coarse_energies()[0] - i0.coarse_energies()[0];
        assert!((d.atoms[0].w + w).abs() < 1e-12);
    }

    #[test]
    fn zero_drive_is_trivial() {
        let p = case_study_protocol(12, 2.0, 0.0, 1.0, 1.0).unwrap();
        let set = tpm_tables(&p, &Resolution::Width(6.0), 1.0).unwrap();
        let f = work_distribution(&set.forward, 1.0);
        let r = work_distribution(&set.reverse, -1.0);
        let rep = detailed_ft_check(&f, &r, 1.0, set.forward.delta_f);
        assert_eq!(set.forward.delta_f, 0.0);
        assert!(rep.passes());
        assert!(rep.max_crooks_log_residual < 1e-12);
        assert!(dissipated_work(&set.forward).abs() < 1e-12);
        assert!((rep.jarzynski_value - 1.0).abs() < 1e-14);
        let (i0, it) = frames(&p, Resolution::Width(6.0), 1.0);
        for t in [0.0, 0.5, 1.0] {
            assert!(
                forward_reverse_relative_entropy(&p, &i0, &it, t)
                    .unwrap()
                    .abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn two_work_values() {
        let t = JointOutcomeTable {
            probs: vec![vec![0.5, 0.0], vec![0.0, 0.5]],
            work_values: vec![vec![1.0, 2.0], vec![-1.0, 1.0 + 1e-12]],
            initial_levels: vec![0.0, 1.0],
            final_levels: vec![1.0, 2.0],
            beta: 1.0,
            delta_f: 0.0,
        };
        let d = work_distribution(&t, 1.0);
        let nonzero: Vec<_> = d.atoms.iter().filter(|a| a.p > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert!((nonzero[0].p - 1.0).abs() < 1e-15);
        assert_eq!(d.atoms.len(), 3);
        assert!(d.atoms.windows(2).all(|w| w[0].w < w[1].w));
    }

    #[test]
    fn oracle_agrees_on_small_case() {
        let p = case_study_protocol(6, 2.0, 1.7, 0.8, 1.0).unwrap();
        let (i0, it) = frames(&p, Resolution::Sizes(vec![3, 3]), 1.3);
        let u = p.forward_propagator(0.8).unwrap();
        let a = tpm_coarse_forward(&i0, &it, &u).unwrap();
        let b = brute_force_oracle(&i0, &it, &u).unwrap();
        for (x, y) in a.probs.iter().flatten().zip(b.probs.iter().flatten()) {
            assert!((x - y).abs() <= 1e-12);
        }
        let big = case_study_protocol(7, 2.0, 1.7, 0.8, 1.0).unwrap();
        let (j0, jt) = frames(&big, Resolution::Fine, 1.0);
        assert!(brute_force_oracle(&j0, &jt, &identity(7)).is_err());
    }

    #[test]
    fn mismatched_frames_rejected() {
        let p = case_study_protocol(6, 2.0, 1.7, 1.0, 1.0).unwrap();
        let q = case_study_protocol(6, 2.0, 2.7, 1.0, 1.0).unwrap();
        let (i0, it) = frames(&q, Resolution::Fine, 1.0);
        assert!(tpm_coarse_reverse(&p, &i0, &it).is_err());
        let (a, _) = frames(&p, Resolution::Fine, 1.0);
        let (_, b) = frames(&p, Resolution::Fine, 2.0);
        assert!(tpm_fine_on(&a, &b, &identity(6)).is_err());
    }
}
