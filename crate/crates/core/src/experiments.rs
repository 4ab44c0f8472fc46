//! The driven-oscillator experiments: thermal states at fixed resolution,
//! dissipation against drive strength, work distributions, and the
//! non-invasive variant. Shared by the command-line tool and the web demo.

use serde::{Deserialize, Serialize};

use crate::coarse::{coarse_thermal_state_on, PartitionRecord, Resolution};
use crate::dynamics::{case_study_protocol, oscillator_hamiltonian, MatrixRecord, Protocol};
use crate::error::{Error, Result};
use crate::linalg::hermitian_eig;
use crate::numfmt::sig17;
use crate::thermo::gibbs_from_eigensystem;
use crate::tpm::{
    detailed_ft_check, dissipated_work, forward_reverse_relative_entropy, noninvasive_bound_check,
    protocol_frames, tpm_coarse_forward, tpm_coarse_reverse, tpm_fine_on, tpm_noninvasive,
    tpm_noninvasive_reverse, work_distribution, FtReport, JointOutcomeTable, WorkDistribution,
};

/// How the instrument bins the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRule {
    /// `δε = α |ε₁ − ε₀|` of the undriven Hamiltonian.
    Alpha(f64),
    DeltaEps(f64),
    Sizes(Vec<usize>),
}

impl Default for SlotRule {
    fn default() -> Self {
        SlotRule::Alpha(3.0)
    }
}

/// A truncated oscillator `H₀ = ħω(a†a + 1/2)` quenched to `H₀ − f(a + a†)`
/// for a time `τ`, started in the Gibbs state at `β`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillatorSetup {
    pub levels: usize,
    pub omega: f64,
    pub hbar: f64,
    pub beta: f64,
    pub tau: f64,
    pub slots: SlotRule,
}

impl Default for OscillatorSetup {
    fn default() -> Self {
        Self {
            levels: 12,
            omega: 2.0,
            hbar: 1.0,
            beta: 1.0,
            tau: 1.0,
            slots: SlotRule::default(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive and finite, got {x}"
        )))
    }
}

impl OscillatorSetup {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::Domain(format!(
                "need at least 2 levels, got {}",
                self.levels
            )));
        }
        positive("omega", self.omega)?;
        positive("hbar", self.hbar)?;
        positive("beta", self.beta)?;
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::Domain(format!("tau must be >= 0, got {}", self.tau)));
        }
        match &self.slots {
            SlotRule::Alpha(a) => positive("alpha", *a),
            SlotRule::DeltaEps(d) => positive("delta_eps", *d),
            SlotRule::Sizes(s) => {
                if s.iter().sum::<usize>() != self.levels || s.contains(&0) {
                    Err(Error::InvalidPartition(format!(
                        "slot sizes {s:?} must be positive and sum to {}",
                        self.levels
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The slot rule as a [`Resolution`], with `α` resolved against the
    /// undriven spectrum.
    pub fn resolution(&self) -> Result<Resolution> {
        self.validate()?;
        Ok(match &self.slots {
            SlotRule::Alpha(a) => {
                let eig =
                    hermitian_eig(&oscillator_hamiltonian(self.levels, self.omega, self.hbar)?)?;
                let e = eig.eigenvalues();
                Resolution::Width(a * (e[1] - e[0]).abs())
            }
            SlotRule::DeltaEps(d) => Resolution::Width(*d),
            SlotRule::Sizes(s) => Resolution::Sizes(s.clone()),
        })
    }

    pub fn protocol(&self, f: f64) -> Result<Protocol> {
        if !f.is_finite() {
            return Err(Error::Domain(format!("force must be finite, got {f}")));
        }
        case_study_protocol(self.levels, self.omega, f, self.tau, self.hbar)
    }
}

/// Fine and coarse Gibbs states of the undriven oscillator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalStates {
    pub beta: f64,
    pub fine: MatrixRecord,
    pub coarse: MatrixRecord,
    pub partition: PartitionRecord,
    pub fine_populations: Vec<f64>,
    pub slot_probabilities: Vec<f64>,
    pub free_energy: f64,
    pub coarse_free_energy: f64,
}

pub fn thermal_states(setup: &OscillatorSetup) -> Result<ThermalStates> {
    let res = setup.resolution()?;
    let h = oscillator_hamiltonian(setup.levels, setup.omega, setup.hbar)?;
    let eig = hermitian_eig(&h)?;
    let part = res.partition(&eig)?;
    let coarse = coarse_thermal_state_on(&eig, &part, setup.beta)?;
    let fine = gibbs_from_eigensystem(h, eig, setup.beta)?;
    Ok(ThermalStates {
        beta: setup.beta,
        fine: MatrixRecord::from_matrix(fine.state.matrix()),
        coarse: MatrixRecord::from_matrix(coarse.state.matrix()),
        partition: coarse.hamiltonian.to_record(),
        fine_populations: fine.populations,
        slot_probabilities: coarse.slot_probabilities,
        free_energy: fine.free_energy,
        coarse_free_energy: coarse.free_energy,
    })
}

/// Row-major grid of one part of a matrix.
pub fn grid_csv(dim: usize, values: &[f64]) -> String {
    let mut s = String::new();
    for row in values.chunks(dim) {
        let cells: Vec<String> = row.iter().map(|&x| sig17(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Dissipated work (energy units), relative entropy (nats) and mean work
/// at fine and coarse resolution for one drive strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub f: f64,
    pub w_diss_fine: f64,
    pub w_diss_coarse: f64,
    pub s_rel_fine: f64,
    pub s_rel_coarse: f64,
    pub w_fine: f64,
    pub w_coarse: f64,
}

pub fn sweep_point(setup: &OscillatorSetup, f: f64) -> Result<SweepRow> {
    let res = setup.resolution()?;
    let p = setup.protocol(f)?;
    let u = p.forward_propagator(p.duration())?;
    let (f0, ft) = protocol_frames(&p, &Resolution::Fine, setup.beta)?;
    let (c0, ct) = protocol_frames(&p, &res, setup.beta)?;
    let fine = tpm_fine_on(&f0, &ft, &u)?;
    let coarse = tpm_coarse_forward(&c0, &ct, &u)?;
    Ok(SweepRow {
        f,
        w_diss_fine: dissipated_work(&fine),
        w_diss_coarse: dissipated_work(&coarse),
        s_rel_fine: forward_reverse_relative_entropy(&p, &f0, &ft, 0.0)?,
        s_rel_coarse: forward_reverse_relative_entropy(&p, &c0, &ct, 0.0)?,
        w_fine: fine.mean_work(),
        w_coarse: coarse.mean_work(),
    })
}

/// A sign change of `W̆_diss − W_diss` between two consecutive sweep points,
/// located by linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignChange {
    pub f: f64,
    pub f_before: f64,
    pub f_after: f64,
    /// `+1` when the difference turns positive, `−1` when it turns negative.
    pub direction: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceSweep {
    pub rows: Vec<SweepRow>,
    /// First change from `W̆_diss ≥ W_diss` to `W̆_diss < W_diss`.
    pub crossover: Option<f64>,
    pub sign_changes: Vec<SignChange>,
}

/// Differences within this of zero carry no sign.
pub const SIGN_TOL: f64 = 1e-12;

fn sign(x: f64) -> i8 {
    if x > SIGN_TOL {
        1
    } else if x < -SIGN_TOL {
        -1
    } else {
        0
    }
}

/// Sign changes of `W̆_diss − W_diss` along the sweep. Points where the
/// difference vanishes are skipped.
pub fn sign_changes(rows: &[SweepRow]) -> Vec<SignChange> {
    let signed: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| (r.f, r.w_diss_coarse - r.w_diss_fine))
        .filter(|&(_, d)| sign(d) != 0)
        .collect();
    signed
        .windows(2)
        .filter(|w| sign(w[0].1) != sign(w[1].1))
        .map(|w| {
            let ((f0, d0), (f1, d1)) = (w[0], w[1]);
            SignChange {
                f: f0 + (f1 - f0) * d0 / (d0 - d1),
                f_before: f0,
                f_after: f1,
                direction: sign(d1),
            }
        })
        .collect()
}

pub fn force_sweep(setup: &OscillatorSetup, forces: &[f64]) -> Result<ForceSweep> {
    let rows = forces
        .iter()
        .map(|&f| sweep_point(setup, f))
        .collect::<Result<Vec<_>>>()?;
    let changes = sign_changes(&rows);
    Ok(ForceSweep {
        crossover: changes.iter().find(|c| c.direction < 0).map(|c| c.f),
        sign_changes: changes,
        rows,
    })
}

pub const SWEEP_HEADER: &str =
    "f,W_diss_fine,W_diss_coarse,S_rel_fine,S_rel_coarse,W_fine,W_coarse";

impl ForceSweep {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{SWEEP_HEADER}\n");
        for r in &self.rows {
            let cells = [
                r.f,
                r.w_diss_fine,
                r.w_diss_coarse,
                r.s_rel_fine,
                r.s_rel_coarse,
                r.w_fine,
                r.w_coarse,
            ];
            s.push_str(&cells.map(sig17).join(","));
            s.push('\n');
        }
        s
    }
}

/// `f` values `start, start + step, …` up to `stop` inclusive, computed as
/// `start + k·step` so no rounding accumulates.
pub fn force_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::Domain("sweep bounds must be finite".into()));
    }
    if step <= 0.0 {
        return Err(Error::Domain(format!("sweep step must be > 0, got {step}")));
    }
    if stop < start {
        return Err(Error::Domain(format!("empty sweep {start}:{stop}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

/// Forward and sign-flipped reverse work distributions at both resolutions
/// with their fluctuation-theorem reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkDistributions {
    pub f: f64,
    pub beta: f64,
    /// `F_τ − F₀` of the truncated Hamiltonians.
    pub delta_f: f64,
    /// `−f²/(2ω)`, the untruncated value.
    pub delta_f_untruncated: f64,
    pub fine_forward: WorkDistribution,
    pub fine_reverse: WorkDistribution,
    pub coarse_forward: WorkDistribution,
    pub coarse_reverse: WorkDistribution,
    pub fine_report: FtReport,
    pub coarse_report: FtReport,
}

impl WorkDistributions {
    pub fn passes(&self) -> bool {
        self.fine_report.passes() && self.coarse_report.passes()
    }
}

fn report(
    fwd: &JointOutcomeTable,
    rev: &JointOutcomeTable,
    beta: f64,
) -> (WorkDistribution, WorkDistribution, FtReport) {
    let a = work_distribution(fwd, 1.0);
    let b = work_distribution(rev, -1.0);
    let r = detailed_ft_check(&a, &b, beta, fwd.delta_f);
    (a, b, r)
}

pub fn work_distributions(setup: &OscillatorSetup, f: f64) -> Result<WorkDistributions> {
    let res = setup.resolution()?;
    let p = setup.protocol(f)?;
    let u = p.forward_propagator(p.duration())?;
    let (f0, ft) = protocol_frames(&p, &Resolution::Fine, setup.beta)?;
    let (c0, ct) = protocol_frames(&p, &res, setup.beta)?;
    let fine = tpm_fine_on(&f0, &ft, &u)?;
    let (fine_forward, fine_reverse, fine_report) =
        report(&fine, &tpm_coarse_reverse(&p, &f0, &ft)?, setup.beta);
    let coarse = tpm_coarse_forward(&c0, &ct, &u)?;
    let (coarse_forward, coarse_reverse, coarse_report) =
        report(&coarse, &tpm_coarse_reverse(&p, &c0, &ct)?, setup.beta);
    Ok(WorkDistributions {
        f,
        beta: setup.beta,
        delta_f: fine.delta_f,
        delta_f_untruncated: -f * f / (2.0 * setup.omega),
        fine_forward,
        fine_reverse,
        coarse_forward,
        coarse_reverse,
        fine_report,
        coarse_report,
    })
}

/// Dissipation and relative entropy for the fine, invasive (reprepared)
/// and non-invasive coarse schemes at one drive strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoninvasiveRow {
    pub f: f64,
    pub w_diss_fine: f64,
    pub w_diss_invasive: f64,
    pub w_diss_noninvasive: f64,
    pub s_rel_fine: f64,
    pub s_rel_invasive: f64,
    pub s_rel_noninvasive: f64,
    /// Worst Crooks log-residual of the non-invasive distributions.
    pub crooks_noninvasive: f64,
    pub crooks_invasive: f64,
    /// Atoms with weight on one side only under the non-invasive scheme.
    pub one_sided_noninvasive: usize,
}

pub const NONINVASIVE_HEADER: &str = "f,W_diss_fine,W_diss_invasive,W_diss_noninvasive,S_rel_fine,S_rel_invasive,S_rel_noninvasive,crooks_residual_noninvasive,crooks_residual_invasive,one_sided_noninvasive";

pub fn noninvasive_point(setup: &OscillatorSetup, f: f64) -> Result<NoninvasiveRow> {
    let res = setup.resolution()?;
    let beta = setup.beta;
    let p = setup.protocol(f)?;
    let u = p.forward_propagator(p.duration())?;
    let (c0, ct) = protocol_frames(&p, &res, beta)?;
    let nb = noninvasive_bound_check(&p, &c0, &ct, 0.0)?;
    let bar = report(
        &tpm_noninvasive(&c0, &ct, &u)?,
        &tpm_noninvasive_reverse(&p, &c0, &ct)?,
        beta,
    )
    .2;
    let fwd = tpm_coarse_forward(&c0, &ct, &u)?;
    let inv = report(&fwd, &tpm_coarse_reverse(&p, &c0, &ct)?, beta).2;
    Ok(NoninvasiveRow {
        f,
        w_diss_fine: nb.beta_dissipated_fine / beta,
        w_diss_invasive: dissipated_work(&fwd),
        w_diss_noninvasive: nb.beta_dissipated_projected / beta,
        s_rel_fine: nb.relative_entropy_fine,
        s_rel_invasive: forward_reverse_relative_entropy(&p, &c0, &ct, 0.0)?,
        s_rel_noninvasive: nb.relative_entropy_projected,
        crooks_noninvasive: bar.max_crooks_log_residual,
        crooks_invasive: inv.max_crooks_log_residual,
        one_sided_noninvasive: bar.one_sided.len(),
    })
}

pub fn noninvasive_sweep(setup: &OscillatorSetup, forces: &[f64]) -> Result<Vec<NoninvasiveRow>> {
    forces
        .iter()
        .map(|&f| noninvasive_point(setup, f))
        .collect()
}

pub fn noninvasive_csv(rows: &[NoninvasiveRow]) -> String {
    let mut s = format!("{NONINVASIVE_HEADER}\n");
    for r in rows {
        let cells = [
            r.f,
            r.w_diss_fine,
            r.w_diss_invasive,
            r.w_diss_noninvasive,
            r.s_rel_fine,
            r.s_rel_invasive,
            r.s_rel_noninvasive,
            r.crooks_noninvasive,
            r.crooks_invasive,
        ];
        let mut line = cells.map(sig17).join(",");
        line.push_str(&format!(",{}\n", r.one_sided_noninvasive));
        s.push_str(&line);
    }
    s
}
