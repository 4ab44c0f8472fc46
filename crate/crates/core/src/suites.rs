//! Randomized invariant suites. Each suite reports the worst residual it saw
//! against a fixed tolerance; `cgthermo verify` runs them all.

use rand::Rng;
use serde::Serialize;

use crate::coarse::{coarse_energies_on, coarse_grain, verify_energies, Resolution, SlotPartition};
use crate::dynamics::{case_study_protocol, microreversibility_check, Protocol};
use crate::error::Result;
use crate::infothermo::{
    bound_chain, coarse_free_energy_drop, entropy_production, extractable_work,
    preparation_work_min, protocol_energetics,
};
use crate::linalg::{c, hermitian_eig, identity, max_abs_diff, CMatrix, HermitianOperator};
use crate::random::{self, Instance};
use crate::thermo::{gibbs_state, von_neumann_entropy};
use crate::tpm::{
    brute_force_oracle, detailed_ft_check, dissipated_work, forward_reverse_relative_entropy,
    protocol_frames, tpm_coarse_forward, tpm_coarse_reverse, tpm_fine_on, work_distribution,
    JointOutcomeTable,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantResult {
    pub name: String,
    pub instances: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl InvariantResult {
    fn new(name: &str, instances: usize, max_residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            instances,
            max_residual,
            tolerance,
            pass: max_residual <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub instances: usize,
    pub random_states: usize,
    pub max_dim: usize,
    /// Added to every coarse level before the consistency check. Nonzero
    /// values make that suite fail on purpose.
    pub perturb_energies: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            instances: 50,
            random_states: 100,
            max_dim: 16,
            perturb_energies: 0.0,
        }
    }
}

/// The driven 24-level oscillator at `f = 3.8`, `β = 1/4`, `δε = 3ħω`.
pub fn case_study_instance() -> Result<Instance> {
    Ok(Instance {
        protocol: case_study_protocol(24, 2.0, 3.8, 1.0, 1.0)?,
        beta: 0.25,
        resolution: Resolution::Width(6.0),
    })
}

/// Worst-case fluctuation-relation residuals over a set of instances, each
/// evaluated at fine resolution and at its own slot rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FluctuationMetrics {
    pub tables: usize,
    pub jarzynski: f64,
    pub crooks: f64,
    pub delta_f: f64,
    pub one_sided: usize,
    /// `max(0, −(⟨W⟩ − ΔF))`.
    pub second_law: f64,
    /// `|β(⟨W⟩ − ΔF) − S(t)|` and `|⟨W⟩ − ΔF − S(t)/β|` over sampled `t`.
    pub relative_entropy_identity: f64,
    pub normalization: f64,
}

fn normalization_defect(t: &JointOutcomeTable) -> f64 {
    (t.total() - 1.0).abs().max(-t.min_entry() - 1e-12).max(0.0)
}

pub fn fluctuation_metrics(instances: &[Instance]) -> Result<FluctuationMetrics> {
    let mut m = FluctuationMetrics::default();
    for inst in instances {
        let p = &inst.protocol;
        let tau = p.duration();
        let u = p.forward_propagator(tau)?;
        for res in [Resolution::Fine, inst.resolution.clone()] {
            let (i0, it) = protocol_frames(p, &res, inst.beta)?;
            let (fwd, rev) = if res == Resolution::Fine {
                (tpm_fine_on(&i0, &it, &u)?, tpm_coarse_reverse(p, &i0, &it)?)
            } else {
                (
                    tpm_coarse_forward(&i0, &it, &u)?,
                    tpm_coarse_reverse(p, &i0, &it)?,
                )
            };
            m.tables += 1;
            m.normalization = m
                .normalization
                .max(normalization_defect(&fwd))
                .max(normalization_defect(&rev));
            let rep = detailed_ft_check(
                &work_distribution(&fwd, 1.0),
                &work_distribution(&rev, -1.0),
                inst.beta,
                fwd.delta_f,
            );
            m.jarzynski = m.jarzynski.max((rep.jarzynski_value - 1.0).abs());
            m.crooks = m.crooks.max(rep.max_crooks_log_residual);
            m.delta_f = m.delta_f.max(rep.max_delta_f_error);
            m.one_sided += rep.one_sided.len();

            let wd = dissipated_work(&fwd);
            m.second_law = m.second_law.max(-wd);
            for t in [0.0, tau / 4.0, tau / 2.0, tau] {
                let s = forward_reverse_relative_entropy(p, &i0, &it, t)?;
                let r = (inst.beta * wd - s).abs().max((wd - s / inst.beta).abs());
                m.relative_entropy_identity = m.relative_entropy_identity.max(r);
            }
        }
    }
    Ok(m)
}

fn fluctuation_results(m: &FluctuationMetrics) -> Vec<InvariantResult> {
    vec![
        InvariantResult::new("table_normalization", m.tables, m.normalization, 1e-10),
        InvariantResult::new("jarzynski", m.tables, m.jarzynski, 1e-10),
        InvariantResult::new(
            "crooks_detailed",
            m.tables,
            if m.one_sided > 0 {
                f64::INFINITY
            } else {
                m.crooks
            },
            1e-10,
        ),
        InvariantResult::new("free_energy_recovery", m.tables, m.delta_f, 1e-9),
        InvariantResult::new("second_law", m.tables, m.second_law, 1e-9),
        InvariantResult::new(
            "dissipation_relative_entropy",
            m.tables,
            m.relative_entropy_identity,
            1e-9,
        ),
    ]
}

/// Largest `|P̆_oracle − P̆|` over random instances of dimension at most 6.
pub fn oracle_residual(seed: u64, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for inst in random::instances(seed, count, 6)? {
        let p = &inst.protocol;
        let (i0, it) = protocol_frames(p, &inst.resolution, inst.beta)?;
        let u = p.forward_propagator(p.duration())?;
        let a = tpm_coarse_forward(&i0, &it, &u)?;
        let b = brute_force_oracle(&i0, &it, &u)?;
        for (x, y) in a.probs.iter().flatten().zip(b.probs.iter().flatten()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Largest micro-reversibility residual over random protocols at ten
/// sampled times each.
pub fn microreversibility_residual(seed: u64, count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut rng = random::rng(seed);
    for inst in random::instances(seed, count, 12)? {
        let tau = inst.protocol.duration();
        for _ in 0..10 {
            let t = rng.random_range(0.0..=tau);
            worst = worst.max(microreversibility_check(&inst.protocol, t)?);
        }
    }
    Ok(worst)
}

/// Consistency of the coarse levels on random spectra and partitions at
/// `β ∈ {0.01, 0.1, 1, 10, 100}`: returns (slot identity, `|F̆ − F|`,
/// `‖𝒞(τ) − τ̆‖`, bound violations).
pub fn coarse_consistency(seed: u64, count: usize, perturb: f64) -> Result<(f64, f64, f64, usize)> {
    let mut rng = random::rng(seed);
    let (mut slot, mut free, mut state, mut bounds) = (0.0f64, 0.0f64, 0.0f64, 0);
    for _ in 0..count {
        let dim = rng.random_range(2..=12);
        let h = random::hermitian(&mut rng, dim, 2.0);
        let eig = hermitian_eig(&h)?;
        let part = SlotPartition::from_slot_sizes(&eig, &random::slot_sizes(&mut rng, dim))?;
        for beta in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let mut e = coarse_energies_on(&eig, &part, beta)?.energies;
            for x in &mut e {
                *x += perturb;
            }
            let r = verify_energies(&eig, &part, beta, &e)?;
            slot = slot.max(r.max_slot_residual());
            free = free.max(r.free_energy_gap);
            state = state.max(r.state_gap);
            if !r.bounds_hold {
                bounds += 1;
            }
        }
    }
    Ok((slot, free, state, bounds))
}

/// Worst residuals of the flattening channel on random states:
/// (idempotence, unitality, trace, negativity, entropy decrease,
/// coarse-energy change, insensitivity).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ChannelMetrics {
    pub idempotence: f64,
    pub unitality: f64,
    pub trace: f64,
    pub negativity: f64,
    pub entropy_decrease: f64,
    pub coarse_energy: f64,
    pub insensitivity: f64,
}

impl ChannelMetrics {
    pub fn max(&self) -> f64 {
        [
            self.idempotence,
            self.unitality,
            self.trace,
            self.negativity,
            self.entropy_decrease,
            self.coarse_energy,
            self.insensitivity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn apply_channel(m: &CMatrix, part: &SlotPartition, eig: &crate::linalg::EigenSystem) -> CMatrix {
    part.flat_operator(eig, &part.populations(m, eig))
}

pub fn channel_metrics(seed: u64, count: usize) -> Result<ChannelMetrics> {
    let mut rng = random::rng(seed);
    let mut m = ChannelMetrics::default();
    for _ in 0..count {
        let dim = rng.random_range(2..=10);
        let h = random::hermitian(&mut rng, dim, 2.0);
        let eig = hermitian_eig(&h)?;
        let part = SlotPartition::from_slot_sizes(&eig, &random::slot_sizes(&mut rng, dim))?;
        let beta = rng.random_range(0.1..4.0);
        let hb = coarse_energies_on(&eig, &part, beta)?.matrix();
        let rho = random::density_matrix(&mut rng, dim);
        let crho = coarse_grain(&rho, &part, &eig)?;
        let ccrho = coarse_grain(&crho, &part, &eig)?;
        m.idempotence = m
            .idempotence
            .max(max_abs_diff(ccrho.matrix(), crho.matrix()));

        let mixed = identity(dim) / c(dim as f64, 0.0);
        m.unitality = m
            .unitality
            .max(max_abs_diff(&apply_channel(&mixed, &part, &eig), &mixed));

        let spec = crho.eigensystem()?;
        m.trace = m.trace.max((crho.matrix().trace().re - 1.0).abs());
        m.negativity = m.negativity.max(-spec.eigenvalues()[0]);
        let ds = von_neumann_entropy(&rho)? - von_neumann_entropy(&crho)?;
        m.entropy_decrease = m.entropy_decrease.max(ds);
        let e1 = crate::thermo::average_energy(&rho, &hb)?;
        let e2 = crate::thermo::average_energy(&crho, &hb)?;
        m.coarse_energy = m.coarse_energy.max((e1 - e2).abs());

        // δρ with Tr[δρ Π_J] = 0 for every slot
        let x = random::hermitian(&mut rng, dim, 0.1).into_matrix();
        let delta = &x - apply_channel(&x, &part, &eig);
        let shifted = apply_channel(&(rho.matrix() + delta), &part, &eig);
        m.insensitivity = m.insensitivity.max(max_abs_diff(&shifted, crho.matrix()));
    }
    Ok(m)
}

/// Worst residuals of the preparation-work relations on random states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WorkBoundMetrics {
    pub w_min_forms: f64,
    pub chain_violations: usize,
    pub energetics_total: f64,
    pub cycle: f64,
    /// `max(0, −Σ)` for suboptimal protocols.
    pub negative_production: f64,
    /// `max(0, drop)` of the coarse free energy.
    pub free_energy_rise: f64,
}

pub fn work_bound_metrics(seed: u64, count: usize) -> Result<WorkBoundMetrics> {
    let mut rng = random::rng(seed);
    let mut m = WorkBoundMetrics::default();
    for k in 0..count {
        let dim = rng.random_range(2..=10);
        let h = random::hermitian(&mut rng, dim, 2.0);
        let eig = hermitian_eig(&h)?;
        let part = if k % 2 == 0 {
            let width = rng.random_range(0.2..1.5) * eig.spectral_range();
            SlotPartition::from_resolution(&eig, width)?
        } else {
            SlotPartition::from_slot_sizes(&eig, &random::slot_sizes(&mut rng, dim))?
        };
        let beta = rng.random_range(0.1..4.0);
        let rho = random::density_matrix(&mut rng, dim);

        let chain = bound_chain(&rho, &part, &h, beta)?;
        m.w_min_forms = m.w_min_forms.max(chain.w_min.discrepancy());
        if !chain.holds {
            m.chain_violations += 1;
        }
        let e = protocol_energetics(&rho, &part, &h, beta)?;
        m.energetics_total = m
            .energetics_total
            .max((e.w_total - chain.w_min.value()).abs());

        let tau = gibbs_state(&h, beta)?;
        let tb = crate::coarse::coarse_thermal_state_on(&eig, &part, beta)?;
        let w_ext = extractable_work(&tb.state, &h, beta)?;
        let w_prep = preparation_work_min(&tau.state, &part, &h, beta)?.value();
        m.cycle = m.cycle.max((w_ext - w_prep).abs());

        let extra = rng.random_range(0.0..1.0);
        let w = chain.w_min.value() + extra;
        let q = chain.energy.delta_e_c - w;
        let sp = entropy_production(&rho, &part, &h, beta, w, q)?;
        m.negative_production = m
            .negative_production
            .max(-sp.sigma)
            .max(-sp.sigma_from_work);

        let drop = coarse_free_energy_drop(&h, &part, beta)?;
        m.free_energy_rise = m.free_energy_rise.max(drop.drop);
    }
    Ok(m)
}

/// A sudden quench `H₀ → H₀ + V` with `V` acting inside consecutive pairs
/// of levels, the pairs far apart in energy. The propagator then commutes
/// with every partition built from whole pairs.
pub fn block_local_protocol<R: Rng>(rng: &mut R, pairs: usize) -> Result<Protocol> {
    let dim = 2 * pairs;
    let mut e0 = Vec::with_capacity(dim);
    let mut center = 0.0;
    for _ in 0..pairs {
        let split = rng.random_range(0.1..1.0);
        e0.push(center);
        e0.push(center + split);
        center += rng.random_range(5.0..8.0);
    }
    let h0 = HermitianOperator::from_real_diagonal(&e0)?;
    let mut v = CMatrix::zeros(dim, dim);
    for b in 0..pairs {
        let (i, j) = (2 * b, 2 * b + 1);
        v[(i, i)] = c(rng.random_range(-0.5..0.5), 0.0);
        v[(j, j)] = c(rng.random_range(-0.5..0.5), 0.0);
        let off = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
        v[(i, j)] = off;
        v[(j, i)] = off.conj();
    }
    let htau = HermitianOperator::new(h0.matrix() + v)?;
    Protocol::new(h0, vec![(htau, rng.random_range(0.3..2.0))], 1.0)
}

/// Relative entropies for nested partitions from fine to whole, and the
/// largest increase seen when coarsening.
pub fn hierarchy_chain(p: &Protocol, beta: f64, t: f64) -> Result<(Vec<f64>, f64)> {
    let dim = p.dim();
    let mut levels = vec![Resolution::Fine];
    let mut size = 2;
    while size < dim {
        levels.push(Resolution::Sizes(vec![size; dim / size]));
        size *= 2;
    }
    levels.push(Resolution::Whole);
    let mut values = Vec::with_capacity(levels.len());
    for r in &levels {
        let (i0, it) = protocol_frames(p, r, beta)?;
        values.push(forward_reverse_relative_entropy(p, &i0, &it, t)?);
    }
    let worst = values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    Ok((values, worst))
}

pub fn hierarchy_residual(seed: u64, count: usize) -> Result<f64> {
    let mut rng = random::rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let p = block_local_protocol(&mut rng, 8)?;
        let beta = rng.random_range(0.1..2.0);
        for t in [0.0, p.duration() / 2.0] {
            worst = worst.max(hierarchy_chain(&p, beta, t)?.1);
        }
    }
    Ok(worst)
}

/// Runs every suite.
pub fn run_all(seed: u64, opts: &SuiteOptions) -> Result<Vec<InvariantResult>> {
    let mut set = vec![case_study_instance()?];
    set.extend(random::instances(seed, opts.instances, opts.max_dim)?);
    let fm = fluctuation_metrics(&set)?;
    let mut out = fluctuation_results(&fm);

    out.push(InvariantResult::new(
        "oracle_equivalence",
        opts.instances,
        oracle_residual(seed.wrapping_add(1), opts.instances)?,
        1e-12,
    ));
    out.push(InvariantResult::new(
        "microreversibility",
        opts.instances,
        microreversibility_residual(seed.wrapping_add(2), opts.instances)?,
        1e-9,
    ));

    let (slot, free, state, bounds) =
        coarse_consistency(seed.wrapping_add(3), opts.instances, opts.perturb_energies)?;
    out.push(InvariantResult::new(
        "coarse_energy_consistency",
        opts.instances,
        slot,
        1e-12,
    ));
    out.push(InvariantResult::new(
        "coarse_free_energy",
        opts.instances,
        free,
        1e-10,
    ));
    out.push(InvariantResult::new(
        "coarse_thermal_state",
        opts.instances,
        state,
        1e-10,
    ));
    out.push(InvariantResult::new(
        "coarse_energy_bounds",
        opts.instances,
        bounds as f64,
        0.0,
    ));

    let ch = channel_metrics(seed.wrapping_add(4), opts.random_states)?;
    out.push(InvariantResult::new(
        "channel",
        opts.random_states,
        ch.max(),
        1e-9,
    ));

    let ap = work_bound_metrics(seed.wrapping_add(5), opts.random_states)?;
    out.push(InvariantResult::new(
        "preparation_work_forms",
        opts.random_states,
        ap.w_min_forms,
        1e-9,
    ));
    out.push(InvariantResult::new(
        "work_bound_chain",
        opts.random_states,
        ap.chain_violations as f64,
        0.0,
    ));
    out.push(InvariantResult::new(
        "protocol_energetics",
        opts.random_states,
        ap.energetics_total,
        1e-9,
    ));
    out.push(InvariantResult::new(
        "cycle_consistency",
        opts.random_states,
        ap.cycle,
        1e-9,
    ));
    out.push(InvariantResult::new(
        "entropy_production",
        opts.random_states,
        ap.negative_production,
        1e-9,
    ));
    out.push(InvariantResult::new(
        "coarse_free_energy_drop",
        opts.random_states,
        ap.free_energy_rise,
        1e-9,
    ));

    out.push(InvariantResult::new(
        "resolution_hierarchy",
        opts.instances.min(20),
        hierarchy_residual(seed.wrapping_add(6), opts.instances.min(20))?,
        1e-9,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_passes() {
        let opts = SuiteOptions {
            instances: 5,
            random_states: 10,
            max_dim: 8,
            perturb_energies: 0.0,
        };
        for r in run_all(3, &opts).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }

    #[test]
    fn perturbed_levels_fail_by_name() {
        let (slot, _, _, _) = coarse_consistency(1, 3, 0.1).unwrap();
        assert!(slot > 1e-3);
    }

    #[test]
    fn block_protocol_commutes_with_pairs() {
        let mut rng = random::rng(9);
        let p = block_local_protocol(&mut rng, 4).unwrap();
        let u = p.forward_propagator(p.duration()).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i / 2 != j / 2 {
                    assert!(u[(i, j)].norm() < 1e-14);
                }
            }
        }
        let (chain, worst) = hierarchy_chain(&p, 0.5, 0.0).unwrap();
        assert_eq!(chain.len(), 4);
        assert!(worst <= 1e-9);
        assert!(chain.last().unwrap().abs() < 1e-12);
    }
}
