//! Piecewise-constant driving protocols, their time-reversed counterparts,
//! and the driven truncated oscillator used as the case study.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    c, conjugate_in_basis, hermitian_eig, identity, max_abs_diff, CMatrix, EigenSystem,
    HermitianOperator,
};

#[derive(Debug, Clone)]
pub struct Segment {
    pub hamiltonian: HermitianOperator,
    pub duration: f64,
    eig: EigenSystem,
}

impl Segment {
    pub fn new(hamiltonian: HermitianOperator, duration: f64) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidProtocol(format!(
                "segment duration must be > 0, got {duration}"
            )));
        }
        let eig = hermitian_eig(&hamiltonian)?;
        Ok(Self {
            hamiltonian,
            duration,
            eig,
        })
    }

    fn propagator(&self, t: f64, hbar: f64) -> CMatrix {
        if t == 0.0 {
            return identity(self.hamiltonian.dim());
        }
        let s = t / hbar;
        self.eig
            .apply(|e| num_complex::Complex64::from_polar(1.0, -e * s))
            .expect("phases are finite")
    }
}

/// A driving protocol `Λ`: a Hamiltonian `H₀` before the drive, followed by
/// constant segments `(H_k, Δt_k)`. `H_τ` is the last segment's Hamiltonian.
#[derive(Debug, Clone)]
pub struct Protocol {
    initial: HermitianOperator,
    segments: Vec<Segment>,
    hbar: f64,
}

impl Protocol {
    /// Sudden-quench form: `initial` is the pre-drive Hamiltonian.
    pub fn new(
        initial: HermitianOperator,
        segments: Vec<(HermitianOperator, f64)>,
        hbar: f64,
    ) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidProtocol("no segments".into()));
        }
        if !(hbar > 0.0) || !hbar.is_finite() {
            return Err(Error::InvalidProtocol(format!(
                "hbar must be > 0, got {hbar}"
            )));
        }
        let dim = initial.dim();
        let segments = segments
            .into_iter()
            .map(|(h, dt)| {
                if h.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: h.dim(),
                    });
                }
                Segment::new(h, dt)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            initial,
            segments,
            hbar,
        })
    }

    /// `H₀` is the first segment's Hamiltonian.
    pub fn piecewise(segments: Vec<(HermitianOperator, f64)>, hbar: f64) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::InvalidProtocol("no segments".into()))?
            .0
            .clone();
        Self::new(first, segments, hbar)
    }

    pub fn dim(&self) -> usize {
        self.initial.dim()
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn initial_hamiltonian(&self) -> &HermitianOperator {
        &self.initial
    }

    pub fn final_hamiltonian(&self) -> &HermitianOperator {
        &self.segments.last().expect("nonempty").hamiltonian
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let tau = self.duration();
        if t >= 0.0 && t <= tau * (1.0 + 1e-12) {
            Ok(())
        } else {
            Err(Error::TimeOutOfRange { t, tau })
        }
    }

    /// `U(t, 0)`, the time-ordered product of segment propagators up to `t`.
    pub fn forward_propagator(&self, t: f64) -> Result<CMatrix> {
        self.check_time(t)?;
        let mut u = identity(self.dim());
        let mut remaining = t;
        for seg in &self.segments {
            if remaining <= 0.0 {
                break;
            }
            let dt = remaining.min(seg.duration);
            u = seg.propagator(dt, self.hbar) * u;
            remaining -= dt;
        }
        Ok(u)
    }

    /// `U(t₂, t₁) = U(t₂, 0) U(t₁, 0)†`.
    pub fn propagator_between(&self, t2: f64, t1: f64) -> Result<CMatrix> {
        if t2 == t1 {
            self.check_time(t1)?;
            return Ok(identity(self.dim()));
        }
        Ok(self.forward_propagator(t2)? * self.forward_propagator(t1)?.adjoint())
    }

    pub fn to_record(&self) -> ProtocolRecord {
        ProtocolRecord {
            hbar: self.hbar,
            initial: MatrixRecord::from_matrix(self.initial.matrix()),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    duration: s.duration,
                    hamiltonian: MatrixRecord::from_matrix(s.hamiltonian.matrix()),
                })
                .collect(),
        }
    }
}

/// `Λ̃`: segments in reverse order, each conjugated by `Θ`. The reversed
/// protocol starts from `Θ H_τ Θ†` and ends at `Θ H₀ Θ†`.
pub fn reverse_protocol(p: &Protocol) -> Protocol {
    let reversed: Vec<(HermitianOperator, f64)> = p
        .segments
        .iter()
        .rev()
        .map(|s| (s.hamiltonian.time_reversed(), s.duration))
        .collect();
    let initial = reversed[0].0.clone();
    let mut segments = Vec::with_capacity(reversed.len());
    for (h, dt) in reversed {
        segments.push(Segment::new(h, dt).expect("validated segments stay valid"));
    }
    Protocol {
        initial,
        segments,
        hbar: p.hbar,
    }
}

/// `‖Θ† Ũ(τ−t, 0) Θ − U†(τ, t)‖_max`.
pub fn microreversibility_check(p: &Protocol, t: f64) -> Result<f64> {
    p.check_time(t)?;
    let tau = p.duration();
    let rev = reverse_protocol(p);
    let u_tilde = rev.forward_propagator((tau - t).max(0.0))?;
    let lhs = conjugate_in_basis(&u_tilde);
    let rhs = p.propagator_between(tau, t)?.adjoint();
    Ok(max_abs_diff(&lhs, &rhs))
}

/// Annihilation operator truncated to `levels`: `a|n⟩ = √n |n−1⟩`.
pub fn annihilation(levels: usize) -> DMatrix<f64> {
    DMatrix::from_fn(levels, levels, |i, j| {
        if j == i + 1 {
            (j as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// `ħω(a†a + ½)` on `levels` number states.
pub fn oscillator_hamiltonian(levels: usize, omega: f64, hbar: f64) -> Result<HermitianOperator> {
    if levels < 1 {
        return Err(Error::InvalidProtocol("need at least one level".into()));
    }
    let e: Vec<f64> = (0..levels)
        .map(|n| hbar * omega * (n as f64 + 0.5))
        .collect();
    HermitianOperator::from_real_diagonal(&e)
}

/// `ħω(a†a + ½) + f (a† + a)/√2` on `levels` number states.
pub fn driven_oscillator_hamiltonian(
    levels: usize,
    omega: f64,
    f: f64,
    hbar: f64,
) -> Result<HermitianOperator> {
    let h0 = oscillator_hamiltonian(levels, omega, hbar)?;
    let a = annihilation(levels);
    let x = (&a + a.transpose()) * (f / 2f64.sqrt());
    HermitianOperator::new(h0.matrix() + x.map(|v| c(v, 0.0)))
}

/// Sudden quench of the truncated oscillator: `H₀ = ħω(a†a+½)`, then a
/// constant force `f` for a time `tau`.
pub fn case_study_protocol(
    levels: usize,
    omega: f64,
    f: f64,
    tau: f64,
    hbar: f64,
) -> Result<Protocol> {
    if levels < 2 {
        return Err(Error::InvalidProtocol(format!(
            "need >= 2 levels, got {levels}"
        )));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::InvalidProtocol(format!(
            "omega must be > 0, got {omega}"
        )));
    }
    if !f.is_finite() {
        return Err(Error::InvalidProtocol("force must be finite".into()));
    }
    let h0 = oscillator_hamiltonian(levels, omega, hbar)?;
    let htau = driven_oscillator_hamiltonian(levels, omega, f, hbar)?;
    Protocol::new(h0, vec![(htau, tau)], hbar)
}

/// Dense matrix as row-major real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let n = m.nrows();
        let mut re = Vec::with_capacity(n * n);
        let mut im = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        Self { dim: n, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        let n = self.dim;
        if self.re.len() != n * n || self.im.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: self.re.len().min(self.im.len()),
            });
        }
        Ok(CMatrix::from_fn(n, n, |i, j| {
            c(self.re[i * n + j], self.im[i * n + j])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub duration: f64,
    pub hamiltonian: MatrixRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolRecord {
    pub hbar: f64,
    pub initial: MatrixRecord,
    pub segments: Vec<SegmentRecord>,
}

impl ProtocolRecord {
    pub fn to_protocol(&self) -> Result<Protocol> {
        let initial = HermitianOperator::new(self.initial.to_matrix()?)?;
        let segments = self
            .segments
            .iter()
            .map(|s| {
                Ok((
                    HermitianOperator::new(s.hamiltonian.to_matrix()?)?,
                    s.duration,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Protocol::new(initial, segments, self.hbar)
    }
}
