//! Resonant Jaynes-Cummings evolution in the interaction picture.
//!
//! The free Hamiltonian commutes with the interaction term and is rotated
//! away, so only `H_I = g (sigma_+ a + sigma_- a^dagger)` drives the state.
//! `g` is real and positive, which fixes the phase factor `g/|g|` to one.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::state::{bare_to_dressed, dressed_to_bare, StateVector};

/// Sign of `g/|g|` carried through the step formulas.
const G_PHASE: f64 = 1.0;

/// Amplitude on `|e,K>` above which exact dressed evolution is refused.
pub const ORPHAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JcmParams {
    /// Atom-field coupling `g` in rad/s.
    pub coupling: f64,
    /// Largest photon number kept.
    pub truncation: usize,
    /// Gate index `m`; the gate time is `(2m+1) pi / (sqrt(2) g)`.
    pub gate_index: u32,
    /// Number of time steps `N` per gate time.
    pub steps: u64,
    /// Atomic transition frequency in Hz. Metadata only.
    #[serde(default)]
    pub transition_frequency_hz: Option<f64>,
    /// Transition wavelength in m. Metadata only.
    #[serde(default)]
    pub wavelength_m: Option<f64>,
}

impl Default for JcmParams {
    /// The 85Rb 63p3/2 - 61d5/2 cavity parameters with K = 5, m = 1, N = 10^5.
    fn default() -> Self {
        Self {
            coupling: 1.0e6 / 70.0,
            truncation: 5,
            gate_index: 1,
            steps: 100_000,
            transition_frequency_hz: Some(21_456.0e6),
            wavelength_m: Some(1.397_24e-2),
        }
    }
}

impl JcmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.coupling.is_finite() && self.coupling > 0.0) {
            return Err(invalid(
                "coupling",
                format!("must be finite and > 0, got {}", self.coupling),
            ));
        }
        if self.truncation < 1 {
            return Err(invalid("truncation", "must be at least 1"));
        }
        if self.steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        Ok(())
    }

    /// `T = (2m+1) pi / (sqrt(2) g)` in seconds.
    pub fn gate_time(&self) -> f64 {
        (2 * self.gate_index + 1) as f64 * PI / (std::f64::consts::SQRT_2 * self.coupling)
    }

    /// `T / N`. Always derived, never stored.
    pub fn dt(&self) -> f64 {
        self.gate_time() / self.steps as f64
    }

    pub fn time_at(&self, step: u64) -> f64 {
        step as f64 * self.dt()
    }
}

/// Steps at which a trajectory is sampled: 0, every `stride`-th step, and the
/// final step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSchedule {
    steps: Vec<u64>,
}

impl RecordSchedule {
    pub fn new(last_step: u64, stride: u64) -> Result<Self> {
        if stride == 0 {
            return Err(invalid("record_stride", "must be at least 1"));
        }
        let mut steps: Vec<u64> = (0..=last_step).step_by(stride as usize).collect();
        if *steps.last().unwrap() != last_step {
            steps.push(last_step);
        }
        Ok(Self { steps })
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last_step(&self) -> u64 {
        *self.steps.last().unwrap()
    }
}

/// One interaction-picture step `U_I(dt)` on the truncated space.
///
/// Pair `j` (for `j = 1..=K`) rotates `(|g,j>, |e,j-1>)` by `g sqrt(j) dt`.
/// `|e,K>` has no partner and only picks up `cos(g sqrt(K+1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct JcmStepOperator {
    k: usize,
    dt: f64,
    // index 0 unused so that cos[j] belongs to pair j
    cos: Vec<f64>,
    sin: Vec<f64>,
    top_cos: f64,
}

impl JcmStepOperator {
    pub fn new(coupling: f64, k: usize, dt: f64) -> Self {
        let mut cos = vec![1.0; k + 1];
        let mut sin = vec![0.0; k + 1];
        for j in 1..=k {
            let (s, c) = (coupling * (j as f64).sqrt() * dt).sin_cos();
            cos[j] = c;
            sin[j] = G_PHASE * s;
        }
        let top_cos = (coupling * ((k + 1) as f64).sqrt() * dt).cos();
        Self {
            k,
            dt,
            cos,
            sin,
            top_cos,
        }
    }

    pub fn truncation(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn pair_cos_sin(&self, j: usize) -> (f64, f64) {
        (self.cos[j], self.sin[j])
    }

    pub fn top_cos(&self) -> f64 {
        self.top_cos
    }

    /// Applies the step in place to the ground and excited blocks.
    #[inline]
    pub fn apply_to_blocks(&self, g: &mut [Complex64], e: &mut [Complex64]) {
        let k = self.k;
        debug_assert!(g.len() == k + 1 && e.len() == k + 1);
        for j in 1..=k {
            let c = self.cos[j];
            let s = self.sin[j];
            let a = g[j];
            let b = e[j - 1];
            // a' = c a - i s b,  b' = -i s a + c b
            g[j] = Complex64::new(c * a.re + s * b.im, c * a.im - s * b.re);
            e[j - 1] = Complex64::new(s * a.im + c * b.re, c * b.im - s * a.re);
        }
        e[k] *= self.top_cos;
    }

    pub fn apply_in_place(&self, s: &mut StateVector) -> Result<()> {
        if s.truncation() != self.k {
            return Err(Error::TruncationMismatch {
                left: s.truncation(),
                right: self.k,
            });
        }
        let (g, e) = s.blocks_mut();
        self.apply_to_blocks(g, e);
        Ok(())
    }
}

pub fn build_step_operator(params: &JcmParams) -> JcmStepOperator {
    JcmStepOperator::new(params.coupling, params.truncation, params.dt())
}

pub fn apply_jcm_step(s: &StateVector, op: &JcmStepOperator) -> Result<StateVector> {
    let mut out = s.clone();
    op.apply_in_place(&mut out)?;
    Ok(out)
}

/// Exact `U_I(t)` via dressed-state phases.
///
/// `|n+->` picks up `exp(-+i g sqrt(n+1) t)` and `|g,0>` is stationary. The
/// truncated top level `|e,K>` has no closed form, so a state with weight
/// there is rejected.
pub fn exact_evolve(s: &StateVector, t: f64, params: &JcmParams) -> Result<StateVector> {
    if s.truncation() != params.truncation {
        return Err(Error::TruncationMismatch {
            left: s.truncation(),
            right: params.truncation,
        });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    let mut d = bare_to_dressed(s);
    let top = d.residual_top.norm();
    if top > ORPHAN_TOLERANCE {
        return Err(Error::OrphanedTopLevel {
            k: params.truncation,
            amplitude: top,
        });
    }
    for n in 0..params.truncation {
        let omega = G_PHASE * params.coupling * ((n + 1) as f64).sqrt();
        let phase = Complex64::from_polar(1.0, -omega * t);
        d.plus[n] *= phase;
        d.minus[n] *= phase.conj();
    }
    Ok(dressed_to_bare(&d))
}

/// `(|c(m)|^2, d(m))` for the sign-shift gate timed at `(2m+1) pi / (sqrt(2) g)`.
///
/// `|c|^2` is the probability of leaving the atom excited (gate failure) when
/// the input carries one photon; `d` is the surviving `|g,1>` amplitude.
pub fn ns_gate_coeffs(m: u32) -> (f64, f64) {
    let x = (2 * m + 1) as f64 * PI / std::f64::consts::SQRT_2;
    let (s, c) = x.sin_cos();
    (s * s, c)
}

/// Noiseless states `exact_evolve(initial, n dt)` at every scheduled step.
pub fn reference_trajectory(
    initial: &StateVector,
    params: &JcmParams,
    schedule: &RecordSchedule,
) -> Result<Vec<StateVector>> {
    schedule
        .steps()
        .iter()
        .map(|&n| exact_evolve(initial, params.time_at(n), params))
        .collect()
}
