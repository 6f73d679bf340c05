//! Classical simulation of the small quantum states used by the optimizer:
//! single-qubit amplitude pairs (the genome unit) and the fixed 4-qubit
//! feature-encoding circuit.
//!
//! Basis ordering for [`StateVector4`]: qubit 0 is the most significant bit,
//! so `index = q0·8 + q1·4 + q2·2 + q3`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_QUBITS: usize = 4;
pub const DIM: usize = 1 << NUM_QUBITS;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// One qubit `α|0⟩ + β|1⟩` with `|α|² + |β|² = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitPair {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl QubitPair {
    pub const ZERO_STATE: QubitPair = QubitPair {
        alpha: ONE,
        beta: ZERO,
    };

    /// Builds a qubit from raw amplitudes, renormalizing them.
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self> {
        let norm = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !norm.is_finite() || norm < 1e-150 {
            return Err(Error::invalid("qubit amplitudes must be finite and non-zero"));
        }
        Ok(QubitPair {
            alpha: alpha / norm,
            beta: beta / norm,
        })
    }

    /// Real qubit `cos(φ/2)|0⟩ + sin(φ/2)|1⟩`.
    pub fn from_angle(phi: f64) -> Self {
        let (s, c) = (phi / 2.0).sin_cos();
        QubitPair {
            alpha: Complex64::new(c, 0.0),
            beta: Complex64::new(s, 0.0),
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr()
    }

    /// Probability of measuring `|1⟩`.
    pub fn prob_one(&self) -> f64 {
        self.beta.norm_sqr()
    }

    /// Applies `Ry(θ)`.
    pub fn rotate_y(&self, theta: f64) -> Self {
        let (s, c) = (theta / 2.0).sin_cos();
        QubitPair {
            alpha: self.alpha * c - self.beta * s,
            beta: self.alpha * s + self.beta * c,
        }
    }
}

/// The 16 amplitudes of a 4-qubit register.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector4 {
    amps: [Complex64; DIM],
}

impl Default for StateVector4 {
    fn default() -> Self {
        Self::basis(0)
    }
}

fn bit_of(qubit: usize) -> Result<usize> {
    if qubit >= NUM_QUBITS {
        return Err(Error::invalid(format!(
            "qubit index {qubit} out of range 0..{NUM_QUBITS}"
        )));
    }
    Ok(1 << (NUM_QUBITS - 1 - qubit))
}

impl StateVector4 {
    /// Computational basis state `|index⟩`. Panics if `index >= 16`.
    pub fn basis(index: usize) -> Self {
        let mut amps = [ZERO; DIM];
        amps[index] = ONE;
        StateVector4 { amps }
    }

    /// Wraps raw amplitudes after normalizing them.
    pub fn from_amplitudes(amps: [Complex64; DIM]) -> Result<Self> {
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm < 1e-150 {
            return Err(Error::invalid("state amplitudes must be finite and non-zero"));
        }
        Ok(StateVector4 {
            amps: amps.map(|a| a / norm),
        })
    }

    pub fn amplitudes(&self) -> &[Complex64; DIM] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn apply_hadamard(&self, qubit: usize) -> Result<Self> {
        let bit = bit_of(qubit)?;
        let mut out = self.amps;
        for i in (0..DIM).filter(|i| i & bit == 0) {
            let (a0, a1) = (self.amps[i], self.amps[i | bit]);
            out[i] = (a0 + a1) * FRAC_1_SQRT_2;
            out[i | bit] = (a0 - a1) * FRAC_1_SQRT_2;
        }
        Ok(StateVector4 { amps: out })
    }

    pub fn apply_ry(&self, qubit: usize, theta: f64) -> Result<Self> {
        let bit = bit_of(qubit)?;
        if !theta.is_finite() {
            return Err(Error::invalid(format!("rotation angle must be finite, got {theta}")));
        }
        let (s, c) = (theta / 2.0).sin_cos();
        let mut out = self.amps;
        for i in (0..DIM).filter(|i| i & bit == 0) {
            let (a0, a1) = (self.amps[i], self.amps[i | bit]);
            out[i] = a0 * c - a1 * s;
            out[i | bit] = a0 * s + a1 * c;
        }
        Ok(StateVector4 { amps: out })
    }

    pub fn apply_cnot(&self, control: usize, target: usize) -> Result<Self> {
        let cbit = bit_of(control)?;
        let tbit = bit_of(target)?;
        if control == target {
            return Err(Error::invalid("CNOT control and target must differ"));
        }
        let mut out = self.amps;
        for i in (0..DIM).filter(|i| i & cbit != 0) {
            out[i] = self.amps[i ^ tbit];
        }
        Ok(StateVector4 { amps: out })
    }
}

/// Runs the encoding circuit on `|0000⟩`: `H0 H3`, then for every angle pair
/// `(a, b)`: `CNOT(0,1)`, `Ry(a)` on qubit 1, `CNOT(1,2)`, `Ry(b)` on qubit 2,
/// `CNOT(2,3)`.
pub fn encode_features(angles: &[f64]) -> Result<StateVector4> {
    if angles.is_empty() || !angles.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "encoding needs a non-empty even number of angles, got {}",
            angles.len()
        )));
    }
    let mut state = StateVector4::default().apply_hadamard(0)?.apply_hadamard(3)?;
    for pair in angles.chunks_exact(2) {
        state = state
            .apply_cnot(0, 1)?
            .apply_ry(1, pair[0])?
            .apply_cnot(1, 2)?
            .apply_ry(2, pair[1])?
            .apply_cnot(2, 3)?;
    }
    // Gates are unitary; this only removes accumulated rounding.
    StateVector4::from_amplitudes(state.amps)
}

/// Pads an angle vector with zeros to an even length so that every layer
/// receives two angles.
pub fn pad_to_layers(angles: &[f64]) -> Vec<f64> {
    let mut out = angles.to_vec();
    if out.len() % 2 == 1 {
        out.push(0.0);
    }
    out
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector4, b: &StateVector4) -> f64 {
    let overlap: Complex64 = a
        .amps
        .iter()
        .zip(b.amps.iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    overlap.norm_sqr().clamp(0.0, 1.0)
}
