//! Noiseless statevector simulation of the block-sparse (BSP) encoding circuit.
//!
//! Conventions: qubit 1 is the least-significant bit of the basis index,
//! `Ry(θ) = [[cos θ/2, −sin θ/2], [sin θ/2, cos θ/2]]` and
//! `Rz(θ) = diag(e^{−iθ/2}, e^{+iθ/2})`.
//!
//! One encoding block, applied `reps` times, runs qubits in ascending order:
//! rotate qubit `d`, then `CNOT(d → d mod q + 1)`, so the last CNOT closes the
//! ring from qubit `q` back to qubit 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 24;

/// Rotations applied per qubit in each encoding block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dof {
    /// `Ry(u_d)`
    One,
    /// `Rz(u_d) · Ry(u_d) · Rz(u_d)`
    Three,
}

impl TryFrom<u8> for Dof {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Dof::One),
            3 => Ok(Dof::Three),
            other => Err(format!("dof must be 1 or 3, got {other}")),
        }
    }
}

impl From<Dof> for u8 {
    fn from(d: Dof) -> u8 {
        match d {
            Dof::One => 1,
            Dof::Three => 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub num_qubits: usize,
    pub reps: usize,
    pub dof: Dof,
}

impl CircuitConfig {
    pub fn new(num_qubits: usize, reps: usize, dof: Dof) -> Result<Self> {
        let cfg = Self {
            num_qubits,
            reps,
            dof,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// 1-DOF, single repetition.
    pub fn simple(num_qubits: usize) -> Result<Self> {
        Self::new(num_qubits, 1, Dof::One)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_qubits < 2 {
            return Err(Error::InvalidInput(format!(
                "ring entanglement needs at least 2 qubits, got {}",
                self.num_qubits
            )));
        }
        if self.num_qubits > MAX_QUBITS {
            return Err(Error::InvalidInput(format!(
                "{} qubits exceeds the {MAX_QUBITS}-qubit limit",
                self.num_qubits
            )));
        }
        if self.reps == 0 {
            return Err(Error::InvalidInput("reps must be at least 1".into()));
        }
        Ok(())
    }

    /// Bytes held by one prepared statevector.
    pub fn state_bytes(&self) -> usize {
        (1usize << self.num_qubits) * std::mem::size_of::<Complex64>()
    }
}

/// Euler angles `(rz_pre, ry, rz_post)` for one qubit; the operator applied
/// is `Rz(rz_post) · Ry(ry) · Rz(rz_pre)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitAngles {
    pub rz_pre: Option<f64>,
    pub ry: f64,
    pub rz_post: Option<f64>,
}

impl QubitAngles {
    fn from_feature(u: f64, dof: Dof) -> Self {
        match dof {
            Dof::One => Self {
                rz_pre: None,
                ry: u,
                rz_post: None,
            },
            Dof::Three => Self {
                rz_pre: Some(u),
                ry: u,
                rz_post: Some(u),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    num_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0…0⟩` on `num_qubits` qubits.
    pub fn zero(num_qubits: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << num_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Self { num_qubits, amps }
    }

    /// Wraps raw amplitudes; the length must be a power of two and the norm 1.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "amplitude count {len} is not a power of two >= 2"
            )));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidInput(format!("state norm {norm} is not 1")));
        }
        Ok(Self {
            num_qubits: len.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `Ry(theta)` on zero-based qubit `k`.
    pub fn apply_ry(&mut self, k: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let bit = 1usize << k;
        for i in 0..self.amps.len() {
            if i & bit == 0 {
                let a0 = self.amps[i];
                let a1 = self.amps[i | bit];
                self.amps[i] = a0 * c - a1 * s;
                self.amps[i | bit] = a0 * s + a1 * c;
            }
        }
    }

    /// `Rz(theta)` on zero-based qubit `k`.
    pub fn apply_rz(&mut self, k: usize, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        let lower = Complex64::new(c, -s);
        let upper = Complex64::new(c, s);
        let bit = 1usize << k;
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & bit == 0 { lower } else { upper };
        }
    }

    /// CNOT with zero-based control and target.
    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = 1usize << control;
        let tbit = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    fn apply_angles(&mut self, k: usize, angles: QubitAngles) {
        if let Some(a) = angles.rz_pre {
            self.apply_rz(k, a);
        }
        self.apply_ry(k, angles.ry);
        if let Some(a) = angles.rz_post {
            self.apply_rz(k, a);
        }
    }
}

/// Runs the BSP circuit with explicit per-qubit angles on `|0^q⟩`.
pub fn bsp_state_with_angles(angles: &[QubitAngles], reps: usize) -> Result<StateVector> {
    let q = angles.len();
    CircuitConfig::new(q, reps, Dof::One)?;
    let mut state = StateVector::zero(q);
    for _ in 0..reps {
        for (d, a) in angles.iter().enumerate() {
            state.apply_angles(d, *a);
            state.apply_cnot(d, (d + 1) % q);
        }
    }
    Ok(state)
}

/// Encodes one feature vector (angles in radians) with the BSP circuit.
pub fn bsp_state(features: &[f64], cfg: &CircuitConfig) -> Result<StateVector> {
    cfg.validate()?;
    if features.len() != cfg.num_qubits {
        return Err(Error::Dimension(format!(
            "{} features for a {}-qubit circuit",
            features.len(),
            cfg.num_qubits
        )));
    }
    if let Some(pos) = features.iter().position(|f| !f.is_finite()) {
        return Err(Error::NonFinite { row: 0, col: pos });
    }
    let angles: Vec<QubitAngles> = features
        .iter()
        .map(|&u| QubitAngles::from_feature(u, cfg.dof))
        .collect();
    bsp_state_with_angles(&angles, cfg.reps)
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    if a.num_qubits != b.num_qubits {
        return Err(Error::Dimension(format!(
            "fidelity between {}- and {}-qubit states",
            a.num_qubits, b.num_qubits
        )));
    }
    Ok(fidelity_unchecked(a, b))
}

/// Fidelity without the qubit-count check. Written out component-wise so
/// that swapping the arguments only flips the sign of the imaginary part,
/// making the result exactly symmetric.
#[inline]
pub(crate) fn fidelity_unchecked(a: &StateVector, b: &StateVector) -> f64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.amps.iter().zip(&b.amps) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    re * re + im * im
}

/// Per-qubit `⟨Z_k⟩` for `k = 1..q`.
pub fn pauli_z_expectations(s: &StateVector) -> Vec<f64> {
    let mut z = vec![0.0; s.num_qubits];
    for (i, a) in s.amps.iter().enumerate() {
        let p = a.norm_sqr();
        for (k, zk) in z.iter_mut().enumerate() {
            if i >> k & 1 == 0 {
                *zk += p;
            } else {
                *zk -= p;
            }
        }
    }
    z
}
