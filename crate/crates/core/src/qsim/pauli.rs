use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::state::StateVector;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

/// Tensor product of single-qubit Paulis; `letters[q]` acts on qubit `q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliString {
    letters: Vec<Pauli>,
}

impl PauliString {
    pub fn new(letters: Vec<Pauli>) -> Self {
        Self { letters }
    }

    /// `Z` on `qubit`, identity elsewhere.
    pub fn z_on(n_qubits: usize, qubit: usize) -> Self {
        let mut letters = vec![Pauli::I; n_qubits];
        letters[qubit] = Pauli::Z;
        Self { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn letters(&self) -> &[Pauli] {
        &self.letters
    }

    fn flip_mask(&self) -> usize {
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, Pauli::X | Pauli::Y))
            .fold(0, |m, (q, _)| m | (1 << q))
    }

    /// `A|j⟩ = phase · |j ^ flip⟩`.
    pub fn apply_to_basis(&self, j: usize) -> (usize, Complex64) {
        let mut phase = Complex64::new(1.0, 0.0);
        for (q, p) in self.letters.iter().enumerate() {
            let bit = (j >> q) & 1;
            match p {
                Pauli::I | Pauli::X => {}
                Pauli::Y => {
                    phase *= if bit == 0 {
                        Complex64::new(0.0, 1.0)
                    } else {
                        Complex64::new(0.0, -1.0)
                    }
                }
                Pauli::Z => {
                    if bit == 1 {
                        phase = -phase;
                    }
                }
            }
        }
        (j ^ self.flip_mask(), phase)
    }

    /// Dense row-major `2^n × 2^n` matrix.
    pub fn matrix(&self) -> Vec<Complex64> {
        let dim = 1usize << self.letters.len();
        let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
        for j in 0..dim {
            let (i, phase) = self.apply_to_basis(j);
            m[i * dim + j] = phase;
        }
        m
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        self.check(state)?;
        let src = state.amplitudes();
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        for (j, a) in src.iter().enumerate() {
            let (i, phase) = self.apply_to_basis(j);
            out[i] += phase * a;
        }
        StateVector::from_amplitudes(out)
    }

    fn check(&self, state: &StateVector) -> Result<()> {
        if self.letters.len() != state.n_qubits() {
            return Err(Error::Dimension(format!(
                "Pauli string of length {} on {} qubits",
                self.letters.len(),
                state.n_qubits()
            )));
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    /// Character `q` of the string acts on qubit `q`.
    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .chars()
            .map(|c| match c.to_ascii_uppercase() {
                'I' => Ok(Pauli::I),
                'X' => Ok(Pauli::X),
                'Y' => Ok(Pauli::Y),
                'Z' => Ok(Pauli::Z),
                other => Err(Error::Config(format!("unknown Pauli letter '{other}'"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { letters })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.letters {
            write!(f, "{p:?}")?;
        }
        Ok(())
    }
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(state: &StateVector, observable: &PauliString) -> Result<f64> {
    observable.check(state)?;
    let amps = state.amplitudes();
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, a) in amps.iter().enumerate() {
        let (i, phase) = observable.apply_to_basis(j);
        acc += amps[i].conj() * phase * a;
    }
    Ok(acc.re)
}
