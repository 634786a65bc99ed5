use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use super::circuit::{AngleSource, CircuitSpec, GateKind};
use super::pauli::PauliString;
use crate::{Error, Result};

/// `cos(a/2 + q)` with `q ∈ {0, π/2}` and `a` read from `source`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigFactor {
    pub source: AngleSource,
    pub shifted: bool,
}

impl TrigFactor {
    pub fn eval(&self, data: &[f64], params: &[f64]) -> f64 {
        let a = match self.source {
            AngleSource::Fixed(a) => a,
            AngleSource::Data(s) => data[s],
            AngleSource::Param(s) => params[s],
        };
        let q = if self.shifted { FRAC_PI_2 } else { 0.0 };
        (a / 2.0 + q).cos()
    }
}

/// `sign · Π factors`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPolyTerm {
    pub sign: i8,
    pub factors: Vec<TrigFactor>,
}

impl TrigPolyTerm {
    pub fn eval(&self, data: &[f64], params: &[f64]) -> f64 {
        self.factors
            .iter()
            .map(|f| f.eval(data, params))
            .product::<f64>()
            * f64::from(self.sign)
    }
}

/// One path through the circuit: `i^phase · Π factors · |basis⟩`.
#[derive(Clone)]
struct Branch {
    basis: usize,
    phase: u8,
    factors: Vec<TrigFactor>,
}

fn pauli_phase(kind: GateKind, bit: usize) -> (u8, bool) {
    match (kind, bit) {
        (GateKind::Rx, _) => (0, true),
        (GateKind::Ry, 0) => (1, true),
        (GateKind::Ry, _) => (3, true),
        (GateKind::Rz, 0) => (0, false),
        (GateKind::Rz, _) => (2, false),
        _ => unreachable!("not a rotation"),
    }
}

/// Expands `⟨0|U†AU|0⟩` into a signed sum of products of shifted cosines,
/// one cosine per rotation on each side of the observable. Pairs of paths
/// with imaginary weight cancel and are omitted.
pub fn expand_trig_polynomial(circuit: &CircuitSpec, observable: &PauliString) -> Result<Vec<TrigPolyTerm>> {
    if observable.len() != circuit.n_qubits() {
        return Err(Error::Dimension(format!(
            "Pauli string of length {} on {} qubits",
            observable.len(),
            circuit.n_qubits()
        )));
    }
    let mut branches = vec![Branch {
        basis: 0,
        phase: 0,
        factors: Vec::new(),
    }];
    for g in circuit.gates() {
        let bit = 1usize << g.target;
        let mut next = Vec::with_capacity(branches.len() * 2);
        for b in branches {
            match g.kind {
                GateKind::Cnot => {
                    let c = g.control.expect("validated CNOT");
                    let basis = if b.basis >> c & 1 == 1 { b.basis ^ bit } else { b.basis };
                    next.push(Branch { basis, ..b });
                }
                GateKind::H => {
                    let half = TrigFactor {
                        source: AngleSource::Fixed(FRAC_PI_2),
                        shifted: false,
                    };
                    let mut factors = b.factors.clone();
                    factors.push(half);
                    let one_phase = if b.basis & bit != 0 { (b.phase + 2) % 4 } else { b.phase };
                    next.push(Branch {
                        basis: b.basis & !bit,
                        phase: b.phase,
                        factors: factors.clone(),
                    });
                    next.push(Branch {
                        basis: b.basis | bit,
                        phase: one_phase,
                        factors,
                    });
                }
                kind => {
                    let source = g.angle.expect("validated rotation");
                    let (p_phase, flips) = pauli_phase(kind, (b.basis & bit != 0) as usize);
                    let mut keep = b.factors.clone();
                    keep.push(TrigFactor { source, shifted: false });
                    let mut turn = b.factors;
                    turn.push(TrigFactor { source, shifted: true });
                    next.push(Branch {
                        basis: b.basis,
                        phase: b.phase,
                        factors: keep,
                    });
                    next.push(Branch {
                        basis: if flips { b.basis ^ bit } else { b.basis },
                        phase: (b.phase + 1 + p_phase) % 4,
                        factors: turn,
                    });
                }
            }
        }
        branches = next;
    }

    let mut by_basis: HashMap<usize, Vec<&Branch>> = HashMap::new();
    for b in &branches {
        by_basis.entry(b.basis).or_default().push(b);
    }
    let mut terms = Vec::new();
    for ket in &branches {
        let (bra_basis, a_phase) = observable.apply_to_basis(ket.basis);
        let a_pow = match (a_phase.re.round() as i32, a_phase.im.round() as i32) {
            (1, 0) => 0u8,
            (0, 1) => 1,
            (-1, 0) => 2,
            _ => 3,
        };
        let Some(bras) = by_basis.get(&bra_basis) else {
            continue;
        };
        for bra in bras {
            let total = (4 - bra.phase + a_pow + ket.phase) % 4;
            let sign = match total {
                0 => 1,
                2 => -1,
                _ => continue,
            };
            let mut factors = bra.factors.clone();
            factors.extend_from_slice(&ket.factors);
            terms.push(TrigPolyTerm { sign, factors });
        }
    }
    Ok(terms)
}

pub fn evaluate_trig_polynomial(terms: &[TrigPolyTerm], data: &[f64], params: &[f64]) -> f64 {
    terms.iter().map(|t| t.eval(data, params)).sum()
}
