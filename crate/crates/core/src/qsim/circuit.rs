use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::state::{check_register, StateVector};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    Cnot,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }
}

/// Where a rotation gate takes its angle from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum AngleSource {
    Fixed(f64),
    Data(usize),
    Param(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateRecord", into = "GateRecord")]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub angle: Option<AngleSource>,
}

/// Flat on-disk form: `{gate, target, control?, angle | data_slot | param_slot}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct GateRecord {
    gate: GateKind,
    target: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    control: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    angle: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_slot: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    param_slot: Option<usize>,
}

impl TryFrom<GateRecord> for Gate {
    type Error = Error;

    fn try_from(r: GateRecord) -> Result<Self> {
        let sources = [
            r.angle.map(AngleSource::Fixed),
            r.data_slot.map(AngleSource::Data),
            r.param_slot.map(AngleSource::Param),
        ];
        let mut given = sources.into_iter().flatten();
        let angle = given.next();
        if given.next().is_some() {
            return Err(Error::Config(format!(
                "{:?} gate on qubit {} has more than one angle source",
                r.gate, r.target
            )));
        }
        Ok(Gate {
            kind: r.gate,
            target: r.target,
            control: r.control,
            angle,
        })
    }
}

impl From<Gate> for GateRecord {
    fn from(g: Gate) -> Self {
        let (mut angle, mut data_slot, mut param_slot) = (None, None, None);
        match g.angle {
            Some(AngleSource::Fixed(a)) => angle = Some(a),
            Some(AngleSource::Data(s)) => data_slot = Some(s),
            Some(AngleSource::Param(s)) => param_slot = Some(s),
            None => {}
        }
        GateRecord {
            gate: g.kind,
            target: g.target,
            control: g.control,
            angle,
            data_slot,
            param_slot,
        }
    }
}

impl Gate {
    pub fn rotation(kind: GateKind, target: usize, angle: AngleSource) -> Self {
        Self {
            kind,
            target,
            control: None,
            angle: Some(angle),
        }
    }

    pub fn h(target: usize) -> Self {
        Self {
            kind: GateKind::H,
            target,
            control: None,
            angle: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            angle: None,
        }
    }

    fn validate(&self, n_qubits: usize) -> Result<()> {
        if self.target >= n_qubits {
            return Err(Error::Config(format!(
                "{:?} target qubit {} outside register of {n_qubits}",
                self.kind, self.target
            )));
        }
        match (self.kind, self.control, self.angle) {
            (GateKind::Cnot, Some(c), None) => {
                if c >= n_qubits || c == self.target {
                    return Err(Error::Config(format!(
                        "CNOT control {c} invalid for target {} on {n_qubits} qubits",
                        self.target
                    )));
                }
            }
            (GateKind::H, None, None) => {}
            (k, None, Some(_)) if k.is_rotation() => {}
            (k, _, _) => {
                return Err(Error::Config(format!(
                    "{k:?} gate on qubit {} has inconsistent control/angle fields",
                    self.target
                )))
            }
        }
        Ok(())
    }

    fn resolve(&self, data: &[f64], params: &[f64]) -> f64 {
        match self.angle {
            Some(AngleSource::Fixed(a)) => a,
            Some(AngleSource::Data(s)) => data[s],
            Some(AngleSource::Param(s)) => params[s],
            None => 0.0,
        }
    }
}

/// Applies `gate` with an explicit angle (ignored for H and CNOT).
pub fn apply_gate(state: &mut StateVector, gate: &Gate, angle: f64) -> Result<()> {
    state.check_qubit(gate.target)?;
    let (c, s) = ((angle / 2.0).cos(), (angle / 2.0).sin());
    let z = Complex64::new(0.0, 0.0);
    let re = |x: f64| Complex64::new(x, 0.0);
    match gate.kind {
        GateKind::Rx => {
            let mis = Complex64::new(0.0, -s);
            state.apply_single(gate.target, [[re(c), mis], [mis, re(c)]]);
        }
        GateKind::Ry => state.apply_single(gate.target, [[re(c), re(-s)], [re(s), re(c)]]),
        GateKind::Rz => state.apply_single(
            gate.target,
            [[Complex64::new(c, -s), z], [z, Complex64::new(c, s)]],
        ),
        GateKind::H => {
            let h = re(FRAC_1_SQRT_2);
            state.apply_single(gate.target, [[h, h], [h, -h]]);
        }
        GateKind::Cnot => {
            let control = gate
                .control
                .ok_or_else(|| Error::Config("CNOT without control".into()))?;
            state.check_qubit(control)?;
            state.apply_cnot(control, gate.target);
        }
    }
    Ok(())
}

/// A validated gate sequence with data and parameter slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CircuitRecord", into = "CircuitRecord")]
pub struct CircuitSpec {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_data: usize,
    n_params: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CircuitRecord {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl TryFrom<CircuitRecord> for CircuitSpec {
    type Error = Error;

    fn try_from(r: CircuitRecord) -> Result<Self> {
        CircuitSpec::new(r.n_qubits, r.gates)
    }
}

impl From<CircuitSpec> for CircuitRecord {
    fn from(c: CircuitSpec) -> Self {
        CircuitRecord {
            n_qubits: c.n_qubits,
            gates: c.gates,
        }
    }
}

impl CircuitSpec {
    pub fn new(n_qubits: usize, gates: Vec<Gate>) -> Result<Self> {
        check_register(n_qubits)?;
        let (mut n_data, mut n_params) = (0, 0);
        for g in &gates {
            g.validate(n_qubits)?;
            match g.angle {
                Some(AngleSource::Data(s)) => n_data = n_data.max(s + 1),
                Some(AngleSource::Param(s)) => n_params = n_params.max(s + 1),
                _ => {}
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            n_data,
            n_params,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of data slots referenced (highest slot + 1).
    pub fn n_data(&self) -> usize {
        self.n_data
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    fn check_slots(&self, data: &[f64], params: &[f64]) -> Result<()> {
        if data.len() < self.n_data {
            return Err(Error::Config(format!(
                "circuit reads {} data slots but {} were supplied",
                self.n_data,
                data.len()
            )));
        }
        if params.len() < self.n_params {
            return Err(Error::Config(format!(
                "circuit reads {} parameter slots but {} were supplied",
                self.n_params,
                params.len()
            )));
        }
        Ok(())
    }

    /// Applies the circuit to `state` in place.
    pub fn apply(&self, state: &mut StateVector, data: &[f64], params: &[f64]) -> Result<()> {
        self.apply_shifted(state, data, params, None)
    }

    /// Same as [`apply`](Self::apply) with gate `shift.0` offset by `shift.1`.
    pub(crate) fn apply_shifted(
        &self,
        state: &mut StateVector,
        data: &[f64],
        params: &[f64],
        shift: Option<(usize, f64)>,
    ) -> Result<()> {
        self.check_register_of(state)?;
        self.check_slots(data, params)?;
        for (i, g) in self.gates.iter().enumerate() {
            let mut angle = g.resolve(data, params);
            if let Some((gi, delta)) = shift {
                if gi == i {
                    angle += delta;
                }
            }
            apply_gate(state, g, angle)?;
        }
        Ok(())
    }

    /// Applies `U†` to `state` in place.
    pub fn apply_inverse(&self, state: &mut StateVector, data: &[f64], params: &[f64]) -> Result<()> {
        self.check_register_of(state)?;
        self.check_slots(data, params)?;
        for g in self.gates.iter().rev() {
            apply_gate(state, g, -g.resolve(data, params))?;
        }
        Ok(())
    }

    fn check_register_of(&self, state: &StateVector) -> Result<()> {
        if state.n_qubits() != self.n_qubits {
            return Err(Error::Dimension(format!(
                "circuit on {} qubits applied to a {}-qubit state",
                self.n_qubits,
                state.n_qubits()
            )));
        }
        Ok(())
    }

    /// Runs the circuit on `|0…0⟩`.
    pub fn run(&self, data: &[f64], params: &[f64]) -> Result<StateVector> {
        let mut state = StateVector::zero(self.n_qubits)?;
        self.apply(&mut state, data, params)?;
        Ok(state)
    }

    /// Copy with every Rz gate removed independently with probability `p`.
    pub fn rz_dropout(&self, p: f64, seed: u64) -> Result<CircuitSpec> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1]")));
        }
        let mut rng = rng::stream(seed, &[0x525a]);
        let gates = self
            .gates
            .iter()
            .filter(|g| g.kind != GateKind::Rz || rng.gen::<f64>() >= p)
            .cloned()
            .collect();
        Ok(CircuitSpec {
            gates,
            ..self.clone()
        })
    }
}

/// How classical inputs enter a layered circuit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    /// `Ry(x_i)` on qubit `i`.
    Angle,
    /// Normalized input written directly into the amplitudes.
    Amplitude,
}

/// Layered circuit: an optional `Ry` data upload followed by `depth` blocks
/// of a CNOT ladder and per-qubit `Rz` then `Ry` trainable rotations.
pub fn hardware_efficient(n_qubits: usize, depth: usize, encoding: Encoding) -> Result<CircuitSpec> {
    check_register(n_qubits)?;
    let mut gates = Vec::new();
    if encoding == Encoding::Angle {
        for q in 0..n_qubits {
            gates.push(Gate::rotation(GateKind::Ry, q, AngleSource::Data(q)));
        }
    }
    let mut slot = 0;
    for _ in 0..depth {
        for q in 0..n_qubits.saturating_sub(1) {
            gates.push(Gate::cnot(q, q + 1));
        }
        for q in 0..n_qubits {
            gates.push(Gate::rotation(GateKind::Rz, q, AngleSource::Param(slot)));
            gates.push(Gate::rotation(GateKind::Ry, q, AngleSource::Param(slot + 1)));
            slot += 2;
        }
    }
    CircuitSpec::new(n_qubits, gates)
}
