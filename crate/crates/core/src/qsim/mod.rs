//! State-vector simulation of small parameterized circuits.

mod circuit;
mod layer;
mod ops;
mod pauli;
mod state;
mod trigpoly;

pub use circuit::{apply_gate, hardware_efficient, AngleSource, CircuitSpec, Encoding, Gate, GateKind};
pub use layer::QuantumLayer;
pub use ops::{
    amplitude_encode, amplitude_output_grad, angle_encode_run, data_shift_grad, extract_w,
    parameter_shift_grad,
};
pub use pauli::{expectation, Pauli, PauliString};
pub use state::{StateVector, MAX_QUBITS};
pub use trigpoly::{evaluate_trig_polynomial, expand_trig_polynomial, TrigFactor, TrigPolyTerm};
