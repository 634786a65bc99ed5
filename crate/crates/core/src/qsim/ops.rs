use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use super::circuit::{AngleSource, CircuitSpec};
use super::pauli::{expectation, PauliString};
use super::state::StateVector;
use crate::{Error, Result};

/// Writes `z / |z|` into the amplitudes of the smallest register that holds
/// it, zero-padding the tail.
pub fn amplitude_encode(z: &[f64]) -> Result<StateVector> {
    if z.is_empty() {
        return Err(Error::Data("cannot amplitude-encode an empty vector".into()));
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::Data(format!("cannot amplitude-encode a vector of norm {norm}")));
    }
    let dim = z.len().next_power_of_two().max(2);
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for (a, v) in amps.iter_mut().zip(z) {
        *a = Complex64::new(v / norm, 0.0);
    }
    StateVector::from_amplitudes(amps)
}

/// Runs a data-driven circuit from `|0…0⟩` and measures `observable`.
pub fn angle_encode_run(
    circuit: &CircuitSpec,
    data: &[f64],
    params: &[f64],
    observable: &PauliString,
) -> Result<f64> {
    expectation(&circuit.run(data, params)?, observable)
}

/// The effective observable `W = U† A U` as a row-major `2^n × 2^n` matrix.
/// The circuit may read parameters but no data slots.
pub fn extract_w(circuit: &CircuitSpec, params: &[f64], observable: &PauliString) -> Result<Vec<Complex64>> {
    if circuit.n_data() > 0 {
        return Err(Error::Config(
            "effective observable needs a circuit without data slots".into(),
        ));
    }
    let n = circuit.n_qubits();
    let dim = 1usize << n;
    let columns = (0..dim)
        .map(|j| {
            let mut s = StateVector::basis(n, j)?;
            circuit.apply(&mut s, &[], params)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let images = columns
        .iter()
        .map(|s| observable.apply(s))
        .collect::<Result<Vec<_>>>()?;
    let mut w = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            w[i * dim + j] = columns[i].inner(&images[j]);
        }
    }
    Ok(w)
}

fn shift_grad(
    circuit: &CircuitSpec,
    initial: &StateVector,
    data: &[f64],
    params: &[f64],
    observable: &PauliString,
    target: AngleSource,
) -> Result<f64> {
    let mut grad = 0.0;
    for (i, g) in circuit.gates().iter().enumerate() {
        if g.angle != Some(target) {
            continue;
        }
        let eval = |delta: f64| -> Result<f64> {
            let mut s = initial.clone();
            circuit.apply_shifted(&mut s, data, params, Some((i, delta)))?;
            expectation(&s, observable)
        };
        grad += (eval(FRAC_PI_2)? - eval(-FRAC_PI_2)?) / 2.0;
    }
    Ok(grad)
}

/// `∂⟨A⟩/∂params[slot]` by the two-term shift rule, summed over every gate
/// reading that slot. `initial` defaults to `|0…0⟩`.
pub fn parameter_shift_grad(
    circuit: &CircuitSpec,
    initial: Option<&StateVector>,
    data: &[f64],
    params: &[f64],
    observable: &PauliString,
    slot: usize,
) -> Result<f64> {
    if slot >= circuit.n_params() {
        return Err(Error::Index(format!(
            "parameter slot {slot} outside {} slots",
            circuit.n_params()
        )));
    }
    let zero;
    let initial = match initial {
        Some(s) => s,
        None => {
            zero = StateVector::zero(circuit.n_qubits())?;
            &zero
        }
    };
    shift_grad(circuit, initial, data, params, observable, AngleSource::Param(slot))
}

/// `∂⟨A⟩/∂data[slot]` by the same shift rule.
pub fn data_shift_grad(
    circuit: &CircuitSpec,
    data: &[f64],
    params: &[f64],
    observable: &PauliString,
    slot: usize,
) -> Result<f64> {
    if slot >= circuit.n_data() {
        return Err(Error::Index(format!(
            "data slot {slot} outside {} slots",
            circuit.n_data()
        )));
    }
    let zero = StateVector::zero(circuit.n_qubits())?;
    shift_grad(circuit, &zero, data, params, observable, AngleSource::Data(slot))
}

/// Output and input gradient of `O(z) = ⟨ẑ|U†AU|ẑ⟩` for amplitude-encoded
/// real `z`. Returns `(O, dO/dz)` with `dO/dz = 2(Re(W ẑ) - O ẑ) / |z|`.
pub fn amplitude_output_grad(
    circuit: &CircuitSpec,
    z: &[f64],
    params: &[f64],
    observable: &PauliString,
) -> Result<(f64, Vec<f64>)> {
    let phi = amplitude_encode(z)?;
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut psi = phi.clone();
    circuit.apply(&mut psi, &[], params)?;
    let out = expectation(&psi, observable)?;
    let mut chi = observable.apply(&psi)?;
    circuit.apply_inverse(&mut chi, &[], params)?;
    let grad = chi
        .amplitudes()
        .iter()
        .zip(phi.amplitudes())
        .take(z.len())
        .map(|(c, p)| 2.0 * (c.re - out * p.re) / norm)
        .collect();
    Ok((out, grad))
}
