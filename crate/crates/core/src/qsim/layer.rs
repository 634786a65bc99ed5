use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use super::circuit::{hardware_efficient, AngleSource, CircuitSpec, Encoding};
use super::ops::{amplitude_encode, amplitude_output_grad};
use super::pauli::{expectation, PauliString};
use super::state::StateVector;
use crate::autodiff::{CustomOp, Graph, Tensor, Var};
use crate::{Error, Result};

/// Differentiable circuit layer mapping `[batch × in_dim]` inputs to
/// `[batch × n_qubits]` single-qubit `⟨Z⟩` readouts.
#[derive(Clone, Debug)]
pub struct QuantumLayer {
    circuit: CircuitSpec,
    encoding: Encoding,
    in_dim: usize,
    observables: Vec<PauliString>,
}

impl QuantumLayer {
    /// Hardware-efficient layer. Angle encoding needs `in_dim == n_qubits`;
    /// amplitude encoding needs `in_dim <= 2^n_qubits`.
    pub fn new(n_qubits: usize, depth: usize, encoding: Encoding, in_dim: usize) -> Result<Self> {
        let circuit = hardware_efficient(n_qubits, depth, encoding)?;
        Self::from_circuit(circuit, encoding, in_dim)
    }

    pub fn from_circuit(circuit: CircuitSpec, encoding: Encoding, in_dim: usize) -> Result<Self> {
        let n = circuit.n_qubits();
        match encoding {
            Encoding::Angle if circuit.n_data() != in_dim => {
                return Err(Error::Config(format!(
                    "angle-encoded circuit reads {} inputs, layer receives {in_dim}",
                    circuit.n_data()
                )))
            }
            Encoding::Amplitude if circuit.n_data() != 0 || in_dim == 0 || in_dim > 1 << n => {
                return Err(Error::Config(format!(
                    "amplitude encoding of {in_dim} inputs on {n} qubits"
                )))
            }
            _ => {}
        }
        let observables = (0..n).map(|q| PauliString::z_on(n, q)).collect();
        Ok(Self {
            circuit,
            encoding,
            in_dim,
            observables,
        })
    }

    pub fn circuit(&self) -> &CircuitSpec {
        &self.circuit
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn n_outputs(&self) -> usize {
        self.observables.len()
    }

    pub fn n_params(&self) -> usize {
        self.circuit.n_params()
    }

    fn initial(&self, x: &[f64]) -> Result<StateVector> {
        match self.encoding {
            Encoding::Angle => StateVector::zero(self.circuit.n_qubits()),
            Encoding::Amplitude => {
                let mut s = amplitude_encode(x)?;
                if s.n_qubits() < self.circuit.n_qubits() {
                    let mut amps = s.amplitudes().to_vec();
                    amps.resize(1 << self.circuit.n_qubits(), Default::default());
                    s = StateVector::from_amplitudes(amps)?;
                }
                Ok(s)
            }
        }
    }

    fn data<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        match self.encoding {
            Encoding::Angle => x,
            Encoding::Amplitude => &[],
        }
    }

    fn measure(&self, state: &StateVector) -> Result<Vec<f64>> {
        self.observables.iter().map(|o| expectation(state, o)).collect()
    }

    fn check_batch(&self, inputs: &[f64], params: &[f64]) -> Result<usize> {
        if !inputs.len().is_multiple_of(self.in_dim) {
            return Err(Error::Dimension(format!(
                "{} inputs do not form rows of {}",
                inputs.len(),
                self.in_dim
            )));
        }
        if params.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} circuit parameters supplied, {} expected",
                params.len(),
                self.n_params()
            )));
        }
        Ok(inputs.len() / self.in_dim)
    }

    /// Row-major `[batch × n_qubits]` readouts using `circuit`.
    pub fn forward_with(&self, circuit: &CircuitSpec, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.check_batch(inputs, params)?;
        let rows = inputs
            .par_chunks(self.in_dim)
            .map(|x| {
                let mut s = self.initial(x)?;
                circuit.apply(&mut s, self.data(x), params)?;
                self.measure(&s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(rows.concat())
    }

    pub fn forward(&self, inputs: &[f64], params: &[f64]) -> Result<Vec<f64>> {
        self.forward_with(&self.circuit, inputs, params)
    }

    /// Records the layer on `graph`. `dropout` is `(p, seed)` for Rz gate
    /// removal, sampled once for the whole batch.
    pub fn apply(&self, graph: &mut Graph, input: Var, params: Var, dropout: Option<(f64, u64)>) -> Result<Var> {
        let circuit = match dropout {
            Some((p, seed)) if p > 0.0 => self.circuit.rz_dropout(p, seed)?,
            _ => self.circuit.clone(),
        };
        let x = graph.value(input).data();
        let theta = graph.value(params).data();
        let batch = self.check_batch(x, theta)?;
        let out = self.forward_with(&circuit, x, theta)?;
        let value = Tensor::new(vec![batch, self.n_outputs()], out)?;
        let op = CircuitOp {
            layer: self.clone(),
            circuit,
        };
        Ok(graph.custom(&[input, params], value, Box::new(op)))
    }
}

struct CircuitOp {
    layer: QuantumLayer,
    circuit: CircuitSpec,
}

impl CircuitOp {
    /// `d(outputs)/d(angle source)` for every observable, by the shift rule.
    fn shift_jacobian(
        &self,
        initial: &StateVector,
        data: &[f64],
        params: &[f64],
        target: AngleSource,
    ) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.layer.n_outputs()];
        for (i, g) in self.circuit.gates().iter().enumerate() {
            if g.angle != Some(target) {
                continue;
            }
            let run = |delta: f64| -> Result<Vec<f64>> {
                let mut s = initial.clone();
                self.circuit.apply_shifted(&mut s, data, params, Some((i, delta)))?;
                self.layer.measure(&s)
            };
            let (plus, minus) = (run(FRAC_PI_2)?, run(-FRAC_PI_2)?);
            for (g, (p, m)) in grad.iter_mut().zip(plus.iter().zip(&minus)) {
                *g += (p - m) / 2.0;
            }
        }
        Ok(grad)
    }

    fn sample_grads(&self, x: &[f64], params: &[f64], g_out: &[f64], needs: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
        let layer = &self.layer;
        let dot = |jac: &[f64]| jac.iter().zip(g_out).map(|(a, b)| a * b).sum::<f64>();
        let mut gx = vec![0.0; if needs[0] { layer.in_dim } else { 0 }];
        if needs[0] {
            match layer.encoding {
                Encoding::Angle => {
                    let initial = layer.initial(x)?;
                    for (slot, g) in gx.iter_mut().enumerate() {
                        *g = dot(&self.shift_jacobian(&initial, x, params, AngleSource::Data(slot))?);
                    }
                }
                Encoding::Amplitude => {
                    let mut padded = x.to_vec();
                    padded.resize(1 << layer.circuit.n_qubits(), 0.0);
                    for (obs, go) in layer.observables.iter().zip(g_out) {
                        if *go == 0.0 {
                            continue;
                        }
                        let (_, d) = amplitude_output_grad(&self.circuit, &padded, params, obs)?;
                        for (g, v) in gx.iter_mut().zip(&d) {
                            *g += go * v;
                        }
                    }
                }
            }
        }
        let mut gp = vec![0.0; if needs[1] { params.len() } else { 0 }];
        if needs[1] {
            let initial = layer.initial(x)?;
            let data = layer.data(x);
            for (slot, g) in gp.iter_mut().enumerate() {
                *g = dot(&self.shift_jacobian(&initial, data, params, AngleSource::Param(slot))?);
            }
        }
        Ok((gx, gp))
    }
}

impl CustomOp for CircuitOp {
    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &[f64],
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        let x = inputs[0].data();
        let params = inputs[1].data();
        let n_out = self.layer.n_outputs();
        let per_sample = x
            .par_chunks(self.layer.in_dim)
            .zip(grad_output.par_chunks(n_out))
            .map(|(xi, gi)| self.sample_grads(xi, params, gi, needs_grad))
            .collect::<Result<Vec<_>>>()?;
        let gx = needs_grad[0].then(|| per_sample.iter().flat_map(|(gx, _)| gx.iter().copied()).collect());
        let gp = needs_grad[1].then(|| {
            let mut acc = vec![0.0; params.len()];
            for (_, gp) in &per_sample {
                for (a, v) in acc.iter_mut().zip(gp) {
                    *a += v;
                }
            }
            acc
        });
        Ok(vec![gx, gp])
    }
}
