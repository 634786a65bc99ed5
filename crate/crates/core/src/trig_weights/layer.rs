use std::sync::Arc;

use super::combination::{binomial, capacity_error, CombinationSpec};
use super::dropout::DropoutMask;
use super::weights::{factor, factor_derivative, AngleBank};
use crate::autodiff::{CustomOp, Graph, Tensor, Var};
use crate::{Error, Result};

/// Generates a `[fan_out × fan_in]` weight matrix from one angle bank per
/// output neuron. Row `n` holds the first `fan_in` lexicographic
/// combinations evaluated on bank `n`.
#[derive(Clone, Debug)]
pub struct TrigWeightGenerator {
    n_angles: usize,
    r: usize,
    fan_in: usize,
    table: Arc<Vec<usize>>,
}

impl TrigWeightGenerator {
    pub fn new(n_angles: usize, r: usize, fan_in: usize) -> Result<Self> {
        if fan_in == 0 {
            return Err(Error::Config("fan_in must be positive".into()));
        }
        if binomial(n_angles, r).is_some_and(|c| c < fan_in) {
            return Err(capacity_error(n_angles, r, fan_in));
        }
        let spec = CombinationSpec::new(n_angles, r, fan_in)?;
        Ok(Self {
            n_angles,
            r,
            fan_in,
            table: Arc::new(spec.table()),
        })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn subset(&self, k: usize) -> &[usize] {
        &self.table[k * self.r..(k + 1) * self.r]
    }

    fn check(&self, angles: &[f64], mask: Option<&DropoutMask>) -> Result<usize> {
        if !angles.len().is_multiple_of(self.n_angles) || angles.is_empty() {
            return Err(Error::Dimension(format!(
                "{} angles do not form banks of {}",
                angles.len(),
                self.n_angles
            )));
        }
        let fan_out = angles.len() / self.n_angles;
        if let Some(m) = mask {
            if m.rows() != fan_out || m.count() != self.fan_in || m.r() != self.r {
                return Err(Error::Dimension(format!(
                    "mask {}×{}×{} does not fit layer {fan_out}×{}×{}",
                    m.rows(),
                    m.count(),
                    m.r(),
                    self.fan_in,
                    self.r
                )));
            }
        }
        Ok(fan_out)
    }

    /// Samples a mask sized for this layer with `fan_out` rows.
    pub fn sample_mask<R: rand::Rng + ?Sized>(
        &self,
        fan_out: usize,
        p: f64,
        rng: &mut R,
    ) -> Result<DropoutMask> {
        DropoutMask::sample(fan_out, self.fan_in, self.r, p, rng)
    }

    /// Weight matrix for banks laid out row-major as `[fan_out × N]`.
    pub fn weights(&self, angles: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        let fan_out = self.check(angles, mask)?;
        let mut out = Vec::with_capacity(fan_out * self.fan_in);
        let mut sin_cos = vec![(0.0, 0.0); self.n_angles];
        for row in 0..fan_out {
            let bank = &angles[row * self.n_angles..(row + 1) * self.n_angles];
            for (sc, &t) in sin_cos.iter_mut().zip(bank) {
                *sc = (t.sin(), t.cos());
            }
            for k in 0..self.fan_in {
                let flags = mask.map(|m| m.flags(row, k));
                let mut w = 1.0;
                for (pos, &a) in self.subset(k).iter().enumerate() {
                    if flags.is_some_and(|f| f[pos]) {
                        continue;
                    }
                    w *= if pos % 2 == 0 { sin_cos[a].0 } else { sin_cos[a].1 };
                }
                out.push(w);
            }
        }
        Ok(out)
    }

    /// Chain rule from `∂L/∂W` to `∂L/∂θ` for every bank.
    pub fn angle_grads(
        &self,
        angles: &[f64],
        mask: Option<&DropoutMask>,
        grad_weights: &[f64],
    ) -> Result<Vec<f64>> {
        let fan_out = self.check(angles, mask)?;
        if grad_weights.len() != fan_out * self.fan_in {
            return Err(Error::Dimension(format!(
                "weight gradient of {} for a {fan_out}×{} layer",
                grad_weights.len(),
                self.fan_in
            )));
        }
        let r = self.r;
        let mut grads = vec![0.0; angles.len()];
        let mut factors = vec![0.0; r];
        let mut derivs = vec![0.0; r];
        let mut prefix = vec![1.0; r + 1];
        for row in 0..fan_out {
            let bank = &angles[row * self.n_angles..(row + 1) * self.n_angles];
            let gbank = &mut grads[row * self.n_angles..(row + 1) * self.n_angles];
            for k in 0..self.fan_in {
                let gw = grad_weights[row * self.fan_in + k];
                if gw == 0.0 {
                    continue;
                }
                let flags = mask.map(|m| m.flags(row, k));
                let subset = self.subset(k);
                for (pos, &a) in subset.iter().enumerate() {
                    if flags.is_some_and(|f| f[pos]) {
                        factors[pos] = 1.0;
                        derivs[pos] = 0.0;
                    } else {
                        factors[pos] = factor(pos, bank[a]);
                        derivs[pos] = factor_derivative(pos, bank[a]);
                    }
                    prefix[pos + 1] = prefix[pos] * factors[pos];
                }
                let mut suffix = 1.0;
                for pos in (0..r).rev() {
                    gbank[subset[pos]] += gw * prefix[pos] * derivs[pos] * suffix;
                    suffix *= factors[pos];
                }
            }
        }
        Ok(grads)
    }

    /// Adds the materialized weight matrix to `graph`, linked to `banks`
    /// (a `[fan_out × N]` tensor) for backpropagation.
    pub fn apply(&self, graph: &mut Graph, banks: Var, mask: Option<Arc<DropoutMask>>) -> Result<Var> {
        let angles = graph.value(banks);
        let fan_out = self.check(angles.data(), mask.as_deref())?;
        let w = self.weights(angles.data(), mask.as_deref())?;
        let value = Tensor::new(vec![fan_out, self.fan_in], w)?;
        let op = TrigWeightsOp {
            generator: self.clone(),
            mask,
        };
        Ok(graph.custom(&[banks], value, Box::new(op)))
    }
}

struct TrigWeightsOp {
    generator: TrigWeightGenerator,
    mask: Option<Arc<DropoutMask>>,
}

impl CustomOp for TrigWeightsOp {
    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &[f64],
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>> {
        if !needs_grad[0] {
            return Ok(vec![None]);
        }
        let g = self
            .generator
            .angle_grads(inputs[0].data(), self.mask.as_deref(), grad_output)?;
        Ok(vec![Some(g)])
    }
}

/// Weight matrix `[fan_out × fan_in]` with row `n` generated from
/// `banks[n]`.
pub fn materialize_layer(
    banks: &[AngleBank],
    spec: &CombinationSpec,
    fan_in: usize,
    mask: Option<&DropoutMask>,
) -> Result<Tensor> {
    if banks.is_empty() {
        return Err(Error::Config("need one bank per output neuron".into()));
    }
    if let Some(bad) = banks.iter().find(|b| b.len() != spec.n_angles()) {
        return Err(Error::Dimension(format!(
            "bank of {} angles for N={}",
            bad.len(),
            spec.n_angles()
        )));
    }
    let generator = TrigWeightGenerator::new(spec.n_angles(), spec.r(), fan_in)?;
    let angles: Vec<f64> = banks.iter().flat_map(|b| b.theta.iter().copied()).collect();
    let w = generator.weights(&angles, mask)?;
    Tensor::new(vec![banks.len(), fan_in], w)
}
