use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::kernels::{self, ConvGeometry};
use super::tensor::{softmax_rows, Tensor};
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y = f(x)`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        };
        f.write_str(s)
    }
}

/// Backward rule for an operation computed outside the graph.
///
/// The caller evaluates the forward value itself and registers it with
/// [`Graph::custom`]; the graph only asks for input gradients later.
pub trait CustomOp: Send + Sync {
    /// Gradient of the loss with respect to each input, given the gradient
    /// with respect to the output. Entries for inputs with
    /// `needs_grad[i] == false` may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad_output: &[f64],
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Vec<f64>>>>;
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    AddBias(Var, Var),
    Activation(Var, Activation),
    Conv2d {
        input: Var,
        kernels: Var,
        geometry: ConvGeometry,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    Mul(Var, Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        softmax: Vec<f64>,
    },
    Custom {
        inputs: Vec<Var>,
        op: Box<dyn CustomOp>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// Record of one forward pass. Nodes are appended in evaluation order, so
/// the node list is already topologically sorted.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.node(v).requires_grad
    }

    /// Gradient populated by [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.node(v).grad.as_deref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        self.nodes[v.0].grad.take()
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|&v| self.node(v).requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension(format!(
                "matmul needs [m×k]·[k×n], got {sa:?} and {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).shape();
        if s.len() != 2 {
            return Err(Error::Dimension(format!("transpose needs a matrix, got {s:?}")));
        }
        let (m, n) = (s[0], s[1]);
        let value = Tensor::new(vec![n, m], kernels::transpose(self.value(a).data(), m, n))?;
        let rg = self.rg(&[a]);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    /// Adds a length-`n` bias to every row of an `[m×n]` matrix.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        let n = *sx.last().unwrap_or(&0);
        if sx.len() != 2 || self.value(bias).len() != n {
            return Err(Error::Dimension(format!(
                "bias {sb:?} does not match rows of {sx:?}"
            )));
        }
        let b = self.value(bias).data();
        let data = self
            .value(x)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(v, bb)| v + bb))
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        let rg = self.rg(&[x, bias]);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(&[x]);
        self.push(value, Op::Activation(x, kind), rg)
    }

    /// Valid convolution. `input` is `[c×h×w]` or `[b×c×h×w]`; `kernels` is
    /// `[c_out×c_in×kh×kw]`.
    pub fn conv2d(&mut self, input: Var, kernels: Var, stride: usize) -> Result<Var> {
        let si = self.value(input).shape().to_vec();
        let sk = self.value(kernels).shape().to_vec();
        let (batched, batch, c_in, h, w) = match si.as_slice() {
            [c, h, w] => (false, 1, *c, *h, *w),
            [b, c, h, w] => (true, *b, *c, *h, *w),
            _ => {
                return Err(Error::Dimension(format!(
                    "conv2d input must be [c×h×w] or [b×c×h×w], got {si:?}"
                )))
            }
        };
        if sk.len() != 4 || sk[1] != c_in {
            return Err(Error::Dimension(format!(
                "kernels {sk:?} incompatible with input {si:?}"
            )));
        }
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        let (c_out, kh, kw) = (sk[0], sk[2], sk[3]);
        if kh > h || kw > w {
            return Err(Error::Dimension(format!(
                "kernel {kh}×{kw} larger than input {h}×{w}"
            )));
        }
        let geometry = ConvGeometry {
            batch,
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
        };
        let data = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(kernels).data(),
            &geometry,
        );
        let (oh, ow) = (geometry.out_h(), geometry.out_w());
        let shape = if batched {
            vec![batch, c_out, oh, ow]
        } else {
            vec![c_out, oh, ow]
        };
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[input, kernels]);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernels,
                geometry,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling over the trailing two axes.
    pub fn maxpool2d(&mut self, input: Var, window: usize) -> Result<Var> {
        let s = self.value(input).shape().to_vec();
        if s.len() < 3 || window == 0 {
            return Err(Error::Dimension(format!(
                "maxpool2d needs [c×h×w] or [b×c×h×w] and a positive window, got {s:?}"
            )));
        }
        let (h, w) = (s[s.len() - 2], s[s.len() - 1]);
        if h % window != 0 || w % window != 0 {
            return Err(Error::Dimension(format!(
                "extents {h}×{w} not divisible by window {window}"
            )));
        }
        let planes = s[..s.len() - 2].iter().product();
        let (data, argmax) = kernels::maxpool_forward(self.value(input).data(), planes, h, w, window);
        let mut shape = s.clone();
        let rank = shape.len();
        shape[rank - 2] = h / window;
        shape[rank - 1] = w / window;
        let value = Tensor::new(shape, data)?;
        let rg = self.rg(&[input]);
        Ok(self.push(value, Op::MaxPool2d { input, argmax }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::Dimension(format!(
                "mul needs equal shapes, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).data().iter().sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    /// Mean over the batch of `-log softmax(logits)[label]`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let s = self.value(logits).shape();
        if s.len() != 2 || s[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "logits {s:?} do not match {} labels",
                labels.len()
            )));
        }
        let (b, c) = (s[0], s[1]);
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Data(format!("label {bad} outside [0, {c})")));
        }
        let data = self.value(logits).data();
        let mut loss = 0.0;
        for (row, &label) in data.chunks(c).zip(labels) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        let softmax = softmax_rows(data, c);
        let value = Tensor::scalar(loss / b as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                softmax,
            },
            rg,
        ))
    }

    /// Registers a value computed outside the graph together with its
    /// backward rule.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor, op: Box<dyn CustomOp>) -> Var {
        let rg = self.rg(inputs);
        self.push(
            output,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        )
    }

    /// Reverse-mode sweep from a scalar `loss`. Populates the gradient of
    /// every `requires_grad` node reachable from it. A graph supports one
    /// backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::State(
                "backward already ran on this graph; build a new forward pass".into(),
            ));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Dimension(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            for (var, contribution) in self.local_grads(idx, &g)? {
                if !self.nodes[var.0].requires_grad {
                    continue;
                }
                match &mut grads[var.0] {
                    Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(contribution),
                }
            }
            self.nodes[idx].grad = Some(g);
        }
        Ok(())
    }

    fn local_grads(&self, idx: usize, g: &[f64]) -> Result<Vec<(Var, Vec<f64>)>> {
        let node = &self.nodes[idx];
        let out = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                let mut out = Vec::with_capacity(2);
                if self.node(*a).requires_grad {
                    out.push((*a, kernels::matmul_nt(g, tb.data(), m, n, k)));
                }
                if self.node(*b).requires_grad {
                    out.push((*b, kernels::matmul_tn(ta.data(), g, m, k, n)));
                }
                out
            }
            Op::Transpose(a) => {
                let s = node.value.shape();
                vec![(*a, kernels::transpose(g, s[0], s[1]))]
            }
            Op::AddBias(x, bias) => {
                let n = self.value(*bias).len();
                let mut gb = vec![0.0; n];
                for row in g.chunks(n) {
                    gb.iter_mut().zip(row).for_each(|(a, v)| *a += v);
                }
                vec![(*x, g.to_vec()), (*bias, gb)]
            }
            Op::Activation(x, kind) => {
                let xin = self.value(*x).data();
                let y = node.value.data();
                let gx = g
                    .iter()
                    .zip(xin.iter().zip(y))
                    .map(|(gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                vec![(*x, gx)]
            }
            Op::Conv2d {
                input,
                kernels: k,
                geometry,
            } => {
                let (gi, gk) = kernels::conv2d_backward(
                    self.value(*input).data(),
                    self.value(*k).data(),
                    g,
                    geometry,
                );
                vec![(*input, gi), (*k, gk)]
            }
            Op::MaxPool2d { input, argmax } => {
                let mut gi = vec![0.0; self.value(*input).len()];
                for (gv, &src) in g.iter().zip(argmax) {
                    gi[src] += gv;
                }
                vec![(*input, gi)]
            }
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, g.iter().zip(tb).map(|(gv, bv)| gv * bv).collect()),
                    (*b, g.iter().zip(ta).map(|(gv, av)| gv * av).collect()),
                ]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; self.value(*x).len()])],
            Op::CrossEntropy {
                logits,
                labels,
                softmax,
            } => {
                let c = self.value(*logits).shape()[1];
                let scale = g[0] / labels.len() as f64;
                let mut gl: Vec<f64> = softmax.iter().map(|p| p * scale).collect();
                for (row, &label) in labels.iter().enumerate() {
                    gl[row * c + label] -= scale;
                }
                vec![(*logits, gl)]
            }
            Op::Custom { inputs, op } => {
                let tensors: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&v| self.node(v).requires_grad).collect();
                let grads = op.backward(&tensors, &node.value, g, &needs)?;
                if grads.len() != inputs.len() {
                    return Err(Error::State(format!(
                        "custom op returned {} gradients for {} inputs",
                        grads.len(),
                        inputs.len()
                    )));
                }
                let mut out = Vec::new();
                for ((&v, grad), t) in inputs.iter().zip(grads).zip(&tensors) {
                    if let Some(grad) = grad {
                        if grad.len() != t.len() {
                            return Err(Error::Dimension(format!(
                                "custom op gradient has {} entries for input of {}",
                                grad.len(),
                                t.len()
                            )));
                        }
                        out.push((v, grad));
                    }
                }
                out
            }
        };
        Ok(out)
    }
}
