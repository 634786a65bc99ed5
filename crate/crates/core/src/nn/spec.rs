use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::qsim::{Encoding, MAX_QUBITS};
use crate::trig_weights::TrigWeightGenerator;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Fnn,
    WcFnn,
    Cnn,
    WcCnn,
    HnnAngle,
    HnnAmplitude,
}

impl Architecture {
    pub const ALL: [Architecture; 6] = [
        Architecture::Fnn,
        Architecture::WcFnn,
        Architecture::Cnn,
        Architecture::WcCnn,
        Architecture::HnnAngle,
        Architecture::HnnAmplitude,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::Fnn => "fnn",
            Architecture::WcFnn => "wc_fnn",
            Architecture::Cnn => "cnn",
            Architecture::WcCnn => "wc_cnn",
            Architecture::HnnAngle => "hnn_angle",
            Architecture::HnnAmplitude => "hnn_amplitude",
        }
    }

    pub fn is_constrained(self) -> bool {
        matches!(self, Architecture::WcFnn | Architecture::WcCnn)
    }

    pub fn is_convolutional(self) -> bool {
        matches!(self, Architecture::Cnn | Architecture::WcCnn)
    }

    pub fn encoding(self) -> Option<Encoding> {
        match self {
            Architecture::HnnAngle => Some(Encoding::Angle),
            Architecture::HnnAmplitude => Some(Encoding::Amplitude),
            _ => None,
        }
    }

    /// Whether inference-time dropout has anything to act on.
    pub fn supports_dropout(self) -> bool {
        self.is_constrained() || self.encoding().is_some()
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture '{s}'")))
    }
}

/// Angle pool size `N` and subset size `r` of a constrained layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combination {
    #[serde(rename = "N")]
    pub n_angles: usize,
    pub r: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
    pub fc: usize,
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self {
            filters: 8,
            kernel: 3,
            pool: 2,
            fc: 64,
        }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![16, 64]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_depth() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub arch: Architecture,
    /// `[channels, height, width]` of one sample.
    pub input_shape: [usize; 3],
    pub n_classes: usize,
    /// Hidden widths of the fully connected stack (fnn, wc_fnn).
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination: Option<Combination>,
    #[serde(default)]
    pub conv: ConvSpec,
    /// Trainable layers of the hybrid circuit.
    #[serde(default = "default_depth")]
    pub circuit_depth: usize,
}

/// Resolved layer sequence with concrete sizes.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LayerPlan {
    Dense {
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
    },
    TrigDense {
        fan_in: usize,
        fan_out: usize,
        combination: Combination,
        activation: Activation,
    },
    Conv {
        c_in: usize,
        c_out: usize,
        kernel: usize,
        activation: Activation,
    },
    MaxPool {
        window: usize,
    },
    Quantum {
        n_qubits: usize,
        encoding: Encoding,
        in_dim: usize,
    },
}

impl ModelSpec {
    fn base(arch: Architecture, input_shape: [usize; 3], n_classes: usize) -> Self {
        Self {
            arch,
            input_shape,
            n_classes,
            hidden: default_hidden(),
            activation: default_activation(),
            combination: None,
            conv: ConvSpec::default(),
            circuit_depth: default_depth(),
        }
    }

    pub fn fnn(input_shape: [usize; 3], n_classes: usize) -> Self {
        Self::base(Architecture::Fnn, input_shape, n_classes)
    }

    pub fn wc_fnn(input_shape: [usize; 3], n_classes: usize, n_angles: usize, r: usize) -> Self {
        Self {
            combination: Some(Combination { n_angles, r }),
            ..Self::base(Architecture::WcFnn, input_shape, n_classes)
        }
    }

    pub fn cnn(input_shape: [usize; 3], n_classes: usize) -> Self {
        Self::base(Architecture::Cnn, input_shape, n_classes)
    }

    pub fn wc_cnn(input_shape: [usize; 3], n_classes: usize, n_angles: usize, r: usize) -> Self {
        Self {
            combination: Some(Combination { n_angles, r }),
            ..Self::base(Architecture::WcCnn, input_shape, n_classes)
        }
    }

    pub fn hnn(encoding: Encoding, input_shape: [usize; 3], n_classes: usize, depth: usize) -> Self {
        let arch = match encoding {
            Encoding::Angle => Architecture::HnnAngle,
            Encoding::Amplitude => Architecture::HnnAmplitude,
        };
        Self {
            circuit_depth: depth,
            ..Self::base(arch, input_shape, n_classes)
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Validates the spec and lays out its layers.
    pub(crate) fn plan(&self) -> Result<Vec<LayerPlan>> {
        if self.n_classes < 2 {
            return Err(Error::Config(format!("{} classes; need at least 2", self.n_classes)));
        }
        if self.input_shape.contains(&0) {
            return Err(Error::Config(format!("input shape {:?} has an empty axis", self.input_shape)));
        }
        match (self.arch.is_constrained(), self.combination) {
            (true, None) => {
                return Err(Error::Config(format!("{} needs a combination (N, r)", self.arch)))
            }
            (false, Some(_)) => {
                return Err(Error::Config(format!("{} takes no combination (N, r)", self.arch)))
            }
            _ => {}
        }
        let act = self.activation;
        let mut plan = Vec::new();
        let mut width;
        match self.arch {
            Architecture::Fnn | Architecture::WcFnn => {
                if self.hidden.contains(&0) || (self.hidden.is_empty() && self.arch.is_constrained()) {
                    return Err(Error::Config(format!("hidden widths {:?} invalid", self.hidden)));
                }
                width = self.input_len();
                for (i, &h) in self.hidden.iter().enumerate() {
                    plan.push(self.dense(i == 0, width, h, act));
                    width = h;
                }
            }
            Architecture::Cnn | Architecture::WcCnn => {
                let ConvSpec {
                    filters,
                    kernel,
                    pool,
                    fc,
                } = self.conv;
                let [c, h, w] = self.input_shape;
                if filters == 0 || kernel == 0 || pool == 0 || fc == 0 {
                    return Err(Error::Config(format!("conv settings {:?} invalid", self.conv)));
                }
                if kernel > h || kernel > w {
                    return Err(Error::Config(format!(
                        "kernel {kernel} larger than input {h}×{w}"
                    )));
                }
                let (oh, ow) = (h - kernel + 1, w - kernel + 1);
                if oh % pool != 0 || ow % pool != 0 {
                    return Err(Error::Config(format!(
                        "conv output {oh}×{ow} not divisible by pool {pool}"
                    )));
                }
                plan.push(LayerPlan::Conv {
                    c_in: c,
                    c_out: filters,
                    kernel,
                    activation: act,
                });
                plan.push(LayerPlan::MaxPool { window: pool });
                width = filters * (oh / pool) * (ow / pool);
                plan.push(self.dense(true, width, fc, act));
                width = fc;
            }
            Architecture::HnnAngle | Architecture::HnnAmplitude => {
                if self.circuit_depth == 0 {
                    return Err(Error::Config("hybrid circuit depth must be at least 1".into()));
                }
                let in_dim = self.input_len();
                let encoding = self.arch.encoding().expect("hybrid");
                let n_qubits = match encoding {
                    Encoding::Angle => in_dim,
                    Encoding::Amplitude => in_dim.next_power_of_two().trailing_zeros().max(1) as usize,
                };
                if n_qubits > MAX_QUBITS {
                    return Err(Error::Config(format!(
                        "{} on {in_dim} inputs needs {n_qubits} qubits, limit {MAX_QUBITS}",
                        self.arch
                    )));
                }
                plan.push(LayerPlan::Quantum {
                    n_qubits,
                    encoding,
                    in_dim,
                });
                width = n_qubits;
            }
        }
        plan.push(LayerPlan::Dense {
            fan_in: width,
            fan_out: self.n_classes,
            activation: Activation::Linear,
        });
        for layer in &plan {
            if let LayerPlan::TrigDense {
                fan_in, combination, ..
            } = layer
            {
                TrigWeightGenerator::new(combination.n_angles, combination.r, *fan_in)?;
            }
        }
        Ok(plan)
    }

    fn dense(&self, first: bool, fan_in: usize, fan_out: usize, activation: Activation) -> LayerPlan {
        match (first, self.combination) {
            (true, Some(combination)) => LayerPlan::TrigDense {
                fan_in,
                fan_out,
                combination,
                activation,
            },
            _ => LayerPlan::Dense {
                fan_in,
                fan_out,
                activation,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.plan().map(|_| ())
    }
}
