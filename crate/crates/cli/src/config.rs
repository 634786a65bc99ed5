use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wcnn::data::BoundaryKind;
use wcnn::expressibility::BankMode;
use wcnn::nn::{Architecture, Combination, ConvSpec, ModelSpec, TrainConfig};
use wcnn::qsim::Encoding;

use crate::{CliError, CliResult};

/// Where samples come from and how they are subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub format: DatasetFormat,
    pub dir: PathBuf,
    pub classes: Vec<usize>,
    pub train_n: usize,
    pub test_n: usize,
    /// Seed of the stratified subset draw, independent of training seeds.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// `train-images-idx3-ubyte` style file pairs.
    Idx,
    /// `data_batch_*.bin` and `test_batch.bin`.
    Cifar,
    /// `train` / `test` stems written by `save_dataset`.
    Saved,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            format: DatasetFormat::Idx,
            dir: PathBuf::from("data/mnist"),
            classes: (0..5).collect(),
            train_n: 2000,
            test_n: 500,
            seed: 0,
        }
    }
}

/// Architecture plus the knobs that the dataset does not determine.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Architecture,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combination: Option<Combination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<ConvSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit_depth: Option<usize>,
}

impl ModelConfig {
    pub fn new(arch: Architecture) -> Self {
        Self {
            arch,
            hidden: None,
            combination: None,
            conv: None,
            circuit_depth: None,
        }
    }

    pub fn constrained(arch: Architecture, n_angles: usize, r: usize) -> Self {
        Self {
            combination: Some(Combination { n_angles, r }),
            ..Self::new(arch)
        }
    }

    /// Full spec for samples of `input_shape` and `n_classes` labels.
    pub fn resolve(&self, input_shape: [usize; 3], n_classes: usize) -> CliResult<ModelSpec> {
        let mut spec = match self.arch {
            Architecture::Fnn => ModelSpec::fnn(input_shape, n_classes),
            Architecture::Cnn => ModelSpec::cnn(input_shape, n_classes),
            Architecture::WcFnn | Architecture::WcCnn => {
                let c = self.combination.ok_or_else(|| {
                    CliError::Config(format!("model {} needs a combination {{N, r}}", self.arch.tag()))
                })?;
                if self.arch == Architecture::WcFnn {
                    ModelSpec::wc_fnn(input_shape, n_classes, c.n_angles, c.r)
                } else {
                    ModelSpec::wc_cnn(input_shape, n_classes, c.n_angles, c.r)
                }
            }
            Architecture::HnnAngle => ModelSpec::hnn(Encoding::Angle, input_shape, n_classes, 2),
            Architecture::HnnAmplitude => ModelSpec::hnn(Encoding::Amplitude, input_shape, n_classes, 2),
        };
        if let Some(h) = &self.hidden {
            spec.hidden = h.clone();
        }
        if let Some(c) = self.conv {
            spec.conv = c;
        }
        if let Some(d) = self.circuit_depth {
            spec.circuit_depth = d;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self.combination {
            Some(c) => format!("{}(N={},r={})", self.arch.tag(), c.n_angles, c.r),
            None => self.arch.tag().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepNrConfig {
    pub arch: Architecture,
    pub n_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub runs_per_cell: usize,
}

impl Default for SweepNrConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::WcFnn,
            n_values: vec![15, 20],
            r_values: vec![5],
            runs_per_cell: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpressConfig {
    pub n_values: Vec<usize>,
    pub r_values: Vec<usize>,
    pub dim: usize,
    pub samples: usize,
    pub mode: BankMode,
}

impl Default for ExpressConfig {
    fn default() -> Self {
        Self {
            n_values: vec![20],
            r_values: (4..=9).collect(),
            dim: 1000,
            samples: 100_000,
            mode: BankMode::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub model: ModelConfig,
    pub epsilons: Vec<f64>,
    pub dropout_ps: Vec<f64>,
    /// Attack this checkpoint instead of training a fresh model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            model: ModelConfig::constrained(Architecture::WcFnn, 15, 5),
            epsilons: (0..=10).map(|i| f64::from(i) * 0.02).collect(),
            dropout_ps: vec![0.0, 0.001, 0.08],
            checkpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QdemoConfig {
    pub encodings: Vec<Encoding>,
    pub boundaries: Vec<BoundaryKind>,
    pub train_n: usize,
    pub test_n: usize,
    pub circuit_depth: usize,
    pub train: TrainConfig,
}

impl Default for QdemoConfig {
    fn default() -> Self {
        Self {
            encodings: vec![Encoding::Angle, Encoding::Amplitude],
            boundaries: vec![BoundaryKind::Linear, BoundaryKind::Cubic],
            train_n: 400,
            test_n: 200,
            circuit_depth: 2,
            train: TrainConfig {
                epochs: 40,
                lr: 0.02,
                batch_size: 16,
                ..TrainConfig::default()
            },
        }
    }
}

/// Sample geometry used when only variable counts are needed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub input_shape: [usize; 3],
    pub n_classes: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            input_shape: [1, 28, 28],
            n_classes: 5,
        }
    }
}

/// One experiment document. Every field has a default, so `{}` is valid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    pub dataset: DatasetConfig,
    pub models: Vec<ModelConfig>,
    pub train: TrainConfig,
    pub sweep_nr: SweepNrConfig,
    pub express: ExpressConfig,
    pub attack: AttackSection,
    pub qdemo: QdemoConfig,
    pub report: ReportConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0],
            out: PathBuf::from("runs"),
            workers: None,
            dataset: DatasetConfig::default(),
            models: vec![
                ModelConfig::new(Architecture::Fnn),
                ModelConfig::constrained(Architecture::WcFnn, 15, 5),
            ],
            train: TrainConfig::default(),
            sweep_nr: SweepNrConfig::default(),
            express: ExpressConfig::default(),
            attack: AttackSection::default(),
            qdemo: QdemoConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// Values given on the command line; each one wins over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    /// Defaults, then the optional file, then the flags.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_json(&text)?
            }
            None => Self::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seeds = vec![seed];
        }
        if let Some(out) = &overrides.out {
            config.out = out.clone();
        }
        if overrides.workers.is_some() {
            config.workers = overrides.workers;
        }
        Ok(config)
    }

    /// SHA-256 of the canonical JSON of everything that affects metrics
    /// (the output directory and worker count are excluded).
    pub fn hash(&self, command: &str) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("out");
            obj.remove("workers");
            obj.insert("command".into(), command.into());
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn validate_common(&self) -> CliResult<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("seed list is empty".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        Ok(())
    }

    pub fn validate_dataset(&self) -> CliResult<()> {
        let d = &self.dataset;
        if !d.dir.is_dir() {
            return Err(CliError::Config(format!("dataset directory {} does not exist", d.dir.display())));
        }
        if d.classes.len() < 2 {
            return Err(CliError::Config("at least two classes must be selected".into()));
        }
        if d.train_n == 0 || d.test_n == 0 {
            return Err(CliError::Config("train_n and test_n must be positive".into()));
        }
        Ok(())
    }
}
