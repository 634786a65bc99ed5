use rand::distributions::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::trig_weights::{binomial, sample_angle, CombinationSpec};
use crate::{Error, Result};

pub const DEFAULT_BINS: usize = 201;
pub const DEFAULT_RANGE: (f64, f64) = (-40.0, 40.0);
/// Substituted for empty reference bins inside the divergence.
pub const KL_FLOOR: f64 = 1e-12;
const BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightSource {
    /// Weights drawn i.i.d. from `U(-1, 1)`.
    Uniform,
    /// Weights generated from an `N`-angle bank with `r`-subsets.
    Constrained { n_angles: usize, r: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankMode {
    /// A fresh bank for every sample.
    #[default]
    Ensemble,
    /// One bank, drawn from the seed, shared by all samples.
    Fixed,
}

/// Draws `samples` values of `z = Σ_{i<dim} w_i x_i` with fresh
/// `x ~ U(-1, 1)` per sample. Samples are generated in fixed-size blocks,
/// each from its own stream, so the result does not depend on threading.
pub fn sample_z(source: WeightSource, dim: usize, samples: usize, seed: u64, mode: BankMode) -> Result<Vec<f64>> {
    sample_z_with(source, dim, samples, seed, mode, |r| Uniform::new_inclusive(-1.0, 1.0).sample(r))
}

pub(crate) fn sample_z_with<F>(
    source: WeightSource,
    dim: usize,
    samples: usize,
    seed: u64,
    mode: BankMode,
    draw_x: F,
) -> Result<Vec<f64>>
where
    F: Fn(&mut rng::Rng) -> f64 + Sync,
{
    if dim == 0 || samples == 0 {
        return Err(Error::Config("dim and samples must be positive".into()));
    }
    let (tag, table, n_angles, r) = match source {
        WeightSource::Uniform => (0u64, Vec::new(), 0, 0),
        WeightSource::Constrained { n_angles, r } => {
            let spec = CombinationSpec::new(n_angles, r, dim)?;
            (1 + ((n_angles as u64) << 8) + r as u64, spec.table(), n_angles, r)
        }
    };
    let fixed_bank: Option<Vec<f64>> = match (source, mode) {
        (WeightSource::Constrained { .. }, BankMode::Fixed) => {
            let mut br = rng::stream(seed, &[tag, u64::MAX]);
            Some((0..n_angles).map(|_| sample_angle(&mut br)).collect())
        }
        _ => None,
    };
    let w_dist = Uniform::new_inclusive(-1.0, 1.0);
    let blocks: Vec<usize> = (0..samples.div_ceil(BLOCK)).collect();
    let parts: Vec<Vec<f64>> = blocks
        .par_iter()
        .map(|&b| {
            let mut rg = rng::stream(seed, &[tag, b as u64]);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut out = Vec::with_capacity(count);
            let mut trig = vec![(0.0, 0.0); n_angles];
            let mut bank = fixed_bank.clone().unwrap_or_else(|| vec![0.0; n_angles]);
            for _ in 0..count {
                let mut z = 0.0;
                match source {
                    WeightSource::Uniform => {
                        for _ in 0..dim {
                            let w = w_dist.sample(&mut rg);
                            z += w * draw_x(&mut rg);
                        }
                    }
                    WeightSource::Constrained { .. } => {
                        if fixed_bank.is_none() {
                            bank.iter_mut().for_each(|t| *t = sample_angle(&mut rg));
                        }
                        for (tc, &t) in trig.iter_mut().zip(&bank) {
                            *tc = (t.sin(), t.cos());
                        }
                        for subset in table.chunks_exact(r) {
                            let w: f64 = subset
                                .iter()
                                .enumerate()
                                .map(|(p, &a)| if p % 2 == 0 { trig[a].0 } else { trig[a].1 })
                                .product();
                            z += w * draw_x(&mut rg);
                        }
                    }
                }
                out.push(z);
            }
            out
        })
        .collect();
    Ok(parts.concat())
}

/// Uniform-bin histogram; values outside the range land in the edge bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub probabilities: Vec<f64>,
}

impl Histogram {
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) || values.is_empty() {
            return Err(Error::Config(format!(
                "histogram needs values, bins > 0 and lo < hi (got {bins} bins over [{lo}, {hi}])"
            )));
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let idx = ((v - lo) / width).floor();
            let idx = if idx.is_nan() { 0.0 } else { idx.clamp(0.0, (bins - 1) as f64) };
            counts[idx as usize] += 1;
        }
        let n = values.len() as f64;
        Ok(Self {
            lo,
            hi,
            probabilities: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn bins(&self) -> usize {
        self.probabilities.len()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.lo == other.lo && self.hi == other.hi && self.bins() == other.bins()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionEstimate {
    pub histogram: Histogram,
    pub samples: usize,
    pub mean: f64,
    /// Sample standard deviation Δ.
    pub delta: f64,
}

impl DistributionEstimate {
    pub fn from_samples(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let histogram = Histogram::new(values, lo, hi, bins)?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            histogram,
            samples: values.len(),
            mean,
            delta: var.sqrt(),
        })
    }

    /// Default binning: 201 bins over `[-40, 40]`.
    pub fn standard(values: &[f64]) -> Result<Self> {
        Self::from_samples(values, DEFAULT_RANGE.0, DEFAULT_RANGE.1, DEFAULT_BINS)
    }
}

/// `Σ p ln(p / q)` in nats, with empty `q` bins raised to [`KL_FLOOR`].
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64> {
    if !p.same_binning(q) {
        return Err(Error::Config(format!(
            "histograms differ in binning: {} bins over [{}, {}] vs {} bins over [{}, {}]",
            p.bins(),
            p.lo,
            p.hi,
            q.bins(),
            q.lo,
            q.hi
        )));
    }
    let d: f64 = p
        .probabilities
        .iter()
        .zip(&q.probabilities)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / if qi > 0.0 { qi } else { KL_FLOOR }).ln())
        .sum();
    Ok(d.max(0.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub r_values: Vec<usize>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub mode: BankMode,
}

fn default_dim() -> usize {
    1000
}

fn default_samples() -> usize {
    100_000
}

/// One `(N, r)` cell of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    #[serde(rename = "N")]
    pub n_angles: usize,
    pub r: usize,
    pub kl: f64,
    pub kl_inv: f64,
    pub delta: f64,
    pub delta_inv: f64,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub baseline: DistributionEstimate,
    pub cells: Vec<SweepCell>,
}

/// Every `(N, r)` in the cartesian grid, compared against the uniform
/// baseline drawn with the same seed.
pub fn sweep(config: &SweepConfig) -> Result<SweepResult> {
    if config.n_values.is_empty() || config.r_values.is_empty() {
        return Err(Error::Config("sweep grid is empty".into()));
    }
    let grid: Vec<(usize, usize)> = config
        .n_values
        .iter()
        .flat_map(|&n| config.r_values.iter().map(move |&r| (n, r)))
        .collect();
    let infeasible: Vec<String> = grid
        .iter()
        .filter(|&&(n, r)| r == 0 || r > n || binomial(n, r).is_some_and(|c| c < config.dim))
        .map(|(n, r)| format!("(N={n}, r={r})"))
        .collect();
    if !infeasible.is_empty() {
        return Err(Error::Capacity(format!(
            "cells cannot supply {} weights: {}",
            config.dim,
            infeasible.join(", ")
        )));
    }
    let baseline_z = sample_z(WeightSource::Uniform, config.dim, config.samples, config.seed, BankMode::Ensemble)?;
    let baseline = DistributionEstimate::standard(&baseline_z)?;
    let cells = grid
        .par_iter()
        .map(|&(n, r)| {
            let source = WeightSource::Constrained { n_angles: n, r };
            let z = sample_z(source, config.dim, config.samples, config.seed, config.mode)?;
            let est = DistributionEstimate::standard(&z)?;
            let kl = kl_divergence(&est.histogram, &baseline.histogram)?;
            Ok(SweepCell {
                n_angles: n,
                r,
                kl,
                kl_inv: 1.0 / kl,
                delta: est.delta,
                delta_inv: 1.0 / est.delta,
                samples: config.samples,
                seed: config.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { baseline, cells })
}
