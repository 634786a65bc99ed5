use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Split};
use crate::autodiff::Tensor;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    /// `f(x) = x / 2`.
    Linear,
    /// `f(x) = x (x - 0.5)(x + 0.5) / 2`.
    Cubic,
}

impl BoundaryKind {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BoundaryKind::Linear => x / 2.0,
            BoundaryKind::Cubic => x * (x - 0.5) * (x + 0.5) / 2.0,
        }
    }

    /// 1 when the point lies on or above the boundary.
    pub fn label(self, x: f64, y: f64) -> usize {
        usize::from(y >= self.eval(x))
    }
}

impl std::str::FromStr for BoundaryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "cubic" => Ok(Self::Cubic),
            other => Err(Error::Config(format!("unknown boundary '{other}'"))),
        }
    }
}

/// Points uniform on `[-1, 1]²` labeled by side of a boundary curve.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDataset {
    pub kind: BoundaryKind,
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

pub fn boundary_dataset(kind: BoundaryKind, n: usize, seed: u64) -> Result<BoundaryDataset> {
    if n < 2 {
        return Err(Error::Config(format!("boundary dataset needs n >= 2, got {n}")));
    }
    let mut r = rng::stream(seed, &[kind as u64]);
    let points: Vec<[f64; 2]> = (0..n)
        .map(|_| [r.gen_range(-1.0..=1.0), r.gen_range(-1.0..=1.0)])
        .collect();
    let labels = points.iter().map(|&[x, y]| kind.label(x, y)).collect();
    Ok(BoundaryDataset { kind, points, labels })
}

impl BoundaryDataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Two-class dataset with samples of shape `[1, 1, 2]`.
    pub fn to_dataset(&self, split: Split) -> Result<Dataset> {
        let x: Vec<f64> = self.points.iter().flatten().copied().collect();
        let name = match self.kind {
            BoundaryKind::Linear => "boundary-linear",
            BoundaryKind::Cubic => "boundary-cubic",
        };
        Dataset::new(
            Tensor::new(vec![self.len(), 1, 1, 2], x)?,
            self.labels.clone(),
            2,
            split,
            name,
        )
    }
}
