use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// Labeled samples stored as an `[n × c × h × w]` tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
    provenance: String,
}

impl Dataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if images.rank() != 4 {
            return Err(Error::Dimension(format!(
                "dataset images need shape [n, c, h, w], got {:?}",
                images.shape()
            )));
        }
        let n = images.shape()[0];
        if labels.len() != n {
            return Err(Error::Data(format!(
                "{n} images but {} labels",
                labels.len()
            )));
        }
        if n_classes < 2 {
            return Err(Error::Config(format!("{n_classes} classes; need at least 2")));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Data(format!("label {bad} outside {n_classes} classes")));
        }
        if !images.is_finite() {
            return Err(Error::Data("dataset contains non-finite values".into()));
        }
        Ok(Self {
            images,
            labels,
            n_classes,
            split,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// `[c, h, w]` of one sample.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn feature_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let f = self.feature_len();
        &self.images.data()[i * f..(i + 1) * f]
    }

    /// Flat features and labels of the given rows.
    pub fn gather(&self, indices: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut x = Vec::with_capacity(indices.len() * self.feature_len());
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.sample(i));
            y.push(self.labels[i]);
        }
        (x, y)
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        if let Some(bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Index(format!("row {bad} outside {} samples", self.len())));
        }
        let (x, y) = self.gather(indices);
        let [c, h, w] = self.sample_shape();
        let images = Tensor::new(vec![indices.len().max(1), c, h, w], x)
            .map_err(|_| Error::Data("empty subset".into()))?;
        Dataset::new(images, y, self.n_classes, self.split, self.provenance.clone())
    }

    /// Stratified draw of `n` samples over `classes`, relabeled to `0..k` in
    /// ascending original-label order. `n` is split evenly; any remainder
    /// goes to the lowest classes.
    pub fn select_classes(&self, classes: &[usize], n: usize, seed: u64) -> Result<Dataset> {
        let mut sorted = classes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != classes.len() || sorted.len() < 2 {
            return Err(Error::Config(format!(
                "need at least two distinct classes, got {classes:?}"
            )));
        }
        if n == 0 {
            return Err(Error::Config("requested zero samples".into()));
        }
        let k = sorted.len();
        let mut chosen = Vec::with_capacity(n);
        for (rank, &class) in sorted.iter().enumerate() {
            let want = n / k + usize::from(rank < n % k);
            let mut pool: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
            if pool.len() < want {
                return Err(Error::Data(format!(
                    "class {class} has {} {} samples, {want} requested",
                    pool.len(),
                    self.split
                )));
            }
            let mut r = rng::stream(seed, &[class as u64, self.split as u64]);
            pool.shuffle(&mut r);
            chosen.extend_from_slice(&pool[..want]);
        }
        chosen.sort_unstable();
        let (x, y) = self.gather(&chosen);
        let remap = |l: usize| sorted.binary_search(&l).expect("selected label");
        let [c, h, w] = self.sample_shape();
        Dataset::new(
            Tensor::new(vec![chosen.len(), c, h, w], x)?,
            y.into_iter().map(remap).collect(),
            k,
            self.split,
            format!("{} classes {sorted:?}", self.provenance),
        )
    }
}
