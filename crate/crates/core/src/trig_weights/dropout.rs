use rand::Rng;

use super::combination::CombinationSpec;
use crate::rng;
use crate::{Error, Result};

/// Which trig factors are replaced by one: a flag per (row, combination,
/// subset position).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    p: f64,
    seed: Option<u64>,
    rows: usize,
    count: usize,
    r: usize,
    dropped: Vec<bool>,
}

pub(crate) fn check_probability(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("dropout probability {p} outside [0, 1]")))
    }
}

impl DropoutMask {
    /// Mask with nothing dropped.
    pub fn keep_all(rows: usize, count: usize, r: usize) -> Self {
        Self {
            p: 0.0,
            seed: None,
            rows,
            count,
            r,
            dropped: vec![false; rows * count * r],
        }
    }

    /// Flags each factor independently with probability `p`.
    pub fn sample<R: Rng + ?Sized>(
        rows: usize,
        count: usize,
        r: usize,
        p: f64,
        rng: &mut R,
    ) -> Result<Self> {
        check_probability(p)?;
        let total = rows * count * r;
        let mut mask = Self::keep_all(rows, count, r);
        mask.p = p;
        if p >= 1.0 {
            mask.dropped.iter_mut().for_each(|d| *d = true);
        } else if p > 0.0 {
            // Geometric gaps between successive drops give the same
            // distribution as one Bernoulli draw per factor.
            let log_keep = (1.0 - p).ln();
            let mut idx: usize = 0;
            loop {
                let u: f64 = rng.gen();
                let gap = ((1.0 - u).ln() / log_keep).floor();
                if !gap.is_finite() || gap >= (total - idx) as f64 {
                    break;
                }
                idx += gap as usize;
                mask.dropped[idx] = true;
                idx += 1;
                if idx >= total {
                    break;
                }
            }
        }
        Ok(mask)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Flags for the subset positions of combination `k` in `row`.
    pub fn flags(&self, row: usize, k: usize) -> &[bool] {
        let start = (row * self.count + k) * self.r;
        &self.dropped[start..start + self.r]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.dropped
    }

    pub fn dropped_count(&self) -> usize {
        self.dropped.iter().filter(|&&d| d).count()
    }
}

/// Samples a single-bank mask for every combination of `spec`.
pub fn apply_dropout(spec: &CombinationSpec, p: f64, seed: u64) -> Result<DropoutMask> {
    let mut rng = rng::stream(seed, &[]);
    let mut mask = DropoutMask::sample(1, spec.count(), spec.r(), p, &mut rng)?;
    mask.seed = Some(seed);
    Ok(mask)
}
