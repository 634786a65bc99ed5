use std::f64::consts::PI;

use super::combination::CombinationSpec;
use super::weights::{factor, sample_angle};
use crate::rng;
use crate::{Error, Result};

/// Largest pool size integrated on a full tensor-product grid.
pub const MAX_QUADRATURE_ANGLES: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MomentMethod {
    /// Tensor-product grid with `nodes` equally spaced points per axis
    /// (periodic midpoint rule, exact for trig polynomials of degree below
    /// `nodes`).
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    /// Zero for quadrature.
    pub std_error: f64,
    pub method: MomentMethod,
}

/// `2^(N-r) π^N δ(k, k')`, the exact first-moment correlation.
pub fn first_moment_reference(spec: &CombinationSpec, k: usize, k2: usize) -> f64 {
    if k != k2 {
        return 0.0;
    }
    2f64.powi((spec.n_angles() - spec.r()) as i32) * PI.powi(spec.n_angles() as i32)
}

/// Estimates `∫_{[-π,π]^N} w_k^s w_k'^s dθ`, using exact quadrature when
/// `N <= 6` and Monte Carlo with a reported standard error otherwise.
pub fn moment_integral(spec: &CombinationSpec, k: usize, k2: usize, s: u32) -> Result<MomentEstimate> {
    let method = if spec.n_angles() <= MAX_QUADRATURE_ANGLES {
        // Each angle appears with degree at most 2s in the integrand.
        MomentMethod::Quadrature {
            nodes: 2 * s as usize + 2,
        }
    } else {
        MomentMethod::MonteCarlo {
            samples: 1_000_000,
            seed: 0,
        }
    };
    moment_integral_with(spec, k, k2, s, method)
}

pub fn moment_integral_with(
    spec: &CombinationSpec,
    k: usize,
    k2: usize,
    s: u32,
    method: MomentMethod,
) -> Result<MomentEstimate> {
    if s == 0 {
        return Err(Error::Config("moment order must be at least 1".into()));
    }
    let a = spec.subset(k)?;
    let b = spec.subset(k2)?;
    let n = spec.n_angles();
    let integrand = |theta: &[f64]| -> f64 {
        let wa: f64 = a.iter().enumerate().map(|(p, &i)| factor(p, theta[i])).product();
        let wb: f64 = b.iter().enumerate().map(|(p, &i)| factor(p, theta[i])).product();
        (wa * wb).powi(s as i32)
    };
    let volume = (2.0 * PI).powi(n as i32);
    match method {
        MomentMethod::Quadrature { nodes } => {
            if nodes == 0 {
                return Err(Error::Config("quadrature needs at least one node".into()));
            }
            let total = nodes
                .checked_pow(n as u32)
                .filter(|&t| t <= 50_000_000)
                .ok_or_else(|| {
                    Error::Capacity(format!("{nodes}^{n} quadrature points is too many"))
                })?;
            let h = 2.0 * PI / nodes as f64;
            let grid: Vec<f64> = (0..nodes).map(|j| -PI + (j as f64 + 0.5) * h).collect();
            let mut idx = vec![0usize; n];
            let mut theta = vec![grid[0]; n];
            let mut sum = 0.0;
            for _ in 0..total {
                sum += integrand(&theta);
                for d in 0..n {
                    idx[d] += 1;
                    if idx[d] < nodes {
                        theta[d] = grid[idx[d]];
                        break;
                    }
                    idx[d] = 0;
                    theta[d] = grid[0];
                }
            }
            Ok(MomentEstimate {
                value: sum * volume / total as f64,
                std_error: 0.0,
                method,
            })
        }
        MomentMethod::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::Config("Monte Carlo needs at least two samples".into()));
            }
            let mut rng = rng::stream(seed, &[k as u64, k2 as u64, s as u64]);
            let mut theta = vec![0.0; n];
            let (mut mean, mut m2) = (0.0, 0.0);
            for i in 0..samples {
                theta.iter_mut().for_each(|t| *t = sample_angle(&mut rng));
                let v = integrand(&theta);
                let delta = v - mean;
                mean += delta / (i + 1) as f64;
                m2 += delta * (v - mean);
            }
            let var = m2 / (samples - 1) as f64;
            Ok(MomentEstimate {
                value: mean * volume,
                std_error: (var / samples as f64).sqrt() * volume,
                method,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: the integrand factorizes over angles, so the
    /// N-dimensional integral is a product of one-dimensional integrals, each
    /// taken with a fine midpoint sum.
    fn separable_oracle(spec: &CombinationSpec, k: usize, k2: usize, s: u32) -> f64 {
        let a = spec.subset(k).unwrap();
        let b = spec.subset(k2).unwrap();
        let m = 4096;
        let h = 2.0 * PI / m as f64;
        (0..spec.n_angles())
            .map(|angle| {
                (0..m)
                    .map(|j| {
                        let t = -PI + (j as f64 + 0.5) * h;
                        let fa = a.iter().position(|&i| i == angle).map_or(1.0, |p| factor(p, t));
                        let fb = b.iter().position(|&i| i == angle).map_or(1.0, |p| factor(p, t));
                        (fa * fb).powi(s as i32)
                    })
                    .sum::<f64>()
                    * h
            })
            .product()
    }

    #[test]
    fn two_angles_one_selected() {
        let spec = CombinationSpec::full(2, 1).unwrap();
        let same = moment_integral(&spec, 0, 0, 1).unwrap();
        assert!((same.value - 2.0 * PI * PI).abs() < 1e-10);
        assert!((same.value - 19.739_208_802_178_716).abs() < 1e-10);
        let cross = moment_integral(&spec, 0, 1, 1).unwrap();
        assert!(cross.value.abs() < 1e-10);
    }

    #[test]
    fn higher_moment_is_positive() {
        let spec = CombinationSpec::full(3, 2).unwrap();
        for (k, k2) in [(0, 1), (0, 2), (1, 2)] {
            let est = moment_integral(&spec, k, k2, 2).unwrap();
            let oracle = separable_oracle(&spec, k, k2, 2);
            assert!(est.value > 0.0);
            assert!((est.value - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn first_moment_orthogonality_small_pools() {
        for n in 1..=5 {
            for r in 1..=n.min(3) {
                let spec = CombinationSpec::full(n, r).unwrap();
                for k in 0..spec.count() {
                    for k2 in 0..spec.count() {
                        let est = moment_integral(&spec, k, k2, 1).unwrap();
                        let exact = first_moment_reference(&spec, k, k2);
                        assert!((est.value - exact).abs() < 1e-8, "N={n} r={r} ({k},{k2})");
                    }
                }
            }
        }
    }

    #[test]
    fn monte_carlo_reports_error() {
        let spec = CombinationSpec::full(8, 2).unwrap();
        let est = moment_integral(&spec, 3, 3, 1).unwrap();
        assert!(matches!(est.method, MomentMethod::MonteCarlo { .. }));
        let exact = first_moment_reference(&spec, 3, 3);
        assert!(est.std_error > 0.0);
        assert!((est.value - exact).abs() < 4.0 * est.std_error);
    }
}
