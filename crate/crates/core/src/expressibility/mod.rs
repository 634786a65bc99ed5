//! Distribution of the pre-activation `z = Σ w_i x_i` under uniform versus
//! angle-bank weights, with divergence, spread and decay-law fits.

mod fit;
mod sample;

pub use fit::{compare_trends, fit_decay, fit_linear, DecayFit, LinearFit, TrendComparison};
pub use sample::{
    kl_divergence, sample_z, sweep, BankMode, DistributionEstimate, Histogram, SweepCell,
    SweepConfig, SweepResult, WeightSource, DEFAULT_BINS, DEFAULT_RANGE, KL_FLOOR,
};
