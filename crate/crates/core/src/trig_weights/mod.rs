//! Layer weights generated from small angle banks: weight `k` of a neuron is
//! the product of alternating sines and cosines over the `k`-th
//! lexicographic r-subset of that neuron's `N` angles.

mod combination;
mod dropout;
pub mod io;
mod layer;
mod moments;
mod weights;

pub use combination::{binomial, enumerate_combination, CombinationSpec};
pub use dropout::{apply_dropout, DropoutMask};
pub use layer::{materialize_layer, TrigWeightGenerator};
pub use moments::{
    first_moment_reference, moment_integral, moment_integral_with, MomentEstimate, MomentMethod,
    MAX_QUADRATURE_ANGLES,
};
pub use weights::{masked_weight_value, sample_angle, weight_gradient, weight_value, AngleBank};
