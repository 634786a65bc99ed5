//! Datasets: IDX and CIFAR ingestion, class subsetting, synthetic boundary
//! problems and bit-exact serialization.

mod boundary;
mod dataset;
mod idx;

pub use boundary::{boundary_dataset, BoundaryDataset, BoundaryKind};
pub use dataset::{Dataset, Split};
pub use idx::{load_cifar_bin, load_dataset, load_idx, save_dataset};

#[cfg(test)]
mod tests;
