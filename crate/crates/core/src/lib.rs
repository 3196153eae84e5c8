//! Dynamical percolation on finite graphs.
//!
//! The crate covers the discrete-time heat-bath chain and its continuous-time
//! counterpart, exact autocorrelation analysis through the spectral-weight
//! distribution of an observable in the biased Fourier basis, closed forms
//! for the root cluster on perfect binary trees, randomized query procedures
//! with their revealment and predictability, and Monte Carlo estimators of
//! autocorrelation functions and integrated autocorrelation times.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod dynamics;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod observable;
pub mod query;
pub mod rng;
pub mod spectral;
pub mod tree_exact;
pub mod verify;

pub use bits::{basis_eval, sample_config, BitConfig, BitSubset, ProductMeasure};
pub use error::{Error, Result};
pub use lattice::{cluster_size_at_root, Lattice, LatticeDescriptor, LatticeKind};
pub use observable::{FourierExpansion, Observable, RootClusterSize, TruthTable};
pub use spectral::SpectralWeights;
