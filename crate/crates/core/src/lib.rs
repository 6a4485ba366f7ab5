//! Stability analysis of graph and graphon neural networks under graphon
//! perturbations: sampling, spectra, filters, networks, bounds and sweeps.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod filters;
pub mod gnn;
pub mod graphlimits;
pub mod graphon;
pub mod io;
pub mod ratings;
pub mod sampling;
pub mod spectral;
pub mod stability;

pub use error::{Error, Result};
pub use experiment::{Experiment, ExperimentConfig, TrainConfig};
pub use filters::{BandFilter, Filter, GraphOperator, PolyFilter};
pub use gnn::{GnnParams, Nonlinearity, OutputDiff};
pub use graphlimits::Motif;
pub use graphon::{Graphon, PerturbationKind, PerturbationSpec, RangePolicy, SymmetricKernel};
pub use ratings::{CorrelationPolicy, RatingsMatrix};
pub use sampling::{deterministic_graph, stochastic_graph, Graph, GraphSignal, GraphonSignal};
pub use spectral::{decompose, eigenvalues, Scale, SignedSpectrum};
pub use stability::{Mode, StabilityReport, StabilitySetup};
