//! Shared fixtures for the criterion benchmarks in `benches/`.

use nalgebra::DVector;
use wnnstab::gnn::{random_band_params, random_poly_params};
use wnnstab::sampling::sample_signal;
use wnnstab::{deterministic_graph, GnnParams, GraphOperator, Graphon, GraphonSignal, Nonlinearity, Result};

/// A prepared forward-pass workload on the smooth-exp graphon.
pub struct ForwardFixture {
    pub op: GraphOperator,
    pub x: DVector<f64>,
    pub poly: GnnParams,
    pub band: GnnParams,
}

impl ForwardFixture {
    /// Builds the operator and warms its spectral cache so the band path
    /// measures only the forward pass.
    pub fn new(n: usize) -> Result<Self> {
        let g = deterministic_graph(&Graphon::smooth_exp(1.0)?, n)?;
        let op = GraphOperator::new(&g, n as f64)?;
        op.spectrum()?;
        Ok(Self {
            op,
            x: sample_signal(&GraphonSignal::Cosine { k: 1 }, n)?.values,
            poly: random_poly_params(2, 8, 5, 0.1, Nonlinearity::Relu, 1)?,
            band: random_band_params(2, 8, 0.2, 0.1, Nonlinearity::Relu, 1)?,
        })
    }
}
