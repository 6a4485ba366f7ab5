//! Graphs and signals instantiated from graphons, and the induced
//! (piecewise-constant) graphons and signals going the other way.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{cell_index, Graphon, GridKernel, SymmetricKernel};

/// A graph given by its shift operator (the weighted adjacency matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    gso: DMatrix<f64>,
    weighted: bool,
}

impl Graph {
    /// Wraps a symmetric GSO with entries in `[0, 1]`. Unweighted graphs must
    /// additionally be 0/1.
    pub fn new(gso: DMatrix<f64>, weighted: bool) -> Result<Self> {
        if !gso.is_square() {
            return Err(Error::Invariant(format!(
                "GSO is {}x{}, expected square",
                gso.nrows(),
                gso.ncols()
            )));
        }
        let n = gso.nrows();
        for j in 0..n {
            for i in 0..n {
                let x = gso[(i, j)];
                if !(0.0..=1.0).contains(&x) {
                    return Err(Error::Invariant(format!("GSO entry ({i}, {j}) = {x} outside [0, 1]")));
                }
                if !weighted && x != 0.0 && x != 1.0 {
                    return Err(Error::Invariant(format!(
                        "unweighted GSO entry ({i}, {j}) = {x} is not 0/1"
                    )));
                }
                if i < j && x != gso[(j, i)] {
                    return Err(Error::Invariant(format!("GSO is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { gso, weighted })
    }

    pub fn n(&self) -> usize {
        self.gso.nrows()
    }

    pub fn gso(&self) -> &DMatrix<f64> {
        &self.gso
    }

    pub fn weighted(&self) -> bool {
        self.weighted
    }

    /// Largest row sum of the GSO.
    pub fn max_degree(&self) -> f64 {
        self.gso.row_iter().map(|r| r.sum()).fold(0.0, f64::max)
    }

    /// The graphon induced by this graph: the GSO read as a step kernel on
    /// the regular partition `I_i = [(i-1)/n, i/n)`.
    pub fn induced_graphon(&self) -> Graphon {
        Graphon::Grid(GridKernel::new(self.gso.clone()).expect("graph GSO is a valid grid"))
    }

    /// Relabels nodes: node `i` of the result is node `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.n();
        assert_eq!(perm.len(), n, "permutation length must match the graph size");
        Graph {
            gso: DMatrix::from_fn(n, n, |i, j| self.gso[(perm[i], perm[j])]),
            weighted: self.weighted,
        }
    }
}

/// Free-function form of [`Graph::induced_graphon`].
pub fn induced_graphon(g: &Graph) -> Graphon {
    g.induced_graphon()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Keep the diagonal `W(u_i, u_i)` terms. On by default.
    pub self_loops: bool,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { self_loops: true }
    }
}

fn grid_point(i: usize, n: usize) -> f64 {
    i as f64 / n as f64
}

/// Weighted graph with `[S]_{ij} = W(u_i, u_j)`, `u_i = (i - 1) / n`.
pub fn deterministic_graph(w: &Graphon, n: usize) -> Result<Graph> {
    deterministic_graph_with(w, n, SamplingOptions::default())
}

pub fn deterministic_graph_with(w: &Graphon, n: usize, opts: SamplingOptions) -> Result<Graph> {
    if n == 0 {
        return Err(Error::Domain("graph size must be at least 1".into()));
    }
    let mut gso = w.discretize(n);
    if !opts.self_loops {
        gso.fill_diagonal(0.0);
    }
    Ok(Graph {
        gso,
        weighted: true,
    })
}

/// Unweighted W-random graph: independent `Bernoulli(W(u_i, u_j))` edges for
/// `i <= j`, drawn in row-major order from a ChaCha8 stream seeded with
/// `seed`, then mirrored.
pub fn stochastic_graph(w: &Graphon, n: usize, seed: u64) -> Result<Graph> {
    stochastic_graph_with(w, n, seed, SamplingOptions::default())
}

pub fn stochastic_graph_with(
    w: &Graphon,
    n: usize,
    seed: u64,
    opts: SamplingOptions,
) -> Result<Graph> {
    let probs = deterministic_graph_with(w, n, opts)?;
    Ok(bernoulli_from(&probs, seed))
}

/// Samples a 0/1 graph edgewise from the probabilities in `probs`' GSO.
pub fn bernoulli_from(probs: &Graph, seed: u64) -> Graph {
    let n = probs.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gso = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let p = probs.gso[(i, j)];
            let draw: f64 = rng.random();
            if draw < p {
                gso[(i, j)] = 1.0;
                gso[(j, i)] = 1.0;
            }
        }
    }
    Graph {
        gso,
        weighted: false,
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-cell seed.
///
/// Folds `master`, `n`, `trial` and the bytes of `tag` into one state with
/// the SplitMix64 finalizer: `h = mix(master)`, then `h = mix(h ^ x)` for
/// `x` in `[n, trial, fnv1a(tag)]`.
pub fn derive_seed(master: u64, n: u64, trial: u64, tag: &str) -> u64 {
    let tag_hash = tag.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    [n, trial, tag_hash]
        .iter()
        .fold(mix64(master), |h, &x| mix64(h ^ x))
}

/// A graph signal: one real value per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphSignal {
    pub values: DVector<f64>,
}

impl GraphSignal {
    pub fn new(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self::new(DVector::from_vec(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(DVector::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    /// The step graphon signal equal to `x_i` on `I_i`.
    pub fn induce(&self) -> GraphonSignal {
        GraphonSignal::Step {
            values: self.values.iter().copied().collect(),
        }
    }
}

/// A signal on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphonSignal {
    Constant { value: f64 },
    /// `u -> u`.
    Linear,
    /// `u -> cos(pi k u)`.
    Cosine { k: u32 },
    /// Piecewise constant on the regular partition into `values.len()` cells.
    Step { values: Vec<f64> },
}

impl GraphonSignal {
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("u = {u} is outside [0, 1]")));
        }
        Ok(self.value(u))
    }

    pub(crate) fn value(&self, u: f64) -> f64 {
        match self {
            GraphonSignal::Constant { value } => *value,
            GraphonSignal::Linear => u,
            GraphonSignal::Cosine { k } => (std::f64::consts::PI * f64::from(*k) * u).cos(),
            GraphonSignal::Step { values } => values[cell_index(u, values.len())],
        }
    }

    /// `L^2([0, 1])` norm.
    pub fn l2_norm(&self) -> f64 {
        match self {
            GraphonSignal::Constant { value } => value.abs(),
            GraphonSignal::Linear => (1.0_f64 / 3.0).sqrt(),
            GraphonSignal::Cosine { k: 0 } => 1.0,
            GraphonSignal::Cosine { .. } => std::f64::consts::FRAC_1_SQRT_2,
            GraphonSignal::Step { values } => {
                let sq: f64 = values.iter().map(|v| v * v).sum();
                (sq / values.len() as f64).sqrt()
            }
        }
    }

    /// Values of a step signal, `None` for analytic families.
    pub fn step_values(&self) -> Option<&[f64]> {
        match self {
            GraphonSignal::Step { values } => Some(values),
            _ => None,
        }
    }
}

/// `[x_n]_i = X(u_i)` with `u_i = (i - 1) / n`.
pub fn sample_signal(x: &GraphonSignal, n: usize) -> Result<GraphSignal> {
    if n == 0 {
        return Err(Error::Domain("signal length must be at least 1".into()));
    }
    if let GraphonSignal::Step { values } = x {
        if values.is_empty() {
            return Err(Error::Domain("step signal has no values".into()));
        }
    }
    Ok(GraphSignal::new(DVector::from_fn(n, |i, _| {
        x.value(grid_point(i, n))
    })))
}

/// Free-function form of [`GraphSignal::induce`].
pub fn induce_signal(x: &GraphSignal) -> GraphonSignal {
    x.induce()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_block() -> Graphon {
        Graphon::two_block(0.8, 0.2).unwrap()
    }

    #[test]
    fn deterministic_examples() {
        let g = deterministic_graph(&Graphon::constant(0.5).unwrap(), 3).unwrap();
        assert!(g.gso().iter().all(|&x| x == 0.5));
        assert!(g.weighted());

        let g = deterministic_graph(&two_block(), 4).unwrap();
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[
                0.8, 0.8, 0.2, 0.2, 0.8, 0.8, 0.2, 0.2, 0.2, 0.2, 0.8, 0.8, 0.2, 0.2, 0.8, 0.8,
            ],
        );
        assert_eq!(g.gso(), &expected);

        let g = deterministic_graph(&Graphon::smooth_exp(0.0).unwrap(), 7).unwrap();
        assert!(g.gso().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn self_loop_switch() {
        let opts = SamplingOptions { self_loops: false };
        let g = deterministic_graph_with(&Graphon::constant(0.5).unwrap(), 3, opts).unwrap();
        assert_eq!(g.gso().diagonal().sum(), 0.0);
        let s = stochastic_graph_with(&Graphon::constant(1.0).unwrap(), 5, 3, opts).unwrap();
        assert_eq!(s.gso().sum(), 20.0);
    }

    #[test]
    fn induced_graphon_examples() {
        let g = Graph::new(DMatrix::from_element(1, 1, 0.4), true).unwrap();
        let w = g.induced_graphon();
        assert_eq!(w.eval(0.0, 1.0).unwrap(), 0.4);
        assert_eq!(w.eval(0.7, 0.2).unwrap(), 0.4);

        let g = Graph::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.3, 0.0]), true).unwrap();
        let w = induced_graphon(&g);
        assert_eq!(w.eval(0.1, 0.9).unwrap(), 0.3);
        assert_eq!(w.eval(0.9, 0.9).unwrap(), 0.0);
    }

    #[test]
    fn asymmetric_gso_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.3, 0.1, 0.0]);
        assert!(matches!(Graph::new(m, true), Err(Error::Invariant(_))));
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
        assert!(matches!(Graph::new(m, false), Err(Error::Invariant(_))));
    }

    #[test]
    fn grid_round_trip_is_exact() {
        for n in [1usize, 2, 3, 7, 10, 64, 127, 300] {
            let m = DMatrix::from_fn(n, n, |i, j| ((i * 31 + j * 31 + i * j) % 97) as f64 / 96.0);
            let w = Graphon::grid(m.clone()).unwrap();
            let g = deterministic_graph(&w, n).unwrap();
            assert_eq!(g.gso(), &m, "n = {n}");
            assert_eq!(g.induced_graphon(), w);
        }
    }

    #[test]
    fn stochastic_extremes_and_reproducibility() {
        let ones = stochastic_graph(&Graphon::constant(1.0).unwrap(), 20, 99).unwrap();
        assert!(ones.gso().iter().all(|&x| x == 1.0));
        assert!(!ones.weighted());
        let zeros = stochastic_graph(&Graphon::constant(0.0).unwrap(), 20, 99).unwrap();
        assert_eq!(zeros.gso().sum(), 0.0);

        let a = stochastic_graph(&two_block(), 50, 7).unwrap();
        let b = stochastic_graph(&two_block(), 50, 7).unwrap();
        let c = stochastic_graph(&two_block(), 50, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn stochastic_edge_density_concentrates() {
        let n = 1000;
        let g = stochastic_graph(&Graphon::constant(0.5).unwrap(), n, 2024).unwrap();
        let trials = (n * (n + 1) / 2) as f64;
        let mut edges = 0.0;
        for i in 0..n {
            for j in i..n {
                edges += g.gso()[(i, j)];
            }
        }
        let sigma = (0.25 / trials).sqrt();
        assert!((edges / trials - 0.5).abs() <= 4.0 * sigma);
    }

    #[test]
    fn stochastic_mean_matches_deterministic() {
        let w = two_block();
        let n = 16;
        let det = deterministic_graph(&w, n).unwrap();
        let reps = 200;
        let mut mean = DMatrix::zeros(n, n);
        for s in 0..reps {
            mean += stochastic_graph(&w, n, derive_seed(5, n as u64, s, "mean")).unwrap().gso();
        }
        mean /= reps as f64;
        let dev = (mean - det.gso()).abs().max();
        assert!(dev <= 4.0 * (0.25 / reps as f64).sqrt(), "max deviation {dev}");
    }

    #[test]
    fn seed_derivation_is_deterministic_and_spread() {
        assert_eq!(derive_seed(1, 64, 0, "det"), derive_seed(1, 64, 0, "det"));
        let seeds: std::collections::HashSet<u64> = (0..100)
            .flat_map(|t| [derive_seed(1, 64, t, "a"), derive_seed(1, 128, t, "a"), derive_seed(1, 64, t, "b")])
            .collect();
        assert_eq!(seeds.len(), 300);
    }

    #[test]
    fn sample_signal_examples() {
        let x = sample_signal(&GraphonSignal::Constant { value: 1.0 }, 5).unwrap();
        assert_eq!(x.values.as_slice(), &[1.0; 5]);
        let x = sample_signal(&GraphonSignal::Linear, 4).unwrap();
        assert_eq!(x.values.as_slice(), &[0.0, 0.25, 0.5, 0.75]);
        let step = GraphonSignal::Step {
            values: vec![2.0, -1.0],
        };
        let x = sample_signal(&step, 4).unwrap();
        assert_eq!(x.values.as_slice(), &[2.0, 2.0, -1.0, -1.0]);
    }

    #[test]
    fn induce_signal_examples() {
        let s = GraphSignal::from_vec(vec![1.0, 1.0]).induce();
        assert_eq!(s.eval(0.0).unwrap(), 1.0);
        assert_eq!(s.eval(1.0).unwrap(), 1.0);
        let s = induce_signal(&GraphSignal::from_vec(vec![0.0, 1.0]));
        assert_eq!(s.eval(0.25).unwrap(), 0.0);
        assert_eq!(s.eval(0.75).unwrap(), 1.0);

        let aligned = GraphonSignal::Step {
            values: vec![0.5, -2.0, 3.0, 1.0],
        };
        for n in [4, 8, 12] {
            let round = sample_signal(&aligned, n).unwrap().induce();
            for k in 0..=100 {
                let u = k as f64 / 100.0;
                assert_eq!(round.eval(u).unwrap(), aligned.eval(u).unwrap(), "n = {n}, u = {u}");
            }
        }
    }

    #[test]
    fn norm_examples() {
        let x = GraphSignal::from_vec(vec![1.0; 4]);
        assert_eq!(x.norm(), 2.0);
        assert_eq!(x.induce().l2_norm(), 1.0);
        assert_eq!(GraphSignal::zeros(3).norm(), 0.0);
        let x = GraphSignal::from_vec(vec![3.0, 4.0]);
        assert_eq!(x.norm(), 5.0);
        assert_relative_eq!(x.induce().l2_norm(), 5.0 / 2f64.sqrt(), max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn norm_identity(values in proptest::collection::vec(-10.0..10.0f64, 1..200)) {
            let x = GraphSignal::from_vec(values);
            let n = x.len() as f64;
            let lhs = x.norm();
            let rhs = n.sqrt() * x.induce().l2_norm();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(1e-300));
        }

        #[test]
        fn deterministic_graph_is_valid(beta in 0.0..4.0f64, n in 1usize..60) {
            let g = deterministic_graph(&Graphon::smooth_exp(beta).unwrap(), n).unwrap();
            prop_assert!(Graph::new(g.gso().clone(), true).is_ok());
        }
    }
}
