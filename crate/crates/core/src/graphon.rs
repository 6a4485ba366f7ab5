//! Graphons: bounded symmetric kernels on the unit square.
//!
//! Four families are supported directly (constant, stochastic block model,
//! exponential decay in `|u - v|`, and a piecewise-constant grid). Additive
//! perturbations that cannot be folded back into one of those families are
//! represented by [`Graphon::Perturbed`], which evaluates `W + A` pointwise.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

/// Slack allowed when checking that a kernel stays inside `[0, 1]`.
pub const RANGE_TOL: f64 = 1e-12;

/// Default lower bound on `W` required by the exp-reciprocal perturbation.
pub const DEFAULT_W_MIN: f64 = 0.05;

/// Default number of quadrature points for degree integrals.
pub const DEFAULT_DEGREE_QUADRATURE: usize = 2048;

// Absorbs the last-ulp error of `(i / n) * N` when a grid point sits exactly
// on a cell boundary.
const CELL_SLACK: f64 = 1e-9;

/// Common interface of symmetric kernels on `[0,1]^2`: graphons and the
/// (possibly signed) perturbation kernels `A = W' - W`.
pub trait SymmetricKernel {
    /// Kernel value at `(u, v)`; callers guarantee `u, v` in `[0, 1]`.
    fn value(&self, u: f64, v: f64) -> f64;

    /// Exact Lipschitz constant (in the `|du| + |dv|` sense) when the family
    /// admits one in closed form.
    fn lipschitz_closed_form(&self) -> Option<f64>;

    /// Whether the kernel has jump discontinuities (block or grid structure).
    fn is_step(&self) -> bool;

    /// Samples the kernel on the regular grid `u_i = i / n`, `i = 0..n`.
    fn discretize(&self, n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let nf = n as f64;
        for i in 0..n {
            let u = i as f64 / nf;
            for j in i..n {
                let w = self.value(u, j as f64 / nf);
                m[(i, j)] = w;
                m[(j, i)] = w;
            }
        }
        m
    }
}

/// Regular-partition cell containing `u`, left-closed, with `u = 1` mapped
/// to the last cell.
pub(crate) fn cell_index(u: f64, cells: usize) -> usize {
    let k = (u * cells as f64 + CELL_SLACK).floor();
    if k <= 0.0 {
        0
    } else {
        (k as usize).min(cells - 1)
    }
}

fn check_unit(u: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {u} is outside [0, 1]")))
    }
}

fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Invariant(format!(
            "{what} is {}x{}, expected a square matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let a = m[(i, j)];
            if !a.is_finite() {
                return Err(Error::Invariant(format!("{what} has a non-finite entry at ({i}, {j})")));
            }
            if j > i && a != m[(j, i)] {
                return Err(Error::Invariant(format!(
                    "{what} is not symmetric at ({i}, {j}): {a} vs {}",
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

fn check_range(m: &DMatrix<f64>, lo: f64, hi: f64, what: &str) -> Result<()> {
    if let Some((idx, v)) = m
        .iter()
        .enumerate()
        .find(|(_, &v)| v < lo - RANGE_TOL || v > hi + RANGE_TOL)
    {
        let (i, j) = (idx % m.nrows(), idx / m.nrows());
        return Err(Error::Range(format!(
            "{what} entry ({i}, {j}) = {v} is outside [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// A symmetric matrix read as a step kernel on the regular partition of
/// `[0, 1]` into `N` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct GridKernel {
    values: DMatrix<f64>,
}

impl GridKernel {
    /// Wraps an exactly symmetric, finite, square matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&values, "grid matrix")?;
        if values.nrows() == 0 {
            return Err(Error::Invariant("grid matrix is empty".into()));
        }
        Ok(Self { values })
    }

    pub fn resolution(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn cell(&self, u: f64) -> usize {
        cell_index(u, self.resolution())
    }
}

impl SymmetricKernel for GridKernel {
    fn value(&self, u: f64, v: f64) -> f64 {
        self.values[(self.cell(u), self.cell(v))]
    }

    fn lipschitz_closed_form(&self) -> Option<f64> {
        let first = self.values[(0, 0)];
        self.values.iter().all(|&v| v == first).then_some(0.0)
    }

    fn is_step(&self) -> bool {
        true
    }
}

/// Stochastic block model: blocks `[b_k, b_{k+1})` with a symmetric matrix of
/// connection probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockModel {
    /// Full boundary list `0 = b_0 < b_1 < ... < b_B = 1`.
    boundaries: Vec<f64>,
    probs: DMatrix<f64>,
}

impl BlockModel {
    /// Builds a block model from its interior boundaries `b_1 < ... < b_{B-1}`.
    pub fn new(interior: &[f64], probs: DMatrix<f64>) -> Result<Self> {
        let mut boundaries = Vec::with_capacity(interior.len() + 2);
        boundaries.push(0.0);
        boundaries.extend_from_slice(interior);
        boundaries.push(1.0);
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invariant(format!(
                "block boundaries must be strictly increasing inside (0, 1): {interior:?}"
            )));
        }
        let blocks = boundaries.len() - 1;
        if probs.nrows() != blocks {
            return Err(Error::Shape {
                expected: blocks,
                actual: probs.nrows(),
            });
        }
        check_symmetric(&probs, "block probability matrix")?;
        check_range(&probs, 0.0, 1.0, "block probability matrix")?;
        Ok(Self { boundaries, probs })
    }

    /// Equal-width blocks.
    pub fn uniform(probs: DMatrix<f64>) -> Result<Self> {
        let b = probs.nrows();
        let interior: Vec<f64> = (1..b).map(|k| k as f64 / b as f64).collect();
        Self::new(&interior, probs)
    }

    pub fn blocks(&self) -> usize {
        self.probs.nrows()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn interior_boundaries(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn probabilities(&self) -> &DMatrix<f64> {
        &self.probs
    }

    pub fn block_of(&self, u: f64) -> usize {
        let interior = self.interior_boundaries();
        interior.partition_point(|&b| b <= u + CELL_SLACK * 1e-3)
    }

    fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.boundaries.windows(2).map(|w| w[1] - w[0])
    }
}

/// How out-of-range values of `W + A` are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RangePolicy {
    #[default]
    Reject,
    Clip,
}

/// Shape of the additive perturbation `A` in `W' = W + A`.
#[derive(Clone, Debug, PartialEq)]
pub enum PerturbationKind {
    /// `A = a`.
    AdditiveConstant(f64),
    /// `W' = alpha * W`, i.e. `A = (alpha - 1) W`.
    ScaledCopy(f64),
    /// `A = (1 - exp(1 / W)) / 10`; requires `W >= w_min > 0`.
    ExpReciprocal { w_min: f64 },
    /// `A` given as a step kernel.
    CustomGrid(GridKernel),
}

impl PerturbationKind {
    /// Value of `A` at a point where the base graphon equals `w`.
    fn delta(&self, w: f64, u: f64, v: f64) -> f64 {
        match self {
            PerturbationKind::AdditiveConstant(a) => *a,
            PerturbationKind::ScaledCopy(alpha) => (alpha - 1.0) * w,
            PerturbationKind::ExpReciprocal { .. } => exp_reciprocal(w),
            PerturbationKind::CustomGrid(g) => g.value(u, v),
        }
    }
}

/// `(1 - exp(1 / w)) / 10`.
pub fn exp_reciprocal(w: f64) -> f64 {
    (1.0 - (1.0 / w).exp()) / 10.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub policy: RangePolicy,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, policy: RangePolicy) -> Self {
        Self { kind, policy }
    }

    pub fn additive(a: f64) -> Self {
        Self::new(PerturbationKind::AdditiveConstant(a), RangePolicy::Reject)
    }

    pub fn scaled(alpha: f64) -> Self {
        Self::new(PerturbationKind::ScaledCopy(alpha), RangePolicy::Reject)
    }

    pub fn exp_reciprocal(policy: RangePolicy) -> Self {
        Self::new(
            PerturbationKind::ExpReciprocal {
                w_min: DEFAULT_W_MIN,
            },
            policy,
        )
    }
}

/// `W + A` for a base family that cannot absorb `A` in closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedGraphon {
    base: Graphon,
    kind: PerturbationKind,
}

impl PerturbedGraphon {
    pub fn base(&self) -> &Graphon {
        &self.base
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    fn raw(&self, u: f64, v: f64) -> f64 {
        let w = self.base.value(u, v);
        w + self.kind.delta(w, u, v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Graphon {
    Constant(f64),
    Sbm(BlockModel),
    /// `W(u, v) = exp(-beta |u - v|)`.
    SmoothExp { beta: f64 },
    Grid(GridKernel),
    Perturbed(Box<PerturbedGraphon>),
}

impl Graphon {
    pub fn constant(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("constant graphon value {p} is outside [0, 1]")));
        }
        Ok(Graphon::Constant(p))
    }

    pub fn sbm(interior: &[f64], probs: DMatrix<f64>) -> Result<Self> {
        BlockModel::new(interior, probs).map(Graphon::Sbm)
    }

    /// Two equal blocks with within-block probability `p` and cross-block `q`.
    pub fn two_block(p: f64, q: f64) -> Result<Self> {
        Self::sbm(&[0.5], DMatrix::from_row_slice(2, 2, &[p, q, q, p]))
    }

    pub fn smooth_exp(beta: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Domain(format!("decay rate {beta} must be finite and >= 0")));
        }
        Ok(Graphon::SmoothExp { beta })
    }

    pub fn grid(values: DMatrix<f64>) -> Result<Self> {
        check_range(&values, 0.0, 1.0, "graphon grid")?;
        GridKernel::new(values).map(Graphon::Grid)
    }

    /// Evaluates `W(u, v)` after checking both coordinates lie in `[0, 1]`.
    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        check_unit(u, "u")?;
        check_unit(v, "v")?;
        Ok(self.value(u, v))
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Graphon::Constant(_) => "constant",
            Graphon::Sbm(_) => "sbm",
            Graphon::SmoothExp { .. } => "smooth-exp",
            Graphon::Grid(_) => "grid",
            Graphon::Perturbed(_) => "perturbed",
        }
    }

    /// Infimum of `W` (exact for block and grid kinds, probed otherwise).
    pub fn min_value(&self) -> f64 {
        match self {
            Graphon::Constant(p) => *p,
            Graphon::Sbm(b) => b.probs.min(),
            Graphon::SmoothExp { beta } => (-beta).exp(),
            Graphon::Grid(g) => g.values.min(),
            Graphon::Perturbed(_) => probe_extrema(self).0,
        }
    }

    pub fn max_value(&self) -> f64 {
        match self {
            Graphon::Constant(p) => *p,
            Graphon::Sbm(b) => b.probs.max(),
            Graphon::SmoothExp { .. } => 1.0,
            Graphon::Grid(g) => g.values.max(),
            Graphon::Perturbed(_) => probe_extrema(self).1,
        }
    }

    /// The maximum degree `d_W = max_x int_0^1 W(x, y) dy`, using
    /// [`DEFAULT_DEGREE_QUADRATURE`] points where no closed form exists.
    pub fn max_degree(&self) -> f64 {
        self.max_degree_with(DEFAULT_DEGREE_QUADRATURE)
    }

    pub fn max_degree_with(&self, points: usize) -> f64 {
        match self {
            Graphon::Constant(p) => *p,
            Graphon::Sbm(b) => (0..b.blocks())
                .map(|k| {
                    b.widths()
                        .enumerate()
                        .map(|(l, w)| b.probs[(k, l)] * w)
                        .sum::<f64>()
                })
                .fold(0.0, f64::max),
            Graphon::Grid(g) => {
                let n = g.resolution() as f64;
                g.values
                    .row_iter()
                    .map(|r| r.sum() / n)
                    .fold(0.0, f64::max)
            }
            Graphon::SmoothExp { .. } | Graphon::Perturbed(_) => {
                let q = points.max(2);
                let qf = q as f64;
                (0..q)
                    .map(|i| {
                        let x = i as f64 / (qf - 1.0);
                        (0..q).map(|j| self.value(x, (j as f64 + 0.5) / qf)).sum::<f64>() / qf
                    })
                    .fold(0.0, f64::max)
            }
        }
    }
}

fn probe_extrema(k: &impl SymmetricKernel) -> (f64, f64) {
    const PROBE: usize = 1024;
    let pts: Vec<f64> = (0..=2 * PROBE).map(|i| i as f64 / (2 * PROBE) as f64).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &u) in pts.iter().enumerate() {
        for &v in &pts[i..] {
            let w = k.value(u, v);
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    (lo, hi)
}

impl SymmetricKernel for Graphon {
    fn value(&self, u: f64, v: f64) -> f64 {
        match self {
            Graphon::Constant(p) => *p,
            Graphon::Sbm(b) => b.probs[(b.block_of(u), b.block_of(v))],
            Graphon::SmoothExp { beta } => (-beta * (u - v).abs()).exp(),
            Graphon::Grid(g) => g.value(u, v),
            Graphon::Perturbed(p) => p.raw(u, v).clamp(0.0, 1.0),
        }
    }

    fn lipschitz_closed_form(&self) -> Option<f64> {
        match self {
            Graphon::Constant(_) => Some(0.0),
            Graphon::SmoothExp { beta } => Some(*beta),
            Graphon::Sbm(b) => {
                let first = b.probs[(0, 0)];
                b.probs.iter().all(|&v| v == first).then_some(0.0)
            }
            Graphon::Grid(g) => g.lipschitz_closed_form(),
            Graphon::Perturbed(p) => {
                let base = p.base.lipschitz_closed_form()?;
                let delta = delta_lipschitz(&p.kind, &p.base, base)?;
                Some(base + delta)
            }
        }
    }

    fn is_step(&self) -> bool {
        match self {
            Graphon::Constant(_) | Graphon::SmoothExp { .. } => false,
            Graphon::Sbm(_) | Graphon::Grid(_) => true,
            Graphon::Perturbed(p) => {
                p.base.is_step() || matches!(p.kind, PerturbationKind::CustomGrid(_))
            }
        }
    }

    fn discretize(&self, n: usize) -> DMatrix<f64> {
        let nf = n as f64;
        match self {
            Graphon::Constant(p) => DMatrix::from_element(n, n, *p),
            Graphon::Sbm(b) => {
                let blocks: Vec<usize> = (0..n).map(|i| b.block_of(i as f64 / nf)).collect();
                DMatrix::from_fn(n, n, |i, j| b.probs[(blocks[i], blocks[j])])
            }
            Graphon::Grid(g) => {
                let cells: Vec<usize> = (0..n).map(|i| g.cell(i as f64 / nf)).collect();
                DMatrix::from_fn(n, n, |i, j| g.values[(cells[i], cells[j])])
            }
            _ => {
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    let u = i as f64 / nf;
                    for j in i..n {
                        let w = self.value(u, j as f64 / nf);
                        m[(i, j)] = w;
                        m[(j, i)] = w;
                    }
                }
                m
            }
        }
    }
}

/// Lipschitz constant of `A` as a function on the square, given the base
/// graphon's constant `base_lip`.
fn delta_lipschitz(kind: &PerturbationKind, base: &Graphon, base_lip: f64) -> Option<f64> {
    match kind {
        PerturbationKind::AdditiveConstant(_) => Some(0.0),
        PerturbationKind::ScaledCopy(alpha) => Some((alpha - 1.0).abs() * base_lip),
        PerturbationKind::ExpReciprocal { .. } => {
            if base_lip == 0.0 {
                return Some(0.0);
            }
            // |d/dw (1 - e^{1/w}) / 10| = e^{1/w} / (10 w^2), decreasing in w.
            let w = base.min_value();
            Some((1.0 / w).exp() / (10.0 * w * w) * base_lip)
        }
        PerturbationKind::CustomGrid(g) => g.lipschitz_closed_form(),
    }
}

/// The perturbation kernel `A = W' - W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    base: Graphon,
    perturbed: Graphon,
    kind: PerturbationKind,
    clipped: bool,
}

impl Kernel {
    pub fn base(&self) -> &Graphon {
        &self.base
    }

    pub fn perturbed(&self) -> &Graphon {
        &self.perturbed
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    /// Whether the clip policy actually altered `W + A` somewhere, in which
    /// case `A` no longer has the nominal closed form.
    pub fn clipped(&self) -> bool {
        self.clipped
    }

    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        check_unit(u, "u")?;
        check_unit(v, "v")?;
        Ok(self.value(u, v))
    }
}

impl SymmetricKernel for Kernel {
    fn value(&self, u: f64, v: f64) -> f64 {
        self.perturbed.value(u, v) - self.base.value(u, v)
    }

    fn lipschitz_closed_form(&self) -> Option<f64> {
        if self.clipped {
            return None;
        }
        let base = self.base.lipschitz_closed_form();
        match (&self.kind, base) {
            (PerturbationKind::AdditiveConstant(_), _) => Some(0.0),
            (kind, Some(b)) => delta_lipschitz(kind, &self.base, b),
            (PerturbationKind::CustomGrid(g), None) => g.lipschitz_closed_form(),
            _ => None,
        }
    }

    fn is_step(&self) -> bool {
        self.base.is_step() || matches!(self.kind, PerturbationKind::CustomGrid(_))
    }

    fn discretize(&self, n: usize) -> DMatrix<f64> {
        self.perturbed.discretize(n) - self.base.discretize(n)
    }
}

/// Applies `A` to a matrix of base values, returning the perturbed values and
/// whether clipping changed anything.
fn fold_values(
    values: &DMatrix<f64>,
    delta: impl Fn(f64, usize, usize) -> f64,
    policy: RangePolicy,
) -> Result<(DMatrix<f64>, bool)> {
    let mut clipped = false;
    let mut out = values.clone();
    for j in 0..values.ncols() {
        for i in 0..values.nrows() {
            let w = values[(i, j)];
            let raw = w + delta(w, i, j);
            let inside = (-RANGE_TOL..=1.0 + RANGE_TOL).contains(&raw);
            if !inside {
                match policy {
                    RangePolicy::Reject => {
                        return Err(Error::Range(format!(
                            "perturbed value {raw} at cell ({i}, {j}) is outside [0, 1]"
                        )))
                    }
                    RangePolicy::Clip => clipped = true,
                }
            }
            out[(i, j)] = raw.clamp(0.0, 1.0);
        }
    }
    Ok((out, clipped))
}

/// Builds `W' = W + A` and returns it together with the kernel `A`.
pub fn perturb(w: &Graphon, spec: &PerturbationSpec) -> Result<(Graphon, Kernel)> {
    if let PerturbationKind::ExpReciprocal { w_min } = spec.kind {
        let lo = w.min_value();
        if lo <= 0.0 {
            return Err(Error::Singularity(format!(
                "exp-reciprocal perturbation diverges: the kernel attains {lo}"
            )));
        }
        if lo < w_min {
            return Err(Error::Singularity(format!(
                "exp-reciprocal perturbation needs W >= {w_min}, but min W = {lo}"
            )));
        }
    }
    if let PerturbationKind::ScaledCopy(alpha) = spec.kind {
        if !alpha.is_finite() {
            return Err(Error::Domain(format!("scale factor {alpha} is not finite")));
        }
    }

    let kind = &spec.kind;
    let folded: Option<(Graphon, bool)> = match (w, kind) {
        (Graphon::Constant(p), PerturbationKind::CustomGrid(g)) => {
            let n = g.resolution();
            let base = DMatrix::from_element(n, n, *p);
            let (m, c) = fold_values(&base, |_, i, j| g.values()[(i, j)], spec.policy)?;
            Some((Graphon::Grid(GridKernel::new(m)?), c))
        }
        (Graphon::Grid(base), PerturbationKind::CustomGrid(g))
            if base.resolution() == g.resolution() =>
        {
            let (m, c) = fold_values(base.values(), |_, i, j| g.values()[(i, j)], spec.policy)?;
            Some((Graphon::Grid(GridKernel::new(m)?), c))
        }
        (_, PerturbationKind::CustomGrid(_)) => None,
        (Graphon::Constant(p), _) => {
            let base = DMatrix::from_element(1, 1, *p);
            let (m, c) = fold_values(&base, |w, _, _| kind.delta(w, 0.0, 0.0), spec.policy)?;
            Some((Graphon::Constant(m[(0, 0)]), c))
        }
        (Graphon::Sbm(b), _) => {
            let (m, c) = fold_values(&b.probs, |w, _, _| kind.delta(w, 0.0, 0.0), spec.policy)?;
            Some((
                Graphon::Sbm(BlockModel {
                    boundaries: b.boundaries.clone(),
                    probs: m,
                }),
                c,
            ))
        }
        (Graphon::Grid(g), _) => {
            let (m, c) = fold_values(g.values(), |w, _, _| kind.delta(w, 0.0, 0.0), spec.policy)?;
            Some((Graphon::Grid(GridKernel::new(m)?), c))
        }
        _ => None,
    };

    let (perturbed, clipped) = match folded {
        Some(f) => f,
        None => {
            let p = PerturbedGraphon {
                base: w.clone(),
                kind: kind.clone(),
            };
            let (lo, hi) = raw_extrema(&p);
            let outside = lo < -RANGE_TOL || hi > 1.0 + RANGE_TOL;
            if outside && spec.policy == RangePolicy::Reject {
                return Err(Error::Range(format!(
                    "W + A ranges over [{lo}, {hi}], outside [0, 1]"
                )));
            }
            (Graphon::Perturbed(Box::new(p)), outside)
        }
    };

    let kernel = Kernel {
        base: w.clone(),
        perturbed: perturbed.clone(),
        kind: kind.clone(),
        clipped,
    };
    Ok((perturbed, kernel))
}

fn raw_extrema(p: &PerturbedGraphon) -> (f64, f64) {
    struct Raw<'a>(&'a PerturbedGraphon);
    impl SymmetricKernel for Raw<'_> {
        fn value(&self, u: f64, v: f64) -> f64 {
            self.0.raw(u, v)
        }
        fn lipschitz_closed_form(&self) -> Option<f64> {
            None
        }
        fn is_step(&self) -> bool {
            false
        }
    }
    probe_extrema(&Raw(p))
}

/// Outcome of a Lipschitz-constant estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// True when `value` is the family's exact constant.
    pub closed_form: bool,
    /// Set for step kernels, which are not Lipschitz; the finite-difference
    /// value then grows with the probe resolution.
    pub non_lipschitz: bool,
}

/// Lipschitz constant of a kernel: the closed form when the family has one,
/// otherwise the finite-difference estimate on an `m x m` probe grid.
pub fn estimate_lipschitz(k: &impl SymmetricKernel, m: usize) -> Result<LipschitzEstimate> {
    if m < 2 {
        return Err(Error::Domain(format!("probe resolution {m} must be at least 2")));
    }
    if let Some(value) = k.lipschitz_closed_form() {
        return Ok(LipschitzEstimate {
            value,
            closed_form: true,
            non_lipschitz: false,
        });
    }
    Ok(LipschitzEstimate {
        value: finite_difference_lipschitz(k, m),
        closed_form: false,
        non_lipschitz: k.is_step(),
    })
}

/// Largest ratio `|K(u_{i+1}, v) - K(u_i, v)| / h` over the probe grid
/// `u_i = i / (m - 1)`. By symmetry the `v` direction gives the same set.
pub fn finite_difference_lipschitz(k: &impl SymmetricKernel, m: usize) -> f64 {
    let h = 1.0 / (m - 1) as f64;
    let pts: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
    let mut best = 0.0_f64;
    let mut prev: Vec<f64> = pts.iter().map(|&v| k.value(pts[0], v)).collect();
    for &u in &pts[1..] {
        for (j, &v) in pts.iter().enumerate() {
            let cur = k.value(u, v);
            best = best.max((cur - prev[j]).abs() / h);
            prev[j] = cur;
        }
    }
    best
}

/// Config-file description of a graphon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GraphonSpec {
    Constant {
        p: f64,
    },
    Sbm {
        /// Interior block boundaries; omit for equal-width blocks.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundaries: Option<Vec<f64>>,
        probabilities: Vec<Vec<f64>>,
    },
    SmoothExp {
        beta: f64,
    },
    /// Piecewise-constant kernel loaded from a CSV matrix.
    Grid {
        path: PathBuf,
    },
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "{what}: row {bad} has {} entries, expected {n}",
            rows[bad].len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl GraphonSpec {
    /// Instantiates the graphon; relative grid paths resolve against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Graphon> {
        match self {
            GraphonSpec::Constant { p } => Graphon::constant(*p),
            GraphonSpec::Sbm {
                boundaries,
                probabilities,
            } => {
                let probs = rows_to_matrix(probabilities, "graphon.probabilities")?;
                match boundaries {
                    Some(b) => Graphon::sbm(b, probs),
                    None => BlockModel::uniform(probs).map(Graphon::Sbm),
                }
            }
            GraphonSpec::SmoothExp { beta } => Graphon::smooth_exp(*beta),
            GraphonSpec::Grid { path } => Graphon::grid(io::read_matrix_csv(&base_dir.join(path))?),
        }
    }
}

/// Config-file description of a perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationKindSpec {
    AdditiveConstant {
        a: f64,
    },
    ScaledCopy {
        alpha: f64,
    },
    ExpReciprocal {
        #[serde(default = "default_w_min")]
        w_min: f64,
    },
    CustomGrid {
        path: PathBuf,
    },
}

fn default_w_min() -> f64 {
    DEFAULT_W_MIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    #[serde(flatten)]
    pub kind: PerturbationKindSpec,
    #[serde(default)]
    pub policy: RangePolicy,
}

impl PerturbationConfig {
    pub fn resolve(&self, base_dir: &Path) -> Result<PerturbationSpec> {
        let kind = match &self.kind {
            PerturbationKindSpec::AdditiveConstant { a } => PerturbationKind::AdditiveConstant(*a),
            PerturbationKindSpec::ScaledCopy { alpha } => PerturbationKind::ScaledCopy(*alpha),
            PerturbationKindSpec::ExpReciprocal { w_min } => {
                PerturbationKind::ExpReciprocal { w_min: *w_min }
            }
            PerturbationKindSpec::CustomGrid { path } => {
                let m = io::read_matrix_csv(&base_dir.join(path))?;
                check_range(&m, -1.0, 1.0, "perturbation grid")?;
                PerturbationKind::CustomGrid(GridKernel::new(m)?)
            }
        };
        Ok(PerturbationSpec::new(kind, self.policy))
    }
}
