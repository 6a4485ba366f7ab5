//! Convolutional filters in coefficient form and as band-limited spectral
//! responses, applied on graphs (through the shift operator or its
//! eigenbasis) and on graphons (through a fine grid discretization).

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::Graphon;
use crate::sampling::{deterministic_graph, sample_signal, Graph, GraphSignal, GraphonSignal};
use crate::spectral::{decompose, Scale, SignedSpectrum};

/// Default number of uniform probes on `[-1, 1]` for response estimates.
pub const DEFAULT_PROBES: usize = 4096;

/// Default safety margin for [`project_as1`].
pub const DEFAULT_MARGIN: f64 = 1e-3;

/// `h(lambda) = sum_k h_k lambda^k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyFilter {
    pub coeffs: Vec<f64>,
}

impl PolyFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Config("a polynomial filter needs at least one tap".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Config("filter coefficients must be finite".into()));
        }
        Ok(Self { coeffs })
    }

    pub fn identity() -> Self {
        Self { coeffs: vec![1.0] }
    }

    pub fn taps(&self) -> usize {
        self.coeffs.len()
    }

    pub fn response(&self, lambda: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &h| acc * lambda + h)
    }

    fn derivative(&self, lambda: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &h)| acc * lambda + k as f64 * h)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// Response equal to `base` on `|lambda| < cutoff`, rising linearly by
/// `gain` over `cutoff <= |lambda| <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandFilter {
    pub cutoff: f64,
    pub base: f64,
    pub gain: f64,
}

impl BandFilter {
    pub fn new(cutoff: f64, base: f64, gain: f64) -> Result<Self> {
        if !(cutoff > 0.0 && cutoff < 1.0) {
            return Err(Error::Config(format!("band cutoff {cutoff} must lie in (0, 1)")));
        }
        if !(0.0..1.0).contains(&gain) {
            return Err(Error::Config(format!("band gain {gain} must lie in [0, 1)")));
        }
        if !base.is_finite() {
            return Err(Error::Config("band base value must be finite".into()));
        }
        Ok(Self { cutoff, base, gain })
    }

    pub fn response(&self, lambda: f64) -> f64 {
        let a = lambda.abs();
        if a < self.cutoff {
            return self.base;
        }
        self.base + self.gain * ((a - self.cutoff) / (1.0 - self.cutoff)).clamp(0.0, 1.0)
    }

    /// Closed-form Lipschitz constant of the ramp.
    pub fn lipschitz(&self) -> f64 {
        self.gain / (1.0 - self.cutoff)
    }

    /// Exact `sup |h|` on `[-1, 1]`.
    pub fn sup(&self) -> f64 {
        self.base.abs().max((self.base + self.gain).abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum Filter {
    Poly(PolyFilter),
    Band(BandFilter),
}

impl Filter {
    pub fn response(&self, lambda: f64) -> f64 {
        match self {
            Filter::Poly(p) => p.response(lambda),
            Filter::Band(b) => b.response(lambda),
        }
    }

    pub fn form(&self) -> &'static str {
        match self {
            Filter::Poly(_) => "poly",
            Filter::Band(_) => "band",
        }
    }
}

impl From<PolyFilter> for Filter {
    fn from(f: PolyFilter) -> Self {
        Filter::Poly(f)
    }
}

impl From<BandFilter> for Filter {
    fn from(f: BandFilter) -> Self {
        Filter::Band(f)
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape { expected, actual })
    }
}

/// `sum_k h_k (S/m)^k x` by Horner's scheme: `K - 1` matrix-vector products.
pub(crate) fn horner(coeffs: &[f64], s: &DMatrix<f64>, inv_m: f64, x: &DVector<f64>) -> DVector<f64> {
    let (last, rest) = coeffs.split_last().expect("filters have at least one tap");
    let mut y = x * *last;
    for &h in rest.iter().rev() {
        let mut next = x * h;
        next.gemv(inv_m, s, &y, 1.0);
        y = next;
    }
    y
}

/// `y = sum_k h_k (S/m)^k x`.
pub fn apply_poly(f: &PolyFilter, g: &Graph, m: f64, x: &GraphSignal) -> Result<GraphSignal> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("normalization m = {m} must be positive")));
    }
    check_len(g.n(), x.len())?;
    Ok(GraphSignal::new(horner(&f.coeffs, g.gso(), 1.0 / m, &x.values)))
}

pub(crate) fn spectral_apply(
    filter: &Filter,
    spec: &SignedSpectrum,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    let v = spec
        .vectors()
        .ok_or_else(|| Error::Domain("spectral filtering needs eigenvectors".into()))?;
    check_len(v.nrows(), x.len())?;
    let mut coef = v.tr_mul(x);
    for (c, lambda) in coef.iter_mut().zip(spec.values()) {
        *c *= filter.response(lambda);
    }
    Ok(v * coef)
}

/// `y = V h(Lambda) V^T x`, with `h` evaluated at the stored (scaled)
/// eigenvalues.
pub fn apply_spectral(filter: &Filter, spec: &SignedSpectrum, x: &GraphSignal) -> Result<GraphSignal> {
    spectral_apply(filter, spec, &x.values).map(GraphSignal::new)
}

/// A normalized shift operator `S/m` with its eigendecomposition computed
/// on first use. Polynomial filters never trigger the decomposition.
#[derive(Debug)]
pub struct GraphOperator {
    shift: DMatrix<f64>,
    spectrum: OnceLock<SignedSpectrum>,
}

impl GraphOperator {
    pub fn new(g: &Graph, m: f64) -> Result<Self> {
        if !(m > 0.0) {
            return Err(Error::Domain(format!("normalization m = {m} must be positive")));
        }
        Ok(Self {
            shift: g.gso() / m,
            spectrum: OnceLock::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.shift.nrows()
    }

    /// The normalized matrix `S/m`.
    pub fn shift(&self) -> &DMatrix<f64> {
        &self.shift
    }

    pub fn spectrum(&self) -> Result<&SignedSpectrum> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let s = decompose(&self.shift, Scale::Graph)?;
        Ok(self.spectrum.get_or_init(|| s))
    }

    pub fn apply(&self, filter: &Filter, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n(), x.len())?;
        match filter {
            Filter::Poly(p) => Ok(horner(&p.coeffs, &self.shift, 1.0, x)),
            Filter::Band(_) => spectral_apply(filter, self.spectrum()?, x),
        }
    }
}

/// Discretized graphon convolution: filters the `n`-point samples of `x` on
/// the deterministic graph of `w` with normalization `m = n` and returns the
/// induced step signal.
pub fn graphon_convolution(
    filter: &Filter,
    w: &Graphon,
    n: usize,
    x: &GraphonSignal,
) -> Result<GraphonSignal> {
    if n < 2 {
        return Err(Error::Domain(format!("grid resolution {n} must be at least 2")));
    }
    let op = GraphOperator::new(&deterministic_graph(w, n)?, n as f64)?;
    let xs = sample_signal(x, n)?;
    Ok(GraphSignal::new(op.apply(filter, &xs.values)?).induce())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct As1Estimate {
    /// Lipschitz constant of the response.
    pub a2: f64,
    /// `sup |h|` on `[-1, 1]`.
    pub sup: f64,
    /// Whether `sup < 1` (non-amplification is strict).
    pub pass: bool,
}

fn probe(i: usize, probes: usize) -> f64 {
    -1.0 + 2.0 * i as f64 / (probes - 1) as f64
}

/// Maximizes `|f|` on `[lo, hi]` by golden-section search.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a).abs(), f(b).abs());
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b).abs();
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a).abs();
        }
    }
    fa.max(fb)
}

/// `sup |h|` on `[-1, 1]` for a polynomial: grid scan refined around every
/// local maximum of `|h|`.
pub fn poly_sup(f: &PolyFilter, probes: usize) -> f64 {
    let probes = probes.max(3);
    let vals: Vec<f64> = (0..probes).map(|i| f.response(probe(i, probes)).abs()).collect();
    let mut best = vals.iter().copied().fold(0.0, f64::max);
    for i in 1..probes - 1 {
        if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
            let g = golden_max(|l| f.response(l), probe(i - 1, probes), probe(i + 1, probes));
            best = best.max(g);
        }
    }
    best
}

/// Lipschitz constant and sup of the response, and whether `|h| < 1`.
/// Polynomials use the largest finite-difference ratio between adjacent
/// probes; band responses use their closed form.
pub fn estimate_as1(filter: &Filter, probes: usize) -> Result<As1Estimate> {
    if probes < 2 {
        return Err(Error::Domain(format!("need at least 2 probes, got {probes}")));
    }
    let (a2, sup) = match filter {
        Filter::Band(b) => (b.lipschitz(), b.sup()),
        Filter::Poly(p) => {
            let step = 2.0 / (probes - 1) as f64;
            let a2 = (0..probes - 1)
                .map(|i| (p.response(probe(i + 1, probes)) - p.response(probe(i, probes))).abs() / step)
                .fold(0.0, f64::max);
            (a2, poly_sup(p, probes))
        }
    };
    Ok(As1Estimate {
        a2,
        sup,
        pass: sup < 1.0,
    })
}

/// Rescales `f` so that `sup |h| <= 1 - eta`; filters already inside the
/// margin, and the zero filter, are returned unchanged.
pub fn project_as1(f: &PolyFilter, eta: f64) -> Result<PolyFilter> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Domain(format!("margin eta = {eta} must lie in (0, 1)")));
    }
    let sup = poly_sup(f, DEFAULT_PROBES);
    if sup == 0.0 || sup < 1.0 - eta {
        return Ok(f.clone());
    }
    let scale = (1.0 - eta) / sup;
    Ok(PolyFilter {
        coeffs: f.coeffs.iter().map(|c| c * scale).collect(),
    })
}

/// How far a polynomial response is from constant on `|lambda| < c`:
/// `max h - min h` over the open band, refined at interior extrema.
pub fn band_constancy_deviation(f: &PolyFilter, c: f64, probes: usize) -> f64 {
    let probes = probes.max(3);
    let pts: Vec<f64> = (0..probes)
        .map(|i| -c + 2.0 * c * (i as f64 + 0.5) / probes as f64)
        .collect();
    let vals: Vec<f64> = pts.iter().map(|&l| f.response(l)).collect();
    let (mut lo, mut hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    // Stationary points of h lie where h' changes sign between probes.
    for i in 0..probes - 1 {
        let (d0, d1) = (f.derivative(pts[i]), f.derivative(pts[i + 1]));
        if d0 * d1 < 0.0 {
            let (mut a, mut b) = (pts[i], pts[i + 1]);
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if f.derivative(a) * f.derivative(mid) <= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            let v = f.response(0.5 * (a + b));
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    hi - lo
}
