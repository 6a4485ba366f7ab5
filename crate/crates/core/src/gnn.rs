//! Layered graph and graphon neural networks built from filter banks and a
//! pointwise nonlinearity, plus a full-batch gradient-descent trainer for
//! polynomial filter coefficients.

use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{project_as1, BandFilter, Filter, GraphOperator, PolyFilter};
use crate::graphon::Graphon;
use crate::io::{fmt_f64, read_json, write_json, write_table};
use crate::sampling::{deterministic_graph, sample_signal, Graph, GraphSignal, GraphonSignal};

/// Pointwise nonlinearities with `sigma(0) = 0` and Lipschitz constant 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    #[default]
    Relu,
    Abs,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => a.max(0.0),
            Nonlinearity::Abs => a.abs(),
            Nonlinearity::Tanh => a.tanh(),
        }
    }

    /// Subgradient; kinks at 0 take the value 0.
    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Abs => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Tanh => 1.0 - a.tanh().powi(2),
        }
    }
}

/// Network parameters. `layers[l]` holds the `widths[l+1] x widths[l]` bank
/// of layer `l + 1` in row-major order: the filter from input feature `g` to
/// output feature `f` sits at `f * widths[l] + g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    pub widths: Vec<usize>,
    pub nonlinearity: Nonlinearity,
    pub layers: Vec<Vec<Filter>>,
}

impl GnnParams {
    pub fn new(widths: Vec<usize>, layers: Vec<Vec<Filter>>, nonlinearity: Nonlinearity) -> Result<Self> {
        let p = Self {
            widths,
            nonlinearity,
            layers,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.widths;
        if w.len() < 2 {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        if w[0] != 1 || w[w.len() - 1] != 1 {
            return Err(Error::Config(format!(
                "input and output widths must be 1, got {} and {}",
                w[0],
                w[w.len() - 1]
            )));
        }
        if w.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if self.layers.len() != w.len() - 1 {
            return Err(Error::Config(format!(
                "{} widths imply {} layers, got {}",
                w.len(),
                w.len() - 1,
                self.layers.len()
            )));
        }
        for (l, bank) in self.layers.iter().enumerate() {
            if bank.len() != w[l + 1] * w[l] {
                return Err(Error::Config(format!(
                    "layer {} bank has {} filters, expected {} x {}",
                    l + 1,
                    bank.len(),
                    w[l + 1],
                    w[l]
                )));
            }
        }
        Ok(())
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Largest hidden width `F` (1 for single-layer networks).
    pub fn hidden_width(&self) -> usize {
        self.widths.iter().copied().max().unwrap_or(1)
    }

    pub fn filters(&self) -> impl Iterator<Item = &Filter> {
        self.layers.iter().flatten()
    }

    /// `"band"`, `"poly"` or `"mixed"`.
    pub fn filter_form(&self) -> &'static str {
        let mut forms = self.filters().map(Filter::form);
        let first = forms.next().unwrap_or("poly");
        if forms.all(|f| f == first) {
            first
        } else {
            "mixed"
        }
    }

    /// `L` layers of width `F` with every filter produced by `make`.
    pub fn uniform(
        layers: usize,
        width: usize,
        nonlinearity: Nonlinearity,
        mut make: impl FnMut() -> Filter,
    ) -> Result<Self> {
        if layers == 0 || width == 0 {
            return Err(Error::Config("layers and width must be positive".into()));
        }
        let mut widths = vec![width; layers + 1];
        widths[0] = 1;
        widths[layers] = 1;
        let banks = (0..layers)
            .map(|l| (0..widths[l + 1] * widths[l]).map(|_| make()).collect())
            .collect();
        Self::new(widths, banks, nonlinearity)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = read_json(path)?;
        p.validate()?;
        Ok(p)
    }
}

/// Random band filters with `base ~ U(-0.5, 0.5)` and `gain ~ U(0, 0.5)`,
/// shrunk when needed so that `|base| + gain <= 1 - eta`.
pub fn random_band_params(
    layers: usize,
    width: usize,
    cutoff: f64,
    eta: f64,
    nonlinearity: Nonlinearity,
    seed: u64,
) -> Result<GnnParams> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Config(format!("margin eta = {eta} must lie in (0, 1)")));
    }
    BandFilter::new(cutoff, 0.0, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    GnnParams::uniform(layers, width, nonlinearity, || {
        let mut base: f64 = rng.random_range(-0.5..0.5);
        let mut gain: f64 = rng.random_range(0.0..0.5);
        let sup = base.abs() + gain;
        if sup > 1.0 - eta {
            base *= (1.0 - eta) / sup;
            gain *= (1.0 - eta) / sup;
        }
        Filter::Band(BandFilter { cutoff, base, gain })
    })
}

/// Random polynomial filters with taps `~ U(-1, 1) / K`, projected so that
/// `sup |h| <= 1 - eta`.
pub fn random_poly_params(
    layers: usize,
    width: usize,
    taps: usize,
    eta: f64,
    nonlinearity: Nonlinearity,
    seed: u64,
) -> Result<GnnParams> {
    if taps == 0 {
        return Err(Error::Config("polynomial filters need at least one tap".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = None;
    let p = GnnParams::uniform(layers, width, nonlinearity, || {
        let coeffs = (0..taps).map(|_| rng.random_range(-1.0..1.0) / taps as f64).collect();
        match project_as1(&PolyFilter { coeffs }, eta) {
            Ok(f) => Filter::Poly(f),
            Err(e) => {
                err = Some(e);
                Filter::Poly(PolyFilter::identity())
            }
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(p),
    }
}

/// Powers `P^k x` for `k < taps`.
fn powers(op: &GraphOperator, x: &DVector<f64>, taps: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(taps);
    out.push(x.clone());
    for k in 1..taps {
        out.push(op.shift() * &out[k - 1]);
    }
    out
}

fn max_taps(bank: &[Filter]) -> Option<usize> {
    bank.iter()
        .map(|f| match f {
            Filter::Poly(p) => Some(p.taps()),
            Filter::Band(_) => None,
        })
        .try_fold(0, |acc, t| t.map(|t| acc.max(t)))
}

struct LayerCache {
    /// `powers[g][k] = P^k x_g`.
    powers: Vec<Vec<DVector<f64>>>,
    pre: Vec<DVector<f64>>,
}

/// Pre-activations of one layer, with the shifted inputs when the bank is
/// polynomial.
fn layer_pre(
    op: &GraphOperator,
    bank: &[Filter],
    fin: usize,
    fout: usize,
    inputs: &[DVector<f64>],
) -> Result<LayerCache> {
    let n = op.n();
    if let Some(taps) = max_taps(bank) {
        let pw: Vec<Vec<DVector<f64>>> = inputs.iter().map(|x| powers(op, x, taps)).collect();
        let pre = (0..fout)
            .map(|f| {
                let mut a = DVector::zeros(n);
                for (g, zs) in pw.iter().enumerate() {
                    if let Filter::Poly(p) = &bank[f * fin + g] {
                        for (h, z) in p.coeffs.iter().zip(zs) {
                            a.axpy(*h, z, 1.0);
                        }
                    }
                }
                a
            })
            .collect();
        return Ok(LayerCache { powers: pw, pre });
    }
    if bank.iter().all(|f| matches!(f, Filter::Band(_))) {
        // Transform each input once and combine the responses in the
        // eigenbasis.
        let spec = op.spectrum()?;
        let v = spec.vectors().expect("operator spectra carry eigenvectors");
        let lambdas = spec.values();
        let coefs: Vec<DVector<f64>> = inputs.iter().map(|x| v.tr_mul(x)).collect();
        let pre = (0..fout)
            .map(|f| {
                let mut acc = DVector::zeros(lambdas.len());
                for (g, c) in coefs.iter().enumerate() {
                    let filt = &bank[f * fin + g];
                    for (i, l) in lambdas.iter().enumerate() {
                        acc[i] += filt.response(*l) * c[i];
                    }
                }
                v * acc
            })
            .collect();
        return Ok(LayerCache {
            powers: Vec::new(),
            pre,
        });
    }
    let mut pre = vec![DVector::zeros(n); fout];
    for (f, a) in pre.iter_mut().enumerate() {
        for (g, x) in inputs.iter().enumerate() {
            *a += op.apply(&bank[f * fin + g], x)?;
        }
    }
    Ok(LayerCache {
        powers: Vec::new(),
        pre,
    })
}

fn forward_cached(
    params: &GnnParams,
    op: &GraphOperator,
    x: &DVector<f64>,
) -> Result<(Vec<LayerCache>, DVector<f64>)> {
    params.validate()?;
    if x.len() != op.n() {
        return Err(Error::Shape {
            expected: op.n(),
            actual: x.len(),
        });
    }
    let sigma = params.nonlinearity;
    let mut feats = vec![x.clone()];
    let mut caches = Vec::with_capacity(params.depth());
    for (l, bank) in params.layers.iter().enumerate() {
        let cache = layer_pre(op, bank, params.widths[l], params.widths[l + 1], &feats)?;
        feats = cache.pre.iter().map(|a| a.map(|v| sigma.apply(v))).collect();
        caches.push(cache);
    }
    Ok((caches, feats.pop().expect("output width is 1")))
}

/// Forward map on a prepared (normalized) operator.
pub fn forward(params: &GnnParams, op: &GraphOperator, x: &DVector<f64>) -> Result<DVector<f64>> {
    forward_cached(params, op, x).map(|(_, y)| y)
}

/// `Phi(H; S/m; x)`.
pub fn gnn_forward(params: &GnnParams, g: &Graph, m: f64, x: &GraphSignal) -> Result<GraphSignal> {
    let op = GraphOperator::new(g, m)?;
    forward(params, &op, &x.values).map(GraphSignal::new)
}

/// The graphon network evaluated on the `n`-point deterministic graph with
/// normalization `m = n`, returned as a step signal.
pub fn wnn_forward(params: &GnnParams, w: &Graphon, n: usize, x: &GraphonSignal) -> Result<GraphonSignal> {
    if n < 2 {
        return Err(Error::Domain(format!("grid resolution {n} must be at least 2")));
    }
    let g = deterministic_graph(w, n)?;
    let xs = sample_signal(x, n)?;
    Ok(gnn_forward(params, &g, n as f64, &xs)?.induce())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputDiff {
    /// `||y' - y||_2`.
    pub l2: f64,
    /// `||y' - y||_2 / sqrt(n)`: the same difference in `L^2([0, 1])`.
    pub l2_normalized: f64,
    /// `||y' - y|| / ||y||` (NaN when `y = 0`).
    pub relative: f64,
}

impl OutputDiff {
    pub fn between(y: &DVector<f64>, y2: &DVector<f64>) -> Self {
        let l2 = (y2 - y).norm();
        let base = y.norm();
        Self {
            l2,
            l2_normalized: l2 / (y.len() as f64).sqrt(),
            relative: if base > 0.0 { l2 / base } else { f64::NAN },
        }
    }
}

/// Measured output difference between the same network on two graphs.
pub fn empirical_output_diff(
    params: &GnnParams,
    g: &Graph,
    g2: &Graph,
    m: f64,
    x: &GraphSignal,
) -> Result<OutputDiff> {
    if g.n() != g2.n() {
        return Err(Error::Shape {
            expected: g.n(),
            actual: g2.n(),
        });
    }
    let y = gnn_forward(params, g, m, x)?;
    let y2 = gnn_forward(params, g2, m, x)?;
    Ok(OutputDiff::between(&y.values, &y2.values))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Restrict the loss to one node (e.g. the rated item of each sample).
    pub target_index: Option<usize>,
}

/// Training samples: input signal and target.
pub type Sample = (GraphSignal, GraphSignal);

/// Mean squared error and its gradient with respect to every coefficient,
/// laid out as `grads[layer][filter][tap]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grads: Vec<Vec<Vec<f64>>>,
}

fn require_poly(params: &GnnParams) -> Result<()> {
    if params.filters().all(|f| matches!(f, Filter::Poly(_))) {
        Ok(())
    } else {
        Err(Error::Config("training needs polynomial filter banks".into()))
    }
}

fn check_samples(samples: &[Sample], n: usize, target: Option<usize>) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Config("training needs at least one sample".into()));
    }
    for (x, t) in samples {
        for len in [x.len(), t.len()] {
            if len != n {
                return Err(Error::Shape {
                    expected: n,
                    actual: len,
                });
            }
        }
    }
    if let Some(i) = target.filter(|&i| i >= n) {
        return Err(Error::Config(format!("target index {i} outside 0..{n}")));
    }
    Ok(())
}

fn poly(f: &Filter) -> &PolyFilter {
    match f {
        Filter::Poly(p) => p,
        Filter::Band(_) => unreachable!("checked by require_poly"),
    }
}

/// Loss `mean_s mean_i (y_i - t_i)^2` (over all nodes, or the target node
/// only) and its analytic gradient.
pub fn mse_gradient(
    params: &GnnParams,
    op: &GraphOperator,
    samples: &[Sample],
    target: Option<usize>,
) -> Result<LossGradient> {
    require_poly(params)?;
    check_samples(samples, op.n(), target)?;
    let sigma = params.nonlinearity;
    let mut grads: Vec<Vec<Vec<f64>>> = params
        .layers
        .iter()
        .map(|bank| bank.iter().map(|f| vec![0.0; poly(f).taps()]).collect())
        .collect();
    let count = target.map_or(op.n(), |_| 1) as f64;
    let scale = 1.0 / (samples.len() as f64 * count);
    let mut loss = 0.0;

    for (x, t) in samples {
        let (caches, y) = forward_cached(params, op, &x.values)?;
        let mut resid = &y - &t.values;
        if let Some(i) = target {
            let r = resid[i];
            resid.fill(0.0);
            resid[i] = r;
        }
        loss += resid.norm_squared() * scale;

        // Gradient with respect to the outputs of the current layer.
        let mut upstream = vec![resid * (2.0 * scale)];
        for l in (0..params.depth()).rev() {
            let (fin, fout) = (params.widths[l], params.widths[l + 1]);
            let bank = &params.layers[l];
            let cache = &caches[l];
            let deltas: Vec<DVector<f64>> = (0..fout)
                .map(|f| upstream[f].zip_map(&cache.pre[f], |d, a| d * sigma.derivative(a)))
                .collect();
            for f in 0..fout {
                for g in 0..fin {
                    for (k, slot) in grads[l][f * fin + g].iter_mut().enumerate() {
                        *slot += deltas[f].dot(&cache.powers[g][k]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            // dL/dx_g = sum_k P^k (sum_f h_k^{fg} delta_f), by Horner over k.
            upstream = (0..fin)
                .map(|g| {
                    let taps = (0..fout).map(|f| poly(&bank[f * fin + g]).taps()).max().unwrap_or(1);
                    let tap_sum = |k: usize| {
                        let mut c = DVector::zeros(op.n());
                        for (f, d) in deltas.iter().enumerate() {
                            if let Some(&h) = poly(&bank[f * fin + g]).coeffs.get(k) {
                                c.axpy(h, d, 1.0);
                            }
                        }
                        c
                    };
                    let mut r = tap_sum(taps - 1);
                    for k in (0..taps - 1).rev() {
                        r = op.shift() * r + tap_sum(k);
                    }
                    r
                })
                .collect();
        }
    }
    Ok(LossGradient { loss, grads })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: GnnParams,
    /// Loss before each step, then after the last one (`steps + 1` values).
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the mean squared error.
pub fn train_mse(
    init: &GnnParams,
    samples: &[Sample],
    g: &Graph,
    m: f64,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    let op = GraphOperator::new(g, m)?;
    train_on(init, samples, &op, opts)
}

/// [`train_mse`] on a prepared operator.
pub fn train_on(
    init: &GnnParams,
    samples: &[Sample],
    op: &GraphOperator,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if !(opts.learning_rate.is_finite() && opts.learning_rate >= 0.0) {
        return Err(Error::Config(format!(
            "learning rate {} must be a nonnegative number",
            opts.learning_rate
        )));
    }
    let mut params = init.clone();
    let mut losses = Vec::with_capacity(opts.steps + 1);
    for step in 0..=opts.steps {
        let lg = mse_gradient(&params, op, samples, opts.target_index)?;
        if !lg.loss.is_finite() {
            return Err(Error::Divergence { step, loss: lg.loss });
        }
        losses.push(lg.loss);
        if step == opts.steps {
            break;
        }
        for (bank, gbank) in params.layers.iter_mut().zip(&lg.grads) {
            for (f, gf) in bank.iter_mut().zip(gbank) {
                if let Filter::Poly(p) = f {
                    for (h, d) in p.coeffs.iter_mut().zip(gf) {
                        *h -= opts.learning_rate * d;
                    }
                }
            }
        }
    }
    Ok(TrainOutcome { params, losses })
}

/// Writes `step,loss` rows.
pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let rows: Vec<Vec<String>> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| vec![i.to_string(), fmt_f64(*l)])
        .collect();
    write_table(path, &["step", "loss"], &rows)
}
