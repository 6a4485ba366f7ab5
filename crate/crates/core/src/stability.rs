//! Stability bounds for graphon filters, WNNs and GNNs on deterministic and
//! stochastic graphs, the assumption checks they rest on, and per-cell
//! reports that set each bound against the measured output difference.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{band_constancy_deviation, estimate_as1, Filter, GraphOperator, DEFAULT_PROBES};
use crate::gnn::{forward, GnnParams, OutputDiff};
use crate::graphon::{estimate_lipschitz, perturb, Graphon, Kernel, PerturbationSpec, SymmetricKernel};
use crate::io::fmt_f64;
use crate::sampling::{deterministic_graph, sample_signal, stochastic_graph, Graph, GraphonSignal};
use crate::spectral::{
    concentration_bound, degree_condition, delta_c, eigenvalues, n_c, operator_norm,
    operator_norm_matrix, DegreeCondition, Scale, SignedSpectrum, DEFAULT_RESOLUTION,
};

/// Eigengaps at or below this are treated as zero: the bound is infinite.
pub const DEGENERATE_GAP: f64 = 1e-12;

/// `A_2 + pi n_c / delta_c`. An empty band (`n_c = 0`) contributes nothing;
/// a degenerate gap makes the factor infinite.
pub fn spectral_factor(a2: f64, n_c: usize, delta: f64) -> f64 {
    if n_c == 0 {
        a2
    } else if delta <= DEGENERATE_GAP {
        f64::INFINITY
    } else {
        a2 + PI * n_c as f64 / delta
    }
}

/// `L F^{L-1}`.
pub fn depth_factor(layers: usize, width: usize) -> f64 {
    layers as f64 * (width as f64).powi(layers as i32 - 1)
}

/// `factor * multiplier`, with a zero multiplier winning over an infinite
/// factor (no perturbation, no difference).
fn scaled(factor: f64, multiplier: f64) -> f64 {
    if multiplier == 0.0 {
        0.0
    } else {
        factor * multiplier
    }
}

/// Filter-level bound `(A_2 + pi n_c / delta_c) eps ||X||`.
pub fn bound_thm4(a2: f64, n_c: usize, delta: f64, eps: f64, x_norm: f64) -> f64 {
    scaled(spectral_factor(a2, n_c, delta), eps * x_norm)
}

/// WNN bound `L F^{L-1} (A_2 + pi n_c / delta_c) eps ||X||`.
pub fn bound_thm1(layers: usize, width: usize, a2: f64, n_c: usize, delta: f64, eps: f64, x_norm: f64) -> f64 {
    depth_factor(layers, width) * bound_thm4(a2, n_c, delta, eps, x_norm)
}

/// `B = sqrt(A_1) + sqrt(A_1 + A_3)`.
pub fn b_constant(a1: f64, a3: f64) -> f64 {
    a1.sqrt() + (a1 + a3).sqrt()
}

/// Deterministic-graph bound
/// `L F^{L-1} (A_2 + pi n / delta) (eps + B / sqrt(n)) ||x_n||`.
#[allow(clippy::too_many_arguments)]
pub fn bound_thm2(
    layers: usize,
    width: usize,
    a2: f64,
    n_hat: usize,
    delta_hat: f64,
    eps: f64,
    b: f64,
    n: usize,
    x_norm: f64,
) -> f64 {
    let mult = (eps + b / (n as f64).sqrt()) * x_norm;
    depth_factor(layers, width) * scaled(spectral_factor(a2, n_hat, delta_hat), mult)
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("failure probability xi = {xi} must lie in (0, 1)")))
    }
}

/// `sqrt(log(2n / xi))`.
fn log_term(n: usize, xi: f64) -> f64 {
    (2.0 * n as f64 / xi).ln().sqrt()
}

/// Stochastic-graph bound
/// `L F^{L-1} (A_2 + pi n / delta) (eps + (B + 4 sqrt(log(2n/xi))) / sqrt(n)) ||x_n||`,
/// holding with probability at least `1 - xi`.
#[allow(clippy::too_many_arguments)]
pub fn bound_thm3(
    layers: usize,
    width: usize,
    a2: f64,
    n_check: usize,
    delta_check: f64,
    eps: f64,
    b: f64,
    n: usize,
    xi: f64,
    x_norm: f64,
) -> Result<f64> {
    check_xi(xi)?;
    let mult = (eps + (b + 4.0 * log_term(n, xi)) / (n as f64).sqrt()) * x_norm;
    Ok(depth_factor(layers, width) * scaled(spectral_factor(a2, n_check, delta_check), mult))
}

/// Deterministic-versus-stochastic bound
/// `L F^{L-1} (A_2 + pi n_q / delta_pq) (2 sqrt(log(2n/xi)) / sqrt(n)) ||x_n||`.
#[allow(clippy::too_many_arguments)]
pub fn bound_lemma1(
    layers: usize,
    width: usize,
    a2: f64,
    n_q: usize,
    delta_pq: f64,
    n: usize,
    xi: f64,
    x_norm: f64,
) -> Result<f64> {
    check_xi(xi)?;
    let mult = 2.0 * log_term(n, xi) / (n as f64).sqrt() * x_norm;
    Ok(depth_factor(layers, width) * scaled(spectral_factor(a2, n_q, delta_pq), mult))
}

/// Outcome of the degree assumption behind the stochastic bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct As4Check {
    /// `n - log(2n/xi)/d_W - 2 A_1 / d_W`.
    pub margin_w: f64,
    /// `n - log(2n/xi)/d_W' - 2 (A_1 + A_3) / d_W'`.
    pub margin_w2: f64,
    /// False when a maximum degree is zero.
    pub applicable: bool,
    pub pass: bool,
}

/// Checks `n - log(2n/xi)/d_W > 2 A_1 / d_W` and the same for `W'` with
/// `A_1 + A_3`.
pub fn check_as4(n: usize, xi: f64, d_w: f64, d_w2: f64, a1: f64, a3: f64) -> Result<As4Check> {
    check_xi(xi)?;
    if !(d_w > 0.0 && d_w2 > 0.0) {
        return Ok(As4Check {
            margin_w: f64::NAN,
            margin_w2: f64::NAN,
            applicable: false,
            pass: false,
        });
    }
    let nf = n as f64;
    let log = (2.0 * nf / xi).ln();
    let margin_w = nf - log / d_w - 2.0 * a1 / d_w;
    let margin_w2 = nf - log / d_w2 - 2.0 * (a1 + a3) / d_w2;
    Ok(As4Check {
        margin_w,
        margin_w2,
        applicable: true,
        pass: margin_w > 0.0 && margin_w2 > 0.0,
    })
}

/// Where a Lipschitz constant came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantSource {
    Supplied,
    ClosedForm,
    Estimated,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub source: ConstantSource,
    /// The kernel has jumps, so no finite constant exists.
    pub non_lipschitz: bool,
}

fn resolve_constant(supplied: Option<f64>, k: &impl SymmetricKernel, probes: usize) -> Result<Constant> {
    if let Some(value) = supplied {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::Config(format!("Lipschitz constant {value} must be finite and nonnegative")));
        }
        return Ok(Constant {
            value,
            source: ConstantSource::Supplied,
            non_lipschitz: k.is_step() && k.lipschitz_closed_form().is_none(),
        });
    }
    let est = estimate_lipschitz(k, probes)?;
    Ok(Constant {
        value: est.value,
        source: if est.closed_form {
            ConstantSource::ClosedForm
        } else {
            ConstantSource::Estimated
        },
        non_lipschitz: est.non_lipschitz,
    })
}

/// Options shared by every cell of one experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetupOptions {
    /// Band cutoff `c` for the spectral constants.
    pub cutoff: f64,
    pub xi: f64,
    /// Grid resolution for the reference spectra of `W`, `W'` and for `||A||`.
    pub reference_resolution: usize,
    pub a1: Option<f64>,
    pub a3: Option<f64>,
    /// Probe grid for estimated Lipschitz constants.
    pub lipschitz_probes: usize,
}

impl Default for SetupOptions {
    fn default() -> Self {
        Self {
            cutoff: 0.2,
            xi: 0.05,
            reference_resolution: DEFAULT_RESOLUTION,
            a1: None,
            a3: None,
            lipschitz_probes: 512,
        }
    }
}

/// Quantities that depend on the graphon pair but not on the graph size.
#[derive(Clone, Debug)]
pub struct StabilitySetup {
    pub w: Graphon,
    pub w2: Graphon,
    pub kernel: Kernel,
    pub options: SetupOptions,
    /// `||A||`.
    pub epsilon: f64,
    pub a1: Constant,
    pub a3: Constant,
    pub spectrum_w: SignedSpectrum,
    pub spectrum_w2: SignedSpectrum,
    pub degree_w: f64,
    pub degree_w2: f64,
    pub signal: GraphonSignal,
}

impl StabilitySetup {
    pub fn new(
        w: &Graphon,
        perturbation: &PerturbationSpec,
        signal: GraphonSignal,
        options: SetupOptions,
    ) -> Result<Self> {
        if !(options.cutoff > 0.0 && options.cutoff < 1.0) {
            return Err(Error::Config(format!("band cutoff {} must lie in (0, 1)", options.cutoff)));
        }
        check_xi(options.xi).map_err(|e| Error::Config(e.to_string()))?;
        if options.reference_resolution < 2 {
            return Err(Error::Config("reference resolution must be at least 2".into()));
        }
        let (w2, kernel) = perturb(w, perturbation)?;
        let nref = options.reference_resolution;
        let spectrum_of = |g: &Graphon| -> Result<SignedSpectrum> {
            eigenvalues(deterministic_graph(g, nref)?.gso(), Scale::Graphon)
        };
        Ok(Self {
            epsilon: operator_norm(&kernel, nref)?,
            a1: resolve_constant(options.a1, w, options.lipschitz_probes)?,
            a3: resolve_constant(options.a3, &kernel, options.lipschitz_probes)?,
            spectrum_w: spectrum_of(w)?,
            spectrum_w2: spectrum_of(&w2)?,
            degree_w: w.max_degree(),
            degree_w2: w2.max_degree(),
            w: w.clone(),
            w2,
            kernel,
            options,
            signal,
        })
    }

    pub fn b(&self) -> f64 {
        b_constant(self.a1.value, self.a3.value)
    }
}

/// Graphon-scale spectrum of a normalized operator, reusing its full
/// decomposition when one already exists.
fn operator_spectrum(op: &GraphOperator, g: &Graph, full: bool) -> Result<SignedSpectrum> {
    if full {
        let values = op.spectrum()?.values();
        Ok(SignedSpectrum::from_values(&values, Scale::Graphon))
    } else {
        eigenvalues(g.gso(), Scale::Graphon)
    }
}

fn needs_decomposition(params: &GnnParams) -> bool {
    params.filters().any(|f| matches!(f, Filter::Band(_)))
}

/// Per-size state: the deterministic graphs of `W` and `W'`, their
/// operators (normalized by `n`) and spectra, and the sampled signal.
#[derive(Debug)]
pub struct SizeContext {
    pub n: usize,
    pub graph_w: Graph,
    pub graph_w2: Graph,
    pub op_w: GraphOperator,
    pub op_w2: GraphOperator,
    pub spectrum_w: SignedSpectrum,
    pub spectrum_w2: SignedSpectrum,
    pub x: DVector<f64>,
}

impl SizeContext {
    /// `full_decomposition` should be set when band filters will run on these
    /// graphs, so the eigendecomposition is computed once and shared.
    pub fn new(setup: &StabilitySetup, n: usize, full_decomposition: bool) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("graph size {n} must be at least 2")));
        }
        let graph_w = deterministic_graph(&setup.w, n)?;
        let graph_w2 = deterministic_graph(&setup.w2, n)?;
        let op_w = GraphOperator::new(&graph_w, n as f64)?;
        let op_w2 = GraphOperator::new(&graph_w2, n as f64)?;
        let spectrum_w = operator_spectrum(&op_w, &graph_w, full_decomposition)?;
        let spectrum_w2 = operator_spectrum(&op_w2, &graph_w2, full_decomposition)?;
        Ok(Self {
            n,
            x: sample_signal(&setup.signal, n)?.values,
            graph_w,
            graph_w2,
            op_w,
            op_w2,
            spectrum_w,
            spectrum_w2,
        })
    }

    pub fn for_params(setup: &StabilitySetup, n: usize, params: &GnnParams) -> Result<Self> {
        Self::new(setup, n, needs_decomposition(params))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Deterministic,
    Stochastic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Deterministic => "deterministic",
            Mode::Stochastic => "stochastic",
        })
    }
}

/// Spectral norms of the sampling noise `S_bar - S` against the
/// concentration radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCheck {
    pub deviation_w: f64,
    pub deviation_w2: f64,
    pub threshold: f64,
    pub degree_w: DegreeCondition,
    pub degree_w2: DegreeCondition,
}

impl ConcentrationCheck {
    pub fn pass(&self) -> bool {
        self.deviation_w <= self.threshold && self.deviation_w2 <= self.threshold
    }
}

/// Spectral constants of one cell, keyed by the labels
/// 1 = `W`, 2 = `W'`, 3 = `W_bar_n`, 4 = `W_bar'_n`, 5 = `W_n`, 6 = `W'_n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectralConstants {
    pub n_c: BTreeMap<String, usize>,
    /// `delta_c^{(pq)}` keyed `"pq"`; absent when the band of `q` is empty.
    pub delta_c: BTreeMap<String, f64>,
}

impl SpectralConstants {
    fn add_count(&mut self, label: u8, spec: &SignedSpectrum, c: f64) -> Result<()> {
        self.n_c.insert(label.to_string(), n_c(spec, c)?);
        Ok(())
    }

    fn add_gap(&mut self, p: u8, q: u8, sp: &SignedSpectrum, sq: &SignedSpectrum, c: f64) -> Result<()> {
        match delta_c(sp, sq, c) {
            Ok(d) => {
                self.delta_c.insert(format!("{p}{q}"), d);
                Ok(())
            }
            Err(Error::UndefinedGap { .. }) => Ok(()),
            Err(e) => Err(e),
        }
    }

    pub fn count(&self, label: u8) -> usize {
        self.n_c.get(&label.to_string()).copied().unwrap_or(0)
    }

    /// Largest count over `labels`.
    pub fn max_count(&self, labels: &[u8]) -> usize {
        labels.iter().map(|&l| self.count(l)).max().unwrap_or(0)
    }

    /// Smallest defined gap over `pairs`; infinite when none is defined
    /// (every band is empty).
    pub fn min_gap(&self, pairs: &[(u8, u8)]) -> f64 {
        pairs
            .iter()
            .filter_map(|(p, q)| self.delta_c.get(&format!("{p}{q}")))
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// One row of a stability experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: usize,
    pub seed: u64,
    pub mode: Mode,
    pub filter_form: String,
    pub layers: usize,
    pub width: usize,
    pub cutoff: f64,
    pub xi: f64,
    pub epsilon: f64,
    pub a1: Constant,
    pub a2: f64,
    pub a3: Constant,
    pub b: f64,
    pub constants: SpectralConstants,
    /// `n_hat` (deterministic) or `n_check` (stochastic).
    pub n_c_max: usize,
    /// `delta_hat` (deterministic) or `delta_check` (stochastic).
    pub delta_c_min: f64,
    /// `||X||` in `L^2([0, 1])`.
    pub signal_norm_l2: f64,
    /// `||x_n||_2`.
    pub signal_norm_graph: f64,
    pub bound_thm4: Option<f64>,
    pub bound_thm1: Option<f64>,
    pub bound_thm2: Option<f64>,
    pub bound_thm3: Option<f64>,
    pub bound_lemma1: Option<f64>,
    pub empirical: OutputDiff,
    pub as1_pass: bool,
    pub as4: As4Check,
    pub band_deviation: Option<f64>,
    pub concentration: Option<ConcentrationCheck>,
    pub flags: Vec<String>,
}

/// Column names of the stability table.
pub const REPORT_COLUMNS: [&str; 20] = [
    "n",
    "seed",
    "mode",
    "filter_form",
    "epsilon",
    "A1",
    "A2",
    "A3",
    "B",
    "n_c_max",
    "delta_c_min",
    "bound_thm1",
    "bound_thm2",
    "bound_thm3",
    "bound_lemma1",
    "empirical_l2",
    "empirical_rel",
    "as1_pass",
    "as4_pass",
    "flags",
];

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), fmt_f64)
}

impl StabilityReport {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.seed.to_string(),
            self.mode.to_string(),
            self.filter_form.clone(),
            fmt_f64(self.epsilon),
            fmt_f64(self.a1.value),
            fmt_f64(self.a2),
            fmt_f64(self.a3.value),
            fmt_f64(self.b),
            self.n_c_max.to_string(),
            fmt_f64(self.delta_c_min),
            opt(self.bound_thm1),
            opt(self.bound_thm2),
            opt(self.bound_thm3),
            opt(self.bound_lemma1),
            fmt_f64(self.empirical.l2),
            fmt_f64(self.empirical.relative),
            self.as1_pass.to_string(),
            if self.as4.applicable {
                self.as4.pass.to_string()
            } else {
                "NA".into()
            },
            self.flags.join(";"),
        ]
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.flags.iter().any(|f| f == flag)
    }

    /// The bound that applies to this row's measured difference: the
    /// deterministic-graph bound or the stochastic one.
    pub fn governing_bound(&self) -> Option<f64> {
        match self.mode {
            Mode::Deterministic => self.bound_thm2,
            Mode::Stochastic => self.bound_thm3,
        }
    }
}

/// Flag names used in reports.
pub mod flags {
    pub const ESTIMATED_CONSTANT: &str = "estimated-constant";
    pub const NON_LIPSCHITZ: &str = "non-lipschitz";
    pub const DEGENERATE_GAP: &str = "degenerate-gap";
    pub const AS1_FAIL: &str = "as1-fail";
    pub const AS4_FAIL: &str = "as4-fail";
    pub const BAND_DEVIATION: &str = "band-deviation";
    pub const CLIPPED: &str = "clipped";
    pub const CONCENTRATION_EXCEEDED: &str = "concentration-exceeded";
}

fn push_flag(flags: &mut Vec<String>, flag: &str) {
    if !flags.iter().any(|f| f == flag) {
        flags.push(flag.to_string());
    }
}

/// Measures one cell and evaluates every applicable bound.
///
/// Deterministic cells compare the GNNs on the deterministic graphs of `W`
/// and `W'`; stochastic cells draw `G_n ~ W` and `G'_n ~ W'` with the two
/// given seeds. Theorem 1 and 4 values are in `L^2([0, 1])` (against the
/// graphon signal norm); the graph bounds are in the graph 2-norm.
/// `bound_lemma1` is the larger of the two deterministic-to-stochastic legs.
pub fn run_stability_cell(
    setup: &StabilitySetup,
    ctx: &SizeContext,
    params: &GnnParams,
    mode: Mode,
    seed: u64,
    graph_seeds: (u64, u64),
) -> Result<StabilityReport> {
    params.validate()?;
    let n = ctx.n;
    let opts = &setup.options;
    let c = opts.cutoff;
    let (layers, width) = (params.depth(), params.hidden_width());
    let mut flags = Vec::new();

    // Filter assumptions.
    let mut a2 = 0.0_f64;
    let mut as1_pass = true;
    let mut band_deviation: Option<f64> = None;
    for f in params.filters() {
        let est = estimate_as1(f, DEFAULT_PROBES)?;
        a2 = a2.max(est.a2);
        as1_pass &= est.pass;
        if let Filter::Poly(p) = f {
            let d = band_constancy_deviation(p, c, DEFAULT_PROBES);
            band_deviation = Some(band_deviation.map_or(d, |b| b.max(d)));
        }
    }
    if !as1_pass {
        push_flag(&mut flags, flags::AS1_FAIL);
    }
    if band_deviation.is_some_and(|d| d > 0.0) {
        push_flag(&mut flags, flags::BAND_DEVIATION);
    }
    for k in [&setup.a1, &setup.a3] {
        if k.source == ConstantSource::Estimated {
            push_flag(&mut flags, flags::ESTIMATED_CONSTANT);
        }
        if k.non_lipschitz {
            push_flag(&mut flags, flags::NON_LIPSCHITZ);
        }
    }
    if setup.kernel.clipped() {
        push_flag(&mut flags, flags::CLIPPED);
    }

    // Spectral constants shared by both modes.
    let mut consts = SpectralConstants::default();
    consts.add_count(1, &setup.spectrum_w, c)?;
    consts.add_count(2, &setup.spectrum_w2, c)?;
    consts.add_count(3, &ctx.spectrum_w, c)?;
    consts.add_count(4, &ctx.spectrum_w2, c)?;
    consts.add_gap(1, 2, &setup.spectrum_w, &setup.spectrum_w2, c)?;
    consts.add_gap(1, 3, &setup.spectrum_w, &ctx.spectrum_w, c)?;
    consts.add_gap(2, 4, &setup.spectrum_w2, &ctx.spectrum_w2, c)?;
    let n_hat = consts.max_count(&[2, 3, 4]);
    let delta_hat = consts.min_gap(&[(1, 2), (1, 3), (2, 4)]);

    let eps = setup.epsilon;
    let b = setup.b();
    let x_graph = ctx.x.norm();
    let x_l2 = setup.signal.l2_norm();
    let as4 = check_as4(n, opts.xi, setup.degree_w, setup.degree_w2, setup.a1.value, setup.a3.value)?;
    if !as4.pass {
        push_flag(&mut flags, flags::AS4_FAIL);
    }

    let thm4 = bound_thm4(a2, consts.count(2), consts.min_gap(&[(1, 2)]), eps, x_l2);
    let thm1 = bound_thm1(layers, width, a2, consts.count(2), consts.min_gap(&[(1, 2)]), eps, x_l2);

    let (empirical, thm2, thm3, lemma1, n_c_max, delta_c_min, concentration) = match mode {
        Mode::Deterministic => {
            let y = forward(params, &ctx.op_w, &ctx.x)?;
            let y2 = forward(params, &ctx.op_w2, &ctx.x)?;
            let thm2 = bound_thm2(layers, width, a2, n_hat, delta_hat, eps, b, n, x_graph);
            (OutputDiff::between(&y, &y2), Some(thm2), None, None, n_hat, delta_hat, None)
        }
        Mode::Stochastic => {
            let full = needs_decomposition(params);
            let g = stochastic_graph(&setup.w, n, graph_seeds.0)?;
            let g2 = stochastic_graph(&setup.w2, n, graph_seeds.1)?;
            let op = GraphOperator::new(&g, n as f64)?;
            let op2 = GraphOperator::new(&g2, n as f64)?;
            let y = forward(params, &op, &ctx.x)?;
            let y2 = forward(params, &op2, &ctx.x)?;
            let sw = operator_spectrum(&op, &g, full)?;
            let sw2 = operator_spectrum(&op2, &g2, full)?;
            consts.add_count(5, &sw, c)?;
            consts.add_count(6, &sw2, c)?;
            consts.add_gap(3, 5, &ctx.spectrum_w, &sw, c)?;
            consts.add_gap(4, 6, &ctx.spectrum_w2, &sw2, c)?;
            let n_check = consts.max_count(&[5, 6]).max(n_hat);
            let delta_check = consts.min_gap(&[(3, 5), (4, 6)]).min(delta_hat);
            let thm3 = bound_thm3(layers, width, a2, n_check, delta_check, eps, b, n, opts.xi, x_graph)?;
            let leg_w = bound_lemma1(layers, width, a2, consts.count(5), consts.min_gap(&[(3, 5)]), n, opts.xi, x_graph)?;
            let leg_w2 = bound_lemma1(layers, width, a2, consts.count(6), consts.min_gap(&[(4, 6)]), n, opts.xi, x_graph)?;
            let conc = ConcentrationCheck {
                deviation_w: operator_norm_matrix(&(ctx.graph_w.gso() - g.gso()), 1.0)?,
                deviation_w2: operator_norm_matrix(&(ctx.graph_w2.gso() - g2.gso()), 1.0)?,
                threshold: concentration_bound(n, opts.xi)?,
                degree_w: degree_condition(ctx.graph_w.max_degree(), n, opts.xi)?,
                degree_w2: degree_condition(ctx.graph_w2.max_degree(), n, opts.xi)?,
            };
            if !conc.pass() {
                push_flag(&mut flags, flags::CONCENTRATION_EXCEEDED);
            }
            (
                OutputDiff::between(&y, &y2),
                None,
                Some(thm3),
                Some(leg_w.max(leg_w2)),
                n_check,
                delta_check,
                Some(conc),
            )
        }
    };

    let bounds = [thm4, thm1, thm2.unwrap_or(0.0), thm3.unwrap_or(0.0), lemma1.unwrap_or(0.0)];
    if bounds.iter().any(|b| b.is_infinite()) {
        push_flag(&mut flags, flags::DEGENERATE_GAP);
    }
    // A failed hypothesis voids the theorems that rely on it.
    let gate = |v: Option<f64>, ok: bool| v.filter(|_| ok);
    let stochastic_ok = as1_pass && as4.pass;
    Ok(StabilityReport {
        n,
        seed,
        mode,
        filter_form: params.filter_form().to_string(),
        layers,
        width,
        cutoff: c,
        xi: opts.xi,
        epsilon: eps,
        a1: setup.a1,
        a2,
        a3: setup.a3,
        b,
        constants: consts,
        n_c_max,
        delta_c_min,
        signal_norm_l2: x_l2,
        signal_norm_graph: x_graph,
        bound_thm4: gate(Some(thm4), as1_pass),
        bound_thm1: gate(Some(thm1), as1_pass),
        bound_thm2: gate(thm2, as1_pass),
        bound_thm3: gate(thm3, stochastic_ok),
        bound_lemma1: gate(lemma1, stochastic_ok),
        empirical,
        as1_pass,
        as4,
        band_deviation,
        concentration,
        flags,
    })
}
