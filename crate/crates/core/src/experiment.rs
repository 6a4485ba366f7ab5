//! Experiment configuration (TOML), reproducible sweep orchestration and
//! the ratings-to-GNN training pipeline.
//!
//! Every random draw is seeded from the master seed through
//! [`derive_seed`]: parameters of trial `s` use `(master, 0, s, "params")`,
//! the stochastic graphs of a cell use `(master, n, s, "stochastic-W")` and
//! `(master, n, s, "stochastic-W'")`, synthetic ratings `(master, 0, 0,
//! "ratings")` and the train/test split `(master, 0, 0, "split")`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::{BandFilter, Filter, GraphOperator, PolyFilter};
use crate::gnn::{forward, random_band_params, random_poly_params, train_on, GnnParams, Nonlinearity, Sample, TrainOptions};
use crate::graphon::{Graphon, GraphonSpec, PerturbationConfig, PerturbationSpec};
use crate::io::{write_json, write_table};
use crate::ratings::{
    build_correlation_graph, generate_synthetic_ratings, read_ratings_csv, split_rows, CorrelationGraph,
    CorrelationPolicy, RatingsMatrix, SyntheticRatings,
};
use crate::sampling::{derive_seed, GraphSignal, GraphonSignal};
use crate::stability::{run_stability_cell, Mode, SetupOptions, SizeContext, StabilityReport, StabilitySetup, REPORT_COLUMNS};

/// Which graph sequences a sweep instantiates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    #[default]
    Deterministic,
    Stochastic,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> &'static [Mode] {
        match self {
            ModeSelection::Deterministic => &[Mode::Deterministic],
            ModeSelection::Stochastic => &[Mode::Stochastic],
            ModeSelection::Both => &[Mode::Deterministic, Mode::Stochastic],
        }
    }
}

/// Trial seeds: a count `k` means `0..k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn values(&self) -> Vec<u64> {
        match self {
            Seeds::Count(k) => (0..*k).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(10)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub layers: usize,
    /// Hidden width `F`; input and output widths are 1.
    pub width: usize,
    #[serde(default)]
    pub nonlinearity: Nonlinearity,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            layers: 2,
            width: 4,
            nonlinearity: Nonlinearity::Relu,
        }
    }
}

impl Architecture {
    fn validate(&self, field: &str) -> Result<()> {
        if self.layers == 0 || self.width == 0 {
            return Err(Error::Config(format!("{field}: layers and width must be positive")));
        }
        Ok(())
    }
}

fn default_eta() -> f64 {
    0.1
}

fn default_taps() -> usize {
    3
}

/// Filter bank of every layer. Omitted band parameters (or polynomial
/// coefficients) are drawn per trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum FilterConfig {
    Band {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        base: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gain: Option<f64>,
        /// Margin of random filters below `sup |h| = 1`.
        #[serde(default = "default_eta")]
        eta: f64,
    },
    Poly {
        #[serde(default = "default_taps")]
        taps: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coeffs: Option<Vec<f64>>,
        #[serde(default = "default_eta")]
        eta: f64,
    },
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig::Band {
            base: None,
            gain: None,
            eta: default_eta(),
        }
    }
}

impl FilterConfig {
    fn validate(&self, cutoff: f64) -> Result<()> {
        let eta = match self {
            FilterConfig::Band { base, gain, eta } => {
                match (base, gain) {
                    (Some(b), Some(g)) => {
                        BandFilter::new(cutoff, *b, *g).map_err(|e| Error::Config(format!("filter: {e}")))?;
                    }
                    (None, None) => {}
                    _ => return Err(Error::Config("filter.base and filter.gain must be given together".into())),
                }
                *eta
            }
            FilterConfig::Poly { taps, coeffs, eta } => {
                if *taps == 0 {
                    return Err(Error::Config("filter.taps must be positive".into()));
                }
                if let Some(c) = coeffs {
                    PolyFilter::new(c.clone()).map_err(|e| Error::Config(format!("filter.coeffs: {e}")))?;
                }
                *eta
            }
        };
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Config(format!("filter.eta: {eta} must lie in (0, 1)")));
        }
        Ok(())
    }
}

fn default_cutoff() -> f64 {
    0.2
}

fn default_xi() -> f64 {
    0.05
}

fn default_resolution() -> usize {
    1024
}

fn default_signal() -> GraphonSignal {
    GraphonSignal::Cosine { k: 1 }
}

/// One stability experiment: a graphon pair, a size sweep, trial seeds and
/// the network family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub mode: ModeSelection,
    /// Band cutoff `c` of the filters and of the spectral constants.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default = "default_xi")]
    pub xi: f64,
    /// Grid resolution standing in for the graphons themselves.
    #[serde(default = "default_resolution")]
    pub wnn_resolution: usize,
    /// Supplied Lipschitz constant of `W`; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a1: Option<f64>,
    /// Supplied Lipschitz constant of the perturbation; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub graphon: GraphonSpec,
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_signal")]
    pub signal: GraphonSignal,
}

fn check_constant(v: Option<f64>, field: &str) -> Result<()> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => Err(Error::Config(format!("{field}: {x} must be finite and nonnegative"))),
        _ => Ok(()),
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, context: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{context}: {e}")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn base_dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

impl ExperimentConfig {
    /// Parses and validates; file references are not checked.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialization: {e}")))
    }

    /// Reads, validates and resolves a config file; relative paths inside it
    /// are taken relative to the file.
    pub fn load(path: &Path) -> Result<Experiment> {
        Self::from_toml_str(&read_text(path)?)?.resolve(&base_dir_of(path))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::Config("sizes: must not be empty".into()));
        }
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(Error::Config(format!("sizes: graph size {n} must be at least 2")));
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("sizes: must be strictly ascending".into()));
        }
        let seeds = self.seeds.values();
        if seeds.is_empty() {
            return Err(Error::Config("seeds: at least one trial is required".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds: duplicate trial seed".into()));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::Config(format!("cutoff: {} must lie in (0, 1)", self.cutoff)));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::Config(format!("xi: {} must lie in (0, 1)", self.xi)));
        }
        if self.wnn_resolution < 2 {
            return Err(Error::Config("wnn_resolution: must be at least 2".into()));
        }
        check_constant(self.a1, "a1")?;
        check_constant(self.a3, "a3")?;
        self.architecture.validate("architecture")?;
        self.filter.validate(self.cutoff)?;
        if let GraphonSignal::Step { values } = &self.signal {
            if values.is_empty() {
                return Err(Error::Config("signal.values: must not be empty".into()));
            }
        }
        Ok(())
    }

    /// Instantiates the graphon and perturbation, reading referenced files.
    pub fn resolve(&self, base_dir: &Path) -> Result<Experiment> {
        let context = |field: &str, e: Error| match e {
            Error::Io { .. } | Error::Parse { .. } => e,
            other => Error::Config(format!("{field}: {other}")),
        };
        let graphon = self.graphon.resolve(base_dir).map_err(|e| context("graphon", e))?;
        let perturbation = self.perturbation.resolve(base_dir).map_err(|e| context("perturbation", e))?;
        Ok(Experiment {
            config: self.clone(),
            graphon,
            perturbation,
        })
    }

    pub fn setup_options(&self) -> SetupOptions {
        SetupOptions {
            cutoff: self.cutoff,
            xi: self.xi,
            reference_resolution: self.wnn_resolution,
            a1: self.a1,
            a3: self.a3,
            ..SetupOptions::default()
        }
    }

    /// Network parameters of trial `seed`, shared by every size and mode.
    pub fn params_for(&self, seed: u64) -> Result<GnnParams> {
        let Architecture {
            layers,
            width,
            nonlinearity,
        } = self.architecture;
        let rng_seed = derive_seed(self.master_seed, 0, seed, "params");
        match &self.filter {
            FilterConfig::Band {
                base: Some(b),
                gain: Some(g),
                ..
            } => {
                let f = BandFilter::new(self.cutoff, *b, *g)?;
                GnnParams::uniform(layers, width, nonlinearity, || Filter::Band(f))
            }
            FilterConfig::Band { eta, .. } => random_band_params(layers, width, self.cutoff, *eta, nonlinearity, rng_seed),
            FilterConfig::Poly {
                coeffs: Some(c), ..
            } => {
                let f = PolyFilter::new(c.clone())?;
                GnnParams::uniform(layers, width, nonlinearity, || Filter::Poly(f.clone()))
            }
            FilterConfig::Poly { taps, eta, .. } => random_poly_params(layers, width, *taps, *eta, nonlinearity, rng_seed),
        }
    }
}

/// A validated config with its graphon and perturbation instantiated.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graphon: Graphon,
    pub perturbation: PerturbationSpec,
}

impl Experiment {
    pub fn setup(&self) -> Result<StabilitySetup> {
        StabilitySetup::new(
            &self.graphon,
            &self.perturbation,
            self.config.signal.clone(),
            self.config.setup_options(),
        )
    }

    fn graph_seeds(&self, n: usize, seed: u64) -> (u64, u64) {
        let master = self.config.master_seed;
        (
            derive_seed(master, n as u64, seed, "stochastic-W"),
            derive_seed(master, n as u64, seed, "stochastic-W'"),
        )
    }

    /// A single cell, sharing seeds with the corresponding sweep cell.
    pub fn run_cell(&self, n: usize, seed: u64, mode: Mode) -> Result<StabilityReport> {
        let setup = self.setup()?;
        let params = self.config.params_for(seed)?;
        let ctx = SizeContext::for_params(&setup, n, &params)?;
        run_stability_cell(&setup, &ctx, &params, mode, seed, self.graph_seeds(n, seed))
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("threads: {e}")))
}

/// Runs every `(n, seed, mode)` cell on `threads` workers (0 = one per
/// core). The result is sorted by `(n, seed, mode)` and does not depend on
/// the thread count.
pub fn run_sweep(exp: &Experiment, threads: usize) -> Result<Vec<StabilityReport>> {
    let cfg = &exp.config;
    thread_pool(threads)?.install(|| {
        let setup = exp.setup()?;
        let seeds = cfg.seeds.values();
        let params: Vec<GnnParams> = seeds.iter().map(|&s| cfg.params_for(s)).collect::<Result<_>>()?;
        let contexts: Vec<SizeContext> = cfg
            .sizes
            .par_iter()
            .map(|&n| SizeContext::for_params(&setup, n, &params[0]))
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, usize, Mode)> = (0..contexts.len())
            .flat_map(|c| (0..seeds.len()).flat_map(move |s| cfg.mode.modes().iter().map(move |&m| (c, s, m))))
            .collect();
        let mut reports: Vec<StabilityReport> = cells
            .par_iter()
            .map(|&(c, s, mode)| {
                let ctx = &contexts[c];
                let seeds_g = exp.graph_seeds(ctx.n, seeds[s]);
                run_stability_cell(&setup, ctx, &params[s], mode, seeds[s], seeds_g)
            })
            .collect::<Result<_>>()?;
        reports.sort_by_key(|r| (r.n, r.seed, r.mode));
        Ok(reports)
    })
}

/// Median of a nonempty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Aggregates of the cells sharing one `(n, mode)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mode: Mode,
    pub cells: usize,
    pub median_relative: Option<f64>,
    pub median_l2: Option<f64>,
    /// Median of the governing bound over cells where it applies.
    pub median_bound: Option<f64>,
    /// Cells whose empirical difference exceeds the governing bound.
    pub violations: usize,
    pub degenerate_cells: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryMetadata {
    /// Seconds since the Unix epoch when the summary was written.
    pub created_unix: u64,
    pub master_seed: u64,
    pub cells: usize,
    pub relative_difference: String,
    pub graphon: String,
    pub filter_form: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub metadata: SummaryMetadata,
    pub groups: Vec<GroupSummary>,
}

/// Groups sorted reports by `(n, mode)`.
pub fn summarize(reports: &[StabilityReport]) -> Vec<GroupSummary> {
    let mut keys: Vec<(usize, Mode)> = reports.iter().map(|r| (r.n, r.mode)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(n, mode)| {
            let group: Vec<&StabilityReport> = reports.iter().filter(|r| r.n == n && r.mode == mode).collect();
            let rel: Vec<f64> = group.iter().map(|r| r.empirical.relative).filter(|x| x.is_finite()).collect();
            let l2: Vec<f64> = group.iter().map(|r| r.empirical.l2).collect();
            let bounds: Vec<f64> = group.iter().filter_map(|r| r.governing_bound()).collect();
            GroupSummary {
                n,
                mode,
                cells: group.len(),
                median_relative: median(&rel),
                median_l2: median(&l2),
                median_bound: median(&bounds),
                violations: group
                    .iter()
                    .filter(|r| r.governing_bound().is_some_and(|b| r.empirical.l2 > b))
                    .count(),
                degenerate_cells: group
                    .iter()
                    .filter(|r| r.has_flag(crate::stability::flags::DEGENERATE_GAP))
                    .count(),
            }
        })
        .collect()
}

pub fn write_stability_csv(path: &Path, reports: &[StabilityReport]) -> Result<()> {
    let rows: Vec<Vec<String>> = reports.iter().map(StabilityReport::csv_row).collect();
    write_table(path, &REPORT_COLUMNS, &rows)
}

/// Writes `stability.csv` and `summary.json` into `out_dir`.
pub fn write_sweep(out_dir: &Path, exp: &Experiment, reports: &[StabilityReport]) -> Result<SweepSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_stability_csv(&out_dir.join("stability.csv"), reports)?;
    let summary = SweepSummary {
        metadata: SummaryMetadata {
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            master_seed: exp.config.master_seed,
            cells: reports.len(),
            relative_difference: "||y' - y||_2 / ||y||_2".into(),
            graphon: exp.graphon.kind_name().into(),
            filter_form: reports.first().map_or_else(String::new, |r| r.filter_form.clone()),
        },
        groups: summarize(reports),
    };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Where the trainer's ratings come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum RatingsSource {
    File {
        path: PathBuf,
    },
    Synthetic {
        graphon: GraphonSpec,
        #[serde(default = "default_users")]
        users: usize,
        #[serde(default = "default_items")]
        items: usize,
        #[serde(default = "default_missing")]
        missing_rate: f64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

fn default_users() -> usize {
    SyntheticRatings::default().users
}

fn default_items() -> usize {
    SyntheticRatings::default().items
}

fn default_missing() -> f64 {
    SyntheticRatings::default().missing_rate
}

fn default_noise() -> f64 {
    SyntheticRatings::default().noise
}

fn default_test_fraction() -> f64 {
    0.1
}

fn default_train_taps() -> usize {
    5
}

fn default_steps() -> usize {
    200
}

fn default_learning_rate() -> f64 {
    0.01
}

/// Rating prediction for one target item: each user who rated it is a
/// sample whose input is their other ratings on the item correlation graph.
/// Users are split 90-10 (by default) into training and test rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default)]
    pub master_seed: u64,
    pub ratings: RatingsSource,
    #[serde(default)]
    pub policy: CorrelationPolicy,
    /// 1-indexed target item; the most rated item when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_item: Option<usize>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default = "default_train_taps")]
    pub taps: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = parse_toml(text, "config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if let RatingsSource::Synthetic {
            users,
            items,
            missing_rate,
            noise,
            ..
        } = &self.ratings
        {
            if *users < 2 || *items < 2 {
                return Err(Error::Config("ratings: users and items must be at least 2".into()));
            }
            if !(0.0..1.0).contains(missing_rate) {
                return Err(Error::Config(format!("ratings.missing_rate: {missing_rate} must lie in [0, 1)")));
            }
            if !(*noise >= 0.0 && noise.is_finite()) {
                return Err(Error::Config(format!("ratings.noise: {noise} must be finite and nonnegative")));
            }
        }
        if self.target_item == Some(0) {
            return Err(Error::Config("target_item: items are 1-indexed".into()));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!("test_fraction: {} must lie in [0, 1)", self.test_fraction)));
        }
        self.architecture.validate("architecture")?;
        if self.taps == 0 {
            return Err(Error::Config("taps: must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Config(format!("eta: {} must lie in (0, 1)", self.eta)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate: {} must be finite and nonnegative", self.learning_rate)));
        }
        Ok(())
    }

    pub fn load_ratings(&self, base_dir: &Path) -> Result<RatingsMatrix> {
        match &self.ratings {
            RatingsSource::File { path } => read_ratings_csv(&base_dir.join(path)),
            RatingsSource::Synthetic {
                graphon,
                users,
                items,
                missing_rate,
                noise,
            } => {
                let w = graphon.resolve(base_dir)?;
                let opts = SyntheticRatings {
                    users: *users,
                    items: *items,
                    missing_rate: *missing_rate,
                    noise: *noise,
                };
                generate_synthetic_ratings(&w, &opts, derive_seed(self.master_seed, 0, 0, "ratings"))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: GnnParams,
    pub losses: Vec<f64>,
    /// 0-indexed target item.
    pub target_item: usize,
    pub train_users: Vec<usize>,
    pub test_users: Vec<usize>,
    /// Root mean squared error of the target rating on the test users.
    pub test_rmse: Option<f64>,
    pub graph: CorrelationGraph,
}

fn sample_for(r: &RatingsMatrix, user: usize, target: usize) -> Sample {
    let mut x = r.values().row(user).transpose();
    let rating = x[target];
    x[target] = 0.0;
    let mut y = DVector::zeros(r.items());
    y[target] = rating;
    (GraphSignal::new(x), GraphSignal::new(y))
}

/// Builds the correlation graph from the training users, then fits
/// polynomial-filter GNN parameters by gradient descent.
pub fn run_training(cfg: &TrainConfig, ratings: &RatingsMatrix) -> Result<TrainResult> {
    cfg.validate()?;
    let items = ratings.items();
    let v = ratings.values();
    let target = match cfg.target_item {
        Some(t) if t > items => {
            return Err(Error::Config(format!("target_item: {t} exceeds the {items} items")));
        }
        Some(t) => t - 1,
        None => (0..items)
            .max_by_key(|&m| (v.column(m).iter().filter(|&&x| x != 0.0).count(), std::cmp::Reverse(m)))
            .ok_or_else(|| Error::Config("ratings: no items".into()))?,
    };
    let raters: Vec<usize> = (0..ratings.users()).filter(|&u| v[(u, target)] != 0.0).collect();
    if raters.len() < 2 {
        return Err(Error::Config(format!(
            "target_item: item {} has {} ratings, at least 2 are needed",
            target + 1,
            raters.len()
        )));
    }
    let (train_users, test_users) = split_rows(&raters, cfg.test_fraction, derive_seed(cfg.master_seed, 0, 0, "split"))?;

    let train_rows: Vec<usize> = (0..ratings.users()).filter(|u| test_users.binary_search(u).is_err()).collect();
    let train_matrix = RatingsMatrix::new(v.select_rows(&train_rows))?;
    let graph = build_correlation_graph(&train_matrix, cfg.policy)?;
    let op = GraphOperator::new(&graph.graph, items as f64)?;

    let samples: Vec<Sample> = train_users.iter().map(|&u| sample_for(ratings, u, target)).collect();
    let Architecture {
        layers,
        width,
        nonlinearity,
    } = cfg.architecture;
    let init = random_poly_params(layers, width, cfg.taps, cfg.eta, nonlinearity, derive_seed(cfg.master_seed, 0, 0, "params"))?;
    let opts = TrainOptions {
        steps: cfg.steps,
        learning_rate: cfg.learning_rate,
        target_index: Some(target),
    };
    let outcome = train_on(&init, &samples, &op, &opts)?;

    let test_rmse = if test_users.is_empty() {
        None
    } else {
        let mut sq = 0.0;
        for &u in &test_users {
            let (x, y) = sample_for(ratings, u, target);
            let out = forward(&outcome.params, &op, &x.values)?;
            sq += (out[target] - y.values[target]).powi(2);
        }
        Some((sq / test_users.len() as f64).sqrt())
    };
    Ok(TrainResult {
        params: outcome.params,
        losses: outcome.losses,
        target_item: target,
        train_users,
        test_users,
        test_rmse,
        graph,
    })
}
