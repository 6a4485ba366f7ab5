//! `wnnstab`: sampling, spectra, stability bounds, sweeps, homomorphism
//! densities, training and ratings ingestion from the command line.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! numerical failures (and for degenerate-gap cells under `--strict`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use wnnstab::experiment::{run_sweep, run_training, write_stability_csv, write_sweep, ExperimentConfig, TrainConfig};
use wnnstab::gnn::write_loss_csv;
use wnnstab::graphlimits::{convergence_table, write_convergence_csv, Motif, DEFAULT_DENSITY_RESOLUTION};
use wnnstab::graphon::GraphonSpec;
use wnnstab::io::{read_matrix_csv, write_edge_list, write_json, write_matrix_csv};
use wnnstab::ratings::{build_correlation_graph, read_ratings_csv, CorrelationPolicy};
use wnnstab::stability::flags;
use wnnstab::{deterministic_graph, eigenvalues, stochastic_graph, Error, Graph, Graphon, Mode, Scale};

#[derive(Parser, Debug)]
#[command(name = "wnnstab", version, about = "Stability of graph and graphon neural networks under graphon perturbations")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: the config's output_dir, else ".").
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Treat cells with a degenerate eigengap as a numerical failure.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a graph from a graphon.
    Sample {
        #[command(flatten)]
        source: GraphonSource,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = CliMode::Deterministic)]
        mode: CliMode,
    },
    /// Signed spectrum of a graph CSV or of a graphon's sampled graph.
    Spectrum {
        #[command(flatten)]
        source: GraphonSource,
        /// Adjacency matrix CSV instead of a graphon.
        #[arg(long, conflicts_with = "graphon")]
        graph: Option<PathBuf>,
        /// Size of the deterministic graph when reading a graphon.
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, value_enum, default_value_t = CliScale::Graphon)]
        scale: CliScale,
    },
    /// Evaluate one experiment cell.
    Bounds {
        /// Graph size (default: the first configured size).
        #[arg(long)]
        n: Option<usize>,
        /// Trial seed (default: the first configured trial).
        #[arg(long)]
        trial: Option<u64>,
        #[arg(long, value_enum, default_value_t = CliMode::Deterministic)]
        mode: CliMode,
    },
    /// Run every cell of an experiment config.
    Sweep,
    /// Homomorphism-density convergence table.
    Homdensity {
        #[command(flatten)]
        source: GraphonSource,
        /// Comma-separated motifs among K2, P3, K3, C4.
        #[arg(long, value_delimiter = ',', default_value = "K2,P3,K3,C4")]
        motifs: Vec<Motif>,
        /// Comma-separated ascending graph sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
        #[arg(long, value_enum, default_value_t = CliMode::Deterministic)]
        mode: CliMode,
        /// Stochastic trials per size.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Grid resolution of the graphon densities.
        #[arg(long, default_value_t = DEFAULT_DENSITY_RESOLUTION)]
        resolution: usize,
    },
    /// Train a polynomial-filter GNN on ratings.
    Train,
    /// Correlation graph of a `user,item,rating` CSV.
    IngestRatings {
        ratings: PathBuf,
        #[arg(long, value_enum, default_value_t = CliPolicy::AllRows)]
        policy: CliPolicy,
    },
}

/// A graphon given inline or as the `[graphon]` table of `--config`.
#[derive(Args, Debug)]
struct GraphonSource {
    /// Inline graphon: constant:P, two-block:P,Q or smooth-exp:BETA.
    #[arg(long)]
    graphon: Option<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliMode {
    Deterministic,
    Stochastic,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Deterministic => Mode::Deterministic,
            CliMode::Stochastic => Mode::Stochastic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliScale {
    Graph,
    Graphon,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CliPolicy {
    AllRows,
    CoRated,
}

enum Failure {
    Core(Error),
    Strict(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Core(Error::Config(msg.into()))
}

#[derive(Deserialize)]
struct GraphonFile {
    graphon: GraphonSpec,
}

fn parse_inline_graphon(s: &str) -> CliResult<Graphon> {
    let (kind, args) = s
        .split_once(':')
        .ok_or_else(|| config_error(format!("--graphon {s:?}: expected KIND:PARAMS")))?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| config_error(format!("--graphon {s:?}: {e}")))?;
    let g = match (kind, nums.as_slice()) {
        ("constant", [p]) => Graphon::constant(*p),
        ("two-block", [p, q]) => Graphon::two_block(*p, *q),
        ("smooth-exp", [beta]) => Graphon::smooth_exp(*beta),
        _ => {
            return Err(config_error(format!(
                "--graphon {s:?}: expected constant:P, two-block:P,Q or smooth-exp:BETA"
            )))
        }
    };
    g.map_err(|e| config_error(format!("--graphon: {e}")))
}

fn read_config_text(path: &Path) -> CliResult<String> {
    Ok(fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve_graphon(source: &GraphonSource, global: &Global) -> CliResult<Graphon> {
    if let Some(s) = &source.graphon {
        return parse_inline_graphon(s);
    }
    let Some(path) = &global.config else {
        return Err(config_error("a graphon is required: pass --graphon or --config"));
    };
    let file: GraphonFile =
        toml::from_str(&read_config_text(path)?).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
    Ok(file.graphon.resolve(&base_dir(path))?)
}

fn out_dir(global: &Global, configured: Option<&Path>, config_path: Option<&Path>) -> CliResult<PathBuf> {
    let dir = match (&global.out, configured) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => config_path.map_or_else(|| d.to_path_buf(), |p| base_dir(p).join(d)),
        (None, None) => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_experiment(global: &Global) -> CliResult<(wnnstab::Experiment, PathBuf)> {
    let path = global
        .config
        .as_ref()
        .ok_or_else(|| config_error("--config is required"))?;
    let mut cfg = ExperimentConfig::from_toml_str(&read_config_text(path)?)?;
    if let Some(seed) = global.seed {
        cfg.master_seed = seed;
    }
    let exp = cfg.resolve(&base_dir(path))?;
    let out = out_dir(global, exp.config.output_dir.as_deref(), Some(path))?;
    Ok((exp, out))
}

fn say(path: &Path) {
    println!("wrote {}", path.display());
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    match cli.command {
        Command::Sample { source, n, mode } => {
            let w = resolve_graphon(&source, g)?;
            let graph = match mode {
                CliMode::Deterministic => deterministic_graph(&w, n)?,
                CliMode::Stochastic => stochastic_graph(&w, n, g.seed.unwrap_or(0))?,
            };
            let out = out_dir(g, None, None)?;
            let (m, e) = (out.join("graph.csv"), out.join("edges.csv"));
            write_matrix_csv(&m, graph.gso())?;
            write_edge_list(&e, graph.gso())?;
            say(&m);
            say(&e);
        }
        Command::Spectrum {
            source,
            graph,
            n,
            scale,
        } => {
            let gso = match graph {
                Some(p) => Graph::new(read_matrix_csv(&p)?, true)?,
                None => deterministic_graph(&resolve_graphon(&source, g)?, n)?,
            };
            let scale = match scale {
                CliScale::Graph => Scale::Graph,
                CliScale::Graphon => Scale::Graphon,
            };
            let spec = eigenvalues(gso.gso(), scale)?;
            let out = out_dir(g, None, None)?;
            let p = out.join("spectrum.csv");
            spec.write_csv(&p)?;
            say(&p);
        }
        Command::Bounds { n, trial, mode } => {
            let (exp, out) = load_experiment(g)?;
            let n = n.unwrap_or(exp.config.sizes[0]);
            let trial = trial.unwrap_or(exp.config.seeds.values()[0]);
            let report = exp.run_cell(n, trial, mode.into())?;
            let (j, c) = (out.join("report.json"), out.join("report.csv"));
            write_json(&j, &report)?;
            write_stability_csv(&c, std::slice::from_ref(&report))?;
            say(&j);
            say(&c);
            if g.strict && report.has_flag(flags::DEGENERATE_GAP) {
                return Err(Failure::Strict(format!("cell n = {n}, trial {trial} has a degenerate eigengap")));
            }
        }
        Command::Sweep => {
            let (exp, out) = load_experiment(g)?;
            let reports = run_sweep(&exp, g.threads)?;
            let summary = write_sweep(&out, &exp, &reports)?;
            say(&out.join("stability.csv"));
            say(&out.join("summary.json"));
            let degenerate: usize = summary.groups.iter().map(|s| s.degenerate_cells).sum();
            if g.strict && degenerate > 0 {
                return Err(Failure::Strict(format!("{degenerate} cells have a degenerate eigengap")));
            }
        }
        Command::Homdensity {
            source,
            motifs,
            sizes,
            mode,
            trials,
            resolution,
        } => {
            let w = resolve_graphon(&source, g)?;
            let rows = convergence_table(&w, &motifs, &sizes, mode.into(), trials, g.seed.unwrap_or(0), resolution)?;
            let out = out_dir(g, None, None)?;
            let p = out.join("homdensity.csv");
            write_convergence_csv(&p, &rows)?;
            say(&p);
        }
        Command::Train => {
            let path = g.config.as_ref().ok_or_else(|| config_error("--config is required"))?;
            let mut cfg = TrainConfig::from_toml_str(&read_config_text(path)?)?;
            if let Some(seed) = g.seed {
                cfg.master_seed = seed;
            }
            let ratings = cfg.load_ratings(&base_dir(path))?;
            let result = run_training(&cfg, &ratings)?;
            let out = out_dir(g, cfg.output_dir.as_deref(), Some(path))?;
            let (m, l, s) = (out.join("model.json"), out.join("loss.csv"), out.join("train_summary.json"));
            result.params.save(&m)?;
            write_loss_csv(&l, &result.losses)?;
            #[derive(serde::Serialize)]
            struct TrainSummary {
                target_item: usize,
                train_users: usize,
                test_users: usize,
                final_loss: f64,
                test_rmse: Option<f64>,
            }
            write_json(
                &s,
                &TrainSummary {
                    target_item: result.target_item + 1,
                    train_users: result.train_users.len(),
                    test_users: result.test_users.len(),
                    final_loss: *result.losses.last().unwrap_or(&f64::NAN),
                    test_rmse: result.test_rmse,
                },
            )?;
            for p in [&m, &l, &s] {
                say(p);
            }
        }
        Command::IngestRatings { ratings, policy } => {
            let r = read_ratings_csv(&ratings)?;
            let policy = match policy {
                CliPolicy::AllRows => CorrelationPolicy::AllRows,
                CliPolicy::CoRated => CorrelationPolicy::CoRated,
            };
            let cg = build_correlation_graph(&r, policy)?;
            if !cg.constant_columns.is_empty() {
                let ids: Vec<String> = cg.constant_columns.iter().map(|c| (c + 1).to_string()).collect();
                eprintln!("warning: constant item columns left unconnected: {}", ids.join(","));
            }
            let out = out_dir(g, None, None)?;
            let p = out.join("correlation_graph.csv");
            write_matrix_csv(&p, cg.graph.gso())?;
            say(&p);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Strict(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
