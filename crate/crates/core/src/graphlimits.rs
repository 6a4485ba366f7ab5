//! Homomorphism densities of a small motif catalog, computed with trace
//! formulas, and tables tracking `|t(F, G_n) - t(F, W)|` as `n` grows.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::Graphon;
use crate::io::{fmt_f64, write_table};
use crate::sampling::{derive_seed, deterministic_graph, stochastic_graph, Graph};
use crate::stability::Mode;

/// Default grid for graphon densities.
pub const DEFAULT_DENSITY_RESOLUTION: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Motif {
    /// Single edge.
    K2,
    /// Path on three nodes.
    P3,
    /// Triangle.
    K3,
    /// Four-cycle.
    C4,
}

impl Motif {
    pub const ALL: [Motif; 4] = [Motif::K2, Motif::P3, Motif::K3, Motif::C4];

    pub fn name(self) -> &'static str {
        match self {
            Motif::K2 => "K2",
            Motif::P3 => "P3",
            Motif::K3 => "K3",
            Motif::C4 => "C4",
        }
    }
}

impl fmt::Display for Motif {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Motif {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Motif::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown motif {s:?} (expected K2, P3, K3 or C4)")))
    }
}

/// Densities of several motifs sharing the `S^2` product.
fn densities(s: &DMatrix<f64>, motifs: &[Motif]) -> Vec<f64> {
    let nf = s.nrows() as f64;
    let needs_square = motifs.iter().any(|m| matches!(m, Motif::K3 | Motif::C4));
    let square = needs_square.then(|| s * s);
    motifs
        .iter()
        .map(|m| match m {
            Motif::K2 => s.sum() / (nf * nf),
            Motif::P3 => {
                let deg: DVector<f64> = s.column_sum();
                deg.norm_squared() / nf.powi(3)
            }
            // tr(S^3) = sum_ij (S^2)_ij S_ji, and S is symmetric.
            Motif::K3 => square.as_ref().expect("computed above").component_mul(s).sum() / nf.powi(3),
            // tr(S^4) = ||S^2||_F^2.
            Motif::C4 => square.as_ref().expect("computed above").norm_squared() / nf.powi(4),
        })
        .collect()
}

/// `t(F, G)` with the weighted trace formulas
/// `1'S1/n^2`, `1'S^2 1/n^3`, `tr(S^3)/n^3`, `tr(S^4)/n^4`.
pub fn hom_density_graph(motif: Motif, g: &Graph) -> f64 {
    densities(g.gso(), &[motif])[0]
}

/// `t(F, W)` by grid quadrature: the graph density of the deterministic
/// graph of `w` at resolution `n`.
pub fn hom_density_graphon(motif: Motif, w: &Graphon, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("quadrature resolution {n} must be at least 2")));
    }
    Ok(hom_density_graph(motif, &deterministic_graph(w, n)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub motif: Motif,
    pub n: usize,
    pub mode: Mode,
    pub seed_count: usize,
    /// Graph density (mean over seeds in stochastic mode).
    pub density_graph: f64,
    pub density_graph_std: f64,
    pub density_graphon: f64,
    /// `|t(F, G_n) - t(F, W)|` (mean over seeds in stochastic mode).
    pub gap: f64,
    pub gap_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

/// Density gaps for each `(motif, n)`. Stochastic graphs use the seeds
/// `derive_seed(master_seed, n, trial, "homdensity")` for `trial < seeds`.
pub fn convergence_table(
    w: &Graphon,
    motifs: &[Motif],
    sizes: &[usize],
    mode: Mode,
    seeds: usize,
    master_seed: u64,
    reference_resolution: usize,
) -> Result<Vec<ConvergenceRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::Config("sizes must be nonempty and strictly ascending".into()));
    }
    if sizes[0] == 0 {
        return Err(Error::Config("graph sizes must be positive".into()));
    }
    if mode == Mode::Stochastic && seeds == 0 {
        return Err(Error::Config("stochastic mode needs at least one seed".into()));
    }
    if reference_resolution < 2 {
        return Err(Error::Config("reference resolution must be at least 2".into()));
    }
    let reference = densities(deterministic_graph(w, reference_resolution)?.gso(), motifs);
    let mut rows = Vec::with_capacity(motifs.len() * sizes.len());
    for &n in sizes {
        let samples: Vec<Vec<f64>> = match mode {
            Mode::Deterministic => vec![densities(deterministic_graph(w, n)?.gso(), motifs)],
            Mode::Stochastic => (0..seeds as u64)
                .map(|t| {
                    let g = stochastic_graph(w, n, derive_seed(master_seed, n as u64, t, "homdensity"))?;
                    Ok(densities(g.gso(), motifs))
                })
                .collect::<Result<_>>()?,
        };
        for (k, &motif) in motifs.iter().enumerate() {
            let dens: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let gaps: Vec<f64> = dens.iter().map(|d| (d - reference[k]).abs()).collect();
            let (density_graph, density_graph_std) = mean_std(&dens);
            let (gap, gap_std) = mean_std(&gaps);
            rows.push(ConvergenceRow {
                motif,
                n,
                mode,
                seed_count: samples.len(),
                density_graph,
                density_graph_std,
                density_graphon: reference[k],
                gap,
                gap_std,
            });
        }
    }
    rows.sort_by_key(|r| (r.motif, r.n));
    Ok(rows)
}

/// Writes `motif,n,mode,seed_count,density_graph,density_graphon,gap`.
pub fn write_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.motif.to_string(),
                r.n.to_string(),
                r.mode.to_string(),
                r.seed_count.to_string(),
                fmt_f64(r.density_graph),
                fmt_f64(r.density_graphon),
                fmt_f64(r.gap),
            ]
        })
        .collect();
    write_table(
        path,
        &["motif", "n", "mode", "seed_count", "density_graph", "density_graphon", "gap"],
        &body,
    )
}
