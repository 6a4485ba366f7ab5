//! User-by-item rating matrices, item-item correlation graphs built from
//! them, and a synthetic rating generator driven by a graphon over items.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{Graphon, SymmetricKernel};
use crate::io::{fmt_f64, write_table};
use crate::sampling::Graph;

/// `U x M` ratings; 0 marks a missing rating.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsMatrix {
    values: DMatrix<f64>,
}

impl RatingsMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Invariant("ratings must be finite and nonnegative".into()));
        }
        Ok(Self { values })
    }

    pub fn users(&self) -> usize {
        self.values.nrows()
    }

    pub fn items(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        let nnz = self.values.iter().filter(|&&v| v != 0.0).count();
        nnz as f64 / self.values.len().max(1) as f64
    }

    /// Writes the observed entries as `user,item,rating` with 1-indexed ids.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::new();
        for u in 0..self.users() {
            for m in 0..self.items() {
                let r = self.values[(u, m)];
                if r != 0.0 {
                    rows.push(vec![(u + 1).to_string(), (m + 1).to_string(), fmt_f64(r)]);
                }
            }
        }
        write_table(path, &["user", "item", "rating"], &rows)
    }
}

/// Reads `user,item,rating` rows (1-indexed ids). The matrix is sized by
/// the largest ids seen; repeated pairs keep the last rating.
pub fn read_ratings_csv(path: &Path) -> Result<RatingsMatrix> {
    let ctx = || path.display().to_string();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(ctx(), e))?;
    let headers = reader.headers().map_err(|e| Error::parse(ctx(), e))?.clone();
    let expected = ["user", "item", "rating"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(Error::parse(ctx(), "expected header user,item,rating"));
    }
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let (mut users, mut items) = (0, 0);
    for (k, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(ctx(), e))?;
        let at = || format!("{} record {}", path.display(), k + 1);
        let id = |f: &str| -> Result<usize> {
            let v: usize = f.trim().parse().map_err(|e| Error::parse(at(), e))?;
            if v == 0 {
                return Err(Error::parse(at(), "ids are 1-indexed"));
            }
            Ok(v)
        };
        let (u, m) = (id(&rec[0])?, id(&rec[1])?);
        let r: f64 = rec[2].trim().parse().map_err(|e| Error::parse(at(), e))?;
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::parse(at(), format!("rating {r} must be finite and nonnegative")));
        }
        users = users.max(u);
        items = items.max(m);
        entries.insert((u - 1, m - 1), r);
    }
    let mut values = DMatrix::zeros(users, items);
    for ((u, m), r) in entries {
        values[(u, m)] = r;
    }
    RatingsMatrix::new(values)
}

/// Which rows enter the correlation of two item columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationPolicy {
    /// Every user, missing ratings counted as 0.
    #[default]
    AllRows,
    /// Only users who rated both items.
    CoRated,
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() < 2 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| sab / (saa * sbb).sqrt())
}

/// Item-item Pearson correlations with negatives clipped to 0 and a zero
/// diagonal, plus the columns with zero variance (whose rows are all 0).
pub fn correlation_matrix(r: &RatingsMatrix, policy: CorrelationPolicy) -> (DMatrix<f64>, Vec<usize>) {
    let v = r.values();
    let m = r.items();
    let constant: Vec<usize> = (0..m)
        .filter(|&j| {
            let col = v.column(j);
            col.iter().all(|&x| x == col[0])
        })
        .collect();
    let mut c = DMatrix::zeros(m, m);
    match policy {
        CorrelationPolicy::AllRows => {
            let means = v.row_mean();
            let mut centered = v.clone();
            for (j, mut col) in centered.column_iter_mut().enumerate() {
                col.add_scalar_mut(-means[j]);
            }
            let cov = centered.tr_mul(&centered);
            for i in 0..m {
                for j in (i + 1)..m {
                    let d = (cov[(i, i)] * cov[(j, j)]).sqrt();
                    if d > 0.0 {
                        let x = (cov[(i, j)] / d).max(0.0);
                        c[(i, j)] = x;
                        c[(j, i)] = x;
                    }
                }
            }
        }
        CorrelationPolicy::CoRated => {
            for i in 0..m {
                for j in (i + 1)..m {
                    let (a, b): (Vec<f64>, Vec<f64>) = (0..r.users())
                        .filter(|&u| v[(u, i)] != 0.0 && v[(u, j)] != 0.0)
                        .map(|u| (v[(u, i)], v[(u, j)]))
                        .unzip();
                    let x = pearson(&a, &b).unwrap_or(0.0).max(0.0);
                    c[(i, j)] = x;
                    c[(j, i)] = x;
                }
            }
        }
    }
    (c, constant)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationGraph {
    pub graph: Graph,
    /// Zero-variance columns, connected to nothing.
    pub constant_columns: Vec<usize>,
    /// Largest raw correlation, used as the normalization.
    pub max_correlation: f64,
}

/// Weighted item graph: clipped correlations divided by their largest
/// entry, so weights lie in `[0, 1]`.
pub fn build_correlation_graph(r: &RatingsMatrix, policy: CorrelationPolicy) -> Result<CorrelationGraph> {
    if r.items() < 2 {
        return Err(Error::Config(format!(
            "a correlation graph needs at least 2 items, got {}",
            r.items()
        )));
    }
    let (mut c, constant_columns) = correlation_matrix(r, policy);
    let max = c.max();
    if max > 0.0 {
        c /= max;
        // Division can leave the maximum a hair above 1.
        c.apply(|x| *x = x.min(1.0));
    }
    Ok(CorrelationGraph {
        graph: Graph::new(c, true)?,
        constant_columns,
        max_correlation: max,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRatings {
    pub users: usize,
    pub items: usize,
    /// Probability that a rating is hidden (stored as 0).
    pub missing_rate: f64,
    /// Standard deviation of the per-rating noise.
    pub noise: f64,
}

impl Default for SyntheticRatings {
    fn default() -> Self {
        Self {
            users: 200,
            items: 64,
            missing_rate: 0.5,
            noise: 0.5,
        }
    }
}

/// Ratings with item structure given by `w`: item `m` sits at
/// `u_m = (m - 1) / M`, each user draws an i.i.d. standard normal taste per
/// item, and the affinity `s_um = sum_m' W(u_m, u_m') taste_um' / sqrt(M)`
/// is turned into `clamp(round(3 + s_um + noise), 1, 5)` before masking.
pub fn generate_synthetic_ratings(w: &Graphon, opts: &SyntheticRatings, seed: u64) -> Result<RatingsMatrix> {
    let (users, items) = (opts.users, opts.items);
    if users < 2 || items < 2 {
        return Err(Error::Config("synthetic ratings need at least 2 users and 2 items".into()));
    }
    if !(0.0..1.0).contains(&opts.missing_rate) {
        return Err(Error::Config(format!("missing rate {} must lie in [0, 1)", opts.missing_rate)));
    }
    if !(opts.noise >= 0.0 && opts.noise.is_finite()) {
        return Err(Error::Config("rating noise must be finite and nonnegative".into()));
    }
    let kernel = w.discretize(items);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (items as f64).sqrt();
    let mut values = DMatrix::zeros(users, items);
    for u in 0..users {
        let taste: Vec<f64> = (0..items).map(|_| rng.sample(StandardNormal)).collect();
        for m in 0..items {
            let s: f64 = (0..items).map(|k| kernel[(m, k)] * taste[k]).sum::<f64>() * scale;
            let e: f64 = rng.sample::<f64, _>(StandardNormal) * opts.noise;
            let rating = (3.0 + s + e).round().clamp(1.0, 5.0);
            let hidden = rng.random::<f64>() < opts.missing_rate;
            values[(u, m)] = if hidden { 0.0 } else { rating };
        }
    }
    RatingsMatrix::new(values)
}

/// Splits `rows` into training and held-out rows, holding out
/// `round(test_fraction * len)` of them, deterministically in `seed`.
/// Returns `(train, test)`, each in ascending order.
pub fn split_rows(rows: &[usize], test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Config(format!("test fraction {test_fraction} must lie in [0, 1)")));
    }
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let held = (test_fraction * rows.len() as f64).round() as usize;
    let mut test = shuffled.split_off(rows.len() - held);
    shuffled.sort_unstable();
    test.sort_unstable();
    Ok((shuffled, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn duplicate_and_orthogonal_columns() {
        let r = RatingsMatrix::new(DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 2.0, 2.0, -1.0, 3.0, 3.0, -1.0, 4.0, 4.0, 1.0].map(|x: f64| x.abs()),
        ))
        .unwrap();
        let g = build_correlation_graph(&r, CorrelationPolicy::AllRows).unwrap();
        assert_abs_diff_eq!(g.graph.gso()[(0, 1)], 1.0, epsilon = 1e-12);
        assert_eq!(g.graph.gso()[(0, 0)], 0.0);

        // Mean-zero orthogonal columns: (1, -1, 1, -1) and (1, 1, -1, -1) shifted by 2.
        let r = RatingsMatrix::new(DMatrix::from_row_slice(4, 2, &[3.0, 3.0, 1.0, 3.0, 3.0, 1.0, 1.0, 1.0])).unwrap();
        let (c, _) = correlation_matrix(&r, CorrelationPolicy::AllRows);
        assert_abs_diff_eq!(c[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn constant_columns_are_isolated() {
        let r = RatingsMatrix::new(DMatrix::from_row_slice(3, 3, &[1.0, 4.0, 2.0, 2.0, 4.0, 3.0, 3.0, 4.0, 5.0])).unwrap();
        let g = build_correlation_graph(&r, CorrelationPolicy::AllRows).unwrap();
        assert_eq!(g.constant_columns, vec![1]);
        assert!(g.graph.gso().column(1).iter().all(|&x| x == 0.0));
        assert!(g.graph.gso()[(0, 2)] > 0.9);
    }

    #[test]
    fn negative_correlations_are_clipped() {
        let r = RatingsMatrix::new(DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 3.0, 3.0, 5.0, 1.0])).unwrap();
        let (c, _) = correlation_matrix(&r, CorrelationPolicy::AllRows);
        assert_eq!(c[(0, 1)], 0.0);
        let single = RatingsMatrix::new(DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0])).unwrap();
        assert!(matches!(
            build_correlation_graph(&single, CorrelationPolicy::AllRows),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn co_rated_policy_ignores_missing() {
        // Column 2 agrees with column 1 wherever both are rated.
        let r = RatingsMatrix::new(DMatrix::from_row_slice(
            5,
            2,
            &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 5.0, 0.0, 0.0, 5.0],
        ))
        .unwrap();
        let (c, _) = correlation_matrix(&r, CorrelationPolicy::CoRated);
        assert_abs_diff_eq!(c[(0, 1)], 1.0, epsilon = 1e-12);
        let (a, _) = correlation_matrix(&r, CorrelationPolicy::AllRows);
        assert!(a[(0, 1)] < 0.9);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let r = RatingsMatrix::new(DMatrix::from_row_slice(2, 3, &[5.0, 0.0, 1.0, 0.0, 3.0, 0.0])).unwrap();
        r.write_csv(&p).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "user,item,rating\n1,1,5\n1,3,1\n2,2,3\n");
        assert_eq!(read_ratings_csv(&p).unwrap(), r);

        std::fs::write(&p, "u,i,r\n1,1,1\n").unwrap();
        assert!(matches!(read_ratings_csv(&p), Err(Error::Parse { .. })));
        std::fs::write(&p, "user,item,rating\n0,1,1\n").unwrap();
        assert!(matches!(read_ratings_csv(&p), Err(Error::Parse { .. })));
    }

    fn two_block() -> Graphon {
        Graphon::two_block(0.8, 0.2).unwrap()
    }

    #[test]
    fn synthetic_ratings_are_seeded_and_masked() {
        let opts = SyntheticRatings {
            users: 300,
            items: 40,
            missing_rate: 0.3,
            noise: 0.5,
        };
        let a = generate_synthetic_ratings(&two_block(), &opts, 7).unwrap();
        assert_eq!(a, generate_synthetic_ratings(&two_block(), &opts, 7).unwrap());
        assert_ne!(a, generate_synthetic_ratings(&two_block(), &opts, 8).unwrap());
        assert!(a.values().iter().all(|&v| v == 0.0 || (1.0..=5.0).contains(&v)));

        let total = (opts.users * opts.items) as f64;
        let p = 1.0 - opts.missing_rate;
        let sigma = (p * (1.0 - p) / total).sqrt();
        assert!((a.density() - p).abs() <= 3.0 * sigma, "density {}", a.density());
    }

    fn block_means(c: &DMatrix<f64>) -> (f64, f64) {
        let m = c.nrows();
        let (mut within, mut cross, mut nw, mut nc) = (0.0, 0.0, 0, 0);
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                if (i < m / 2) == (j < m / 2) {
                    within += c[(i, j)];
                    nw += 1;
                } else {
                    cross += c[(i, j)];
                    nc += 1;
                }
            }
        }
        (within / nw as f64, cross / nc as f64)
    }

    #[test]
    fn block_structure_is_recovered() {
        let opts = SyntheticRatings {
            users: 200,
            items: 20,
            missing_rate: 0.2,
            noise: 0.5,
        };
        for seed in 0..20 {
            let r = generate_synthetic_ratings(&two_block(), &opts, seed).unwrap();
            let g = build_correlation_graph(&r, CorrelationPolicy::AllRows).unwrap();
            let (within, cross) = block_means(g.graph.gso());
            assert!(within > cross, "seed {seed}: {within} vs {cross}");
        }
    }

    #[test]
    fn zero_graphon_has_no_structure() {
        // Normalization pins the largest weight at 1, so the comparison is
        // made on the raw correlations. Co-rated pairs keep the
        // masking from diluting the block signal.
        let opts = SyntheticRatings {
            users: 200,
            items: 20,
            missing_rate: 0.2,
            noise: 0.5,
        };
        let zero = Graphon::constant(0.0).unwrap();
        for seed in 0..20 {
            let flat = generate_synthetic_ratings(&zero, &opts, seed).unwrap();
            let (c0, _) = correlation_matrix(&flat, CorrelationPolicy::CoRated);
            let blocky = generate_synthetic_ratings(&two_block(), &opts, seed).unwrap();
            let (c1, _) = correlation_matrix(&blocky, CorrelationPolicy::CoRated);
            assert!(c0.max() < block_means(&c1).0, "seed {seed}: {} vs {}", c0.max(), block_means(&c1).0);
        }
    }

    #[test]
    fn split_partitions_rows() {
        let rows: Vec<usize> = (0..50).map(|i| 2 * i).collect();
        let (train, test) = split_rows(&rows, 0.1, 3).unwrap();
        assert_eq!(test.len(), 5);
        let mut all = [train.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, rows);
        assert_eq!(split_rows(&rows, 0.1, 3).unwrap(), (train, test));
        assert!(split_rows(&rows, 1.0, 3).is_err());
    }
}
