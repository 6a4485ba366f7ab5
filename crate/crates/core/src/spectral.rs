//! Eigendecompositions under the signed-index convention, band counts and
//! cross-spectrum eigengaps, operator norms, and numerical checks of the
//! eigenvalue (Weyl) and eigenspace (Davis-Kahan) perturbation inequalities.

use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::SymmetricKernel;
use crate::io::{fmt_f64, write_table};

/// Default grid resolution used to discretize analytic kernels for norms and
/// reference spectra.
pub const DEFAULT_RESOLUTION: usize = 1024;

/// Tolerance on `|M_ij - M_ji|` (relative to `max(1, max |M|)`).
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalue normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// Raw matrix eigenvalues.
    Graph,
    /// Eigenvalues divided by the matrix dimension (graphon scale).
    Graphon,
    /// Eigenvalues divided by an explicit normalization.
    Divisor(f64),
}

impl Scale {
    fn divisor(self, dim: usize) -> f64 {
        match self {
            Scale::Graph => 1.0,
            Scale::Graphon => dim as f64,
            Scale::Divisor(m) => m,
        }
    }
}

/// Assignment of eigenvalues to signed indices: `positive[k]` is the input
/// position of `lambda_{k+1}`, `negative[k]` that of `lambda_{-(k+1)}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignedOrder {
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

/// Orders eigenvalues by sign: positive values descending at indices
/// `1, 2, ...` followed by zeros, negative values ascending (most negative
/// first) at `-1, -2, ...`. Ties keep their input order.
pub fn signed_order(values: &[f64]) -> SignedOrder {
    let mut pos: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 0.0).collect();
    let zeros = (0..values.len()).filter(|&i| values[i] == 0.0);
    let mut neg: Vec<usize> = (0..values.len()).filter(|&i| values[i] < 0.0).collect();
    pos.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    neg.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    pos.extend(zeros);
    SignedOrder {
        positive: pos,
        negative: neg,
    }
}

/// Eigenvalues indexed by nonzero signed integers, with optional
/// eigenvectors aligned to the same order.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedSpectrum {
    positive: Vec<f64>,
    negative: Vec<f64>,
    /// Columns: `lambda_1, lambda_2, ..., lambda_{-1}, lambda_{-2}, ...`.
    vectors: Option<DMatrix<f64>>,
    scale: Scale,
}

impl SignedSpectrum {
    /// Builds a spectrum from unordered values (already scaled).
    pub fn from_values(values: &[f64], scale: Scale) -> Self {
        let order = signed_order(values);
        Self {
            positive: order.positive.iter().map(|&i| values[i]).collect(),
            negative: order.negative.iter().map(|&i| values[i]).collect(),
            vectors: None,
            scale,
        }
    }

    fn from_eigen(values: &DVector<f64>, vectors: Option<&DMatrix<f64>>, scale: Scale) -> Self {
        let values: Vec<f64> = values.iter().copied().collect();
        let order = signed_order(&values);
        let vectors = vectors.map(|v| {
            let cols: Vec<usize> = order.positive.iter().chain(&order.negative).copied().collect();
            v.select_columns(&cols)
        });
        Self {
            positive: order.positive.iter().map(|&i| values[i]).collect(),
            negative: order.negative.iter().map(|&i| values[i]).collect(),
            vectors,
            scale,
        }
    }

    /// `lambda_i`; indices past the stored spectrum read as 0.
    pub fn get(&self, i: i64) -> f64 {
        assert_ne!(i, 0, "signed indices skip 0");
        let k = (i.unsigned_abs() - 1) as usize;
        let side = if i > 0 { &self.positive } else { &self.negative };
        side.get(k).copied().unwrap_or(0.0)
    }

    /// Number of entries stored at positive (resp. negative) indices.
    pub fn positive_len(&self) -> usize {
        self.positive.len()
    }

    pub fn negative_len(&self) -> usize {
        self.negative.len()
    }

    pub fn len(&self) -> usize {
        self.positive.len() + self.negative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// `(signed index, eigenvalue)` pairs: positive indices first.
    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let pos = self.positive.iter().enumerate().map(|(k, &v)| (k as i64 + 1, v));
        let neg = self.negative.iter().enumerate().map(|(k, &v)| (-(k as i64) - 1, v));
        pos.chain(neg)
    }

    /// Eigenvalues in storage order (matching the columns of `vectors`).
    pub fn values(&self) -> Vec<f64> {
        self.positive.iter().chain(&self.negative).copied().collect()
    }

    pub fn vectors(&self) -> Option<&DMatrix<f64>> {
        self.vectors.as_ref()
    }

    fn column_of(&self, i: i64) -> Option<usize> {
        let k = (i.unsigned_abs() - 1) as usize;
        if i > 0 {
            (k < self.positive.len()).then_some(k)
        } else {
            (k < self.negative.len()).then_some(self.positive.len() + k)
        }
    }

    /// Eigenvector for signed index `i`, when vectors were computed.
    pub fn vector(&self, i: i64) -> Option<DVector<f64>> {
        let col = self.column_of(i)?;
        self.vectors.as_ref().map(|v| v.column(col).into_owned())
    }

    /// Largest `|lambda|`.
    pub fn spectral_radius(&self) -> f64 {
        self.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Writes `signed_index,eigenvalue` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .iter()
            .map(|(i, v)| vec![i.to_string(), fmt_f64(v)])
            .collect();
        write_table(path, &["signed_index", "eigenvalue"], &rows)
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Invariant(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = SYMMETRY_TOL * m.amax().max(1.0);
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol {
                return Err(Error::Invariant(format!(
                    "matrix is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Full symmetric eigendecomposition (values and vectors).
pub fn decompose(m: &DMatrix<f64>, scale: Scale) -> Result<SignedSpectrum> {
    check_symmetric(m)?;
    let d = scale.divisor(m.nrows());
    let eig = SymmetricEigen::new(m.clone());
    let values = eig.eigenvalues / d;
    Ok(SignedSpectrum::from_eigen(&values, Some(&eig.eigenvectors), scale))
}

/// Eigenvalues only; several times cheaper than [`decompose`].
pub fn eigenvalues(m: &DMatrix<f64>, scale: Scale) -> Result<SignedSpectrum> {
    check_symmetric(m)?;
    let d = scale.divisor(m.nrows());
    let values = m.clone().symmetric_eigenvalues() / d;
    Ok(SignedSpectrum::from_eigen(&values, None, scale))
}

/// `n_c`: how many stored eigenvalues satisfy `|lambda| >= c`.
pub fn n_c(spec: &SignedSpectrum, c: f64) -> Result<usize> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("band cutoff c = {c} must be positive")));
    }
    Ok(spec.iter().filter(|(_, v)| v.abs() >= c).count())
}

/// Signed indices in the band `|lambda| >= c`.
pub fn band_indices(spec: &SignedSpectrum, c: f64) -> Vec<i64> {
    spec.iter().filter(|(_, v)| v.abs() >= c).map(|(i, _)| i).collect()
}

fn toward_zero(i: i64) -> i64 {
    i + i.signum()
}

/// Cross-spectrum eigengap `delta_c^{(pq)}`: the minimum, over band indices
/// `i` of `q`, of `|lambda_i^p - lambda_{i+sgn i}^q|`,
/// `|lambda_i^q - lambda_{i+sgn i}^p|`, `|lambda_1^p - lambda_{-1}^q|` and
/// `|lambda_1^q - lambda_{-1}^p|`. Missing indices read as 0.
pub fn delta_c(p: &SignedSpectrum, q: &SignedSpectrum, c: f64) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::Domain(format!("band cutoff c = {c} must be positive")));
    }
    let band = band_indices(q, c);
    if band.is_empty() {
        return Err(Error::UndefinedGap { cutoff: c });
    }
    let cross = (p.get(1) - q.get(-1))
        .abs()
        .min((q.get(1) - p.get(-1)).abs());
    Ok(band.iter().fold(cross, |acc, &i| {
        let j = toward_zero(i);
        acc.min((p.get(i) - q.get(j)).abs())
            .min((q.get(i) - p.get(j)).abs())
    }))
}

/// Largest singular value of a symmetric matrix divided by `divisor`.
pub fn operator_norm_matrix(m: &DMatrix<f64>, divisor: f64) -> Result<f64> {
    Ok(eigenvalues(m, Scale::Divisor(divisor))?.spectral_radius())
}

/// `||T_K||` of a kernel, estimated from its `n x n` grid discretization
/// (largest singular value over `n`). Exact for step kernels aligned with
/// the grid.
pub fn operator_norm(k: &impl SymmetricKernel, n: usize) -> Result<f64> {
    operator_norm_matrix(&k.discretize(n), n as f64)
}

/// Hilbert-Schmidt norm `sqrt(int int K^2)` from the same discretization.
pub fn hilbert_schmidt_norm(k: &impl SymmetricKernel, n: usize) -> f64 {
    k.discretize(n).norm() / n as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylCheck {
    /// `max_i |lambda'_i - lambda_i|` over shared signed indices.
    pub max_difference: f64,
    /// `max(0, max_difference - bound)`.
    pub max_violation: f64,
    pub pass: bool,
}

/// Slack for the eigenvalue perturbation check.
pub const WEYL_TOL: f64 = 1e-9;

/// Checks `|lambda'_i - lambda_i| <= kernel_dist` for every signed index,
/// zero-padding whichever spectrum is shorter.
pub fn weyl_check(a: &SignedSpectrum, b: &SignedSpectrum, kernel_dist: f64) -> WeylCheck {
    let pos = a.positive_len().max(b.positive_len()) as i64;
    let neg = a.negative_len().max(b.negative_len()) as i64;
    let max_difference = (1..=pos)
        .chain((1..=neg).map(|k| -k))
        .map(|i| (a.get(i) - b.get(i)).abs())
        .fold(0.0, f64::max);
    let max_violation = (max_difference - kernel_dist).max(0.0);
    WeylCheck {
        max_difference,
        max_violation,
        pass: max_difference <= kernel_dist + WEYL_TOL,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanCheck {
    /// `||E - E'||`.
    pub projector_distance: f64,
    /// `(pi / 2) ||M - M'|| / d`.
    pub bound: f64,
    /// The actual cross-separation between the selected eigenvalues and the
    /// complementary part of the other spectrum.
    pub separation: f64,
    pub pass: bool,
}

fn projector(spec: &SignedSpectrum, subset: &[i64]) -> Result<DMatrix<f64>> {
    let v = spec
        .vectors()
        .ok_or_else(|| Error::Domain("spectral projector needs eigenvectors".into()))?;
    let mut e = DMatrix::zeros(v.nrows(), v.nrows());
    for &i in subset {
        let col = spec
            .column_of(i)
            .ok_or_else(|| Error::Domain(format!("signed index {i} is not in the spectrum")))?;
        let x = v.column(col);
        e += x * x.transpose();
    }
    Ok(e)
}

fn complement_separation(a: &SignedSpectrum, sel_a: &[i64], b: &SignedSpectrum, sel_b: &[i64]) -> f64 {
    let mut best = f64::INFINITY;
    for &i in sel_a {
        let x = a.get(i);
        for (j, y) in b.iter() {
            if !sel_b.contains(&j) {
                best = best.min((x - y).abs());
            }
        }
    }
    best
}

/// Davis-Kahan check on two symmetric matrices: the spectral projectors `E`
/// onto the eigenvalues of `m` at signed indices `gamma`, and `E'` onto those
/// of `m2` at `omega`, must satisfy `||E - E'|| <= (pi/2) ||M - M'|| / d`.
///
/// `d` must not exceed the true cross-separation between each selected set
/// and the unselected eigenvalues of the other matrix.
pub fn davis_kahan_check(
    m: &DMatrix<f64>,
    m2: &DMatrix<f64>,
    gamma: &[i64],
    omega: &[i64],
    d: f64,
) -> Result<DavisKahanCheck> {
    if !(d > 0.0) {
        return Err(Error::Domain(format!("separation d = {d} must be positive")));
    }
    if m.shape() != m2.shape() {
        return Err(Error::Shape {
            expected: m.nrows(),
            actual: m2.nrows(),
        });
    }
    let a = decompose(m, Scale::Graph)?;
    let b = decompose(m2, Scale::Graph)?;
    let separation = complement_separation(&a, gamma, &b, omega)
        .min(complement_separation(&b, omega, &a, gamma));
    if d > separation * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "separation d = {d} exceeds the actual eigenvalue separation {separation}"
        )));
    }
    let diff = projector(&a, gamma)? - projector(&b, omega)?;
    let projector_distance = operator_norm_matrix(&diff, 1.0)?;
    let bound = FRAC_PI_2 * operator_norm_matrix(&(m - m2), 1.0)? / d;
    Ok(DavisKahanCheck {
        projector_distance,
        bound,
        separation,
        pass: projector_distance <= bound * (1.0 + 1e-12) + 1e-12,
    })
}

/// Largest separation usable for [`davis_kahan_check`] with these subsets.
pub fn davis_kahan_separation(
    a: &SignedSpectrum,
    gamma: &[i64],
    b: &SignedSpectrum,
    omega: &[i64],
) -> f64 {
    complement_separation(a, gamma, b, omega).min(complement_separation(b, omega, a, gamma))
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("failure probability xi = {xi} must lie in (0, 1)")))
    }
}

/// Spectral concentration radius `2 sqrt(n log(2n / xi))` for
/// `||S_bar - S||` of a W-random graph, valid with probability `1 - xi`
/// under the degree condition below.
pub fn concentration_bound(n: usize, xi: f64) -> Result<f64> {
    check_xi(xi)?;
    if n == 0 {
        return Err(Error::Domain("graph size must be at least 1".into()));
    }
    let nf = n as f64;
    Ok(2.0 * (nf * (2.0 * nf / xi).ln()).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeCondition {
    pub max_degree: f64,
    /// `4 log(2n / xi) / 9`.
    pub threshold: f64,
    pub pass: bool,
}

/// Checks `d > 4 log(2n/xi) / 9` for the maximum expected degree `d` (the
/// largest row sum of the deterministic GSO).
pub fn degree_condition(max_degree: f64, n: usize, xi: f64) -> Result<DegreeCondition> {
    check_xi(xi)?;
    let threshold = 4.0 * (2.0 * n as f64 / xi).ln() / 9.0;
    Ok(DegreeCondition {
        max_degree,
        threshold,
        pass: max_degree > threshold,
    })
}
