//! Sample α-distance covariance, variance and correlation.
//!
//! All statistics are V-statistics (`1/n²` normalisation) built from
//! double-centered matrices of pairwise Euclidean distances raised to the
//! power α, `0 < α < 2`. Rows of every input matrix are samples.

use nalgebra::storage::Storage;
use nalgebra::{DMatrix, DVector, Dim, Dyn, Matrix};

use crate::error::{Error, Result};

/// Predictor matrix (`n × p`, samples as rows) and a univariate response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Input(format!(
                "predictors have {} rows but the response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::Input(format!(
                "need at least 2 samples, got {}",
                x.nrows()
            )));
        }
        if x.ncols() == 0 {
            return Err(Error::Input("need at least one predictor".into()));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Input("data contain non-finite values".into()));
        }
        Ok(Self { x, y })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    /// Number of samples.
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    /// Number of predictors.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Sub-dataset made of the given rows (repetitions allowed).
    pub fn select(&self, rows: &[usize]) -> Result<Self> {
        Self::new(
            crate::linalg::select_rows(&self.x, rows),
            crate::linalg::select_entries(&self.y, rows),
        )
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.x, self.y)
    }
}

/// Pairwise distances `‖x_k − x_l‖^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
    alpha: f64,
}

impl DistanceMatrix {
    /// Wraps an existing matrix after checking symmetry, zero diagonal and
    /// nonnegativity.
    pub fn from_values(values: DMatrix<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !values.is_square() {
            return Err(Error::Input("distance matrix must be square".into()));
        }
        let n = values.nrows();
        for k in 0..n {
            if values[(k, k)] != 0.0 {
                return Err(Error::Input(format!("nonzero diagonal entry at {k}")));
            }
            for l in 0..k {
                let v = values[(k, l)];
                if !v.is_finite() || v < 0.0 || v != values[(l, k)] {
                    return Err(Error::Input(format!(
                        "entry ({k}, {l}) breaks symmetry or nonnegativity"
                    )));
                }
            }
        }
        Ok(Self { values, alpha })
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Double-centered distance matrix `A_kl = a_kl − ā_k· − ā_·l + ā_··`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredDistanceMatrix {
    values: DMatrix<f64>,
}

impl CenteredDistanceMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// The all-zero matrix, i.e. the centered distances of a constant sample.
    pub fn zeros(n: usize) -> Self {
        Self {
            values: DMatrix::zeros(n, n),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )))
    }
}

pub fn alpha_distance_matrix<C: Dim, S: Storage<f64, Dyn, C>>(
    points: &Matrix<f64, Dyn, C, S>,
    alpha: f64,
) -> Result<DistanceMatrix> {
    check_alpha(alpha)?;
    let n = points.nrows();
    if n < 2 {
        return Err(Error::Input(format!("need at least 2 samples, got {n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("points contain non-finite values".into()));
    }
    let q = points.ncols();
    let mut values = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in (l + 1)..n {
            let mut sq = 0.0;
            for j in 0..q {
                let diff = points[(k, j)] - points[(l, j)];
                sq += diff * diff;
            }
            let dist = if alpha == 1.0 {
                sq.sqrt()
            } else {
                sq.powf(alpha / 2.0)
            };
            values[(k, l)] = dist;
            values[(l, k)] = dist;
        }
    }
    Ok(DistanceMatrix { values, alpha })
}

pub fn double_center(d: &DistanceMatrix) -> CenteredDistanceMatrix {
    CenteredDistanceMatrix {
        values: double_center_values(&d.values),
    }
}

pub(crate) fn double_center_values(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let nf = n as f64;
    // `a` is symmetric, so row means and column means coincide.
    let row_means: Vec<f64> = (0..n).map(|k| a.row(k).sum() / nf).collect();
    let grand = row_means.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |k, l| a[(k, l)] - row_means[k] - row_means[l] + grand)
}

/// `(1/n²) Σ_kl A_kl B_kl` for two centered matrices of the same size.
pub fn dcov_sq_centered(a: &CenteredDistanceMatrix, b: &CenteredDistanceMatrix) -> Result<f64> {
    if a.n() != b.n() {
        return Err(Error::Input(format!(
            "sample sizes differ: {} vs {}",
            a.n(),
            b.n()
        )));
    }
    let n = a.n() as f64;
    Ok(a.values.dot(&b.values) / (n * n))
}

fn centered<C: Dim, S: Storage<f64, Dyn, C>>(
    u: &Matrix<f64, Dyn, C, S>,
    alpha: f64,
) -> Result<CenteredDistanceMatrix> {
    Ok(double_center(&alpha_distance_matrix(u, alpha)?))
}

/// Sample α-distance covariance `ν²_n(u, v; α)`.
pub fn sample_dcov_sq<C1, S1, C2, S2>(
    u: &Matrix<f64, Dyn, C1, S1>,
    v: &Matrix<f64, Dyn, C2, S2>,
    alpha: f64,
) -> Result<f64>
where
    C1: Dim,
    S1: Storage<f64, Dyn, C1>,
    C2: Dim,
    S2: Storage<f64, Dyn, C2>,
{
    if u.nrows() != v.nrows() {
        return Err(Error::Input(format!(
            "sample sizes differ: {} vs {}",
            u.nrows(),
            v.nrows()
        )));
    }
    dcov_sq_centered(&centered(u, alpha)?, &centered(v, alpha)?)
}

/// Sample α-distance variance `ν²_n(u; α) = ν²_n(u, u; α)`.
pub fn sample_dvar_sq<C: Dim, S: Storage<f64, Dyn, C>>(
    u: &Matrix<f64, Dyn, C, S>,
    alpha: f64,
) -> Result<f64> {
    let a = centered(u, alpha)?;
    dcov_sq_centered(&a, &a)
}

/// Squared distance correlation from the three V-statistics. Returns 0 when
/// either distance variance vanishes; clamps to `[0, 1]`.
pub fn dcor_sq_from_parts(dcov: f64, dvar_u: f64, dvar_v: f64) -> f64 {
    let denom = dvar_u.max(0.0) * dvar_v.max(0.0);
    if denom > 0.0 {
        (dcov.max(0.0) / denom.sqrt()).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Squared sample distance correlation `R²_n(u, v; α)`.
pub fn sample_dcor_sq<C1, S1, C2, S2>(
    u: &Matrix<f64, Dyn, C1, S1>,
    v: &Matrix<f64, Dyn, C2, S2>,
    alpha: f64,
) -> Result<f64>
where
    C1: Dim,
    S1: Storage<f64, Dyn, C1>,
    C2: Dim,
    S2: Storage<f64, Dyn, C2>,
{
    if u.nrows() != v.nrows() {
        return Err(Error::Input(format!(
            "sample sizes differ: {} vs {}",
            u.nrows(),
            v.nrows()
        )));
    }
    let a = centered(u, alpha)?;
    let b = centered(v, alpha)?;
    Ok(dcor_sq_from_parts(
        dcov_sq_centered(&a, &b)?,
        dcov_sq_centered(&a, &a)?,
        dcov_sq_centered(&b, &b)?,
    ))
}
