use nalgebra::{DMatrix, DVector};

use crate::dcov::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{center_columns, sample_covariance, sym_eigen_desc};

/// Predictors mapped to identity sample covariance.
#[derive(Debug, Clone)]
pub struct WhitenedData {
    /// `n × p` whitened, centered predictors.
    pub z: DMatrix<f64>,
    /// `Σ̂^{1/2}` of the (ridged) sample covariance.
    pub sigma_half: DMatrix<f64>,
    /// `Σ̂^{−1/2}`.
    pub sigma_neg_half: DMatrix<f64>,
    /// Sample covariance plus `ridge · I`.
    pub covariance: DMatrix<f64>,
    pub means: DVector<f64>,
    pub ridge: f64,
}

/// Default ridge: `1e-8 · trace(Σ̂) / p`.
pub fn default_ridge(x: &DMatrix<f64>) -> f64 {
    let cov = sample_covariance(x);
    1e-8 * cov.trace() / x.ncols() as f64
}

pub fn whiten(data: &Dataset, ridge: f64) -> Result<WhitenedData> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Parameter(format!("ridge must be >= 0, got {ridge}")));
    }
    let p = data.p();
    let mut covariance = sample_covariance(data.x());
    for i in 0..p {
        covariance[(i, i)] += ridge;
    }
    let (values, vectors) = sym_eigen_desc(&covariance);
    let max_eig = values[0];
    let min_eig = values[p - 1];
    if !(max_eig > 0.0) || min_eig <= 1e-12 * max_eig {
        return Err(Error::SingularCovariance {
            min_eigenvalue: min_eig,
            max_eigenvalue: max_eig,
        });
    }
    let half = DMatrix::from_diagonal(&values.map(f64::sqrt));
    let neg_half = DMatrix::from_diagonal(&values.map(|v| 1.0 / v.sqrt()));
    let sigma_half = &vectors * half * vectors.transpose();
    let sigma_neg_half = &vectors * neg_half * vectors.transpose();
    let (xc, means) = center_columns(data.x());
    Ok(WhitenedData {
        z: xc * &sigma_neg_half,
        sigma_half,
        sigma_neg_half,
        covariance,
        means,
        ridge,
    })
}
