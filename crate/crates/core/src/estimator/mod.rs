//! End-to-end robust SDR fit: whiten the predictors, pick a SIR or DR start,
//! optionally tune α by cross-validation, run the Stiefel optimizer and map
//! the result back to the original predictor basis.

mod cv;
mod slicing;
mod whiten;

pub use cv::{cross_validate_alpha, default_alpha_grid, CvReport, CvSettings};
pub use slicing::{
    choose_initialization, default_slices, dr_directions, select_initialization, sir_directions,
    slice_indices, InitSource,
};
pub use whiten::{default_ridge, whiten, WhitenedData};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dcov::{alpha_distance_matrix, check_alpha, double_center, Dataset};
use crate::error::{Error, Result};
use crate::stiefel::{optimize, project_stiefel, OptimizeTrace, OptimizerConfig, StiefelPoint};

/// How α is chosen for a fit.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSpec {
    Fixed(f64),
    CrossValidated(CvSettings),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    /// Covariance ridge; `None` selects [`default_ridge`].
    pub ridge: Option<f64>,
    /// SIR/DR slice count; `None` selects [`default_slices`].
    pub n_slices: Option<usize>,
    /// User-supplied starting directions (`p × d`, original basis).
    pub initial: Option<DMatrix<f64>>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub c_hat: StiefelPoint,
    /// `Σ̂^{−1/2} Ĉ`, satisfying `β̂ᵀ Σ̂ β̂ = I_d`.
    pub beta_hat: DMatrix<f64>,
    pub alpha_used: f64,
    pub init_source: InitSource,
    pub trace: OptimizeTrace,
    pub final_objective: f64,
    pub ridge: f64,
    /// Covariance (ridge included) that `beta_hat` is orthonormal under.
    pub covariance: DMatrix<f64>,
    pub cv: Option<CvReport>,
}

impl FitResult {
    /// `‖β̂ᵀ Σ̂ β̂ − I‖_F`.
    pub fn constraint_error(&self) -> f64 {
        let d = self.beta_hat.ncols();
        (self.beta_hat.transpose() * &self.covariance * &self.beta_hat
            - DMatrix::<f64>::identity(d, d))
        .norm()
    }
}

/// Fits the reduction for a user-chosen dimension `d`.
pub fn fit(data: &Dataset, d: usize, alpha: &AlphaSpec, config: &FitConfig) -> Result<FitResult> {
    check_dimension(data, d)?;
    match alpha {
        AlphaSpec::Fixed(a) => fit_fixed(data, d, *a, config),
        AlphaSpec::CrossValidated(settings) => {
            let report = cross_validate_alpha(data, d, settings, config)?;
            let mut result = fit_fixed(data, d, report.chosen_alpha, config)?;
            result.cv = Some(report);
            Ok(result)
        }
    }
}

fn check_dimension(data: &Dataset, d: usize) -> Result<()> {
    if d == 0 || d > data.p() {
        return Err(Error::Parameter(format!(
            "dimension d = {d} must satisfy 1 <= d <= p = {}",
            data.p()
        )));
    }
    Ok(())
}

pub(crate) fn fit_fixed(
    data: &Dataset,
    d: usize,
    alpha: f64,
    config: &FitConfig,
) -> Result<FitResult> {
    check_alpha(alpha)?;
    check_dimension(data, d)?;
    config.optimizer.validate()?;
    let ridge = config.ridge.unwrap_or_else(|| default_ridge(data.x()));
    let w = whiten(data, ridge)?;

    let (beta0, init_source) = match &config.initial {
        Some(b) => {
            if b.shape() != (data.p(), d) {
                return Err(Error::Parameter(format!(
                    "initial directions must be {}x{d}, got {}x{}",
                    data.p(),
                    b.nrows(),
                    b.ncols()
                )));
            }
            (b.clone(), InitSource::User)
        }
        None => {
            let n_slices = config
                .n_slices
                .unwrap_or_else(|| default_slices(data.n(), d));
            slicing::choose_from_whitened(data, &w, d, n_slices, alpha)?
        }
    };
    let c0 = project_stiefel(&(&w.sigma_half * beta0))?;

    let b = double_center(&alpha_distance_matrix(data.y(), alpha)?);
    let (c_hat, trace) = optimize(&w.z, &b, alpha, &config.optimizer, &c0)?;
    let beta_hat = &w.sigma_neg_half * c_hat.matrix();
    let final_objective = *trace
        .objective_values
        .last()
        .expect("trace holds the starting value");
    Ok(FitResult {
        c_hat,
        beta_hat,
        alpha_used: alpha,
        init_source,
        trace,
        final_objective,
        ridge,
        covariance: w.covariance,
        cv: None,
    })
}

/// Orthogonal projector onto the column span of `b`.
pub fn span_projector(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = crate::linalg::orthonormal_basis(b)?;
    Ok(&q * q.transpose())
}

/// Summary fields of a fit in a serialization-friendly shape.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FitSummary {
    pub beta_hat: Vec<Vec<f64>>,
    pub c_hat: Vec<Vec<f64>>,
    pub alpha_used: f64,
    pub init_source: InitSource,
    pub final_objective: f64,
    pub ridge: f64,
    pub trace: OptimizeTrace,
    pub cv: Option<CvReport>,
}

pub(crate) fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl From<&FitResult> for FitSummary {
    fn from(r: &FitResult) -> Self {
        Self {
            beta_hat: rows_of(&r.beta_hat),
            c_hat: rows_of(r.c_hat.matrix()),
            alpha_used: r.alpha_used,
            init_source: r.init_source,
            final_objective: r.final_objective,
            ridge: r.ridge,
            trace: r.trace.clone(),
            cv: r.cv.clone(),
        }
    }
}
