use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_fixed, FitConfig};
use crate::dcov::{check_alpha, sample_dcov_sq, Dataset};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Exponent of the distance covariance used to score validation folds.
pub const VALIDATION_ALPHA: f64 = 0.5;

/// `{0.1, 0.2, …, 0.9}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvSettings {
    pub grid: Vec<f64>,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            grid: default_alpha_grid(),
            k_folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<f64>,
    /// `fold_scores[a][f]`: validation score of grid point `a` on fold `f`.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_validation_scores: Vec<f64>,
    pub chosen_alpha: f64,
}

/// Contiguous blocks of a seeded shuffle; block sizes differ by at most one.
pub(crate) fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Folds, 0));
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = n / k + usize::from(f < n % k);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    folds
}

/// k-fold cross-validation of α: every grid value is fitted on each training
/// split and scored by the 0.5-distance covariance between the projected
/// validation predictors and the validation response.
pub fn cross_validate_alpha(
    data: &Dataset,
    d: usize,
    settings: &CvSettings,
    config: &FitConfig,
) -> Result<CvReport> {
    if settings.k_folds < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 folds, got {}",
            settings.k_folds
        )));
    }
    if settings.grid.is_empty() {
        return Err(Error::Parameter("alpha grid is empty".into()));
    }
    for &a in &settings.grid {
        check_alpha(a)?;
    }
    let n = data.n();
    if n / settings.k_folds < 2 {
        return Err(Error::FoldSize(format!(
            "{n} samples give validation folds with fewer than 2 samples at k = {}",
            settings.k_folds
        )));
    }
    let folds = fold_assignment(n, settings.k_folds, settings.seed);
    let splits: Vec<(Dataset, Dataset)> = folds
        .iter()
        .map(|val| {
            let mut in_val = vec![false; n];
            for &i in val {
                in_val[i] = true;
            }
            let train: Vec<usize> = (0..n).filter(|&i| !in_val[i]).collect();
            Ok((data.select(&train)?, data.select(val)?))
        })
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..settings.grid.len())
        .flat_map(|a| (0..splits.len()).map(move |f| (a, f)))
        .collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(a, f)| {
            let (train, val) = &splits[f];
            let fitted = fit_fixed(train, d, settings.grid[a], config).map_err(|e| match e {
                Error::SingularCovariance { .. } => Error::FoldSize(format!(
                    "training fold {f} ({} samples) cannot be whitened: {e}",
                    train.n()
                )),
                other => other,
            })?;
            sample_dcov_sq(&(val.x() * &fitted.beta_hat), val.y(), VALIDATION_ALPHA)
        })
        .collect::<Result<_>>()?;

    let k = splits.len();
    let fold_scores: Vec<Vec<f64>> = scores.chunks(k).map(<[f64]>::to_vec).collect();
    let mean_validation_scores: Vec<f64> = fold_scores
        .iter()
        .map(|s| s.iter().sum::<f64>() / k as f64)
        .collect();

    let mut best = 0;
    for a in 1..settings.grid.len() {
        let (ma, mb) = (mean_validation_scores[a], mean_validation_scores[best]);
        if ma > mb || (ma == mb && settings.grid[a] < settings.grid[best]) {
            best = a;
        }
    }
    Ok(CvReport {
        grid: settings.grid.clone(),
        fold_scores,
        mean_validation_scores,
        chosen_alpha: settings.grid[best],
    })
}
