//! Distance-correlation influence scores for outlier detection.
//!
//! The score of observation `i` is the mean squared change of the
//! per-coordinate distance correlation with the response when `i` is deleted.
//! Coordinates are either the raw predictors or a `d`-dimensional reduction
//! (PCA scores or the robust SDR projection). A bootstrap over resampled rows
//! supplies the flagging threshold.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dcov::{alpha_distance_matrix, dcor_sq_from_parts, Dataset};
use crate::error::{Error, Result};
use crate::estimator::{default_ridge, fit, AlphaSpec, FitConfig};
use crate::linalg::{center_columns, sample_covariance, select_entries, select_rows, thin_svd};
use crate::seed::{self, Stream};

/// Reduction applied to the predictors before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reducer {
    None,
    Pca,
    Rsdr,
}

impl std::str::FromStr for Reducer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(Reducer::None),
            "pca" => Ok(Reducer::Pca),
            "rsdr" => Ok(Reducer::Rsdr),
            other => Err(Error::Parameter(format!("unknown reducer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Significance level γ of the bootstrap threshold.
    pub gamma: f64,
    pub n_boot: usize,
    pub reducer: Reducer,
    /// Target dimension for `pca` and `rsdr`.
    pub d: usize,
    /// Exponent of the rSDR fit.
    pub alpha: f64,
    /// Covariance ridge for the rSDR fit; `None` selects [`reducer_ridge`].
    #[serde(default)]
    pub ridge: Option<f64>,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            n_boot: 100,
            reducer: Reducer::Rsdr,
            d: 3,
            alpha: 0.5,
            ridge: None,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Parameter(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if self.n_boot == 0 {
            return Err(Error::Parameter("n_boot must be at least 1".into()));
        }
        if self.reducer != Reducer::None && self.d == 0 {
            return Err(Error::Parameter("d must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierScores {
    pub scores: Vec<f64>,
    pub threshold: f64,
    pub flags: Vec<bool>,
}

/// Distance-matrix sums needed to update a V-statistic after deleting one
/// sample in `O(n)`.
struct DistSums {
    a: DMatrix<f64>,
    rows: DVector<f64>,
    total: f64,
}

impl DistSums {
    fn new(column: &DVector<f64>) -> Result<Self> {
        let a = alpha_distance_matrix(column, 1.0)?.values().clone();
        let rows = DVector::from_iterator(a.nrows(), a.row_iter().map(|r| r.sum()));
        let total = rows.sum();
        Ok(Self { a, rows, total })
    }
}

/// Cross terms between two distance matrices.
struct CrossSums {
    /// `Σ_kl a_kl b_kl`
    s1: f64,
    /// `Σ_k ra_k rb_k`
    rr: f64,
    /// `(a ∘ b) 1`
    hadamard_rows: DVector<f64>,
    /// `a · rb`
    a_rb: DVector<f64>,
    /// `b · ra`
    b_ra: DVector<f64>,
}

impl CrossSums {
    fn new(a: &DistSums, b: &DistSums) -> Self {
        let n = a.a.nrows();
        let hadamard_rows = DVector::from_fn(n, |k, _| a.a.row(k).dot(&b.a.row(k)));
        Self {
            s1: hadamard_rows.sum(),
            rr: a.rows.dot(&b.rows),
            hadamard_rows,
            a_rb: &a.a * &b.rows,
            b_ra: &b.a * &a.rows,
        }
    }

    fn full(&self, a: &DistSums, b: &DistSums) -> f64 {
        let n = a.a.nrows() as f64;
        vstat(self.s1, a.total, b.total, self.rr, n)
    }

    /// The statistic with sample `i` removed.
    fn without(&self, a: &DistSums, b: &DistSums, i: usize) -> f64 {
        let n = (a.a.nrows() - 1) as f64;
        let s1 = self.s1 - 2.0 * self.hadamard_rows[i];
        let ta = a.total - 2.0 * a.rows[i];
        let tb = b.total - 2.0 * b.rows[i];
        let rr =
            self.rr - a.rows[i] * b.rows[i] - self.a_rb[i] - self.b_ra[i] + self.hadamard_rows[i];
        vstat(s1, ta, tb, rr, n)
    }
}

/// `S₁ + S₂ − 2S₃` from raw sums.
fn vstat(s1: f64, ta: f64, tb: f64, rr: f64, n: f64) -> f64 {
    let n2 = n * n;
    s1 / n2 + (ta / n2) * (tb / n2) - 2.0 * rr / (n2 * n)
}

/// Leave-one-out influence scores `D_i` of the columns of `xr` on `y`, with
/// distance correlations at α = 1.
pub fn loo_dcor_scores(xr: &DMatrix<f64>, y: &DVector<f64>) -> Result<Vec<f64>> {
    let n = xr.nrows();
    if y.len() != n {
        return Err(Error::Input(format!(
            "{} rows of predictors but {} responses",
            n,
            y.len()
        )));
    }
    if n < 3 {
        return Err(Error::Input(format!(
            "leave-one-out scores need n >= 3, got {n}"
        )));
    }
    let m = xr.ncols();
    if m == 0 {
        return Err(Error::Input("need at least one coordinate".into()));
    }
    let yb = DistSums::new(y)?;
    let yy = CrossSums::new(&yb, &yb);
    let var_y_full = yy.full(&yb, &yb);

    let mut scores = vec![0.0; n];
    for k in 0..m {
        let xa = DistSums::new(&xr.column(k).into_owned())?;
        let xx = CrossSums::new(&xa, &xa);
        let xy = CrossSums::new(&xa, &yb);
        let full = dcor_sq_from_parts(xy.full(&xa, &yb), xx.full(&xa, &xa), var_y_full).sqrt();
        for (i, score) in scores.iter_mut().enumerate() {
            let deleted = dcor_sq_from_parts(
                xy.without(&xa, &yb, i),
                xx.without(&xa, &xa, i),
                yy.without(&yb, &yb, i),
            )
            .sqrt();
            *score += (full - deleted).powi(2);
        }
    }
    for s in &mut scores {
        *s /= m as f64;
    }
    Ok(scores)
}

/// Empirical upper-γ quantile: the smallest pooled value with at most a
/// fraction γ of the values above it.
pub fn upper_quantile(values: &[f64], gamma: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let rank = ((1.0 - gamma) * len as f64).ceil() as usize;
    sorted[rank.clamp(1, len) - 1]
}

/// Bootstrap threshold: pool the leave-one-out scores of `n_boot` row
/// resamples (with replacement) and take their upper-γ quantile.
pub fn bootstrap_threshold(
    xr: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma: f64,
    n_boot: usize,
    seed: u64,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Parameter(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    if n_boot == 0 {
        return Err(Error::Parameter("n_boot must be at least 1".into()));
    }
    let n = xr.nrows();
    let pooled: Vec<Vec<f64>> = (0..n_boot as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed::rng(seed, Stream::Bootstrap, b);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            loo_dcor_scores(&select_rows(xr, &idx), &select_entries(y, &idx))
        })
        .collect::<Result<_>>()?;
    Ok(upper_quantile(&pooled.concat(), gamma))
}

/// Scores of the centered data on its top-`d` principal axes.
pub fn pca_reduce(x: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let (n, p) = x.shape();
    if d == 0 || d > p || d + 1 > n {
        return Err(Error::Parameter(format!(
            "PCA dimension d = {d} must satisfy 1 <= d <= min(n - 1, p) = {}",
            (n.saturating_sub(1)).min(p)
        )));
    }
    let (xc, _) = center_columns(x);
    let svd = thin_svd(&xc)?;
    Ok(xc * svd.v.columns(0, d))
}

/// Relative ridge used by the rSDR reducer when `p >= n`.
pub const HIGH_DIM_RIDGE: f64 = 0.1;

/// Default rSDR ridge: the estimator default when `n > p`, otherwise
/// `HIGH_DIM_RIDGE · tr(Σ̂)/p`. With `p >= n` a vanishing ridge lets the fit
/// interpolate the response, outliers included.
pub fn reducer_ridge(x: &DMatrix<f64>) -> f64 {
    let (n, p) = x.shape();
    if n > p {
        return default_ridge(x);
    }
    HIGH_DIM_RIDGE * sample_covariance(x).trace() / p as f64
}

/// Reduced predictor matrix for the configured reducer.
pub fn reduce(data: &Dataset, config: &OutlierConfig) -> Result<DMatrix<f64>> {
    match config.reducer {
        Reducer::None => Ok(data.x().clone()),
        Reducer::Pca => pca_reduce(data.x(), config.d),
        Reducer::Rsdr => {
            let fit_config = FitConfig {
                ridge: Some(config.ridge.unwrap_or_else(|| reducer_ridge(data.x()))),
                ..FitConfig::default()
            };
            let fitted = fit(data, config.d, &AlphaSpec::Fixed(config.alpha), &fit_config)?;
            Ok(data.x() * fitted.beta_hat)
        }
    }
}

/// Full detection pipeline: reduce, score, threshold, flag.
pub fn detect(data: &Dataset, config: &OutlierConfig, seed: u64) -> Result<OutlierScores> {
    config.validate()?;
    let reduced = reduce(data, config)?;
    let scores = loo_dcor_scores(&reduced, data.y())?;
    let threshold = bootstrap_threshold(&reduced, data.y(), config.gamma, config.n_boot, seed)?;
    let flags = scores.iter().map(|&s| s > threshold).collect();
    Ok(OutlierScores {
        scores,
        threshold,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(false-positive rate, true-positive rate)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve of `scores` (higher = more positive) against `labels`; tied
/// scores move the curve along one diagonal segment.
pub fn roc(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::Evaluation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("scores contain NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Evaluation(
            "ROC needs at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = (prev_fp as f64 / neg as f64, prev_tp as f64 / pos as f64);
        let (x1, y1) = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push((x1, y1));
    }
    Ok(RocResult { points, auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcov::sample_dcor_sq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Rebuilds every deleted dataset and recomputes the correlations directly.
    fn naive_scores(xr: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
        let n = xr.nrows();
        let m = xr.ncols();
        (0..n)
            .map(|i| {
                let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                let yk = select_entries(y, &keep);
                (0..m)
                    .map(|k| {
                        let col = xr.column(k).into_owned();
                        let full = sample_dcor_sq(&col, y, 1.0).unwrap().sqrt();
                        let del = sample_dcor_sq(&select_entries(&col, &keep), &yk, 1.0)
                            .unwrap()
                            .sqrt();
                        (full - del).powi(2)
                    })
                    .sum::<f64>()
                    / m as f64
            })
            .collect()
    }

    fn linear_data(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            x.row(i).sum() + 0.5 * rng.sample::<f64, _>(StandardNormal)
        });
        (x, y)
    }

    #[test]
    fn identical_samples_score_zero() {
        let x = DMatrix::from_element(8, 3, 1.5);
        let y = DVector::from_element(8, -2.0);
        assert!(loo_dcor_scores(&x, &y).unwrap().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn matches_naive_recomputation() {
        for seed in 0..3 {
            let (x, y) = linear_data(seed, 25, 3);
            let fast = loo_dcor_scores(&x, &y).unwrap();
            let slow = naive_scores(&x, &y);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn extreme_response_gets_max_score() {
        let (x, mut y) = linear_data(4, 50, 3);
        y[17] = 60.0;
        let scores = loo_dcor_scores(&x, &y).unwrap();
        let slow = naive_scores(&x, &y);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&scores), 17);
        assert_eq!(argmax(&slow), 17);
    }

    #[test]
    fn too_few_samples() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_vec(vec![0.0, 1.0]);
        assert!(matches!(loo_dcor_scores(&x, &y), Err(Error::Input(_))));
    }

    #[test]
    fn quantile_edges() {
        let v = vec![0.3; 10];
        assert_eq!(upper_quantile(&v, 0.05), 0.3);
        assert_eq!(upper_quantile(&v, 0.9), 0.3);
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(upper_quantile(&v, 1e-12), 100.0);
        assert_eq!(upper_quantile(&v, 0.05), 95.0);
    }

    #[test]
    fn constant_scores_give_constant_threshold() {
        // All-identical rows make every resampled score zero.
        let x = DMatrix::from_element(10, 2, 3.0);
        let y = DVector::from_element(10, 1.0);
        for gamma in [0.01, 0.5, 0.99] {
            assert_eq!(bootstrap_threshold(&x, &y, gamma, 1, 3).unwrap(), 0.0);
        }
    }

    #[test]
    fn threshold_is_monotone_in_gamma() {
        let (x, y) = linear_data(5, 30, 2);
        let mut last = f64::INFINITY;
        for gamma in [0.01, 0.05, 0.1, 0.3, 0.6] {
            let t = bootstrap_threshold(&x, &y, gamma, 20, 9).unwrap();
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn pca_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        // Rank-2 data in R^5.
        let basis = DMatrix::from_fn(2, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let coef = DMatrix::from_fn(40, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = &coef * &basis;
        let scores = pca_reduce(&x, 2).unwrap();
        let (xc, _) = center_columns(&x);
        let svd = thin_svd(&xc).unwrap();
        let back = &scores * svd.v.columns(0, 2).transpose();
        assert!((back - &xc).norm() < 1e-8);

        let x = DMatrix::from_fn(30, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let full = pca_reduce(&x, 4).unwrap();
        let (xc, _) = center_columns(&x);
        for i in 0..30 {
            for j in 0..i {
                let a = (xc.row(i) - xc.row(j)).norm();
                let b = (full.row(i) - full.row(j)).norm();
                assert!((a - b).abs() < 1e-8);
            }
        }

        let x = DMatrix::from_fn(100, 10, |_, j| {
            (1.0 + j as f64) * rng.sample::<f64, _>(StandardNormal)
        });
        let s = pca_reduce(&x, 3).unwrap();
        let (eig, _) = crate::linalg::sym_eigen_desc(&crate::linalg::sample_covariance(&x));
        let var = crate::linalg::sample_covariance(&s);
        for j in 0..3 {
            assert!((var[(j, j)] - eig[j]).abs() < 1e-8 * eig[j]);
        }
        assert!(matches!(pca_reduce(&x, 11), Err(Error::Parameter(_))));
    }

    #[test]
    fn detect_without_reducer_matches_raw_scores() {
        let (x, y) = linear_data(7, 20, 3);
        let data = Dataset::new(x.clone(), y.clone()).unwrap();
        let config = OutlierConfig {
            reducer: Reducer::None,
            n_boot: 5,
            ..OutlierConfig::default()
        };
        let out = detect(&data, &config, 1).unwrap();
        assert_eq!(out.scores, loo_dcor_scores(&x, &y).unwrap());
        for (s, f) in out.scores.iter().zip(&out.flags) {
            assert_eq!(*f, *s > out.threshold);
        }
    }

    #[test]
    fn roc_examples() {
        let r = roc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap();
        assert_eq!(r.auc, 1.0);

        let r = roc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.points, vec![(0.0, 0.0), (1.0, 1.0)]);

        let r = roc(
            &[0.9, 0.8, 0.7, 0.6, 0.5, 0.4],
            &[true, true, false, true, false, false],
        )
        .unwrap();
        assert!((r.auc - 8.0 / 9.0).abs() < 1e-12);
        assert_eq!(r.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(r.points.last(), Some(&(1.0, 1.0)));

        assert!(matches!(
            roc(&[0.1, 0.2], &[true, true]),
            Err(Error::Evaluation(_))
        ));
    }
}
