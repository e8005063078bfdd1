//! Moment-based initial directions: sliced inverse regression (SIR) and
//! directional regression (DR).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::whiten::{default_ridge, whiten, WhitenedData};
use crate::dcov::{sample_dcov_sq, Dataset};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;

/// Where the optimizer's starting point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitSource {
    Sir,
    Dr,
    User,
}

/// Default slice count: 10, or `n / 5` when that is smaller, never below
/// `d + 1`.
pub fn default_slices(n: usize, d: usize) -> usize {
    (n / 5).min(10).max(d + 1).max(2)
}

/// Partitions sample indices into slices of roughly equal size by the order
/// of `y`. Tied responses always share a slice, so fewer slices than
/// requested may come back.
pub fn slice_indices(y: &DVector<f64>, n_slices: usize) -> Result<Vec<Vec<usize>>> {
    let n = y.len();
    if n_slices < 2 {
        return Err(Error::Slicing(format!(
            "need at least 2 slices, got {n_slices}"
        )));
    }
    if n < n_slices {
        return Err(Error::Slicing(format!(
            "{n} samples cannot fill {n_slices} slices"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));

    let mut slices = Vec::with_capacity(n_slices);
    let mut start = 0;
    for h in 1..=n_slices {
        if start >= n {
            break;
        }
        let mut end = if h == n_slices {
            n
        } else {
            ((h * n) as f64 / n_slices as f64).round() as usize
        };
        end = end.max(start + 1);
        while end < n && y[order[end]] == y[order[end - 1]] {
            end += 1;
        }
        slices.push(order[start..end].to_vec());
        start = end;
    }
    Ok(slices)
}

struct SliceMoments {
    proportion: f64,
    mean: DVector<f64>,
    /// Within-slice covariance with the slice-size divisor.
    cov: DMatrix<f64>,
}

fn slice_moments(z: &DMatrix<f64>, slices: &[Vec<usize>]) -> Vec<SliceMoments> {
    let n = z.nrows() as f64;
    let p = z.ncols();
    slices
        .iter()
        .map(|idx| {
            let nh = idx.len() as f64;
            let mut mean = DVector::zeros(p);
            for &i in idx {
                mean += z.row(i).transpose();
            }
            mean /= nh;
            let mut cov = DMatrix::zeros(p, p);
            for &i in idx {
                let r = z.row(i).transpose() - &mean;
                cov += &r * r.transpose();
            }
            cov /= nh;
            SliceMoments {
                proportion: nh / n,
                mean,
                cov,
            }
        })
        .collect()
}

fn top_directions(m: &DMatrix<f64>, w: &WhitenedData, d: usize) -> DMatrix<f64> {
    let (_, vectors) = sym_eigen_desc(m);
    &w.sigma_neg_half * vectors.columns(0, d)
}

fn check_dim(d: usize, p: usize, n_slices: usize) -> Result<()> {
    if d == 0 || d > p {
        return Err(Error::Parameter(format!(
            "dimension d = {d} must satisfy 1 <= d <= p = {p}"
        )));
    }
    if n_slices < d + 1 {
        return Err(Error::Parameter(format!(
            "need at least d + 1 = {} slices, got {n_slices}",
            d + 1
        )));
    }
    Ok(())
}

pub(crate) fn sir_from_whitened(
    w: &WhitenedData,
    y: &DVector<f64>,
    d: usize,
    n_slices: usize,
) -> Result<DMatrix<f64>> {
    check_dim(d, w.z.ncols(), n_slices)?;
    let slices = slice_indices(y, n_slices)?;
    let p = w.z.ncols();
    let mut m = DMatrix::zeros(p, p);
    for s in slice_moments(&w.z, &slices) {
        m += &s.mean * s.mean.transpose() * s.proportion;
    }
    Ok(top_directions(&m, w, d))
}

pub(crate) fn dr_from_whitened(
    w: &WhitenedData,
    y: &DVector<f64>,
    d: usize,
    n_slices: usize,
) -> Result<DMatrix<f64>> {
    check_dim(d, w.z.ncols(), n_slices)?;
    let slices = slice_indices(y, n_slices)?;
    let p = w.z.ncols();
    let identity = DMatrix::<f64>::identity(p, p);
    let mut second = DMatrix::zeros(p, p);
    let mut between = DMatrix::zeros(p, p);
    let mut mean_sq = 0.0;
    for s in slice_moments(&w.z, &slices) {
        let outer = &s.mean * s.mean.transpose();
        let centered = &s.cov + &outer - &identity;
        second += &centered * &centered * s.proportion;
        between += &outer * s.proportion;
        mean_sq += s.proportion * s.mean.norm_squared();
    }
    let m = second + &between * &between + between * mean_sq;
    Ok(top_directions(&m, w, d))
}

/// SIR directions in the original predictor coordinates (`p × d`).
pub fn sir_directions(data: &Dataset, d: usize, n_slices: usize) -> Result<DMatrix<f64>> {
    let w = whiten(data, default_ridge(data.x()))?;
    sir_from_whitened(&w, data.y(), d, n_slices)
}

/// DR directions in the original predictor coordinates (`p × d`).
pub fn dr_directions(data: &Dataset, d: usize, n_slices: usize) -> Result<DMatrix<f64>> {
    let w = whiten(data, default_ridge(data.x()))?;
    dr_from_whitened(&w, data.y(), d, n_slices)
}

/// Picks the candidate whose projection has the larger α-distance covariance
/// with the response; ties go to SIR. A failed candidate is skipped.
pub fn select_initialization(
    data: &Dataset,
    alpha: f64,
    sir: Result<DMatrix<f64>>,
    dr: Result<DMatrix<f64>>,
) -> Result<(DMatrix<f64>, InitSource)> {
    match (sir, dr) {
        (Ok(s), Ok(r)) => {
            let score_s = sample_dcov_sq(&(data.x() * &s), data.y(), alpha)?;
            let score_r = sample_dcov_sq(&(data.x() * &r), data.y(), alpha)?;
            if score_r > score_s {
                Ok((r, InitSource::Dr))
            } else {
                Ok((s, InitSource::Sir))
            }
        }
        (Ok(s), Err(e)) => {
            log::warn!("DR initialization failed ({e}); using SIR");
            Ok((s, InitSource::Sir))
        }
        (Err(e), Ok(r)) => {
            log::warn!("SIR initialization failed ({e}); using DR");
            Ok((r, InitSource::Dr))
        }
        (Err(e), Err(_)) => Err(e),
    }
}

pub(crate) fn choose_from_whitened(
    data: &Dataset,
    w: &WhitenedData,
    d: usize,
    n_slices: usize,
    alpha: f64,
) -> Result<(DMatrix<f64>, InitSource)> {
    select_initialization(
        data,
        alpha,
        sir_from_whitened(w, data.y(), d, n_slices),
        dr_from_whitened(w, data.y(), d, n_slices),
    )
}

pub fn choose_initialization(
    data: &Dataset,
    d: usize,
    n_slices: usize,
    alpha: f64,
) -> Result<(DMatrix<f64>, InitSource)> {
    let w = whiten(data, default_ridge(data.x()))?;
    choose_from_whitened(data, &w, d, n_slices, alpha)
}
