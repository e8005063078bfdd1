//! Projected gradient ascent of the η-regularized distance-covariance
//! objective over the Stiefel manifold `St(d, p) = {C ∈ ℝ^{p×d} : CᵀC = I_d}`.
//!
//! The objective for whitened predictors `Z` (samples as rows) and the
//! double-centered response distances `B` is
//!
//! ```text
//! F_η(C) = (1/n²) Σ_kl (‖Cᵀz_k − Cᵀz_l‖² + η)^{α/2} B_kl
//! ```
//!
//! Each iteration takes a step along the Riemannian gradient (or the raw
//! Euclidean gradient), maps back to the manifold with the SVD polar factor
//! and accepts the step only if it satisfies an Armijo ascent condition, so
//! the objective trace never decreases.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dcov::{check_alpha, CenteredDistanceMatrix};
use crate::error::{Error, Result};
use crate::linalg::{sym, thin_svd};

/// Largest tolerated `‖CᵀC − I‖_F` for a point on the manifold.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A `p × d` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint(DMatrix<f64>);

impl StiefelPoint {
    pub fn new(c: DMatrix<f64>) -> Result<Self> {
        if c.ncols() == 0 || c.ncols() > c.nrows() {
            return Err(Error::Parameter(format!(
                "a Stiefel point needs 1 <= d <= p, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let err = feasibility_error(&c);
        if !(err <= FEASIBILITY_TOL) {
            return Err(Error::Input(format!(
                "columns are not orthonormal: ||C^T C - I||_F = {err:e}"
            )));
        }
        Ok(Self(c))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn d(&self) -> usize {
        self.0.ncols()
    }

    /// `‖CᵀC − I_d‖_F`.
    pub fn feasibility_error(&self) -> f64 {
        feasibility_error(&self.0)
    }
}

fn feasibility_error(c: &DMatrix<f64>) -> f64 {
    let d = c.ncols();
    (c.transpose() * c - DMatrix::<f64>::identity(d, d)).norm()
}

/// Nearest point of the Stiefel manifold: `UVᵀ` from the thin SVD `M = UΣVᵀ`.
pub fn project_stiefel(m: &DMatrix<f64>) -> Result<StiefelPoint> {
    if m.ncols() == 0 || m.ncols() > m.nrows() {
        return Err(Error::Parameter(format!(
            "cannot project a {}x{} matrix onto St(d, p) with d <= p",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateProjection(
            "matrix has non-finite entries".into(),
        ));
    }
    let svd = thin_svd(m)?;
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[svd.singular_values.len() - 1];
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::DegenerateProjection(format!(
            "matrix is rank deficient (singular values {smax:e} .. {smin:e})"
        )));
    }
    Ok(StiefelPoint(&svd.u * svd.v.transpose()))
}

/// Which direction the line search moves along before projecting back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    /// Tangent-space projection of the Euclidean gradient.
    #[default]
    Riemannian,
    /// The raw Euclidean gradient.
    Euclidean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Smoothing added to squared projected distances.
    pub eta: f64,
    pub init_step: f64,
    pub backtrack_factor: f64,
    pub armijo_c: f64,
    pub max_backtracks: usize,
    /// Stop once successive objective values differ by at most this much.
    pub tol_obj: f64,
    pub max_iter: usize,
    pub update: UpdateRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta: 1e-6,
            init_step: 1.0,
            backtrack_factor: 0.5,
            armijo_c: 1e-4,
            max_backtracks: 30,
            tol_obj: 1e-8,
            max_iter: 500,
            update: UpdateRule::Riemannian,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Parameter(what.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return bad("init_step must be positive");
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return bad("backtrack_factor must lie in (0, 1)");
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0, 1)");
        }
        if !(self.tol_obj > 0.0) {
            return bad("tol_obj must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTrace {
    /// `F_η` at the start point followed by every accepted iterate.
    pub objective_values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Worst `‖CᵀC − I‖_F` seen over all accepted iterates.
    pub max_feasibility_error: f64,
}

impl OptimizeTrace {
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.objective_values
            .windows(2)
            .all(|w| w[1] >= w[0] - slack)
    }
}

fn check_shapes(c: &DMatrix<f64>, z: &DMatrix<f64>, b: &CenteredDistanceMatrix) -> Result<()> {
    if z.ncols() != c.nrows() {
        return Err(Error::Input(format!(
            "C has {} rows but Z has {} columns",
            c.nrows(),
            z.ncols()
        )));
    }
    if z.nrows() != b.n() {
        return Err(Error::Input(format!(
            "Z has {} rows but B is {}x{}",
            z.nrows(),
            b.n(),
            b.n()
        )));
    }
    Ok(())
}

/// `Σ_{k<l} (‖P_k − P_l‖² + η)^{α/2} B_kl`, doubled, plus the diagonal terms,
/// divided by `n²`.
fn objective_from_projection(p: &DMatrix<f64>, b: &DMatrix<f64>, alpha: f64, eta: f64) -> f64 {
    let n = p.nrows();
    let d = p.ncols();
    let half = alpha / 2.0;
    let mut off = 0.0;
    for l in 0..n {
        for k in (l + 1)..n {
            let mut sq = 0.0;
            for j in 0..d {
                let diff = p[(k, j)] - p[(l, j)];
                sq += diff * diff;
            }
            off += (sq + eta).powf(half) * b[(k, l)];
        }
    }
    let diag = if eta > 0.0 {
        eta.powf(half) * b.diagonal().sum()
    } else {
        0.0
    };
    let nf = n as f64;
    (2.0 * off + diag) / (nf * nf)
}

pub fn objective_f_eta(
    c: &StiefelPoint,
    z: &DMatrix<f64>,
    b: &CenteredDistanceMatrix,
    alpha: f64,
    eta: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !(eta >= 0.0) {
        return Err(Error::Parameter(format!("eta must be >= 0, got {eta}")));
    }
    check_shapes(c.matrix(), z, b)?;
    Ok(objective_from_projection(
        &(z * c.matrix()),
        b.values(),
        alpha,
        eta,
    ))
}

/// Euclidean gradient `∂F_η/∂C`.
///
/// With `W_kl = B_kl (‖Cᵀz_k − Cᵀz_l‖² + η)^{(α−2)/2}` the pairwise sum
/// `Σ_kl W_kl (z_k − z_l)(z_k − z_l)ᵀ C` collapses to `2 Zᵀ L (Z C)` where `L`
/// is the graph Laplacian of `W`, so the cost is `O(n²d + npd)`.
pub fn euclidean_gradient(
    c: &StiefelPoint,
    z: &DMatrix<f64>,
    b: &CenteredDistanceMatrix,
    alpha: f64,
    eta: f64,
) -> Result<DMatrix<f64>> {
    check_alpha(alpha)?;
    if !(eta > 0.0) {
        return Err(Error::Parameter(format!(
            "the gradient needs eta > 0, got {eta}"
        )));
    }
    check_shapes(c.matrix(), z, b)?;
    Ok(gradient_unchecked(c.matrix(), z, b.values(), alpha, eta))
}

fn gradient_unchecked(
    c: &DMatrix<f64>,
    z: &DMatrix<f64>,
    b: &DMatrix<f64>,
    alpha: f64,
    eta: f64,
) -> DMatrix<f64> {
    let n = z.nrows();
    let d = c.ncols();
    let p = z * c;
    let expo = (alpha - 2.0) / 2.0;
    // lp = L · P, accumulated pair by pair.
    let mut lp = DMatrix::<f64>::zeros(n, d);
    let mut diff = vec![0.0; d];
    for l in 0..n {
        for k in (l + 1)..n {
            let mut sq = 0.0;
            for j in 0..d {
                diff[j] = p[(k, j)] - p[(l, j)];
                sq += diff[j] * diff[j];
            }
            let w = b[(k, l)] * (sq + eta).powf(expo);
            for j in 0..d {
                lp[(k, j)] += w * diff[j];
                lp[(l, j)] -= w * diff[j];
            }
        }
    }
    let nf = n as f64;
    z.transpose() * lp * (2.0 * alpha / (nf * nf))
}

/// Tangent-space projection `G − C·sym(CᵀG)`.
pub fn riemannian_gradient(c: &StiefelPoint, g: &DMatrix<f64>) -> DMatrix<f64> {
    let c = c.matrix();
    g - c * sym(&(c.transpose() * g))
}

/// Maximizes `F_η` from `c0` by projected gradient ascent with Armijo
/// backtracking. The returned point is the last accepted (hence best) iterate.
pub fn optimize(
    z: &DMatrix<f64>,
    b: &CenteredDistanceMatrix,
    alpha: f64,
    config: &OptimizerConfig,
    c0: &StiefelPoint,
) -> Result<(StiefelPoint, OptimizeTrace)> {
    check_alpha(alpha)?;
    config.validate()?;
    check_shapes(c0.matrix(), z, b)?;
    let bv = b.values();
    let eta = config.eta;
    let eval = |c: &DMatrix<f64>| objective_from_projection(&(z * c), bv, alpha, eta);

    let mut current = c0.clone();
    let mut f = eval(current.matrix());
    let mut trace = OptimizeTrace {
        objective_values: vec![f],
        iterations: 0,
        converged: false,
        max_feasibility_error: current.feasibility_error(),
    };

    for iter in 1..=config.max_iter {
        trace.iterations = iter;
        let g = gradient_unchecked(current.matrix(), z, bv, alpha, eta);
        let tangent = riemannian_gradient(&current, &g);
        let slope = tangent.norm_squared();
        if slope == 0.0 {
            trace.converged = true;
            break;
        }
        let direction = match config.update {
            UpdateRule::Riemannian => &tangent,
            UpdateRule::Euclidean => &g,
        };

        let mut step = config.init_step;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial = current.matrix() + direction * step;
            if let Ok(candidate) = project_stiefel(&trial) {
                let fc = eval(candidate.matrix());
                if fc >= f + config.armijo_c * step * slope {
                    accepted = Some((candidate, fc));
                    break;
                }
            }
            step *= config.backtrack_factor;
        }

        let Some((candidate, fc)) = accepted else {
            // No ascent step left: numerically stationary.
            trace.converged = true;
            break;
        };
        let delta = fc - f;
        trace.max_feasibility_error = trace
            .max_feasibility_error
            .max(candidate.feasibility_error());
        current = candidate;
        f = fc;
        trace.objective_values.push(f);
        if delta.abs() <= config.tol_obj {
            trace.converged = true;
            break;
        }
    }
    Ok((current, trace))
}
