//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition with eigenpairs sorted by decreasing eigenvalue.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values in decreasing order.
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> Result<ThinSvd> {
    let svd = m.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not converge".into())),
    };
    let s = svd.singular_values;
    let k = s.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut v_sorted = DMatrix::zeros(v_t.ncols(), k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
    }
    Ok(ThinSvd {
        u: u_sorted,
        singular_values: DVector::from_iterator(k, order.iter().map(|&i| s[i])),
        v: v_sorted,
    })
}

/// Orthonormal basis of the column span of `b`; fails when `b` is not of
/// full column rank.
pub fn orthonormal_basis(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.ncols() == 0 || b.ncols() > b.nrows() {
        return Err(Error::Input(format!(
            "a {}x{} matrix cannot have full column rank",
            b.nrows(),
            b.ncols()
        )));
    }
    let svd = thin_svd(b)?;
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[svd.singular_values.len() - 1];
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::Input(format!(
            "matrix is rank deficient (singular values {smax:e} .. {smin:e})"
        )));
    }
    Ok(svd.u)
}

/// Symmetric part `(a + aᵀ)/2`.
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Column-centered copy of `x` together with the column means.
pub fn center_columns(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows() as f64;
    let means = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut centered = x.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (centered, means)
}

/// Sample covariance with the `n − 1` divisor.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (xc, _) = center_columns(x);
    let denom = (x.nrows() as f64 - 1.0).max(1.0);
    xc.transpose() * &xc / denom
}

/// Rows of `x` selected by `idx`, in order.
pub fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

pub fn select_entries(y: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| y[i]))
}

/// Least-squares solution of `a x ≈ b` via SVD.
pub fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone()
        .svd(true, true)
        .solve(b, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))
}
