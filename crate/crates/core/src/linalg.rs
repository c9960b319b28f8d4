//! Dense factorizations backed by `faer`, exposed over `ndarray` storage.
//!
//! All factorizations run with sequential `faer` parallelism so that results
//! are bit-reproducible regardless of the surrounding thread pool.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef, Side};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

static SEQUENTIAL: Once = Once::new();

fn sequential() {
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

pub(crate) fn to_faer(a: ArrayView2<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Symmetric eigendecomposition with eigenvalues in nondecreasing order.
/// Only the lower triangle of `a` is read.
pub fn sym_eigh(a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims(format!(
            "eigendecomposition of a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    sequential();
    let m = to_faer(a);
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = Array1::from_shape_fn(a.nrows(), |i| s[i]);
    Ok((values, from_faer(evd.U())))
}

/// Cholesky factor `A = L Lᵀ` of a symmetric positive definite matrix.
pub struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
    n: usize,
}

impl SpdFactor {
    pub fn new(a: ArrayView2<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::dims("Cholesky of a non-square matrix"));
        }
        sequential();
        let llt = to_faer(a)
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("matrix is not positive definite: {e:?}")))?;
        // reject numerically singular factors: pivot² below n·ε·max diag
        let n = a.nrows();
        let scale = a.diag().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let l = llt.L();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if n > 0 && !(min_pivot > n as f64 * f64::EPSILON * scale) {
            return Err(Error::Numerical("matrix is numerically singular".into()));
        }
        Ok(SpdFactor { llt, n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `A⁻¹ B`.
    pub fn solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let x = self.llt.solve(to_faer(b));
        from_faer(x.as_ref())
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> Array1<f64> {
        self.solve(b.insert_axis(Axis(1))).remove_axis(Axis(1))
    }

    /// `L⁻¹ B`, so that `‖L⁻¹B‖²_F = tr(Bᵀ A⁻¹ B)`.
    pub fn half_solve(&self, b: ArrayView2<f64>) -> Array2<f64> {
        let mut x = to_faer(b);
        self.llt.L().solve_lower_triangular_in_place(x.as_mut());
        from_faer(x.as_ref())
    }

    pub fn ln_det(&self) -> f64 {
        let l = self.llt.L();
        (0..self.n).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
    }

    pub fn inverse(&self) -> Array2<f64> {
        self.solve(Array2::eye(self.n).view())
    }
}

/// Largest eigenvalue of `AᵀA` (the squared spectral norm of `A`) by power
/// iteration on the smaller of the two Gram matrices.
pub fn spectral_norm_sq(a: ArrayView2<f64>, tol_rel: f64, max_iters: usize) -> f64 {
    let (rows, cols) = a.dim();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    let gram = if rows <= cols {
        a.dot(&a.t())
    } else {
        a.t().dot(&a)
    };
    let n = gram.nrows();
    // deterministic, generic start vector
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let w = gram.dot(&v);
        let next = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return 0.0;
        }
        v = w / wn;
        if (next - estimate).abs() <= tol_rel * next.abs() {
            return next.max(wn);
        }
        estimate = next;
    }
    estimate
}
