//! Small dense kernels on ndarray storage: orthonormalization, Cholesky and
//! triangular solves. Problem sizes here stay in the low hundreds, so simple
//! cache-friendly loops beat pulling in a LAPACK binding and keep everything
//! generic over the scalar type.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{CoreError, Result};
use crate::scalar::Real;

/// Orthonormalize the columns of `a` by modified Gram-Schmidt with one
/// re-orthogonalization pass. Column signs follow the input: each output
/// column has positive inner product with the input column it replaces, which
/// matches the QR factor with positive diagonal R.
pub fn orthonormal_columns<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let (n, k) = a.dim();
    if k == 0 || k > n {
        return Err(CoreError::InvalidDimension(format!(
            "cannot orthonormalize {k} columns in dimension {n}"
        )));
    }
    let mut q = a.to_owned();
    for j in 0..k {
        let scale = q.column(j).dot(&q.column(j)).sqrt();
        for _ in 0..2 {
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let r = qi.dot(&q.column(j));
                q.column_mut(j).scaled_add(-r, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        // Residual below sqrt(eps) of the original column length means the
        // column lies in the span of its predecessors to working precision.
        if !(norm > scale * T::epsilon().sqrt()) {
            return Err(CoreError::InvalidDimension(format!(
                "rank-deficient input: column {j} vanished"
            )));
        }
        q.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(q)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower<T: Real>(a: ArrayView2<T>) -> Result<Array2<T>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CoreError::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            {
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for (&x, &y) in ri.iter().zip(rj) {
                    s = s - x * y;
                }
            }
            if i == j {
                if !(s > T::zero()) || !s.is_finite() {
                    return Err(CoreError::FactorizationFailure { attempts: 0 });
                }
                l[i * n + j] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Array2::from_shape_vec((n, n), l)
        .map_err(|e| CoreError::DimensionMismatch(e.to_string()))
}

/// Solve `L y = b` for lower-triangular `L`.
pub fn solve_lower<T: Real>(l: ArrayView2<T>, b: ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut y = Array1::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

/// Solve `Lᵀ x = b` for lower-triangular `L`.
pub fn solve_lower_transpose<T: Real>(l: ArrayView2<T>, b: ArrayView1<T>) -> Array1<T> {
    let n = l.nrows();
    let mut x = Array1::zeros(n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
pub fn cholesky_solve<T: Real>(l: ArrayView2<T>, b: ArrayView1<T>) -> Array1<T> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, y.view())
}

/// Minimum-norm solution of the underdetermined system `M z = b` where `M`
/// has full row rank: `z = Mᵀ (M Mᵀ)⁻¹ b`.
pub fn least_norm_solve<T: Real>(m: ArrayView2<T>, b: ArrayView1<T>) -> Result<Array1<T>> {
    let (rows, _) = m.dim();
    if b.len() != rows {
        return Err(CoreError::DimensionMismatch(format!(
            "rhs length {} does not match {} rows",
            b.len(),
            rows
        )));
    }
    let gram = m.dot(&m.t());
    let l = cholesky_lower(gram.view())?;
    let w = cholesky_solve(l.view(), b);
    Ok(m.t().dot(&w))
}

pub fn sq_dist<T: Real>(a: ArrayView1<T>, b: ArrayView1<T>) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut s = T::zero();
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        s = s + d * d;
    }
    s
}

pub fn norm2<T: Real>(a: ArrayView1<T>) -> T {
    a.dot(&a).sqrt()
}
