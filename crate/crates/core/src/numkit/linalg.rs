//! Small dense linear-algebra kernels: symmetric eigendecomposition and
//! symmetric positive-definite inversion.

use super::{Mat, Real};
use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix. Equal eigenvalues keep their original
/// diagonal order.
pub fn symmetric_eigen<T: Real>(a: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            op: "symmetric_eigen",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let mut m = a.clone();
    let mut v = Mat::<T>::identity(n);
    let eps = T::epsilon();
    let two = T::lit(2.0);

    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += m.get(i, i) * m.get(i, i);
            for j in (i + 1)..n {
                off += m.get(i, j) * m.get(i, j);
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m.get(j, j)
            .partial_cmp(&m.get(i, i))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let vectors = v.select_cols(&order)?;
    Ok((values, vectors))
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::Dimension {
            op: "cholesky",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let mut l = Mat::<T>::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if !(s > T::zero()) {
                    return Err(Error::Degenerate {
                        what: "non-positive pivot in cholesky",
                        index: i,
                    });
                }
                l.set(i, i, s.sqrt());
            } else {
                l.set(i, j, s / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky factor.
pub fn spd_inverse<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Mat::<T>::zeros(n, n);
    for col in 0..n {
        // forward solve L y = e_col
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let mut s = if i == col { T::one() } else { T::zero() };
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        // back solve Lᵀ x = y
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l.get(k, i) * x[k];
            }
            x[i] = s / l.get(i, i);
        }
        for i in 0..n {
            inv.set(i, col, x[i]);
        }
    }
    Ok(inv)
}

/// `B (BᵀB)⁻¹`, the right factor that maps a row in `span(B)` back to its
/// coefficients: for `x = w Bᵀ`, `x · projector == w`.
pub fn coefficient_projector<T: Real>(basis: &Mat<T>) -> Result<Mat<T>> {
    let gram = basis.transpose().matmul(basis)?;
    basis.matmul(&spd_inverse(&gram)?)
}
