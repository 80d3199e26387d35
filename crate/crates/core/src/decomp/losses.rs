//! Decomposition objectives with closed-form gradients, plus their tape
//! counterparts used inside the training graph.

use crate::error::{Error, Result};
use crate::numkit::{Mat, Real, Var};

/// Value and gradients of the reconstruction residual norm.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconLoss<T> {
    pub value: T,
    pub grad_weights: Mat<T>,
    /// `None` when the basis is frozen.
    pub grad_basis: Option<Mat<T>>,
}

/// `‖F − W Bᵀ‖_F`. The gradient is taken as zero at an exact reconstruction.
pub fn recon_loss<T: Real>(
    features: &Mat<T>,
    weights: &Mat<T>,
    basis: &Mat<T>,
    frozen_basis: bool,
) -> Result<ReconLoss<T>> {
    if weights.cols() != basis.cols()
        || features.rows() != weights.rows()
        || features.cols() != basis.rows()
    {
        return Err(Error::Dimension {
            op: "recon_loss",
            left: weights.shape(),
            right: basis.shape(),
        });
    }
    let resid = features.sub(&weights.matmul_t(basis)?)?;
    let value = resid.frobenius_norm();
    let coef = if value > T::zero() {
        -T::one() / value
    } else {
        T::zero()
    };
    let grad_weights = resid.matmul(basis)?.scale(coef);
    let grad_basis = if frozen_basis {
        None
    } else {
        Some(resid.transpose().matmul(weights)?.scale(coef))
    };
    Ok(ReconLoss {
        value,
        grad_weights,
        grad_basis,
    })
}

/// `Σ |wᵢⱼ|` and its sign subgradient (zero at exact zeros).
pub fn sparsity_loss<T: Real>(w: &Mat<T>) -> (T, Mat<T>) {
    let value = w.as_slice().iter().fold(T::zero(), |acc, &x| acc + x.abs());
    let grad = w.map(|x| {
        if x > T::zero() {
            T::one()
        } else if x < T::zero() {
            -T::one()
        } else {
            T::zero()
        }
    });
    (value, grad)
}

/// How off-diagonal Gram entries enter the orthogonality penalty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrthoForm {
    /// `Σ_{i≠j} (bᵢᵀbⱼ)²`, minimized exactly at mutual orthogonality.
    #[default]
    Squared,
    /// `Σ_{i≠j} bᵢᵀbⱼ`, the literal unsquared sum (unbounded below).
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoLoss<T> {
    pub value: T,
    pub grad: Mat<T>,
    /// Set when the basis has fewer than two columns and the penalty is vacuous.
    pub degenerate: bool,
}

/// Off-diagonal Gram penalty over the basis columns.
pub fn orthogonality_loss<T: Real>(basis: &Mat<T>, form: OrthoForm) -> Result<OrthoLoss<T>> {
    let m = basis.cols();
    if m < 2 {
        return Ok(OrthoLoss {
            value: T::zero(),
            grad: Mat::zeros(basis.rows(), m),
            degenerate: true,
        });
    }
    let gram = basis.transpose().matmul(basis)?;
    let (value, coef) = match form {
        OrthoForm::Squared => {
            let mut off = gram.clone();
            let mut v = T::zero();
            for i in 0..m {
                for j in 0..m {
                    if i == j {
                        off.set(i, j, T::zero());
                    } else {
                        v += gram.get(i, j) * gram.get(i, j);
                    }
                }
            }
            (v, off.scale(T::lit(4.0)))
        }
        OrthoForm::Raw => {
            let mut v = T::zero();
            for i in 0..m {
                for j in 0..m {
                    if i != j {
                        v += gram.get(i, j);
                    }
                }
            }
            let ones = Mat::from_fn(m, m, |i, j| if i == j { T::zero() } else { T::lit(2.0) });
            (v, ones)
        }
    };
    Ok(OrthoLoss {
        value,
        grad: basis.matmul(&coef)?,
        degenerate: false,
    })
}

/// Tape form of [`recon_loss`].
pub fn recon_loss_var<'t, T: Real>(
    features: Var<'t, T>,
    weights: Var<'t, T>,
    basis: Var<'t, T>,
) -> Var<'t, T> {
    features.sub(weights.matmul(basis.t())).frobenius_norm()
}

/// Tape form of [`sparsity_loss`].
pub fn sparsity_loss_var<T: Real>(w: Var<'_, T>) -> Var<'_, T> {
    w.abs().sum()
}

/// Tape form of the squared [`orthogonality_loss`]: `‖BᵀB‖² − Σ diag²`.
pub fn orthogonality_loss_var<T: Real>(basis: Var<'_, T>) -> Var<'_, T> {
    let gram = basis.t().matmul(basis);
    let diag = basis.mul(basis).col_sums();
    gram.mul(gram).sum().sub(diag.mul(diag).sum())
}
