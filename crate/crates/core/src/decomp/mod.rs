//! Low-rank factorization of class-description features into class-shared
//! basis features and per-class weights.

mod losses;
mod pca;
mod types;

pub use losses::{
    orthogonality_loss, orthogonality_loss_var, recon_loss, recon_loss_var, sparsity_loss,
    sparsity_loss_var, OrthoForm, OrthoLoss, ReconLoss,
};
pub use pca::{cumulative_energy, energy_spectrum, pca_factorize, pca_init, rank_for_energy};
pub use types::{Factorization, FeatureKind, FeatureMatrix, HoiVocabulary};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::{linalg, Mat, Real};

/// Draws `k` distinct basis columns without replacement; the result is sorted.
pub fn select_action_basis<T: Real>(
    fac: &Factorization<T>,
    k: usize,
    seed: u64,
) -> Result<Factorization<T>> {
    let m = fac.rank();
    if k > m {
        return Err(Error::Parameter(format!(
            "action basis size {k} exceeds rank {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, m, k).into_vec();
    idx.sort_unstable();
    Ok(Factorization {
        action_index_set: idx,
        ..fac.clone()
    })
}

/// Columns of `weights` at `index_set`, in order.
pub fn extract_war<T: Real>(weights: &Mat<T>, index_set: &[usize]) -> Result<Mat<T>> {
    weights.select_cols(index_set)
}

/// `W Bᵀ`, or `W (B[:, subset])ᵀ` when a column subset of the basis is given.
pub fn reconstruct<T: Real>(
    weights: &Mat<T>,
    basis: &Mat<T>,
    subset: Option<&[usize]>,
) -> Result<Mat<T>> {
    match subset {
        None => weights.matmul_t(basis),
        Some(idx) => weights.matmul_t(&basis.select_cols(idx)?),
    }
    .map_err(|e| match e {
        Error::Dimension { left, right, .. } => Error::Dimension {
            op: "reconstruct",
            left,
            right,
        },
        other => other,
    })
}

/// Least-squares weights of `features` against a fixed basis:
/// `argmin_W ‖F − W Bᵀ‖ = F B (BᵀB)⁻¹`.
pub fn fit_weights<T: Real>(features: &Mat<T>, basis: &Mat<T>) -> Result<Mat<T>> {
    if features.cols() != basis.rows() {
        return Err(Error::Dimension {
            op: "fit_weights",
            left: features.shape(),
            right: basis.shape(),
        });
    }
    if basis.cols() == 0 {
        return Ok(Mat::zeros(features.rows(), 0));
    }
    features.matmul(&linalg::coefficient_projector(basis)?)
}
