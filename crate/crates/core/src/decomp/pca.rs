use super::{Factorization, FeatureMatrix};
use crate::error::{Error, Result};
use crate::numkit::{linalg, Mat, Real};

/// Squared singular values of `f` (uncentered), descending.
///
/// Values below the numerical-rank threshold `λ_max · max(N, d) · 10ε` are
/// set to exactly zero so that exact low-rank inputs reach a cumulative
/// fraction of exactly one.
pub fn energy_spectrum<T: Real>(f: &Mat<T>) -> Result<Vec<T>> {
    Ok(spectral_parts(f)?.0)
}

/// Cumulative energy fraction after each component.
pub fn cumulative_energy<T: Real>(spectrum: &[T]) -> Vec<T> {
    let total: T = spectrum.iter().copied().sum();
    let mut acc = T::zero();
    spectrum
        .iter()
        .map(|&l| {
            acc += l;
            if total > T::zero() {
                acc / total
            } else {
                T::one()
            }
        })
        .collect()
}

/// Smallest rank whose cumulative energy fraction reaches `target`.
pub fn rank_for_energy<T: Real>(spectrum: &[T], target: T) -> Result<usize> {
    check_target(target)?;
    let total: T = spectrum.iter().copied().sum();
    let mut acc = T::zero();
    for (r, &l) in spectrum.iter().enumerate() {
        acc += l;
        if acc >= target * total {
            return Ok(r + 1);
        }
    }
    Ok(spectrum.len())
}

fn check_target<T: Real>(target: T) -> Result<()> {
    if !(target > T::zero() && target <= T::one()) {
        return Err(Error::Parameter(format!(
            "energy target must lie in (0, 1], got {target}"
        )));
    }
    Ok(())
}

/// Spectrum plus right singular vectors (columns) of `f`.
fn spectral_parts<T: Real>(f: &Mat<T>) -> Result<(Vec<T>, Mat<T>)> {
    let (n, d) = f.shape();
    let (mut values, vectors) = if d <= n {
        let gram = f.transpose().matmul(f)?;
        linalg::symmetric_eigen(&gram)?
    } else {
        // Left vectors from the smaller Gram, mapped to right vectors by Fᵀ U Σ⁻¹.
        let gram = f.matmul_t(f)?;
        let (vals, u) = linalg::symmetric_eigen(&gram)?;
        let mut v = f.transpose().matmul(&u)?;
        for (j, &l) in vals.iter().enumerate() {
            let s = l.max(T::zero()).sqrt();
            for i in 0..d {
                let x = v.get(i, j);
                v.set(i, j, if s > T::zero() { x / s } else { T::zero() });
            }
        }
        (vals, v)
    };
    let lmax = values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let thresh = lmax * T::from_count(n.max(d)) * T::epsilon() * T::lit(10.0);
    for l in values.iter_mut() {
        if *l <= thresh {
            *l = T::zero();
        }
    }
    Ok((values, vectors))
}

/// Truncated uncentered PCA of a raw matrix: `W = F V_r`, `B = V_r`.
pub fn pca_factorize<T: Real>(f: &Mat<T>, energy_target: T) -> Result<(Factorization<T>, T)> {
    check_target(energy_target)?;
    if f.rows() < 2 {
        return Err(Error::Parameter(format!(
            "factorization needs at least 2 rows, got {}",
            f.rows()
        )));
    }
    let (spectrum, vectors) = spectral_parts(f)?;
    let rank = rank_for_energy(&spectrum, energy_target)?;
    let keep: Vec<usize> = (0..rank).collect();
    let basis = vectors.select_cols(&keep)?;
    let weights = f.matmul(&basis)?;
    let achieved = cumulative_energy(&spectrum)[rank - 1];
    Ok((
        Factorization {
            weights,
            basis,
            action_index_set: Vec::new(),
            frozen_basis: false,
        },
        achieved,
    ))
}

/// PCA initialization of the factorization at the smallest rank reaching `energy_target`.
pub fn pca_init<T: Real>(f: &FeatureMatrix<T>, energy_target: T) -> Result<(Factorization<T>, T)> {
    pca_factorize(f.features(), energy_target)
}
