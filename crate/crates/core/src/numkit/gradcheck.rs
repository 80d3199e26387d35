use super::{Mat, Real};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients with central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(parameter index, row, column)` of the worst coordinate.
    pub argmax_coordinate: (usize, usize, usize),
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Checks the gradient returned by `loss` against a central-difference estimate
/// at every coordinate of every parameter.
///
/// `loss` returns the value and one gradient per parameter. The relative error
/// of a coordinate is `|a − n| / max(1, |a|, |n|)`.
pub fn grad_check<T, F>(loss: F, params: &[Mat<T>], step: T) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&[Mat<T>]) -> Result<(T, Vec<Mat<T>>)>,
{
    if !(step > T::zero()) {
        return Err(Error::Parameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (value, analytic) = loss(params)?;
    if !value.is_finite() {
        return Err(Error::Numeric("loss at the base point".into()));
    }
    if analytic.len() != params.len() {
        return Err(Error::Consistency {
            expected: format!("{} gradients", params.len()),
            actual: format!("{} gradients", analytic.len()),
        });
    }

    let mut probe: Vec<Mat<T>> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        argmax_coordinate: (0, 0, 0),
        analytic_norm: 0.0,
        numeric_norm: 0.0,
    };
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    for (pi, p) in params.iter().enumerate() {
        if analytic[pi].shape() != p.shape() {
            return Err(Error::Dimension {
                op: "grad_check",
                left: p.shape(),
                right: analytic[pi].shape(),
            });
        }
        for k in 0..p.len() {
            let orig = p.as_slice()[k];
            probe[pi].as_mut_slice()[k] = orig + step;
            let (plus, _) = loss(&probe)?;
            probe[pi].as_mut_slice()[k] = orig - step;
            let (minus, _) = loss(&probe)?;
            probe[pi].as_mut_slice()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss at probe of parameter {pi}, coordinate {k}"
                )));
            }
            let numeric = ((plus - minus) / (step + step)).as_f64();
            let a = analytic[pi].as_slice()[k].as_f64();
            a_sq += a * a;
            n_sq += numeric * numeric;
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.argmax_coordinate = (pi, k / p.cols().max(1), k % p.cols().max(1));
            }
        }
    }
    report.analytic_norm = a_sq.sqrt();
    report.numeric_norm = n_sq.sqrt();
    Ok(report)
}
