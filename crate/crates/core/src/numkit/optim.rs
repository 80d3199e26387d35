use super::{Mat, Real};
use crate::error::{Error, Result};

/// Hyperparameters of the decoupled-weight-decay Adam update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig<T> {
    pub learning_rate: T,
    pub weight_decay: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Real> Default for AdamWConfig<T> {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: T::lit(1e-3),
            weight_decay: T::lit(1e-2),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-8),
        }
    }
}

impl<T: Real> AdamWConfig<T> {
    pub fn learning_rate(self, learning_rate: T) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }

    pub fn weight_decay(self, weight_decay: T) -> Self {
        Self {
            weight_decay,
            ..self
        }
    }
}

/// Moment estimates for a fixed list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig<T>,
    first_moment: Vec<Mat<T>>,
    second_moment: Vec<Mat<T>>,
    step_count: u64,
}

impl<T: Real> AdamW<T> {
    /// Zero moments shaped like `params`.
    pub fn new(config: AdamWConfig<T>, params: &[&Mat<T>]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Mat::zeros(p.rows(), p.cols()))
                .collect::<Vec<_>>()
        };
        AdamW {
            config,
            first_moment: zeros(),
            second_moment: zeros(),
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Mat<T>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Mat<T>] {
        &self.second_moment
    }

    /// One bias-corrected update of every parameter.
    ///
    /// Nothing is modified when any gradient is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Mat<T>], grads: &[Mat<T>]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Consistency {
                expected: format!("{} parameters", self.first_moment.len()),
                actual: format!("{} parameters, {} gradients", params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first_moment[i].shape() {
                return Err(Error::Dimension {
                    op: "optimizer_step",
                    left: p.shape(),
                    right: g.shape(),
                });
            }
            if !g.all_finite() {
                return Err(Error::Numeric(format!("gradient of parameter {i}")));
            }
        }

        self.step_count += 1;
        let c = self.config;
        let t = self.step_count as i32;
        let bc1 = T::one() - c.beta1.powi(t);
        let bc2 = T::one() - c.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.first_moment[i].as_mut_slice();
            let v = self.second_moment[i].as_mut_slice();
            for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m).zip(v)
            {
                *mi = c.beta1 * *mi + (T::one() - c.beta1) * gi;
                *vi = c.beta2 * *vi + (T::one() - c.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *w -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * *w);
            }
        }
        Ok(())
    }
}
