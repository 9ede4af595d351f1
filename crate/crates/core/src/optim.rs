//! Adam with bias correction and fixed hyperparameters.

use crate::nn::Real;
use crate::{Error, Result};

pub const DEFAULT_LR: f64 = 2e-4;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T = f32> {
    pub step: u64,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            step: 0,
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }

    /// One update in place. A non-finite gradient aborts before anything
    /// is modified.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let one = T::one();
        let bc1 = T::lit(1.0 - self.beta1.powi(t));
        let bc2 = T::lit(1.0 - self.beta2.powi(t));
        let lr = T::lit(self.lr);
        let eps = T::lit(self.eps);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step<T: Real>(state: &AdamState<T>, params: &[T], grads: &[T]) -> Result<(Vec<T>, AdamState<T>)> {
    let mut state = state.clone();
    let mut params = params.to_vec();
    state.step(&mut params, grads)?;
    Ok((params, state))
}
