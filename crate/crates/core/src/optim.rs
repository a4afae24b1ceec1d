//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-6,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators and step counter, one accumulator pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(Tensor::zeros_like).collect();
        Self {
            config,
            v: m.clone(),
            m,
            step: 0,
        }
    }

    /// One bias-corrected update of every parameter tensor. On a non-finite
    /// gradient nothing is modified.
    pub fn step(&mut self, mut params: Vec<&mut Tensor<T>>, grads: &[&Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam: {} params, {} grads, {} accumulators",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::shape(format!(
                    "adam: tensor {i} shapes differ: param {:?}, grad {:?}, moment {:?}",
                    p.shape(),
                    g.shape(),
                    m.shape()
                )));
            }
            if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of tensor {i} has {} at flat index {pos}; step aborted",
                    g.data()[pos]
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let corr1 = one - b1.powi(t);
        let corr2 = one - b2.powi(t);
        let lr = T::from_f64_lossy(c.learning_rate);
        let eps = T::from_f64_lossy(c.epsilon);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let g = Tensor::zeros(&[2]);
        let mut p = Tensor::new(vec![2], vec![1.0f64, -2.0]).unwrap();
        let before = p.clone();
        let mut fresh = AdamState::new(AdamConfig::with_learning_rate(0.1), [&p]);
        fresh.step(vec![&mut p], &[&g]).unwrap();
        assert_eq!(p, before);
        assert_eq!(fresh.step, 1);

        let mut st = AdamState::new(AdamConfig::with_learning_rate(0.1), [&p]);
        st.m[0] = Tensor::new(vec![2], vec![0.5, 0.5]).unwrap();
        st.v[0] = Tensor::new(vec![2], vec![0.25, 0.25]).unwrap();
        st.step(vec![&mut p], &[&g]).unwrap();
        assert!((st.m[0].data()[0] - 0.45).abs() < 1e-15);
        assert!((st.v[0].data()[0] - 0.24975).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 1e-3;
        let mut p = Tensor::new(vec![1], vec![0.0f64]).unwrap();
        let mut st = AdamState::new(AdamConfig::with_learning_rate(lr), [&p]);
        let g = Tensor::new(vec![1], vec![1.0]).unwrap();
        st.step(vec![&mut p], &[&g]).unwrap();
        let expect = -lr / (1.0 + 1e-8);
        assert!((p.data()[0] - expect).abs() < 1e-18);
    }

    #[test]
    fn two_step_hand_trace() {
        let lr = 0.01;
        let mut p = Tensor::new(vec![1], vec![0.5f64]).unwrap();
        let mut st = AdamState::new(AdamConfig::with_learning_rate(lr), [&p]);
        let g = Tensor::new(vec![1], vec![1.0]).unwrap();
        st.step(vec![&mut p], &[&g]).unwrap();
        st.step(vec![&mut p], &[&g]).unwrap();
        // step 1: m = 0.1, v = 0.001, m̂ = 1, v̂ = 1
        // step 2: m = 0.19, v = 0.001999, m̂ = 0.19/0.19 = 1, v̂ = 0.001999/0.001999 = 1
        let expect = 0.5 - 2.0 * lr / (1.0 + 1e-8);
        assert!((p.data()[0] - expect).abs() < 1e-12);
        assert!((st.m[0].data()[0] - 0.19).abs() < 1e-15);
        assert!((st.v[0].data()[0] - 0.001999).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut p = Tensor::new(vec![2], vec![1.0f32, 2.0]).unwrap();
        let mut st = AdamState::new(AdamConfig::default(), [&p]);
        let g = Tensor::new(vec![2], vec![0.0, f32::NAN]).unwrap();
        assert!(matches!(st.step(vec![&mut p], &[&g]), Err(Error::NonFinite(_))));
        assert_eq!(p.data(), &[1.0, 2.0]);
        assert_eq!(st.step, 0);
    }
}
