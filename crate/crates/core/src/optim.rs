//! Trainable parameters and the Adam optimizer.

use crate::error::{contract, Result};
use crate::tensor::Tensor;

/// A trainable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Param { value, grad: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators for a fixed list of parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[&Param]) -> Self {
        let zeros = |p: &&Param| Tensor::zeros(p.value.rows(), p.value.cols());
        AdamState {
            config,
            step: 0,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.second[i]
    }

    /// One bias-corrected Adam update; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if params.len() != self.first.len() {
            return contract(format!(
                "optimizer tracks {} parameters, got {}",
                self.first.len(),
                params.len()
            ));
        }
        for (i, p) in params.iter().enumerate() {
            match &p.grad {
                None => return contract(format!("parameter {i} has no gradient")),
                Some(g) if g.shape() != p.value.shape() => {
                    return contract(format!("gradient shape mismatch on parameter {i}"))
                }
                Some(_) => {}
            }
            if self.first[i].shape() != p.value.shape() {
                return contract(format!("parameter {i} changed shape"));
            }
        }
        self.step += 1;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(self.step as i32);
        let bias2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let grad = p.grad.as_mut().expect("checked above");
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let w = p.value.data_mut();
            for k in 0..w.len() {
                let g = grad.data()[k] + c.weight_decay * w[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                w[k] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
            grad.fill(0.0);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64, g: f64) -> Param {
        Param {
            value: Tensor::scalar(v),
            grad: Some(Tensor::scalar(g)),
        }
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = Param {
            value: Tensor::filled(2, 2, 0.3),
            grad: Some(Tensor::zeros(2, 2)),
        };
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.value, Tensor::filled(2, 2, 0.3));
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_param(1.0, 1.0);
        let cfg = AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        };
        let mut adam = AdamState::new(cfg, &[&p]);
        adam.step(&mut [&mut p]).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let expected = 1.0 - 0.01 / (1.0 + 1e-8);
        assert!((p.value.item() - expected).abs() < 1e-15);
        assert_eq!(p.grad.as_ref().unwrap().item(), 0.0);
    }

    #[test]
    fn second_moment_accumulates() {
        let mut p = scalar_param(0.0, 0.5);
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        adam.step(&mut [&mut p]).unwrap();
        p.grad = Some(Tensor::scalar(0.5));
        adam.step(&mut [&mut p]).unwrap();
        assert!(adam.second_moment(0).item() > 0.0);
        assert_eq!(adam.steps(), 2);
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut p = Param::new(Tensor::scalar(1.0));
        let mut adam = AdamState::new(AdamConfig::default(), &[&p]);
        assert!(adam.step(&mut [&mut p]).is_err());
    }
}
