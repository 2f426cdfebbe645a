use super::params::ParamSet;
use super::{Gradients, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. `grads[i]` pairs with the i-th parameter.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<(), TensorError> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                detail: format!("{} params, {} grads, {} moments", params.len(), grads.len(), self.m.len()),
            });
        }
        for (i, (name, p)) in params.iter().enumerate() {
            if grads[i].len() != p.numel() || self.m[i].len() != p.numel() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    detail: format!("{name}: {} values, gradient has {}", p.numel(), grads[i].len()),
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let old = params.value(i);
            let mut new = old.data().to_vec();
            for j in 0..new.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                new[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            params.replace(i, Tensor::param(old.shape(), new)?);
        }
        Ok(())
    }

    /// Convenience: collects gradients for every parameter and steps.
    pub fn step_with(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<(), TensorError> {
        let flat: Vec<Vec<f64>> = params.iter().map(|(_, t)| grads.wrt(t).to_vec()).collect();
        self.step(params, &flat)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::backward;

    fn single(w: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::param(&[1], vec![w]).unwrap()).unwrap();
        p
    }

    #[test]
    fn defaults() {
        let c = AdamConfig::default();
        assert_eq!((c.lr, c.beta1, c.beta2), (0.001, 0.5, 0.9));
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let mut p = single(1.5);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..3 {
            adam.step(&mut p, &[vec![0.0]]).unwrap();
        }
        assert_eq!(p.value(0).data(), &[1.5]);
    }

    #[test]
    fn first_step_on_square() {
        // g = 2, m_hat = 2, v_hat = 4, step = lr * 2 / 2
        let mut p = single(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        let loss = p.value(0).square().sum_all();
        adam.step_with(&mut p, &backward(&loss, false).unwrap()).unwrap();
        assert!((p.value(0).data()[0] - 0.999).abs() < 1e-9);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut p = single(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        for _ in 0..2000 {
            let loss = p.value(0).square().sum_all();
            adam.step_with(&mut p, &backward(&loss, false).unwrap()).unwrap();
        }
        assert!(p.value(0).data()[0].abs() < 1e-2);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = single(1.0);
        let mut adam = AdamState::new(AdamConfig::default(), &p);
        assert!(adam.step(&mut p, &[vec![0.0, 1.0]]).is_err());
        assert!(adam.step(&mut p, &[]).is_err());
    }
}
