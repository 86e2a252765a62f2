use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::autodiff::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &MlpParams) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected Adam update in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &[Tensor]) -> Result<()> {
        let mut targets = params.tensors_mut();
        if grads.len() != targets.len() {
            return Err(Error::Contract(format!(
                "adam got {} gradients for {} parameter tensors",
                grads.len(),
                targets.len()
            )));
        }
        for (k, (p, g)) in targets.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(Error::Dimension {
                    op: "adam",
                    operand: "gradient",
                    expected: format!("{:?} for tensor {k}", p.shape()),
                    found: g.shape().to_vec(),
                });
            }
        }
        if let Some(bad) = grads.iter().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("adam gradient for tensor {bad}")));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for ((p, g), (m, v)) in targets
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for (((p, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(params: &mut MlpParams, grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    state.step(params, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Layer, Role};

    fn scalar_net(w: f64) -> MlpParams {
        MlpParams::from_layers(
            Role::Critic,
            vec![Layer {
                weight: Tensor::matrix(1, 1, vec![w]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = scalar_net(1.0);
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut st = AdamState::new(cfg, &net);
        let grads = [Tensor::matrix(1, 1, vec![1.0]).unwrap(), Tensor::vector(vec![0.0])];
        adam_step(&mut net, &grads, &mut st).unwrap();
        let w = net.layers[0].weight.data()[0];
        assert!((w - 0.9).abs() < 1e-8, "{w}");
        assert_eq!(net.layers[0].bias.data()[0], 0.0);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = scalar_net(0.7);
        let mut st = AdamState::new(AdamConfig::default(), &net);
        let grads = [Tensor::matrix(1, 1, vec![0.0]).unwrap(), Tensor::vector(vec![0.0])];
        for _ in 0..3 {
            st.step(&mut net, &grads).unwrap();
        }
        assert_eq!(net.layers[0].weight.data()[0], 0.7);
    }

    #[test]
    fn repeated_runs_agree_bitwise() {
        let run = || {
            let mut net = scalar_net(-1.3);
            let mut st = AdamState::new(AdamConfig::default(), &net);
            for k in 0..5 {
                let grads = [Tensor::matrix(1, 1, vec![0.3 * k as f64 - 0.5]).unwrap(), Tensor::vector(vec![1.0])];
                st.step(&mut net, &grads).unwrap();
            }
            net
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut net = scalar_net(3.0);
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut st = AdamState::new(cfg, &net);
        for _ in 0..2000 {
            let w = net.layers[0].weight.data()[0];
            let grads = [Tensor::matrix(1, 1, vec![2.0 * (w - 1.0)]).unwrap(), Tensor::vector(vec![0.0])];
            st.step(&mut net, &grads).unwrap();
        }
        assert!((net.layers[0].weight.data()[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_mismatched_gradients() {
        let mut net = scalar_net(1.0);
        let mut st = AdamState::new(AdamConfig::default(), &net);
        assert!(st.step(&mut net, &[Tensor::scalar(1.0)]).is_err());
        let bad = [Tensor::matrix(1, 1, vec![f64::NAN]).unwrap(), Tensor::vector(vec![0.0])];
        assert!(matches!(st.step(&mut net, &bad), Err(Error::NonFinite(_))));
        assert_eq!(st.step, 0);
    }
}
