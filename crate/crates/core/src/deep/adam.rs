use serde::{Deserialize, Serialize};

use crate::deep::net::Network;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        Adam {
            config,
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }

    pub fn for_network(config: AdamConfig, net: &Network) -> Self {
        Adam::new(config, net.num_params())
    }

    pub fn config(&self) -> AdamConfig {
        self.config
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One bias-corrected descent step along `grads`.
    pub fn step(&mut self, net: &mut Network, grads: &[f64]) -> Result<()> {
        if grads.len() != self.first_moment.len() || net.num_params() != grads.len() {
            return Err(Error::shape(
                self.first_moment.len().to_string(),
                format!("grads {}, params {}", grads.len(), net.num_params()),
            ));
        }
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let mut i = 0;
        for p in net.params_mut() {
            for w in p.iter_mut() {
                let g = grads[i];
                let m = &mut self.first_moment[i];
                let v = &mut self.second_moment[i];
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                flush_subnormal(m);
                flush_subnormal(v);
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + eps);
                i += 1;
            }
        }
        Ok(())
    }
}

/// Moments of parameters that stop receiving gradient decay geometrically
/// into the subnormal range, where arithmetic is very slow.
fn flush_subnormal(x: &mut f64) {
    if x.abs() < f64::MIN_POSITIVE {
        *x = 0.0;
    }
}

/// Elementwise clamp to `[-limit, limit]`.
pub fn clip_gradients(grads: &mut [f64], limit: f64) {
    for g in grads {
        *g = g.clamp(-limit, limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deep::net::Architecture;
    use approx::assert_abs_diff_eq;

    #[test]
    fn first_step_closed_form() {
        let mut net = Network::new(&Architecture::mlp(&[2, 3]), 4).unwrap();
        let before = net.flat_params();
        let cfg = AdamConfig::default();
        let mut opt = Adam::for_network(cfg, &net);
        opt.step(&mut net, &vec![1.0; before.len()]).unwrap();
        let expected = -cfg.learning_rate / (1.0 + cfg.eps);
        for (a, b) in net.flat_params().iter().zip(&before) {
            assert_abs_diff_eq!(a - b, expected, epsilon = 1e-12);
        }
        assert_eq!(opt.step_count(), 1);
        assert!(opt.step(&mut net, &[1.0]).is_err());
    }

    #[test]
    fn idle_moments_reach_zero() {
        let mut net = Network::new(&Architecture::mlp(&[1, 1]), 4).unwrap();
        let mut opt = Adam::for_network(AdamConfig::default(), &net);
        opt.step(&mut net, &[1.0, 1.0]).unwrap();
        for _ in 0..8_000 {
            opt.step(&mut net, &[0.0, 0.0]).unwrap();
        }
        assert!(opt.first_moment.iter().all(|&m| m == 0.0));
        assert!(opt.second_moment.iter().all(|&v| v > 0.0 && v.is_normal()));
    }

    #[test]
    fn clipping_bounds_magnitudes() {
        let mut g = vec![-3.0, -1.0, 0.2, 1.0, 7.5, f64::MIN];
        clip_gradients(&mut g, 1.0);
        assert!(g.iter().all(|x| x.abs() <= 1.0));
        assert_eq!(g, vec![-1.0, -1.0, 0.2, 1.0, 1.0, -1.0]);
    }
}
