//! Adam with a step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Learning rate at `epoch` (0-based): halved once 60% and again once 85% of
/// `total` epochs have elapsed.
pub fn scheduled_lr(base: f64, epoch: usize, total: usize) -> f64 {
    let frac = epoch as f64 / total.max(1) as f64;
    let mut lr = base;
    if frac >= 0.6 {
        lr *= 0.5;
    }
    if frac >= 0.85 {
        lr *= 0.5;
    }
    lr
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f32>> = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            cfg,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) {
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.cfg.eps * c2.sqrt()) as f32;
        let (b1, b2) = (b1 as f32, b2 as f32);
        for (i, p) in params.iter_mut().enumerate() {
            let (m, v, g) = (&mut self.m[i], &mut self.v[i], &grads.data[i]);
            for j in 0..p.value.len() {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                p.value[j] -= step * m[j] / (v[j].sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;
    use ctvseg_core::CounterRng;

    #[test]
    fn schedule_halves_twice() {
        assert_eq!(scheduled_lr(1e-3, 0, 100), 1e-3);
        assert_eq!(scheduled_lr(1e-3, 59, 100), 1e-3);
        assert_eq!(scheduled_lr(1e-3, 60, 100), 5e-4);
        assert_eq!(scheduled_lr(1e-3, 85, 100), 2.5e-4);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut rng = CounterRng::new(0);
        let mut ps = ParamStore::new();
        let id = ps.add("x", &[3], Init::He { fan_in: 1, gain: 1.0 }, &mut rng);
        let target = [1.0f32, -2.0, 0.5];
        let mut opt = Adam::new(
            AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            &ps,
        );
        let mut grads = ps.zero_grads();
        for _ in 0..2000 {
            for j in 0..3 {
                grads.data[id][j] = 2.0 * (ps.value(id)[j] - target[j]);
            }
            opt.step(&mut ps, &grads, 0.05);
        }
        for j in 0..3 {
            assert!((ps.value(id)[j] - target[j]).abs() < 1e-3);
        }
        assert_eq!(opt.steps(), 2000);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut rng = CounterRng::new(0);
        let mut ps = ParamStore::new();
        let id = ps.add("x", &[2], Init::Zeros, &mut rng);
        let mut grads = ps.zero_grads();
        grads.data[id] = vec![3.0, -0.2];
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        opt.step(&mut ps, &grads, 1e-3);
        assert!((ps.value(id)[0] + 1e-3).abs() < 1e-6);
        assert!((ps.value(id)[1] - 1e-3).abs() < 1e-6);
    }
}
