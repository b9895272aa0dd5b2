//! AMSGrad with coupled L2 weight decay, and the plateau learning-rate rule.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Adam with the AMSGrad correction: the denominator uses the running
/// maximum of the second-moment estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct AmsGrad {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
}

impl AmsGrad {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self { beta1, beta2, eps, weight_decay, step: 0, m: vec![0.0; n], v: vec![0.0; n], v_max: vec![0.0; n] }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update of `params` given the raw loss gradient.
    pub fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - libm::pow(self.beta1, t as f64);
        let bc2_sqrt = libm::sqrt(1.0 - libm::pow(self.beta2, t as f64));
        let step_size = lr / bc1;
        for i in 0..params.len() {
            let g = grad[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            if self.v[i] > self.v_max[i] {
                self.v_max[i] = self.v[i];
            }
            let denom = libm::sqrt(self.v_max[i]) / bc2_sqrt + self.eps;
            params[i] -= step_size * self.m[i] / denom;
        }
    }
}

/// Multiplies the learning rate by `factor` once the monitored loss has gone
/// `patience` consecutive epochs without a strict improvement, then starts
/// counting again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: u32,
    pub lr: f64,
    best: f64,
    bad_epochs: u32,
}

impl PlateauSchedule {
    pub fn new(lr: f64, factor: f64, patience: u32) -> Self {
        Self { factor, patience, lr, best: f64::INFINITY, bad_epochs: 0 }
    }

    /// Records an epoch's loss; returns true when the rate was reduced.
    pub fn step(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            self.lr *= self.factor;
            self.bad_epochs = 0;
            return true;
        }
        false
    }

    pub fn bad_epochs(&self) -> u32 {
        self.bad_epochs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_drops_after_patience() {
        let mut s = PlateauSchedule::new(1e-3, 0.4, 4);
        let losses = [1.0, 0.9, 0.95, 0.95, 0.95, 0.95, 0.91, 0.92, 0.93, 0.94, 0.8];
        let mut lrs = Vec::new();
        for l in losses {
            s.step(l);
            lrs.push(s.lr);
        }
        assert_eq!(lrs[4], 1e-3);
        assert_eq!(lrs[5], 1e-3 * 0.4);
        assert_eq!(lrs[9], 1e-3 * 0.4 * 0.4);
        assert_eq!(lrs[10], lrs[9]);
    }

    #[test]
    fn amsgrad_first_step_is_lr_sized() {
        let mut opt = AmsGrad::new(2, 0.9, 0.999, 1e-8, 0.0);
        let mut p = [1.0, -1.0];
        opt.update(&mut p, &[0.5, -2.0], 0.01);
        assert!((p[0] - 0.99).abs() < 1e-6);
        assert!((p[1] + 0.99).abs() < 1e-6);
    }

    #[test]
    fn amsgrad_denominator_never_shrinks() {
        let mut opt = AmsGrad::new(1, 0.9, 0.999, 1e-8, 0.0);
        let mut p = [0.0];
        opt.update(&mut p, &[10.0], 0.01);
        let vmax = opt.v_max[0];
        opt.update(&mut p, &[0.001], 0.01);
        assert!(opt.v_max[0] >= vmax);
    }

    #[test]
    fn weight_decay_pulls_towards_zero() {
        let mut opt = AmsGrad::new(1, 0.9, 0.999, 1e-8, 0.1);
        let mut p = [5.0];
        for _ in 0..10 {
            opt.update(&mut p, &[0.0], 0.1);
        }
        assert!(p[0] < 5.0);
    }
}
