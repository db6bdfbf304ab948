//! Adam and AMSGrad first-order updates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Use the running maximum of the second moment (AMSGrad).
    pub amsgrad: bool,
}

impl AdamSettings {
    pub fn adam(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, amsgrad: false }
    }

    pub fn amsgrad(lr: f64) -> Self {
        Self { amsgrad: true, ..Self::adam(lr) }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub settings: AdamSettings,
    m: Vec<f64>,
    v: Vec<f64>,
    v_max: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(settings: AdamSettings, dim: usize) -> Self {
        Self { settings, m: vec![0.0; dim], v: vec![0.0; dim], v_max: vec![0.0; dim], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update `x ← x − lr · m̂ / (√v̂ + ε)`.
    pub fn step(&mut self, x: &mut [f64], grad: &[f64]) {
        self.step_lr(x, grad, self.settings.lr);
    }

    /// As [`Adam::step`] with an explicit learning rate for this step.
    pub fn step_lr(&mut self, x: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(x.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        let s = self.settings;
        self.t += 1;
        let bc1 = 1.0 - s.beta1.powi(self.t as i32);
        let bc2 = 1.0 - s.beta2.powi(self.t as i32);
        for i in 0..x.len() {
            let g = grad[i];
            self.m[i] = s.beta1 * self.m[i] + (1.0 - s.beta1) * g;
            self.v[i] = s.beta2 * self.v[i] + (1.0 - s.beta2) * g * g;
            let v = if s.amsgrad {
                self.v_max[i] = self.v_max[i].max(self.v[i]);
                self.v_max[i]
            } else {
                self.v[i]
            };
            x[i] -= lr * (self.m[i] / bc1) / ((v / bc2).sqrt() + s.eps);
        }
    }
}
