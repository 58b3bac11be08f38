//! Adam with bias correction and per-step exponential learning-rate decay.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8, decay: 0.99 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Adam {
    pub fn new(n: usize, config: AdamConfig) -> Adam {
        Adam { config, m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    /// Learning rate used by the next step.
    pub fn current_lr(&self) -> f64 {
        self.config.lr * self.config.decay.powi(self.step as i32)
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let c = self.config;
        let lr = self.current_lr();
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr * mh / (vh.sqrt() + c.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut a = Adam::new(2, AdamConfig::default());
        let mut p = vec![1.0, 1.0];
        a.step(&mut p, &[1.0, 0.0]);
        assert!((p[0] - (1.0 - 0.01)).abs() < 1e-9);
        assert_eq!(p[1], 1.0);
        assert!((a.current_lr() - 0.0099).abs() < 1e-15);
    }
}
