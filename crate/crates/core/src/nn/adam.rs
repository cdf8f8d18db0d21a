use serde::{Deserialize, Serialize};

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64, beta1: f64, beta2: f64) -> Self {
        Self { lr, beta1, beta2, eps: 1e-8, t: 0, m: vec![0.0; len], v: vec![0.0; len] }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer size mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient size mismatch");
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }

    /// Moments concatenated as `m` then `v`.
    pub fn moments(&self) -> Vec<f64> {
        let mut out = self.m.clone();
        out.extend_from_slice(&self.v);
        out
    }

    pub fn set_moments(&mut self, t: u64, moments: &[f64]) -> bool {
        let n = self.m.len();
        if moments.len() != 2 * n {
            return false;
        }
        self.t = t;
        self.m.copy_from_slice(&moments[..n]);
        self.v.copy_from_slice(&moments[n..]);
        true
    }
}
