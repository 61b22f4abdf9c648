//! Adamax: the infinity-norm Adam variant.
//!
//! Update, with bias-corrected first moment:
//!   m <- b1*m + (1-b1)*g
//!   u <- max(b2*u, |g|)
//!   p <- p - lr * m / ((1 - b1^t) * (u + eps))

use crate::layers::Param;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Adamax {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    t: u64,
    m: Vec<Tensor>,
    u: Vec<Tensor>,
}

impl Adamax {
    pub fn new(learning_rate: f32) -> Self {
        Adamax {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            t: 0,
            m: Vec::new(),
            u: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Apply one update over the trainable params, in the order given.
    /// The slot list must be identical (same order, same shapes) on every call.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.raw_dim())).collect();
            self.u = params.iter().map(|p| Tensor::zeros(p.value.raw_dim())).collect();
        }
        assert_eq!(self.m.len(), params.len(), "optimizer slot count changed");
        self.t += 1;
        let bias = 1.0 - self.beta1.powi(self.t as i32);
        let lr_t = self.learning_rate / bias;
        for (i, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let g = p.grad.as_slice().unwrap();
            let m = self.m[i].as_slice_mut().unwrap();
            let u = self.u[i].as_slice_mut().unwrap();
            let v = p.value.as_slice_mut().unwrap();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                u[j] = (self.beta2 * u[j]).max(g[j].abs());
                v[j] -= lr_t * m[j] / (u[j] + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn first_step_moves_by_lr_under_unit_gradient() {
        // With g constant: m_hat = g, u = |g|, so the first step is exactly lr.
        let mut p = Param::new(Tensor::from_elem(IxDyn(&[3]), 1.0f32), true);
        p.grad.fill(0.5);
        let mut opt = Adamax::new(0.01);
        opt.step(&mut [&mut p]);
        for v in p.value.iter() {
            assert!((v - (1.0 - 0.01 * (0.5 / (0.5 + 1e-7)))).abs() < 1e-6);
        }
    }

    #[test]
    fn matches_hand_computed_two_steps() {
        let mut p = Param::new(Tensor::from_elem(IxDyn(&[1]), 0.0f32), true);
        let mut opt = Adamax::new(0.1);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-7f64);
        let (mut m, mut u, mut val) = (0.0f64, 0.0f64, 0.0f64);
        for (t, g) in [0.3f64, -0.2].iter().enumerate() {
            p.grad.fill(*g as f32);
            opt.step(&mut [&mut p]);
            m = b1 * m + (1.0 - b1) * g;
            u = (b2 * u).max(g.abs());
            val -= 0.1 / (1.0 - b1.powi(t as i32 + 1)) * m / (u + eps);
            assert!((p.value[[0]] as f64 - val).abs() < 1e-6, "step {t}");
        }
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut p = Param::new(Tensor::from_elem(IxDyn(&[2]), 5.0f32), false);
        p.grad.fill(1.0);
        let mut opt = Adamax::new(0.1);
        opt.step(&mut [&mut p]);
        assert!(p.value.iter().all(|&v| v == 5.0));
    }
}
