//! Adam with bias-corrected moment estimates, one state per parameter tensor.

use alloc::format;
use alloc::vec::Vec;

use crate::math;
use crate::tensor::{arg_err, dim_err, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return arg_err(format!("learning rate {} must be finite and >= 0", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return arg_err("betas must lie in [0, 1)");
        }
        if self.eps.is_nan() || self.eps <= 0.0 {
            return arg_err("eps must be positive");
        }
        Ok(())
    }
}

/// First/second moment buffers for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState {
    hyper: AdamHyper,
    step: u64,
    m: Tensor,
    v: Tensor,
}

impl AdamState {
    pub fn new(shape: Vec<usize>, hyper: AdamHyper) -> Result<Self> {
        hyper.validate()?;
        Ok(AdamState {
            hyper,
            step: 0,
            m: Tensor::zeros(shape.clone()),
            v: Tensor::zeros(shape),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update: m and v decay toward the gradient statistics, the
    /// bias-corrected ratio moves the parameter.
    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor) -> Result<()> {
        if param.shape() != self.m.shape() || grad.shape() != self.m.shape() {
            return dim_err(format!(
                "adam state {:?} does not match param {:?} / grad {:?}",
                self.m.shape(),
                param.shape(),
                grad.shape()
            ));
        }
        self.step += 1;
        let AdamHyper {
            lr,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        let bc1 = 1.0 - pow_int(beta1, self.step);
        let bc2 = 1.0 - pow_int(beta2, self.step);
        for (((p, g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(self.m.data_mut().iter_mut())
            .zip(self.v.data_mut().iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
        Ok(())
    }
}

fn pow_int(base: f64, mut exp: u64) -> f64 {
    let mut acc = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            acc *= b;
        }
        b *= b;
        exp >>= 1;
    }
    acc
}

/// Euclidean norm over a set of gradient tensors taken as one flat vector.
pub fn global_norm(grads: &[&Tensor]) -> f64 {
    let mut sq = 0.0;
    for g in grads {
        for &v in g.data() {
            sq += v * v;
        }
    }
    math::sqrt(sq)
}

/// Scales all gradients by `max_norm / norm` when the global norm exceeds
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let refs: Vec<&Tensor> = grads.iter().collect();
    let norm = global_norm(&refs);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= s;
            }
        }
    }
    norm
}
