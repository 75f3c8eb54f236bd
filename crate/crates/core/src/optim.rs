//! Adam with bias correction over an ordered list of parameter tensors.
//!
//! One state covers whatever parameter group a trainer owns: the whole
//! network for backprop, a single layer for forward-forward, or just the
//! head for the hybrid's second stage. Tensor order is fixed at
//! construction and must match on every step.

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(tensor_lens: &[usize], lr: f64) -> Self {
        AdamState {
            lr,
            t: 0,
            m: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// One Adam update:
    ///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    ///   p -= lr * m_hat / (sqrt(v_hat) + eps)
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} tensors registered, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape(format!(
                    "adam: tensor length {} registered, got param {} / grad {}",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
            for i in 0..p.len() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}
