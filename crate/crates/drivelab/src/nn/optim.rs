//! SGD and Adam parameter updates over plain gradient-carrying tensors.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: per-parameter moment accumulators plus a step counter.
pub struct Optimizer<E: Scalar> {
    kind: OptimizerKind,
    lr: f64,
    step_count: u64,
    moments: Vec<Moments<E>>, // lazily sized to the parameter list
}

struct Moments<E> {
    m: Vec<E>,
    v: Vec<E>,
}

impl<E: Scalar> Optimizer<E> {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step_count: 0,
            moments: Vec::new(),
        }
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::adam_default(), lr)
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Apply one update. Parameters with no accumulated gradient are treated
    /// as zero-gradient (left unchanged under both rules).
    pub fn step(&mut self, params: &mut [&mut Tensor<E>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = params
                .iter()
                .map(|p| Moments {
                    m: vec![E::ZERO; p.numel()],
                    v: vec![E::ZERO; p.numel()],
                })
                .collect();
        }
        if self.moments.len() != params.len() {
            return Err(Error::shape("optimizer step", self.moments.len(), params.len()));
        }
        self.step_count += 1;
        let lr = E::from_f64(self.lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    if p.grad().is_none() {
                        continue;
                    }
                    let g: Vec<E> = p.grad().unwrap().to_vec();
                    for (v, gi) in p.data_mut().iter_mut().zip(g) {
                        *v -= lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let b1 = E::from_f64(beta1);
                let b2 = E::from_f64(beta2);
                let eps = E::from_f64(eps);
                let t = self.step_count as i32;
                let corr1 = E::from_f64(1.0 - beta1.powi(t));
                let corr2 = E::from_f64(1.0 - beta2.powi(t));
                for (p, slot) in params.iter_mut().zip(&mut self.moments) {
                    if slot.m.len() != p.numel() {
                        return Err(Error::shape("optimizer moments", slot.m.len(), p.numel()));
                    }
                    if p.grad().is_none() {
                        continue;
                    }
                    let g: Vec<E> = p.grad().unwrap().to_vec();
                    for ((v, gi), (m, vv)) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g)
                        .zip(slot.m.iter_mut().zip(slot.v.iter_mut()))
                    {
                        *m = b1 * *m + (E::ONE - b1) * gi;
                        *vv = b2 * *vv + (E::ONE - b2) * gi * gi;
                        let m_hat = *m / corr1;
                        let v_hat = *vv / corr2;
                        *v -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> Tensor<f64> {
        Tensor::new(vec![1], vec![v]).unwrap().param()
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar_param(3.5);
        p.zero_grad();
        let mut opt = Optimizer::adam(0.1);
        opt.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data()[0], 3.5);

        let mut q = scalar_param(1.25);
        q.zero_grad();
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut [&mut q]).unwrap();
        assert_eq!(q.data()[0], 1.25);
    }

    #[test]
    fn sgd_scalar_step() {
        let mut p = scalar_param(1.0);
        p.accumulate_grad(&[1.0]);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut [&mut p]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // Closed form for step 1: m_hat = g, v_hat = g^2, so the update is
        // lr * g / (|g| + eps) = lr * sign(g) up to eps.
        for &g in &[0.3f64, -2.0, 7.5e-3] {
            let mut p = scalar_param(0.0);
            p.accumulate_grad(&[g]);
            let mut opt = Optimizer::adam(2e-4);
            opt.step(&mut [&mut p]).unwrap();
            let update = p.data()[0];
            assert!((update.abs() - 2e-4).abs() < 1e-8, "magnitude {update}");
            assert_eq!(update.signum(), -g.signum());
        }
    }
}
