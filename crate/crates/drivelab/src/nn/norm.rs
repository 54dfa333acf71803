//! Batch normalization over `[n, c, h, w]`, per channel.

use super::{Layer, LayerSpec, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub struct BatchNorm2d<E: Scalar> {
    gamma: Tensor<E>,
    beta: Tensor<E>,
    running_mean: Vec<E>,
    running_var: Vec<E>,
    channels: usize,
    cache: Option<BnCache<E>>,
}

struct BnCache<E> {
    x_hat: Vec<E>,
    inv_std: Vec<E>, // per channel; empty marks an eval-mode forward
    dims: (usize, usize, usize, usize),
    eval_mode: bool,
}

impl<E: Scalar> BatchNorm2d<E> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Tensor::filled(vec![channels], E::ONE).param(),
            beta: Tensor::zeros(vec![channels]).param(),
            running_mean: vec![E::ZERO; channels],
            running_var: vec![E::ONE; channels],
            channels,
            cache: None,
        }
    }

    fn check(&self, input: &Tensor<E>) -> Result<(usize, usize, usize, usize)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.channels {
            return Err(Error::shape("batch-norm channels", self.channels, c));
        }
        Ok((n, c, h, w))
    }

    fn normalize(&self, input: &Tensor<E>, mean: &[E], var: &[E]) -> (Tensor<E>, Vec<E>) {
        let (n, c, h, w) = input.dims4().expect("checked");
        let hw = h * w;
        let eps = E::from_f64(BN_EPS);
        let mut out = input.clone();
        let mut inv_std = vec![E::ZERO; c];
        for (ch, is) in inv_std.iter_mut().enumerate() {
            *is = E::ONE / (var[ch] + eps).sqrt();
        }
        let data = out.data_mut();
        for i in 0..n {
            for ch in 0..c {
                let g = self.gamma.data()[ch];
                let b = self.beta.data()[ch];
                let m = mean[ch];
                let is = inv_std[ch];
                let base = (i * c + ch) * hw;
                for v in &mut data[base..base + hw] {
                    *v = (*v - m) * is * g + b;
                }
            }
        }
        (out, inv_std)
    }

    pub fn running_stats_mut(&mut self) -> (&mut Vec<E>, &mut Vec<E>) {
        (&mut self.running_mean, &mut self.running_var)
    }
}

impl<E: Scalar> Layer<E> for BatchNorm2d<E> {
    fn forward(&mut self, input: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let (n, c, h, w) = self.check(input)?;
        let hw = h * w;
        match mode {
            Mode::Train => {
                if n < 2 {
                    return Err(Error::Invalid(format!(
                        "batch-norm requires batch size >= 2 in train mode, got {}",
                        n
                    )));
                }
                let count = E::from_f64((n * hw) as f64);
                let mut mean = vec![E::ZERO; c];
                let mut var = vec![E::ZERO; c];
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        let mut acc = E::ZERO;
                        for v in &input.data()[base..base + hw] {
                            acc += *v;
                        }
                        mean[ch] += acc;
                    }
                }
                for m in &mut mean {
                    *m /= count;
                }
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        let m = mean[ch];
                        let mut acc = E::ZERO;
                        for v in &input.data()[base..base + hw] {
                            let d = *v - m;
                            acc += d * d;
                        }
                        var[ch] += acc;
                    }
                }
                for v in &mut var {
                    *v /= count;
                }

                let momentum = E::from_f64(BN_MOMENTUM);
                let keep = E::ONE - momentum;
                for ch in 0..c {
                    self.running_mean[ch] = keep * self.running_mean[ch] + momentum * mean[ch];
                    self.running_var[ch] = keep * self.running_var[ch] + momentum * var[ch];
                }

                let (out, inv_std) = self.normalize(input, &mean, &var);
                let mut x_hat = input.clone().into_data();
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        let m = mean[ch];
                        let is = inv_std[ch];
                        for v in &mut x_hat[base..base + hw] {
                            *v = (*v - m) * is;
                        }
                    }
                }
                self.cache = Some(BnCache {
                    x_hat,
                    inv_std,
                    dims: (n, c, h, w),
                    eval_mode: false,
                });
                Ok(out)
            }
            Mode::Eval => {
                let mean = self.running_mean.clone();
                let var = self.running_var.clone();
                let (out, inv_std) = self.normalize(input, &mean, &var);
                let mut x_hat = input.clone().into_data();
                for i in 0..n {
                    for ch in 0..c {
                        let base = (i * c + ch) * hw;
                        let m = mean[ch];
                        let is = inv_std[ch];
                        for v in &mut x_hat[base..base + hw] {
                            *v = (*v - m) * is;
                        }
                    }
                }
                self.cache = Some(BnCache {
                    x_hat,
                    inv_std,
                    dims: (n, c, h, w),
                    eval_mode: true,
                });
                Ok(out)
            }
        }
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        self.check(input)?;
        let (out, _) = self.normalize(input, &self.running_mean, &self.running_var);
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.take().ok_or_else(|| Error::Invalid("batch-norm backward before forward".into()))?;
        let (n, c, h, w) = cache.dims;
        let hw = h * w;
        let m_count = E::from_f64((n * hw) as f64);

        // dgamma, dbeta
        let mut dgamma = vec![E::ZERO; c];
        let mut dbeta = vec![E::ZERO; c];
        for i in 0..n {
            for ch in 0..c {
                let base = (i * c + ch) * hw;
                let dy = &grad_out.data()[base..base + hw];
                let xh = &cache.x_hat[base..base + hw];
                let mut dg = E::ZERO;
                let mut db = E::ZERO;
                for (d, x) in dy.iter().zip(xh) {
                    dg += *d * *x;
                    db += *d;
                }
                dgamma[ch] += dg;
                dbeta[ch] += db;
            }
        }

        let mut grad_in = grad_out.clone();
        if cache.eval_mode {
            // Running stats are constants: dx = dy * gamma * inv_std.
            let data = grad_in.data_mut();
            for i in 0..n {
                for ch in 0..c {
                    let base = (i * c + ch) * hw;
                    let scale = self.gamma.data()[ch] * cache.inv_std[ch];
                    for v in &mut data[base..base + hw] {
                        *v *= scale;
                    }
                }
            }
        } else {
            // dx = gamma * inv_std * (dy - dbeta/m - x_hat * dgamma/m)
            let data = grad_in.data_mut();
            for i in 0..n {
                for ch in 0..c {
                    let base = (i * c + ch) * hw;
                    let g = self.gamma.data()[ch];
                    let is = cache.inv_std[ch];
                    let mean_db = dbeta[ch] / m_count;
                    let mean_dg = dgamma[ch] / m_count;
                    let xh = &cache.x_hat[base..base + hw];
                    for (v, x) in data[base..base + hw].iter_mut().zip(xh) {
                        *v = g * is * (*v - mean_db - *x * mean_dg);
                    }
                }
            }
        }

        self.gamma.accumulate_grad(&dgamma);
        self.beta.accumulate_grad(&dbeta);
        Ok(grad_in)
    }

    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn params_ref(&self) -> Vec<&Tensor<E>> {
        vec![&self.gamma, &self.beta]
    }

    fn state_mut(&mut self) -> Vec<&mut Vec<E>> {
        vec![&mut self.running_mean, &mut self.running_var]
    }

    fn state_ref(&self) -> Vec<&Vec<E>> {
        vec![&self.running_mean, &self.running_var]
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm { ch: self.channels }
    }
}
