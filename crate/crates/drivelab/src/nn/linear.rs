//! Fully connected layer. Accepts any input whose trailing dimensions flatten
//! to `in_dim` (so a `[n, c, 1, 1]` latent feeds an MLP directly).

use super::linalg::{matmul, matmul_acc_abt, matmul_atb};
use super::{Layer, LayerSpec, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

pub struct Linear<E: Scalar> {
    weight: Tensor<E>, // [out_dim, in_dim]
    bias: Tensor<E>,   // [out_dim]
    in_dim: usize,
    out_dim: usize,
    cache: Option<(Tensor<E>, Vec<usize>)>, // flattened input, original shape
}

impl<E: Scalar> Linear<E> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::randn(vec![out_dim, in_dim], super::INIT_STD, rng).param();
        let bias = Tensor::zeros(vec![out_dim]).param();
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
            cache: None,
        }
    }

    fn flatten(&self, input: &Tensor<E>) -> Result<(usize, Tensor<E>)> {
        let shape = input.shape();
        if shape.is_empty() {
            return Err(Error::shape("linear input", "rank >= 1", "rank 0"));
        }
        let n = shape[0];
        let feat: usize = shape[1..].iter().product();
        if feat != self.in_dim {
            return Err(Error::shape(
                format!("linear {}->{}", self.in_dim, self.out_dim),
                format!("{} input features", self.in_dim),
                format!("{} (shape {:?})", feat, shape),
            ));
        }
        Ok((n, input.clone().reshape(vec![n, self.in_dim])?))
    }

    fn run(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, x) = self.flatten(input)?;
        let mut out = Tensor::zeros(vec![n, self.out_dim]);
        // y = x * W^T
        matmul_acc_abt(out.data_mut(), x.data(), self.weight.data(), n, self.in_dim, self.out_dim);
        let data = out.data_mut();
        for i in 0..n {
            for (o, b) in self.bias.data().iter().enumerate() {
                data[i * self.out_dim + o] += *b;
            }
        }
        Ok(out)
    }
}

impl<E: Scalar> Layer<E> for Linear<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        let out = self.run(input)?;
        let (n, x) = self.flatten(input)?;
        let _ = n;
        self.cache = Some((x, input.shape().to_vec()));
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        self.run(input)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let (x, orig_shape) = self.cache.take().ok_or_else(|| Error::Invalid("linear backward before forward".into()))?;
        let (n, _) = x.dims2()?;
        let (gn, gd) = grad_out.dims2()?;
        if gn != n || gd != self.out_dim {
            return Err(Error::shape("linear backward", format!("[{}, {}]", n, self.out_dim), format!("[{}, {}]", gn, gd)));
        }

        // dW = dY^T * x
        {
            let dw = self.weight.grad_mut();
            let mut tmp = vec![E::ZERO; self.out_dim * self.in_dim];
            matmul_atb(&mut tmp, grad_out.data(), x.data(), n, self.out_dim, self.in_dim);
            for (d, t) in dw.iter_mut().zip(&tmp) {
                *d += *t;
            }
        }
        // db = column sums of dY
        {
            let db = self.bias.grad_mut();
            for i in 0..n {
                for o in 0..self.out_dim {
                    db[o] += grad_out.data()[i * self.out_dim + o];
                }
            }
        }
        // dX = dY * W
        let mut grad_in = Tensor::zeros(vec![n, self.in_dim]);
        matmul(grad_in.data_mut(), grad_out.data(), self.weight.data(), n, self.out_dim, self.in_dim);
        grad_in.reshape(orig_shape)
    }

    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params_ref(&self) -> Vec<&Tensor<E>> {
        vec![&self.weight, &self.bias]
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Linear {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
        }
    }
}
