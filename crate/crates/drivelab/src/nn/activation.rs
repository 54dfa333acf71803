//! Pointwise activations and the per-pixel channel softmax.

use super::{Layer, LayerSpec, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// max(x, slope * x). `Relu` is the slope-0 special case.
pub struct LeakyRelu<E: Scalar> {
    slope: f64,
    cache: Option<Tensor<E>>,
}

impl<E: Scalar> LeakyRelu<E> {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope, cache: None }
    }

    fn apply(&self, input: &Tensor<E>) -> Tensor<E> {
        let s = E::from_f64(self.slope);
        input.map(|x| if x > E::ZERO { x } else { s * x })
    }
}

impl<E: Scalar> Layer<E> for LeakyRelu<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        self.cache = Some(input.clone());
        Ok(self.apply(input))
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(self.apply(input))
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.cache.take().ok_or_else(|| Error::Invalid("leaky-relu backward before forward".into()))?;
        let s = E::from_f64(self.slope);
        let mut g = grad_out.clone();
        for (gv, xv) in g.data_mut().iter_mut().zip(input.data()) {
            if *xv <= E::ZERO {
                *gv *= s;
            }
        }
        Ok(g)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::LeakyRelu { slope: self.slope }
    }
}

pub struct Relu<E: Scalar> {
    inner: Option<Tensor<E>>,
}

impl<E: Scalar> Default for Relu<E> {
    fn default() -> Self {
        Relu { inner: None }
    }
}

impl<E: Scalar> Layer<E> for Relu<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        self.inner = Some(input.clone());
        Ok(input.map(|x| x.max_s(E::ZERO)))
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(input.map(|x| x.max_s(E::ZERO)))
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.inner.take().ok_or_else(|| Error::Invalid("relu backward before forward".into()))?;
        let mut g = grad_out.clone();
        for (gv, xv) in g.data_mut().iter_mut().zip(input.data()) {
            if *xv <= E::ZERO {
                *gv = E::ZERO;
            }
        }
        Ok(g)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Relu
    }
}

pub struct Sigmoid<E: Scalar> {
    out: Option<Tensor<E>>,
}

impl<E: Scalar> Default for Sigmoid<E> {
    fn default() -> Self {
        Sigmoid { out: None }
    }
}

fn sigmoid<E: Scalar>(x: E) -> E {
    E::ONE / (E::ONE + (-x).exp())
}

impl<E: Scalar> Layer<E> for Sigmoid<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        let out = input.map(sigmoid);
        self.out = Some(out.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        Ok(input.map(sigmoid))
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let out = self.out.take().ok_or_else(|| Error::Invalid("sigmoid backward before forward".into()))?;
        let mut g = grad_out.clone();
        for (gv, yv) in g.data_mut().iter_mut().zip(out.data()) {
            *gv *= *yv * (E::ONE - *yv);
        }
        Ok(g)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Sigmoid
    }
}

/// Softmax across the channel dimension of `[n, c, h, w]`, independently per
/// pixel. Turns decoder logits into per-pixel class distributions.
pub struct SoftmaxChannels<E: Scalar> {
    out: Option<Tensor<E>>,
}

impl<E: Scalar> Default for SoftmaxChannels<E> {
    fn default() -> Self {
        SoftmaxChannels { out: None }
    }
}

impl<E: Scalar> SoftmaxChannels<E> {
    fn apply(input: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, c, h, w) = input.dims4()?;
        let hw = h * w;
        let mut out = input.clone();
        let data = out.data_mut();
        for i in 0..n {
            let base = i * c * hw;
            for p in 0..hw {
                let mut m = data[base + p];
                for ch in 1..c {
                    let v = data[base + ch * hw + p];
                    if v > m {
                        m = v;
                    }
                }
                let mut sum = E::ZERO;
                for ch in 0..c {
                    let idx = base + ch * hw + p;
                    let e = (data[idx] - m).exp();
                    data[idx] = e;
                    sum += e;
                }
                for ch in 0..c {
                    data[base + ch * hw + p] /= sum;
                }
            }
        }
        Ok(out)
    }
}

impl<E: Scalar> Layer<E> for SoftmaxChannels<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        let out = Self::apply(input)?;
        self.out = Some(out.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        Self::apply(input)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let out = self.out.take().ok_or_else(|| Error::Invalid("softmax backward before forward".into()))?;
        let (n, c, h, w) = out.dims4()?;
        let hw = h * w;
        let mut g = grad_out.clone();
        let y = out.data();
        let data = g.data_mut();
        for i in 0..n {
            let base = i * c * hw;
            for p in 0..hw {
                let mut dot = E::ZERO;
                for ch in 0..c {
                    let idx = base + ch * hw + p;
                    dot += data[idx] * y[idx];
                }
                for ch in 0..c {
                    let idx = base + ch * hw + p;
                    data[idx] = y[idx] * (data[idx] - dot);
                }
            }
        }
        Ok(g)
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::SoftmaxChannels
    }
}
