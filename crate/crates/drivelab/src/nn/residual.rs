//! Residual block used by the translator generators:
//! `y = x + bn2(conv2(relu(bn1(conv1(x)))))` with 3x3 stride-1 convolutions.

use super::conv::Conv2d;
use super::norm::BatchNorm2d;
use super::{Layer, LayerSpec, Mode, Relu};
use crate::error::Result;
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

pub struct Residual<E: Scalar> {
    conv1: Conv2d<E>,
    bn1: BatchNorm2d<E>,
    relu: Relu<E>,
    conv2: Conv2d<E>,
    bn2: BatchNorm2d<E>,
    channels: usize,
}

impl<E: Scalar> Residual<E> {
    pub fn new(channels: usize, rng: &mut ChaCha8Rng) -> Self {
        Residual {
            conv1: Conv2d::new(channels, channels, 3, 1, 1, rng),
            bn1: BatchNorm2d::new(channels),
            relu: Relu::default(),
            conv2: Conv2d::new(channels, channels, 3, 1, 1, rng),
            bn2: BatchNorm2d::new(channels),
            channels,
        }
    }

    fn branch_forward(&mut self, x: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let mut t = self.conv1.forward(x, mode)?;
        t = self.bn1.forward(&t, mode)?;
        t = self.relu.forward(&t, mode)?;
        t = self.conv2.forward(&t, mode)?;
        self.bn2.forward(&t, mode)
    }
}

impl<E: Scalar> Layer<E> for Residual<E> {
    fn forward(&mut self, input: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let branch = self.branch_forward(input, mode)?;
        let mut out = input.clone();
        for (o, b) in out.data_mut().iter_mut().zip(branch.data()) {
            *o += *b;
        }
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let mut t = self.conv1.infer(input)?;
        t = self.bn1.infer(&t)?;
        t = self.relu.infer(&t)?;
        t = self.conv2.infer(&t)?;
        t = self.bn2.infer(&t)?;
        let mut out = input.clone();
        for (o, b) in out.data_mut().iter_mut().zip(t.data()) {
            *o += *b;
        }
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let mut g = self.bn2.backward(grad_out)?;
        g = self.conv2.backward(&g)?;
        g = self.relu.backward(&g)?;
        g = self.bn1.backward(&g)?;
        g = self.conv1.backward(&g)?;
        // Skip path adds the upstream gradient through unchanged.
        for (gi, go) in g.data_mut().iter_mut().zip(grad_out.data()) {
            *gi += *go;
        }
        Ok(g)
    }

    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        let mut out = self.conv1.params();
        out.extend(self.bn1.params());
        out.extend(self.conv2.params());
        out.extend(self.bn2.params());
        out
    }

    fn params_ref(&self) -> Vec<&Tensor<E>> {
        let mut out = self.conv1.params_ref();
        out.extend(self.bn1.params_ref());
        out.extend(self.conv2.params_ref());
        out.extend(self.bn2.params_ref());
        out
    }

    fn state_mut(&mut self) -> Vec<&mut Vec<E>> {
        let mut out = self.bn1.state_mut();
        out.extend(self.bn2.state_mut());
        out
    }

    fn state_ref(&self) -> Vec<&Vec<E>> {
        let mut out = self.bn1.state_ref();
        out.extend(self.bn2.state_ref());
        out
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Residual { ch: self.channels }
    }
}
