//! Deterministic reverse-mode network stack: exactly the layer kinds the
//! encoder-decoder, control MLP, and translator networks need, with explicit
//! forward caches and hand-written backward passes.

pub mod activation;
pub mod conv;
pub mod gradcheck;
pub mod linalg;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod optim;
pub mod residual;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use activation::{LeakyRelu, Relu, Sigmoid, SoftmaxChannels};
pub use conv::{Conv2d, ConvTranspose2d};
pub use gradcheck::{finite_diff_check, GradCheckOptions, GradCheckReport};
pub use linear::Linear;
pub use loss::{l1_loss, mse_loss, weighted_cross_entropy, weighted_cross_entropy_labels};
pub use norm::BatchNorm2d;
pub use optim::{Optimizer, OptimizerKind};
pub use residual::Residual;

/// Batch-statistics switch for normalization layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Default negative slope for leaky ReLU activations.
pub const LEAKY_SLOPE: f64 = 0.2;
/// Default weight initialization scale.
pub const INIT_STD: f64 = 0.02;

/// Serializable description of one layer. A network is rebuilt from its spec
/// list plus a flat parameter blob, and the spec list is hashed into
/// checkpoint headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    Conv {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    ConvTranspose {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        ch: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Relu,
    Sigmoid,
    SoftmaxChannels,
    Linear {
        in_dim: usize,
        out_dim: usize,
    },
    /// Two 3x3 conv+norm stages with an additive skip connection.
    Residual {
        ch: usize,
    },
}

impl LayerSpec {
    /// Strided convolution with the default kernel geometry (4/2/1).
    pub fn conv_default(in_ch: usize, out_ch: usize) -> Self {
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }

    /// Transposed convolution with the default kernel geometry (4/2/1).
    pub fn conv_transpose_default(in_ch: usize, out_ch: usize) -> Self {
        LayerSpec::ConvTranspose {
            in_ch,
            out_ch,
            kernel: 4,
            stride: 2,
            pad: 1,
        }
    }

    pub fn leaky_relu_default() -> Self {
        LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }
    }
}

/// One differentiable stage. `forward` caches whatever `backward` needs;
/// `infer` is the cache-free frozen path (running statistics, shared refs).
pub trait Layer<E: Scalar>: Send {
    fn forward(&mut self, input: &Tensor<E>, mode: Mode) -> Result<Tensor<E>>;
    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>>;
    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>>;
    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        Vec::new()
    }
    fn params_ref(&self) -> Vec<&Tensor<E>> {
        Vec::new()
    }
    /// Non-parameter state carried between steps (batch-norm running stats),
    /// in a fixed declaration order.
    fn state_mut(&mut self) -> Vec<&mut Vec<E>> {
        Vec::new()
    }
    fn state_ref(&self) -> Vec<&Vec<E>> {
        Vec::new()
    }
    fn spec(&self) -> LayerSpec;
}

/// Layer pipeline executed front to back.
pub struct Sequential<E: Scalar> {
    layers: Vec<Box<dyn Layer<E>>>,
}

impl<E: Scalar> Sequential<E> {
    pub fn new(layers: Vec<Box<dyn Layer<E>>>) -> Self {
        Sequential { layers }
    }

    /// Build a fresh network from specs with seeded initialization.
    pub fn from_specs(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Self {
        let layers = specs.iter().map(|s| build_layer::<E>(s, rng)).collect();
        Sequential { layers }
    }

    pub fn forward(&mut self, input: &Tensor<E>, mode: Mode) -> Result<Tensor<E>> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x, mode)?;
        }
        Ok(x)
    }

    pub fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.infer(&x)?;
        }
        Ok(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let mut g = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn params(&mut self) -> Vec<&mut Tensor<E>> {
        self.layers.iter_mut().flat_map(|l| l.params()).collect()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params() {
            p.zero_grad();
        }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec()).collect()
    }

    pub fn num_params(&mut self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    pub fn params_ref(&self) -> Vec<&Tensor<E>> {
        self.layers.iter().flat_map(|l| l.params_ref()).collect()
    }

    /// Flat snapshot of all parameter values in declaration order.
    pub fn export_params(&self) -> Vec<Vec<E>> {
        self.params_ref().iter().map(|p| p.data().to_vec()).collect()
    }

    /// Load parameter values in declaration order, checking element counts.
    pub fn import_params(&mut self, values: &[Vec<E>]) -> Result<()> {
        let mut params = self.params();
        if params.len() != values.len() {
            return Err(Error::shape("import_params", params.len(), values.len()));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.numel() != v.len() {
                return Err(Error::shape("import_params tensor", p.numel(), v.len()));
            }
            p.data_mut().copy_from_slice(v);
        }
        Ok(())
    }

    /// Running statistics (batch-norm) in declaration order.
    pub fn export_state(&self) -> Vec<Vec<E>> {
        self.layers
            .iter()
            .flat_map(|l| l.state_ref())
            .map(|v| v.clone())
            .collect()
    }

    pub fn import_state(&mut self, values: &[Vec<E>]) -> Result<()> {
        let refs: Vec<&mut Vec<E>> = self.layers.iter_mut().flat_map(|l| l.state_mut()).collect();
        if refs.len() != values.len() {
            return Err(Error::shape("import_state", refs.len(), values.len()));
        }
        for (dst, src) in refs.into_iter().zip(values) {
            if dst.len() != src.len() {
                return Err(Error::shape("import_state tensor", dst.len(), src.len()));
            }
            dst.copy_from_slice(src);
        }
        Ok(())
    }
}

impl<E: Scalar> Clone for Sequential<E> {
    fn clone(&self) -> Self {
        use rand::SeedableRng;
        let specs = self.specs();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut fresh = Sequential::from_specs(&specs, &mut rng);
        fresh
            .import_params(&self.export_params())
            .expect("clone: same specs");
        fresh
            .import_state(&self.export_state())
            .expect("clone: same specs");
        fresh
    }
}

/// Instantiate one layer from its spec.
pub fn build_layer<E: Scalar>(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Box<dyn Layer<E>> {
    match *spec {
        LayerSpec::Conv {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => Box::new(Conv2d::new(in_ch, out_ch, kernel, stride, pad, rng)),
        LayerSpec::ConvTranspose {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
        } => Box::new(ConvTranspose2d::new(in_ch, out_ch, kernel, stride, pad, rng)),
        LayerSpec::BatchNorm { ch } => Box::new(BatchNorm2d::new(ch)),
        LayerSpec::LeakyRelu { slope } => Box::new(LeakyRelu::new(slope)),
        LayerSpec::Relu => Box::new(Relu::default()),
        LayerSpec::Sigmoid => Box::new(Sigmoid::default()),
        LayerSpec::SoftmaxChannels => Box::new(SoftmaxChannels::default()),
        LayerSpec::Linear { in_dim, out_dim } => Box::new(Linear::new(in_dim, out_dim, rng)),
        LayerSpec::Residual { ch } => Box::new(Residual::new(ch, rng)),
    }
}
