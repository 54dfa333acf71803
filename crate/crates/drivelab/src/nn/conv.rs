//! Strided convolution and its transpose, via im2col/col2im plus matmul.
//!
//! Weight layouts are chosen so a conv kernel buffer reinterpreted as a
//! transposed-conv kernel gives the exact adjoint operator:
//! `Conv2d` stores `[out_ch, in_ch, k, k]`, `ConvTranspose2d` stores
//! `[in_ch, out_ch, k, k]`.

use super::linalg::{col2im, im2col, matmul, matmul_acc_abt, matmul_atb, ConvGeom};
use super::{Layer, LayerSpec, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

pub struct Conv2d<E: Scalar> {
    weight: Tensor<E>,
    bias: Tensor<E>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<ConvCache<E>>,
}

struct ConvCache<E> {
    cols: Vec<E>, // per-image blocks, [n][in_ch*k*k][oh*ow]
    geom: ConvGeom,
    batch: usize,
}

impl<E: Scalar> Conv2d<E> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::randn(vec![out_ch, in_ch, kernel, kernel], super::INIT_STD, rng).param();
        let bias = Tensor::zeros(vec![out_ch]).param();
        Conv2d {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    fn geom_for(&self, input: &Tensor<E>) -> Result<(usize, ConvGeom)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_ch {
            return Err(Error::shape(
                format!("conv {}x{} k{} s{} p{}", self.in_ch, self.out_ch, self.kernel, self.stride, self.pad),
                format!("{} input channels", self.in_ch),
                format!("{} (input {}x{}x{})", c, c, h, w),
            ));
        }
        let geom = ConvGeom::from_big(self.in_ch, h, w, self.kernel, self.stride, self.pad).ok_or_else(|| {
            Error::shape(
                "conv spatial dims",
                format!("input at least {}x{} after padding {}", self.kernel, self.kernel, self.pad),
                format!("{}x{}", h, w),
            )
        })?;
        Ok((n, geom))
    }

    fn run_forward(&self, input: &Tensor<E>, mut keep_cols: Option<&mut Vec<E>>) -> Result<Tensor<E>> {
        let (n, geom) = self.geom_for(input)?;
        let positions = geom.small_h * geom.small_w;
        let rows = geom.cols_rows();
        let mut out = Tensor::zeros(vec![n, self.out_ch, geom.small_h, geom.small_w]);
        let mut cols = vec![E::ZERO; geom.cols_len()];
        if let Some(all) = keep_cols.as_deref_mut() {
            all.clear();
            all.reserve(n * geom.cols_len());
        }
        let in_plane = self.in_ch * geom.big_h * geom.big_w;
        let out_plane = self.out_ch * positions;
        for i in 0..n {
            let src = &input.data()[i * in_plane..(i + 1) * in_plane];
            im2col(&mut cols, src, &geom);
            let dst = &mut out.data_mut()[i * out_plane..(i + 1) * out_plane];
            matmul(dst, self.weight.data(), &cols, self.out_ch, rows, positions);
            for o in 0..self.out_ch {
                let b = self.bias.data()[o];
                for v in &mut dst[o * positions..(o + 1) * positions] {
                    *v += b;
                }
            }
            if let Some(all) = keep_cols.as_deref_mut() {
                all.extend_from_slice(&cols);
            }
        }
        Ok(out)
    }
}

impl<E: Scalar> Layer<E> for Conv2d<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        let (n, geom) = self.geom_for(input)?;
        let mut cols = Vec::new();
        let out = self.run_forward(input, Some(&mut cols))?;
        self.cache = Some(ConvCache {
            cols,
            geom,
            batch: n,
        });
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        self.run_forward(input, None)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let cache = self.cache.take().ok_or_else(|| Error::Invalid("conv backward before forward".into()))?;
        let geom = cache.geom;
        let n = cache.batch;
        let positions = geom.small_h * geom.small_w;
        let rows = geom.cols_rows();
        let (gn, gc, gh, gw) = grad_out.dims4()?;
        if (gn, gc, gh, gw) != (n, self.out_ch, geom.small_h, geom.small_w) {
            return Err(Error::shape(
                "conv backward",
                format!("[{}, {}, {}, {}]", n, self.out_ch, geom.small_h, geom.small_w),
                format!("[{}, {}, {}, {}]", gn, gc, gh, gw),
            ));
        }

        let mut grad_in = Tensor::zeros(vec![n, self.in_ch, geom.big_h, geom.big_w]);
        let mut dcols = vec![E::ZERO; geom.cols_len()];
        let in_plane = self.in_ch * geom.big_h * geom.big_w;
        let out_plane = self.out_ch * positions;

        // Parameter gradients accumulate over the batch in index order.
        {
            let dw = self.weight.grad_mut();
            for i in 0..n {
                let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
                let cols_i = &cache.cols[i * geom.cols_len()..(i + 1) * geom.cols_len()];
                matmul_acc_abt(dw, dy, cols_i, self.out_ch, positions, rows);
            }
        }
        for i in 0..n {
            let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
            matmul_atb(&mut dcols, self.weight.data(), dy, self.out_ch, rows, positions);
            let dst = &mut grad_in.data_mut()[i * in_plane..(i + 1) * in_plane];
            col2im(dst, &dcols, &geom);
        }
        {
            let db = self.bias.grad_mut();
            for i in 0..n {
                let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
                for o in 0..self.out_ch {
                    let mut acc = E::ZERO;
                    for v in &dy[o * positions..(o + 1) * positions] {
                        acc += *v;
                    }
                    db[o] += acc;
                }
            }
        }
        Ok(grad_in)
    }

    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params_ref(&self) -> Vec<&Tensor<E>> {
        vec![&self.weight, &self.bias]
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::Conv {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }
}

pub struct ConvTranspose2d<E: Scalar> {
    weight: Tensor<E>, // [in_ch, out_ch, k, k]
    bias: Tensor<E>,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    cache: Option<Tensor<E>>, // input
}

impl<E: Scalar> ConvTranspose2d<E> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = Tensor::randn(vec![in_ch, out_ch, kernel, kernel], super::INIT_STD, rng).param();
        let bias = Tensor::zeros(vec![out_ch]).param();
        ConvTranspose2d {
            weight,
            bias,
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    /// Use an existing kernel/bias (adjoint tests, weight sharing).
    pub fn with_weights(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, pad: usize, weight: Tensor<E>, bias: Tensor<E>) -> Self {
        ConvTranspose2d {
            weight: weight.param(),
            bias: bias.param(),
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            cache: None,
        }
    }

    fn geom_for(&self, input: &Tensor<E>) -> Result<(usize, ConvGeom)> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_ch {
            return Err(Error::shape(
                format!("conv-transpose {}x{} k{} s{} p{}", self.in_ch, self.out_ch, self.kernel, self.stride, self.pad),
                format!("{} input channels", self.in_ch),
                format!("{} (input {}x{}x{})", c, c, h, w),
            ));
        }
        let geom = ConvGeom::from_small(self.out_ch, h, w, self.kernel, self.stride, self.pad).ok_or_else(|| {
            Error::shape("conv-transpose spatial dims", "positive output size", format!("{}x{}", h, w))
        })?;
        Ok((n, geom))
    }

    fn run_forward(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        let (n, geom) = self.geom_for(input)?;
        let small = geom.small_h * geom.small_w;
        let rows = geom.cols_rows(); // out_ch * k * k
        let mut out = Tensor::zeros(vec![n, self.out_ch, geom.big_h, geom.big_w]);
        let mut cols = vec![E::ZERO; geom.cols_len()];
        let in_plane = self.in_ch * small;
        let out_plane = self.out_ch * geom.big_h * geom.big_w;
        for i in 0..n {
            let src = &input.data()[i * in_plane..(i + 1) * in_plane];
            matmul_atb(&mut cols, self.weight.data(), src, self.in_ch, rows, small);
            let dst = &mut out.data_mut()[i * out_plane..(i + 1) * out_plane];
            col2im(dst, &cols, &geom);
            let hw = geom.big_h * geom.big_w;
            for o in 0..self.out_ch {
                let b = self.bias.data()[o];
                for v in &mut dst[o * hw..(o + 1) * hw] {
                    *v += b;
                }
            }
        }
        Ok(out)
    }
}

impl<E: Scalar> Layer<E> for ConvTranspose2d<E> {
    fn forward(&mut self, input: &Tensor<E>, _mode: Mode) -> Result<Tensor<E>> {
        let out = self.run_forward(input)?;
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn infer(&self, input: &Tensor<E>) -> Result<Tensor<E>> {
        self.run_forward(input)
    }

    fn backward(&mut self, grad_out: &Tensor<E>) -> Result<Tensor<E>> {
        let input = self.cache.take().ok_or_else(|| Error::Invalid("conv-transpose backward before forward".into()))?;
        let (n, geom) = self.geom_for(&input)?;
        let small = geom.small_h * geom.small_w;
        let rows = geom.cols_rows();
        let (gn, gc, gh, gw) = grad_out.dims4()?;
        if (gn, gc, gh, gw) != (n, self.out_ch, geom.big_h, geom.big_w) {
            return Err(Error::shape(
                "conv-transpose backward",
                format!("[{}, {}, {}, {}]", n, self.out_ch, geom.big_h, geom.big_w),
                format!("[{}, {}, {}, {}]", gn, gc, gh, gw),
            ));
        }

        let mut grad_in = Tensor::zeros(vec![n, self.in_ch, geom.small_h, geom.small_w]);
        let mut dcols = vec![E::ZERO; geom.cols_len()];
        let in_plane = self.in_ch * small;
        let out_plane = self.out_ch * geom.big_h * geom.big_w;
        let hw = geom.big_h * geom.big_w;

        {
            let dw = self.weight.grad_mut();
            for i in 0..n {
                let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
                im2col(&mut dcols, dy, &geom);
                let x = &input.data()[i * in_plane..(i + 1) * in_plane];
                matmul_acc_abt(dw, x, &dcols, self.in_ch, small, rows);
            }
        }
        for i in 0..n {
            let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
            im2col(&mut dcols, dy, &geom);
            let dst = &mut grad_in.data_mut()[i * in_plane..(i + 1) * in_plane];
            matmul(dst, self.weight.data(), &dcols, self.in_ch, rows, small);
        }
        {
            let db = self.bias.grad_mut();
            for i in 0..n {
                let dy = &grad_out.data()[i * out_plane..(i + 1) * out_plane];
                for o in 0..self.out_ch {
                    let mut acc = E::ZERO;
                    for v in &dy[o * hw..(o + 1) * hw] {
                        acc += *v;
                    }
                    db[o] += acc;
                }
            }
        }
        Ok(grad_in)
    }

    fn params(&mut self) -> Vec<&mut Tensor<E>> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn params_ref(&self) -> Vec<&Tensor<E>> {
        vec![&self.weight, &self.bias]
    }

    fn spec(&self) -> LayerSpec {
        LayerSpec::ConvTranspose {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            kernel: self.kernel,
            stride: self.stride,
            pad: self.pad,
        }
    }
}
