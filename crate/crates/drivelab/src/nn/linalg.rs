//! Matmul and im2col/col2im kernels shared by the convolution layers.
//!
//! All loops are single-threaded with a fixed iteration order so results are
//! bit-reproducible; callers parallelize over independent images instead.

use crate::tensor::Scalar;

/// C[m,n] = A[m,k] * B[k,n], row-major. Overwrites `c`.
pub fn matmul<E: Scalar>(c: &mut [E], a: &[E], b: &[E], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    c.fill(E::ZERO);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * *bv;
            }
        }
    }
}

/// C[m,r] += A[m,p] * B[r,p]^T (row dot products). Accumulates into `c`.
pub fn matmul_acc_abt<E: Scalar>(c: &mut [E], a: &[E], b: &[E], m: usize, p: usize, r: usize) {
    debug_assert_eq!(a.len(), m * p);
    debug_assert_eq!(b.len(), r * p);
    debug_assert_eq!(c.len(), m * r);
    for i in 0..m {
        let arow = &a[i * p..(i + 1) * p];
        let crow = &mut c[i * r..(i + 1) * r];
        for j in 0..r {
            let brow = &b[j * p..(j + 1) * p];
            let mut acc = E::ZERO;
            for (av, bv) in arow.iter().zip(brow) {
                acc += *av * *bv;
            }
            crow[j] += acc;
        }
    }
}

/// C[m,n] = A[o,m]^T * B[o,n]. Overwrites `c`.
pub fn matmul_atb<E: Scalar>(c: &mut [E], a: &[E], b: &[E], o: usize, m: usize, n: usize) {
    debug_assert_eq!(a.len(), o * m);
    debug_assert_eq!(b.len(), o * n);
    debug_assert_eq!(c.len(), m * n);
    c.fill(E::ZERO);
    for q in 0..o {
        let arow = &a[q * m..(q + 1) * m];
        let brow = &b[q * n..(q + 1) * n];
        for i in 0..m {
            let av = arow[i];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * *bv;
            }
        }
    }
}

/// Spatial geometry tying a `[c, big_h, big_w]` map to its strided
/// `[*, small_h, small_w]` counterpart: `small = (big + 2*pad - k)/stride + 1`.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub channels: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn from_big(channels: usize, big_h: usize, big_w: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        let eff_h = big_h + 2 * pad;
        let eff_w = big_w + 2 * pad;
        if eff_h < kernel || eff_w < kernel {
            return None;
        }
        let small_h = (eff_h - kernel) / stride + 1;
        let small_w = (eff_w - kernel) / stride + 1;
        Some(ConvGeom {
            channels,
            big_h,
            big_w,
            small_h,
            small_w,
            kernel,
            stride,
            pad,
        })
    }

    pub fn from_small(channels: usize, small_h: usize, small_w: usize, kernel: usize, stride: usize, pad: usize) -> Option<Self> {
        let big_h = (small_h - 1) * stride + kernel;
        let big_w = (small_w - 1) * stride + kernel;
        if big_h < 2 * pad || big_w < 2 * pad {
            return None;
        }
        Some(ConvGeom {
            channels,
            big_h: big_h - 2 * pad,
            big_w: big_w - 2 * pad,
            small_h,
            small_w,
            kernel,
            stride,
            pad,
        })
    }

    pub fn cols_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols_len(&self) -> usize {
        self.cols_rows() * self.small_h * self.small_w
    }
}

/// Gather `src [c, big_h, big_w]` into `cols [c*k*k, small_h*small_w]`,
/// zero-filling out-of-bounds taps.
pub fn im2col<E: Scalar>(cols: &mut [E], src: &[E], g: &ConvGeom) {
    debug_assert_eq!(src.len(), g.channels * g.big_h * g.big_w);
    debug_assert_eq!(cols.len(), g.cols_len());
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let positions = g.small_h * g.small_w;
    for c in 0..g.channels {
        let plane = &src[c * g.big_h * g.big_w..(c + 1) * g.big_h * g.big_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * positions;
                for oy in 0..g.small_h {
                    let y = (oy * s + ky) as isize - p as isize;
                    let out = &mut cols[row + oy * g.small_w..row + (oy + 1) * g.small_w];
                    if y < 0 || y >= g.big_h as isize {
                        out.fill(E::ZERO);
                        continue;
                    }
                    let src_row = &plane[y as usize * g.big_w..(y as usize + 1) * g.big_w];
                    for ox in 0..g.small_w {
                        let x = (ox * s + kx) as isize - p as isize;
                        out[ox] = if x < 0 || x >= g.big_w as isize {
                            E::ZERO
                        } else {
                            src_row[x as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add `cols [c*k*k, small_h*small_w]` back into `dst [c, big_h, big_w]`.
/// Adjoint of [`im2col`]. Overwrites `dst`.
pub fn col2im<E: Scalar>(dst: &mut [E], cols: &[E], g: &ConvGeom) {
    debug_assert_eq!(dst.len(), g.channels * g.big_h * g.big_w);
    debug_assert_eq!(cols.len(), g.cols_len());
    dst.fill(E::ZERO);
    let (k, s, p) = (g.kernel, g.stride, g.pad);
    let positions = g.small_h * g.small_w;
    for c in 0..g.channels {
        let plane = &mut dst[c * g.big_h * g.big_w..(c + 1) * g.big_h * g.big_w];
        for ky in 0..k {
            for kx in 0..k {
                let row = ((c * k + ky) * k + kx) * positions;
                for oy in 0..g.small_h {
                    let y = (oy * s + ky) as isize - p as isize;
                    if y < 0 || y >= g.big_h as isize {
                        continue;
                    }
                    let src_row = &cols[row + oy * g.small_w..row + (oy + 1) * g.small_w];
                    let dst_row = &mut plane[y as usize * g.big_w..(y as usize + 1) * g.big_w];
                    for ox in 0..g.small_w {
                        let x = (ox * s + kx) as isize - p as isize;
                        if x >= 0 && x < g.big_w as isize {
                            dst_row[x as usize] += src_row[ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [2,3] * [3,2]
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        matmul(&mut c, &a, &b, 2, 3, 2);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn atb_matches_explicit_transpose() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // [3,2]
        let b = [1.0, 0.0, 2.0, 1.0, 0.0, 3.0]; // [3,2]
        let mut c = [0.0; 4];
        matmul_atb(&mut c, &a, &b, 3, 2, 2);
        // A^T B: [[1*1+3*2+5*0, 1*0+3*1+5*3],[2*1+4*2+6*0, 0+4+18]]
        assert_eq!(c, [7.0, 18.0, 10.0, 22.0]);
    }

    #[test]
    fn abt_accumulates() {
        let a = [1.0f64, 2.0, 3.0, 4.0]; // [2,2]
        let b = [5.0, 6.0, 7.0, 8.0]; // [2,2]
        let mut c = [1.0, 1.0, 1.0, 1.0];
        matmul_acc_abt(&mut c, &a, &b, 2, 2, 2);
        // A B^T = [[17,23],[39,53]] plus ones
        assert_eq!(c, [18.0, 24.0, 40.0, 54.0]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), z> == <x, col2im(z)> for random-ish values.
        let g = ConvGeom::from_big(2, 5, 4, 3, 2, 1).unwrap();
        let src: Vec<f64> = (0..2 * 5 * 4).map(|i| (i as f64 * 0.37).sin()).collect();
        let z: Vec<f64> = (0..g.cols_len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut cols = vec![0.0; g.cols_len()];
        im2col(&mut cols, &src, &g);
        let mut back = vec![0.0; src.len()];
        col2im(&mut back, &z, &g);
        let lhs: f64 = cols.iter().zip(&z).map(|(a, b)| a * b).sum();
        let rhs: f64 = src.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn geom_round_trip() {
        let g = ConvGeom::from_big(1, 128, 128, 4, 2, 1).unwrap();
        assert_eq!((g.small_h, g.small_w), (64, 64));
        let h = ConvGeom::from_small(1, 64, 64, 4, 2, 1).unwrap();
        assert_eq!((h.big_h, h.big_w), (128, 128));
        let latent = ConvGeom::from_big(1, 4, 4, 4, 1, 0).unwrap();
        assert_eq!((latent.small_h, latent.small_w), (1, 1));
    }
}
