//! Forward kernels for every tape operation.

use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;

/// Elementwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    /// The `order`-th derivative evaluated at `a`.
    ///
    /// ReLU uses the almost-everywhere convention: derivative 1 for `a > 0`,
    /// 0 otherwise, and all higher derivatives zero.
    pub fn derivative(self, order: u32, a: f64) -> f64 {
        match self {
            Activation::Identity => match order {
                0 => a,
                1 => 1.0,
                _ => 0.0,
            },
            Activation::Relu => match order {
                0 => a.max(0.0),
                1 if a > 0.0 => 1.0,
                _ => 0.0,
            },
            Activation::Sigmoid => horner(&derivative_poly(self, order), sigmoid(a)),
            Activation::Tanh => horner(&derivative_poly(self, order), a.tanh()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Coefficients (lowest power first) of the polynomial `P` with
/// `f^(order)(a) = P(f(a))` for sigmoid and tanh.
///
/// sigmoid: `s' = s - s^2`; tanh: `t' = 1 - t^2`.
pub(crate) fn derivative_poly(act: Activation, order: u32) -> Vec<f64> {
    let chain: [f64; 3] = match act {
        Activation::Sigmoid => [0.0, 1.0, -1.0],
        Activation::Tanh => [1.0, 0.0, -1.0],
        _ => unreachable!("only smooth squashing activations have polynomial derivatives"),
    };
    let mut poly = vec![0.0, 1.0];
    for _ in 0..order {
        let deriv: Vec<f64> = poly
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        let mut next = vec![0.0; deriv.len() + chain.len() - 1];
        for (i, d) in deriv.iter().enumerate() {
            for (j, c) in chain.iter().enumerate() {
                next[i + j] += d * c;
            }
        }
        poly = next;
    }
    poly
}

fn horner(poly: &[f64], x: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Geometry of a single-sample 2-D convolution over `[channels, height, width]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvGeom {
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Output spatial size, or `None` when the kernel does not fit.
    pub fn output_hw(&self) -> Option<(usize, usize)> {
        if self.stride == 0 || self.kernel == 0 {
            return None;
        }
        let h = self.in_h + 2 * self.padding;
        let w = self.in_w + 2 * self.padding;
        if h < self.kernel || w < self.kernel {
            return None;
        }
        Some((
            (h - self.kernel) / self.stride + 1,
            (w - self.kernel) / self.stride + 1,
        ))
    }

    pub fn input_shape(&self) -> [usize; 3] {
        [self.in_ch, self.in_h, self.in_w]
    }

    pub fn output_shape(&self) -> [usize; 3] {
        let (h, w) = self.output_hw().expect("validated geometry");
        [self.out_ch, h, w]
    }

    pub fn kernel_shape(&self) -> [usize; 4] {
        [self.out_ch, self.in_ch, self.kernel, self.kernel]
    }
}

/// Range of output positions `o` for which `o * stride + offset - pad` lands in `[0, in_len)`.
fn valid_range(
    offset: usize,
    pad: usize,
    stride: usize,
    in_len: usize,
    out_len: usize,
) -> (usize, usize) {
    // o * stride + offset >= pad
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    // o * stride + offset - pad <= in_len - 1
    let hi = if offset > pad + in_len - 1 {
        0
    } else {
        ((pad + in_len - 1 - offset) / stride + 1).min(out_len)
    };
    (lo, hi.max(lo))
}

struct ConvIndex {
    g: ConvGeom,
    oh: usize,
    ow: usize,
}

impl ConvIndex {
    fn new(g: ConvGeom) -> Self {
        let (oh, ow) = g.output_hw().expect("validated geometry");
        Self { g, oh, ow }
    }

    /// Visits every (output row, input row, j-range, input column start) block for one
    /// kernel offset, calling `f(out_row_base, in_row_base, j_lo, j_hi, col0)` where the
    /// input column for output column `j` is `j * stride + col0 - padding`.
    #[inline]
    fn for_rows(&self, ki: usize, kj: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let g = &self.g;
        let (i_lo, i_hi) = valid_range(ki, g.padding, g.stride, g.in_h, self.oh);
        let (j_lo, j_hi) = valid_range(kj, g.padding, g.stride, g.in_w, self.ow);
        if j_lo >= j_hi {
            return;
        }
        for i in i_lo..i_hi {
            let r = i * g.stride + ki - g.padding;
            f(i * self.ow, r * g.in_w, j_lo, j_hi, kj);
        }
    }
}

/// Patch matrix of `x`: row `(c, ki, kj)`, column `(i, j)` holds
/// `x[c, i*s+ki-p, j*s+kj-p]`, or zero in the padding.
fn im2col(idx: &ConvIndex, x: &[f64]) -> Vec<f64> {
    let g = &idx.g;
    let ohw = idx.oh * idx.ow;
    let mut cols = vec![0.0; g.in_ch * g.kernel * g.kernel * ohw];
    for c in 0..g.in_ch {
        let xc = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = &mut cols[((c * g.kernel + ki) * g.kernel + kj) * ohw..][..ohw];
                idx.for_rows(ki, kj, |ybase, xbase, j_lo, j_hi, col0| {
                    for j in j_lo..j_hi {
                        row[ybase + j] = xc[xbase + j * g.stride + col0 - g.padding];
                    }
                });
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch entries back into input space.
fn col2im(idx: &ConvIndex, cols: &[f64]) -> Vec<f64> {
    let g = &idx.g;
    let ohw = idx.oh * idx.ow;
    let mut dx = vec![0.0; g.in_ch * g.in_h * g.in_w];
    for c in 0..g.in_ch {
        let dxc = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kernel {
            for kj in 0..g.kernel {
                let row = &cols[((c * g.kernel + ki) * g.kernel + kj) * ohw..][..ohw];
                idx.for_rows(ki, kj, |ybase, xbase, j_lo, j_hi, col0| {
                    for j in j_lo..j_hi {
                        dxc[xbase + j * g.stride + col0 - g.padding] += row[ybase + j];
                    }
                });
            }
        }
    }
    dx
}

/// Row-major `c = op(a) * op(b)` with `op(a)` of shape `m x k` and `op(b)` of shape `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    assert!(a.len() >= m * k && b.len() >= k * n);
    // SAFETY: the strides address exactly the m*k, k*n and m*n elements checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    c
}

/// `y[o,i,j] = sum_{c,ki,kj} k[o,c,ki,kj] * x[c, i*s+ki-p, j*s+kj-p]`.
pub(crate) fn conv2d(g: ConvGeom, x: &[f64], k: &[f64]) -> Vec<f64> {
    let idx = ConvIndex::new(g);
    let ckk = g.in_ch * g.kernel * g.kernel;
    gemm(
        g.out_ch,
        ckk,
        idx.oh * idx.ow,
        k,
        false,
        &im2col(&idx, x),
        false,
    )
}

/// Adjoint of [`conv2d`] with respect to its input: maps `u` (output-shaped) to input space.
pub(crate) fn conv2d_input_grad(g: ConvGeom, u: &[f64], k: &[f64]) -> Vec<f64> {
    let idx = ConvIndex::new(g);
    let ckk = g.in_ch * g.kernel * g.kernel;
    let cols = gemm(ckk, g.out_ch, idx.oh * idx.ow, k, true, u, false);
    col2im(&idx, &cols)
}

/// Adjoint of [`conv2d`] with respect to its kernel.
pub(crate) fn conv2d_weight_grad(g: ConvGeom, x: &[f64], u: &[f64]) -> Vec<f64> {
    let idx = ConvIndex::new(g);
    let ckk = g.in_ch * g.kernel * g.kernel;
    gemm(
        g.out_ch,
        idx.oh * idx.ow,
        ckk,
        u,
        false,
        &im2col(&idx, x),
        true,
    )
}

pub(crate) fn mat_vec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    (0..m)
        .map(|i| crate::tensor::dot(&wd[i * n..(i + 1) * n], x))
        .collect()
}

pub(crate) fn mat_t_vec(w: &Tensor, v: &[f64]) -> Vec<f64> {
    let (m, n) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    let mut out = vec![0.0; n];
    for i in 0..m {
        if v[i] != 0.0 {
            crate::tensor::axpy(v[i], &wd[i * n..(i + 1) * n], &mut out);
        }
    }
    out
}

pub(crate) fn outer(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &ai in a {
        out.extend(b.iter().map(|bj| ai * bj));
    }
    out
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: ConvGeom, x: &[f64], k: &[f64]) -> Vec<f64> {
        let (oh, ow) = g.output_hw().unwrap();
        let mut y = vec![0.0; g.out_ch * oh * ow];
        for o in 0..g.out_ch {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..g.in_ch {
                        for ki in 0..g.kernel {
                            for kj in 0..g.kernel {
                                let r = (i * g.stride + ki) as isize - g.padding as isize;
                                let q = (j * g.stride + kj) as isize - g.padding as isize;
                                if r < 0 || q < 0 || r >= g.in_h as isize || q >= g.in_w as isize {
                                    continue;
                                }
                                acc += k[((o * g.in_ch + c) * g.kernel + ki) * g.kernel + kj]
                                    * x[(c * g.in_h + r as usize) * g.in_w + q as usize];
                            }
                        }
                    }
                    y[(o * oh + i) * ow + j] = acc;
                }
            }
        }
        y
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn conv_matches_naive_loops() {
        for (stride, padding, h) in [(1, 0, 6), (2, 2, 7), (2, 2, 4), (3, 1, 9), (1, 2, 5)] {
            let g = ConvGeom {
                in_ch: 2,
                in_h: h,
                in_w: h + 1,
                out_ch: 3,
                kernel: 3,
                stride,
                padding,
            };
            if g.output_hw().is_none() {
                continue;
            }
            let x = pseudo(2 * h * (h + 1), 1);
            let k = pseudo(3 * 2 * 9, 2);
            let fast = conv2d(g, &x, &k);
            let slow = naive_conv(g, &x, &k);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12, "stride {stride} pad {padding}");
            }
        }
    }

    #[test]
    fn conv_adjoints_satisfy_inner_product_identity() {
        let g = ConvGeom {
            in_ch: 2,
            in_h: 7,
            in_w: 6,
            out_ch: 3,
            kernel: 5,
            stride: 2,
            padding: 2,
        };
        let [oc, oh, ow] = g.output_shape();
        let x = pseudo(2 * 7 * 6, 3);
        let k = pseudo(3 * 2 * 25, 4);
        let u = pseudo(oc * oh * ow, 5);
        let y = conv2d(g, &x, &k);
        let lhs = crate::tensor::dot(&y, &u);
        let via_x = crate::tensor::dot(&x, &conv2d_input_grad(g, &u, &k));
        let via_k = crate::tensor::dot(&k, &conv2d_weight_grad(g, &x, &u));
        assert!((lhs - via_x).abs() < 1e-12);
        assert!((lhs - via_k).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_derivatives_match_closed_forms() {
        for a in [-3.0, -0.2, 0.0, 0.7, 4.0] {
            let s = sigmoid(a);
            let d1 = s * (1.0 - s);
            let d2 = d1 * (1.0 - 2.0 * s);
            let d3 = d1 * (1.0 - 6.0 * s + 6.0 * s * s);
            assert!((Activation::Sigmoid.derivative(1, a) - d1).abs() < 1e-15);
            assert!((Activation::Sigmoid.derivative(2, a) - d2).abs() < 1e-15);
            assert!((Activation::Sigmoid.derivative(3, a) - d3).abs() < 1e-14);
        }
    }

    #[test]
    fn tanh_derivatives_match_closed_forms() {
        for a in [-2.0, -0.5, 0.0, 0.3, 1.5] {
            let t: f64 = f64::tanh(a);
            assert!((Activation::Tanh.derivative(1, a) - (1.0 - t * t)).abs() < 1e-15);
            assert!((Activation::Tanh.derivative(2, a) + 2.0 * t * (1.0 - t * t)).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_uses_almost_everywhere_convention() {
        assert_eq!(Activation::Relu.derivative(0, -1.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1, 2.0), 1.0);
        assert_eq!(Activation::Relu.derivative(1, 0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(2, 2.0), 0.0);
    }

    #[test]
    fn valid_range_edges() {
        // in_len 4, pad 2, stride 2, kernel offset 0: positions o*2-2 in [0,4) -> o in {1,2}
        assert_eq!(valid_range(0, 2, 2, 4, 3), (1, 3));
        assert_eq!(valid_range(4, 2, 2, 4, 3), (0, 1));
    }
}
