//! Dense kernels for the fixed energy architecture. Feature maps are
//! `[channels][height][width]` row-major slices.

/// `c = a·b + beta·c` with `a: m×k`, `b: k×n` given by strides and `c`
/// contiguous row-major `m×n`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (usize, usize),
    b: &[f64],
    b_strides: (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    let last = |rows: usize, cols: usize, (rs, cs): (usize, usize)| {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * rs + (cols - 1) * cs + 1
        }
    };
    assert!(a.len() >= last(m, k, a_strides));
    assert!(b.len() >= last(k, n, b_strides));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unrolls 3×3 zero-padded neighbourhoods into a `(c·9) × (h·w)` matrix.
fn im2col3(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut cols = vec![0.0; c * 9 * hw];
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let (x0, x1) = (dx.max(0) as usize, (w as isize + dx.min(0)) as usize);
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    // dst[x] = src[x + dx] for x with 0 <= x + dx < w
                    let dst_lo = (-dx).max(0) as usize;
                    let len = x1 - x0;
                    dst[dst_lo..dst_lo + len].copy_from_slice(&src[x0..x1]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col3`].
fn col2im3(cols: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                let dy = ky as isize - 1;
                let dx = kx as isize - 1;
                let (x0, x1) = (dx.max(0) as usize, (w as isize + dx.min(0)) as usize);
                let dst_lo = (-dx).max(0) as usize;
                let len = x1 - x0;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let acc = &mut plane[sy as usize * w + x0..][..len];
                    let src = &row[y * w + dst_lo..][..len];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += s;
                    }
                }
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvShape {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub h: usize,
    pub w: usize,
}

/// Stride-1 "same" convolution (kernel 1 or 3) with bias.
pub(crate) fn conv_forward(input: &[f64], weight: &[f64], bias: &[f64], s: ConvShape) -> Vec<f64> {
    let hw = s.h * s.w;
    let kk = s.c_in * s.k * s.k;
    let mut out = vec![0.0; s.c_out * hw];
    for (o, b) in bias.iter().enumerate() {
        out[o * hw..(o + 1) * hw].fill(*b);
    }
    match s.k {
        1 => gemm(s.c_out, kk, hw, weight, (kk, 1), input, (hw, 1), 1.0, &mut out),
        3 => {
            let cols = im2col3(input, s.c_in, s.h, s.w);
            gemm(s.c_out, kk, hw, weight, (kk, 1), &cols, (hw, 1), 1.0, &mut out);
        }
        k => unreachable!("unsupported kernel size {k}"),
    }
    out
}

/// Backward pass of [`conv_forward`]. Accumulates into `grad_wb` when given
/// and returns the input gradient when `want_input` is set.
pub(crate) fn conv_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    s: ConvShape,
    grad_wb: Option<(&mut [f64], &mut [f64])>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let hw = s.h * s.w;
    let kk = s.c_in * s.k * s.k;
    let cols;
    let unrolled: &[f64] = if s.k == 1 {
        input
    } else {
        cols = im2col3(input, s.c_in, s.h, s.w);
        &cols
    };
    if let Some((gw, gb)) = grad_wb {
        // gw += grad_out · unrolledᵀ
        gemm(s.c_out, hw, kk, grad_out, (hw, 1), unrolled, (1, hw), 1.0, gw);
        for (o, g) in gb.iter_mut().enumerate() {
            *g += grad_out[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }
    }
    if !want_input {
        return None;
    }
    let mut gcols = vec![0.0; kk * hw];
    // gcols = weightᵀ · grad_out
    gemm(kk, s.c_out, hw, weight, (1, kk), grad_out, (hw, 1), 0.0, &mut gcols);
    Some(if s.k == 1 {
        gcols
    } else {
        col2im3(&gcols, s.c_in, s.h, s.w)
    })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `x·sigmoid(x)`.
#[inline]
pub(crate) fn swish(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub(crate) fn swish_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s + x * s * (1.0 - s)
}

pub(crate) fn swish_all(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| swish(v)).collect()
}

/// `grad · swish'(pre)` elementwise.
pub(crate) fn swish_backward(pre: &[f64], grad: &[f64]) -> Vec<f64> {
    pre.iter().zip(grad).map(|(&p, &g)| g * swish_grad(p)).collect()
}

pub(crate) fn mean_pool2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; c * ho * wo];
    for ci in 0..c {
        let src = &x[ci * h * w..];
        let dst = &mut out[ci * ho * wo..];
        for y in 0..ho {
            for xo in 0..wo {
                let a = src[2 * y * w + 2 * xo];
                let b = src[2 * y * w + 2 * xo + 1];
                let cc = src[(2 * y + 1) * w + 2 * xo];
                let d = src[(2 * y + 1) * w + 2 * xo + 1];
                dst[y * wo + xo] = 0.25 * (a + b + cc + d);
            }
        }
    }
    out
}

pub(crate) fn mean_pool2_backward(grad: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        let g = &grad[ci * ho * wo..];
        let dst = &mut out[ci * h * w..];
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = 0.25 * g[(y / 2) * wo + x / 2];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv3(input: &[f64], weight: &[f64], bias: &[f64], s: ConvShape) -> Vec<f64> {
        let mut out = vec![0.0; s.c_out * s.h * s.w];
        for o in 0..s.c_out {
            for y in 0..s.h as isize {
                for x in 0..s.w as isize {
                    let mut acc = bias[o];
                    for c in 0..s.c_in {
                        for ky in 0..3isize {
                            for kx in 0..3isize {
                                let (sy, sx) = (y + ky - 1, x + kx - 1);
                                if sy < 0 || sx < 0 || sy >= s.h as isize || sx >= s.w as isize {
                                    continue;
                                }
                                acc += weight[((o * s.c_in + c) * 3 + ky as usize) * 3 + kx as usize]
                                    * input[(c * s.h + sy as usize) * s.w + sx as usize];
                            }
                        }
                    }
                    out[(o * s.h + y as usize) * s.w + x as usize] = acc;
                }
            }
        }
        out
    }

    fn seq(n: usize, a: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * a).sin()).collect()
    }

    #[test]
    fn conv3_matches_naive() {
        let s = ConvShape { c_in: 3, c_out: 4, k: 3, h: 5, w: 7 };
        let input = seq(3 * 35, 0.7);
        let weight = seq(4 * 27, 1.3);
        let bias = seq(4, 2.1);
        let fast = conv_forward(&input, &weight, &bias, s);
        let slow = naive_conv3(&input, &weight, &bias, s);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let (c, h, w) = (2, 4, 6);
        let x = seq(c * h * w, 0.9);
        let y = seq(c * 9 * h * w, 0.31);
        let lhs: f64 = im2col3(&x, c, h, w).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = col2im3(&y, c, h, w).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn pool_backward_is_adjoint() {
        let (c, h, w) = (2, 4, 4);
        let x = seq(c * h * w, 0.4);
        let g = seq(c * 4, 1.7);
        let lhs: f64 = mean_pool2(&x, c, h, w).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = mean_pool2_backward(&g, c, h, w).iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn swish_derivative() {
        for &x in &[-3.0, -0.5, 0.0, 0.2, 4.0] {
            let fd = (swish(x + 1e-6) - swish(x - 1e-6)) / 2e-6;
            assert!((fd - swish_grad(x)).abs() < 1e-8);
        }
    }
}
