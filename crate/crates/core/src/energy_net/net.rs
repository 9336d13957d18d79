//! Taped forward pass and hand-written reverse pass of the energy network.

use super::arch::{ConvPlan, Conditioning};
use super::layers::{
    conv_backward, conv_forward, mean_pool2, mean_pool2_backward, swish_all, swish_backward, ConvShape,
};
use super::{EnergyParams, ParamGrads};
use crate::error::{dim_err, Error, Result};
use crate::numerics::RealTensor;

struct BlockTape {
    h: usize,
    w: usize,
    x_in: Vec<f64>,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
}

/// Intermediate activations of one forward pass.
pub(crate) struct Tape {
    h: usize,
    w: usize,
    input: Vec<f64>,
    blocks: Vec<BlockTape>,
    final_h: usize,
    final_w: usize,
    z: Vec<f64>,
    pooled: Vec<f64>,
    /// Multiplier applied to the raw network output.
    scale: f64,
    pub energy: f64,
}

fn shape(c: &ConvPlan, h: usize, w: usize) -> ConvShape {
    ConvShape {
        c_in: c.c_in,
        c_out: c.c_out,
        k: c.k,
        h,
        w,
    }
}

fn conv(params: &EnergyParams, c: &ConvPlan, x: &[f64], h: usize, w: usize) -> Vec<f64> {
    conv_forward(x, &params.tensors[c.weight], &params.tensors[c.bias], shape(c, h, w))
}

/// Checks the input against the architecture and assembles the stacked
/// input channels.
fn assemble(params: &EnergyParams, image: &RealTensor, sigma: Option<f64>) -> Result<(Vec<f64>, usize, usize, f64)> {
    let arch = params.arch();
    let s = image.shape();
    if s.len() != 3 || s[0] != 2 {
        return dim_err(format!("network input must be (2, H, W), got {s:?}"));
    }
    let (h, w) = (s[1], s[2]);
    let f = arch.downsample_factor();
    if h % f != 0 || w % f != 0 || h < f || w < f {
        return dim_err(format!(
            "input {h}x{w} not divisible by the network's downsampling factor {f}"
        ));
    }
    let mut data = image.data().to_vec();
    let mut scale = 1.0;
    if arch.conditioning == Conditioning::NoiseChannel {
        let sigma = sigma.ok_or_else(|| Error::InvalidArgument("noise-conditioned network needs σ".into()))?;
        if !sigma.is_finite() {
            return Err(Error::NonFinite("σ".into()));
        }
        data.extend(std::iter::repeat_n(sigma, h * w));
        if arch.noise_scaled {
            if sigma <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "noise-scaled network needs σ > 0, got {sigma}"
                )));
            }
            scale = 1.0 / (sigma * sigma);
        }
    }
    Ok((data, h, w, scale))
}

pub(crate) fn forward(params: &EnergyParams, image: &RealTensor, sigma: Option<f64>) -> Result<Tape> {
    let (input_data, h, w, scale) = assemble(params, image, sigma)?;
    let plan = &params.plan;
    let mut x = conv(params, &plan.stem, &input_data, h, w);
    let (mut ch, mut cw) = (h, w);
    let mut blocks = Vec::with_capacity(plan.blocks.len());
    for b in &plan.blocks {
        let a1 = swish_all(&x);
        let h1 = conv(params, &b.conv1, &a1, ch, cw);
        let a2 = swish_all(&h1);
        let mut out = conv(params, &b.conv2, &a2, ch, cw);
        match &b.skip {
            Some(s) => {
                let sk = conv(params, s, &x, ch, cw);
                out.iter_mut().zip(&sk).for_each(|(o, v)| *o += v);
            }
            None => out.iter_mut().zip(&x).for_each(|(o, v)| *o += v),
        }
        let (bh, bw) = (ch, cw);
        if b.downsample {
            out = mean_pool2(&out, b.conv2.c_out, ch, cw);
            ch /= 2;
            cw /= 2;
        }
        blocks.push(BlockTape {
            h: bh,
            w: bw,
            x_in: std::mem::replace(&mut x, out),
            a1,
            h1,
            a2,
        });
    }
    let c = plan.final_width;
    let a = swish_all(&x);
    let plane = ch * cw;
    let pooled: Vec<f64> = (0..c).map(|i| a[i * plane..(i + 1) * plane].iter().sum()).collect();
    let dense_w = &params.tensors[plan.dense_weight];
    let raw: f64 = dense_w.iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>()
        + params.tensors[plan.dense_bias][0];
    let energy = raw * scale;
    if !energy.is_finite() {
        return Err(Error::NonFinite("energy".into()));
    }
    Ok(Tape {
        h,
        w,
        input: input_data,
        blocks,
        final_h: ch,
        final_w: cw,
        z: x,
        pooled,
        scale,
        energy,
    })
}

/// Back-propagates `seed · ∂E` through the tape. Parameter gradients are
/// accumulated into `grads`; the image-channel gradient is returned when
/// `want_input` is set.
pub(crate) fn backward(
    params: &EnergyParams,
    tape: &Tape,
    seed: f64,
    mut grads: Option<&mut ParamGrads>,
    want_input: bool,
) -> Result<Option<RealTensor>> {
    let plan = &params.plan;
    let g_raw = seed * tape.scale;
    let c = plan.final_width;
    let plane = tape.final_h * tape.final_w;

    if let Some(g) = grads.as_deref_mut() {
        for (gw, p) in g.tensors[plan.dense_weight].iter_mut().zip(&tape.pooled) {
            *gw += g_raw * p;
        }
        g.tensors[plan.dense_bias][0] += g_raw;
    }
    let dense_w = &params.tensors[plan.dense_weight];
    let mut g_a = vec![0.0; c * plane];
    for (i, chunk) in g_a.chunks_exact_mut(plane).enumerate() {
        chunk.fill(g_raw * dense_w[i]);
    }
    let mut g = swish_backward(&tape.z, &g_a);

    for (b, t) in plan.blocks.iter().zip(&tape.blocks).rev() {
        let g_sum = if b.downsample {
            mean_pool2_backward(&g, b.conv2.c_out, t.h, t.w)
        } else {
            g
        };
        let g_a2 = conv_backward(
            &t.a2,
            &params.tensors[b.conv2.weight],
            &g_sum,
            shape(&b.conv2, t.h, t.w),
            grads.as_deref_mut().map(|gr| weight_bias(gr, &b.conv2)),
            true,
        )
        .expect("input gradient requested");
        let g_h1 = swish_backward(&t.h1, &g_a2);
        let g_a1 = conv_backward(
            &t.a1,
            &params.tensors[b.conv1.weight],
            &g_h1,
            shape(&b.conv1, t.h, t.w),
            grads.as_deref_mut().map(|gr| weight_bias(gr, &b.conv1)),
            true,
        )
        .expect("input gradient requested");
        let mut g_x = swish_backward(&t.x_in, &g_a1);
        match &b.skip {
            Some(s) => {
                let gs = conv_backward(
                    &t.x_in,
                    &params.tensors[s.weight],
                    &g_sum,
                    shape(s, t.h, t.w),
                    grads.as_deref_mut().map(|gr| weight_bias(gr, s)),
                    true,
                )
                .expect("input gradient requested");
                g_x.iter_mut().zip(&gs).for_each(|(a, b)| *a += b);
            }
            None => g_x.iter_mut().zip(&g_sum).for_each(|(a, b)| *a += b),
        }
        g = g_x;
    }

    let stem = &plan.stem;
    let g_in = conv_backward(
        &tape.input,
        &params.tensors[stem.weight],
        &g,
        shape(stem, tape.h, tape.w),
        grads.map(|gr| weight_bias(gr, stem)),
        want_input,
    );
    match g_in {
        None => Ok(None),
        Some(g_in) => {
            let n = 2 * tape.h * tape.w;
            RealTensor::from_vec(&[2, tape.h, tape.w], g_in[..n].to_vec())
                .map(Some)
                .map_err(|_| Error::NonFinite("input gradient".into()))
        }
    }
}

/// Disjoint mutable views of a convolution's weight and bias gradients.
fn weight_bias<'a>(grads: &'a mut ParamGrads, c: &ConvPlan) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert_eq!(c.bias, c.weight + 1);
    let (lo, hi) = grads.tensors.split_at_mut(c.bias);
    (lo[c.weight].as_mut_slice(), hi[0].as_mut_slice())
}
