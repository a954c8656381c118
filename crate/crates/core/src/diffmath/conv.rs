use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Square-kernel 2D convolution (cross-correlation) with zero padding chosen
/// so that the output size is `ceil(input / stride)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// `[out_channels, in_channels, k, k]`
    pub weight: Tensor<T>,
    /// `[out_channels]`
    pub bias: Tensor<T>,
    pub stride: usize,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>, stride: usize) -> Result<Self> {
        let [out_c, _, kh, kw] = weight.dims4()?;
        if kh != kw || kh == 0 {
            return Err(Error::Shape(format!(
                "kernel must be square and nonempty, got {kh}x{kw}"
            )));
        }
        if bias.shape() != [out_c] {
            return Err(Error::Shape(format!(
                "bias shape {:?} does not match {out_c} output channels",
                bias.shape()
            )));
        }
        if stride == 0 {
            return Err(Error::invalid("stride", "must be at least 1"));
        }
        Ok(ConvLayer { weight, bias, stride })
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        let std = (2.0 / (in_c * k * k) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weight = Tensor::from_fn([out_c, in_c, k, k], |_| T::lit(normal.sample(rng)));
        ConvLayer::new(weight, Tensor::zeros([out_c]), stride).expect("consistent shapes")
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

/// Output extent and leading padding for one spatial axis.
pub fn same_padding(len: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = len.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(len);
    (out, total / 2)
}

/// Range of output positions whose tap `kk` lands inside `[0, len)`.
#[inline]
fn valid_range(len: usize, out: usize, stride: usize, pad: usize, kk: usize) -> std::ops::Range<usize> {
    // in = o * stride + kk - pad must lie in [0, len).
    let lo = pad.saturating_sub(kk).div_ceil(stride);
    let hi = if len + pad > kk {
        ((len - 1 + pad - kk) / stride + 1).min(out)
    } else {
        0
    };
    lo..hi.max(lo)
}

struct Geometry {
    b: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    k: usize,
    s: usize,
    oh: usize,
    ow: usize,
    ph: usize,
    pw: usize,
}

fn geometry<T: Real>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Geometry> {
    let [b, in_c, h, w] = x.dims4()?;
    if in_c != layer.in_channels() {
        return Err(Error::Shape(format!(
            "input has {in_c} channels, layer expects {}",
            layer.in_channels()
        )));
    }
    let k = layer.kernel();
    if h < k || w < k {
        return Err(Error::Shape(format!("{h}x{w} input smaller than {k}x{k} kernel")));
    }
    let s = layer.stride;
    let (oh, ph) = same_padding(h, k, s);
    let (ow, pw) = same_padding(w, k, s);
    Ok(Geometry {
        b,
        in_c,
        h,
        w,
        out_c: layer.out_channels(),
        k,
        s,
        oh,
        ow,
        ph,
        pw,
    })
}

pub fn conv2d_forward<T: Real>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let g = geometry(x, layer)?;
    let mut out = Tensor::zeros([g.b, g.out_c, g.oh, g.ow]);
    let xd = x.data();
    let wd = layer.weight.data();
    let od = out.data_mut();
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    for bi in 0..g.b {
        for oc in 0..g.out_c {
            let o = &mut od[(bi * g.out_c + oc) * plane_out..][..plane_out];
            o.iter_mut().for_each(|v| *v = layer.bias.data()[oc]);
            for ic in 0..g.in_c {
                let xi = &xd[(bi * g.in_c + ic) * plane_in..][..plane_in];
                for ky in 0..g.k {
                    let rows = valid_range(g.h, g.oh, g.s, g.ph, ky);
                    for kx in 0..g.k {
                        let wv = wd[((oc * g.in_c + ic) * g.k + ky) * g.k + kx];
                        let cols = valid_range(g.w, g.ow, g.s, g.pw, kx);
                        for oy in rows.clone() {
                            let iy = oy * g.s + ky - g.ph;
                            let orow = &mut o[oy * g.ow..][..g.ow];
                            let xrow = &xi[iy * g.w..][..g.w];
                            for ox in cols.clone() {
                                orow[ox] += wv * xrow[ox * g.s + kx - g.pw];
                            }
                        }
                    }
                }
            }
        }
    }
    out.debug_check_finite("conv2d_forward");
    Ok(out)
}

/// Accumulates weight and bias gradients into `layer` and returns the
/// gradient with respect to the input `x` of the matching forward call.
pub fn conv2d_backward<T: Real>(x: &Tensor<T>, layer: &mut ConvLayer<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let g = geometry(x, layer)?;
    if grad_out.shape() != [g.b, g.out_c, g.oh, g.ow] {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match forward output [{}, {}, {}, {}]",
            grad_out.shape(),
            g.b,
            g.out_c,
            g.oh,
            g.ow
        )));
    }
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let xd = x.data();
    let gd = grad_out.data();
    let mut grad_x = Tensor::zeros([g.b, g.in_c, g.h, g.w]);
    {
        let gb = layer.bias.grad_mut();
        for bi in 0..g.b {
            for oc in 0..g.out_c {
                let go = &gd[(bi * g.out_c + oc) * plane_out..][..plane_out];
                gb[oc] += go.iter().copied().sum::<T>();
            }
        }
    }
    let wd = layer.weight.data().to_vec();
    let gw = layer.weight.grad_mut();
    let gx = grad_x.data_mut();
    for bi in 0..g.b {
        for oc in 0..g.out_c {
            let go = &gd[(bi * g.out_c + oc) * plane_out..][..plane_out];
            for ic in 0..g.in_c {
                let base = (bi * g.in_c + ic) * plane_in;
                let xi = &xd[base..][..plane_in];
                for ky in 0..g.k {
                    let rows = valid_range(g.h, g.oh, g.s, g.ph, ky);
                    for kx in 0..g.k {
                        let widx = ((oc * g.in_c + ic) * g.k + ky) * g.k + kx;
                        let wv = wd[widx];
                        let cols = valid_range(g.w, g.ow, g.s, g.pw, kx);
                        let mut acc = T::zero();
                        for oy in rows.clone() {
                            let iy = oy * g.s + ky - g.ph;
                            let grow = &go[oy * g.ow..][..g.ow];
                            let xrow = &xi[iy * g.w..][..g.w];
                            let gxrow = &mut gx[base + iy * g.w..][..g.w];
                            for ox in cols.clone() {
                                let ix = ox * g.s + kx - g.pw;
                                acc += grow[ox] * xrow[ix];
                                gxrow[ix] += wv * grow[ox];
                            }
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok(grad_x)
}
