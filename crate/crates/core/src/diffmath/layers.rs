use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

// ---------------------------------------------------------------- ReLU

/// Mask of strictly positive inputs from the forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluCache {
    active: Vec<bool>,
}

impl ReluCache {
    pub fn active(&self) -> &[bool] {
        &self.active
    }
}

pub fn relu<T: Real>(x: &Tensor<T>) -> (Tensor<T>, ReluCache) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > T::zero()).collect();
    let data = x
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { T::zero() })
        .collect();
    let out = Tensor::new(x.shape(), data).expect("same shape");
    (out, ReluCache { active })
}

/// Passes the upstream gradient where the input was strictly positive; the
/// gradient at exactly zero is zero.
pub fn relu_backward<T: Real>(cache: &ReluCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if cache.active.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "relu cache has {} elements, grad has {}",
            cache.active.len(),
            grad_out.len()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &a)| if a { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape(), data)
}

// ---------------------------------------------------------------- layer norm

/// Which elements of a `[B, C, H, W]` tensor share a mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormGroup {
    /// Each `(b, c)` plane is normalized over its `H × W` extent.
    PerChannel,
    /// Each sample is normalized jointly over `C × H × W`.
    Joint,
}

impl NormGroup {
    pub fn code(self) -> u8 {
        match self {
            NormGroup::PerChannel => 0,
            NormGroup::Joint => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(NormGroup::PerChannel),
            1 => Ok(NormGroup::Joint),
            other => Err(Error::invalid("norm group", format!("unknown code {other}"))),
        }
    }

    /// Number of groups and elements per group for a `[b, c, h, w]` tensor.
    fn layout(self, [b, c, h, w]: [usize; 4]) -> (usize, usize) {
        match self {
            NormGroup::PerChannel => (b * c, h * w),
            NormGroup::Joint => (b, c * h * w),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormCache<T> {
    group: NormGroup,
    shape: [usize; 4],
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> LayerNormCache<T> {
    /// Normalized input before gain and bias.
    pub fn normalized(&self) -> &[T] {
        &self.xhat
    }
}

/// Normalizes `x` per [`NormGroup`] then applies per-channel `gain` and
/// `bias` (both `[C]`).
pub fn layer_norm<T: Real>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    group: NormGroup,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let shape = x.dims4()?;
    let [_, c, h, w] = shape;
    if gain.shape() != [c] || bias.shape() != [c] {
        return Err(Error::Shape(format!(
            "gain {:?} / bias {:?} must both be [{c}]",
            gain.shape(),
            bias.shape()
        )));
    }
    let (groups, m) = group.layout(shape);
    let eps = T::lit(LAYER_NORM_EPS);
    let mf = T::from_usize(m).expect("group size");
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = Vec::with_capacity(groups);
    for gi in 0..groups {
        let xs = &x.data()[gi * m..][..m];
        let mean = xs.iter().copied().sum::<T>() / mf;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / mf;
        let is = T::one() / (var + eps).sqrt();
        for (o, &v) in xhat[gi * m..][..m].iter_mut().zip(xs) {
            *o = (v - mean) * is;
        }
        inv_std.push(is);
    }
    let plane = h * w;
    let data = xhat
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let ch = (i / plane) % c;
            gain.data()[ch] * v + bias.data()[ch]
        })
        .collect();
    let out = Tensor::new(shape, data)?;
    out.debug_check_finite("layer_norm");
    Ok((
        out,
        LayerNormCache {
            group,
            shape,
            xhat,
            inv_std,
        },
    ))
}

/// Accumulates gain/bias gradients and returns the input gradient.
pub fn layer_norm_backward<T: Real>(
    cache: &LayerNormCache<T>,
    gain: &mut Tensor<T>,
    bias: &mut Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.shape {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match cached {:?}",
            grad_out.shape(),
            cache.shape
        )));
    }
    let [_, c, h, w] = cache.shape;
    let plane = h * w;
    let g = grad_out.data();
    {
        let gg = gain.grad_mut();
        for (i, (&gv, &xv)) in g.iter().zip(&cache.xhat).enumerate() {
            gg[(i / plane) % c] += gv * xv;
        }
    }
    {
        let gb = bias.grad_mut();
        for (i, &gv) in g.iter().enumerate() {
            gb[(i / plane) % c] += gv;
        }
    }
    // dxhat = g * gain; dx = inv_std / m * (m dxhat - sum(dxhat) - xhat sum(dxhat xhat))
    let dxhat: Vec<T> = g
        .iter()
        .enumerate()
        .map(|(i, &gv)| gv * gain.data()[(i / plane) % c])
        .collect();
    let (groups, m) = cache.group.layout(cache.shape);
    let mf = T::from_usize(m).expect("group size");
    let mut dx = vec![T::zero(); dxhat.len()];
    for gi in 0..groups {
        let d = &dxhat[gi * m..][..m];
        let xh = &cache.xhat[gi * m..][..m];
        let sum_d = d.iter().copied().sum::<T>();
        let sum_dx = d.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
        let scale = cache.inv_std[gi] / mf;
        for ((o, &dv), &xv) in dx[gi * m..][..m].iter_mut().zip(d).zip(xh) {
            *o = scale * (mf * dv - sum_d - xv * sum_dx);
        }
    }
    Tensor::new(cache.shape, dx)
}

// ---------------------------------------------------------------- pooling

/// Mean over the spatial extent: `[B, C, H, W]` to `[B, C]`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = x.dims4()?;
    let plane = h * w;
    let pf = T::from_usize(plane).expect("plane size");
    let data = x
        .data()
        .chunks_exact(plane)
        .map(|p| p.iter().copied().sum::<T>() / pf)
        .collect();
    Tensor::new([b, c], data)
}

pub fn gap_backward<T: Real>(input_shape: [usize; 4], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, c, h, w] = input_shape;
    if grad_out.shape() != [b, c] {
        return Err(Error::Shape(format!(
            "grad_out {:?} does not match pooled [{b}, {c}]",
            grad_out.shape()
        )));
    }
    let plane = h * w;
    let pf = T::from_usize(plane).expect("plane size");
    let mut data = Vec::with_capacity(b * c * plane);
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g / pf, plane));
    }
    Tensor::new(input_shape, data)
}

// ---------------------------------------------------------------- dense

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `[out_dim, in_dim]`
    pub weight: Tensor<T>,
    /// `[out_dim]`
    pub bias: Tensor<T>,
}

impl<T: Real> DenseLayer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let [out_d, _] = weight.dims2()?;
        if bias.shape() != [out_d] {
            return Err(Error::Shape(format!(
                "bias {:?} does not match {out_d} outputs",
                bias.shape()
            )));
        }
        Ok(DenseLayer { weight, bias })
    }

    /// He-normal weights scaled by `gain`, zero bias.
    pub fn init<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, gain: f64) -> Self {
        let std = gain * (2.0 / in_dim as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let weight = Tensor::from_fn([out_dim, in_dim], |_| T::lit(normal.sample(rng)));
        DenseLayer::new(weight, Tensor::zeros([out_dim])).expect("consistent shapes")
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// `[B, in]` to `[B, out]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, layer: &DenseLayer<T>) -> Result<Tensor<T>> {
    let [b, in_d] = x.dims2()?;
    if in_d != layer.in_dim() {
        return Err(Error::Shape(format!(
            "input width {in_d}, layer expects {}",
            layer.in_dim()
        )));
    }
    let out_d = layer.out_dim();
    let w = layer.weight.data();
    let mut data = Vec::with_capacity(b * out_d);
    for row in x.data().chunks_exact(in_d) {
        for o in 0..out_d {
            let wr = &w[o * in_d..][..in_d];
            data.push(layer.bias.data()[o] + wr.iter().zip(row).map(|(&a, &b)| a * b).sum::<T>());
        }
    }
    let out = Tensor::new([b, out_d], data)?;
    out.debug_check_finite("dense_forward");
    Ok(out)
}

/// Accumulates parameter gradients; returns the gradient wrt the input `x`.
pub fn dense_backward<T: Real>(x: &Tensor<T>, layer: &mut DenseLayer<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let [b, in_d] = x.dims2()?;
    let out_d = layer.out_dim();
    if grad_out.shape() != [b, out_d] || in_d != layer.in_dim() {
        return Err(Error::Shape(format!(
            "grad_out {:?} / input {:?} inconsistent with {out_d}x{} layer",
            grad_out.shape(),
            x.shape(),
            layer.in_dim()
        )));
    }
    let g = grad_out.data();
    {
        let gb = layer.bias.grad_mut();
        for row in g.chunks_exact(out_d) {
            for (acc, &v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
    let w = layer.weight.data().to_vec();
    let gw = layer.weight.grad_mut();
    let mut gx = vec![T::zero(); b * in_d];
    for bi in 0..b {
        let xr = &x.data()[bi * in_d..][..in_d];
        let gr = &g[bi * out_d..][..out_d];
        let gxr = &mut gx[bi * in_d..][..in_d];
        for (o, &go) in gr.iter().enumerate() {
            let wr = &w[o * in_d..][..in_d];
            let gwr = &mut gw[o * in_d..][..in_d];
            for i in 0..in_d {
                gwr[i] += go * xr[i];
                gxr[i] += go * wr[i];
            }
        }
    }
    Tensor::new([b, in_d], gx)
}

// ---------------------------------------------------------------- softmax

fn axis_layout(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::invalid(
            "axis",
            format!("{axis} out of range for rank {}", shape.len()),
        ));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

/// Numerically stable softmax along `axis`.
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, n, inner) = axis_layout(x.shape(), axis)?;
    let xd = x.data();
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).map(|k| xd[idx(k)]).fold(T::neg_infinity(), T::max);
            let mut sum = T::zero();
            for k in 0..n {
                let e = (xd[idx(k)] - max).exp();
                out[idx(k)] = e;
                sum += e;
            }
            for k in 0..n {
                out[idx(k)] = out[idx(k)] / sum;
            }
        }
    }
    Tensor::new(x.shape(), out)
}

/// Gradient wrt the softmax input given the forward output `y`.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if y.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "softmax output {:?} vs grad {:?}",
            y.shape(),
            grad_out.shape()
        )));
    }
    let (outer, n, inner) = axis_layout(y.shape(), axis)?;
    let (yd, gd) = (y.data(), grad_out.data());
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |k: usize| (o * n + k) * inner + i;
            let dot = (0..n).map(|k| yd[idx(k)] * gd[idx(k)]).sum::<T>();
            for k in 0..n {
                dx[idx(k)] = yd[idx(k)] * (gd[idx(k)] - dot);
            }
        }
    }
    Tensor::new(y.shape(), dx)
}
