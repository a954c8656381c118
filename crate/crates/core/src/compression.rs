//! Adaptive channel compression.
//!
//! Every embedding channel passes separately through a small shared CNN
//! (`conv → ReLU → conv → ReLU`, 1 → 16 → 3 channels, stride 2 each). The
//! 3-channel feature map is layer-normalized and average-pooled, giving a
//! 3-vector per embedding. The `N` vectors are concatenated and an MLP
//! (`3N → 64 → 64 → 3N`) produces a `3 × N` logit matrix. A softmax over
//! `N` in each row gives the weights `ω`, and output channel `i` is the
//! convex combination `X_i = Σ_n ω[i, n] · E_n` of the embeddings.
//!
//! The CNN sees embeddings scaled to `[0, 1]`; the weighted sum uses the
//! unscaled `[0, 255]` embeddings so the output is directly displayable.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffmath::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, global_avg_pool, layer_norm,
    layer_norm_backward, relu, relu_backward, softmax, softmax_backward, Checkpoint, ConvLayer, DenseLayer,
    LayerNormCache, NormGroup, Real, ReluCache, Tensor,
};
use crate::embedding::{check_permutation, PeriodSet, ThermalEmbedding};
use crate::error::{Error, Result};

pub const OUT_CHANNELS: usize = 3;

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetConfig {
    pub n_channels: usize,
    pub conv_width: usize,
    pub kernel: usize,
    pub strides: (usize, usize),
    pub hidden: usize,
    pub norm_group: NormGroup,
}

impl NetConfig {
    pub fn new(n_channels: usize) -> Self {
        NetConfig {
            n_channels,
            conv_width: 16,
            kernel: 3,
            strides: (2, 2),
            hidden: 64,
            norm_group: NormGroup::Joint,
        }
    }

    /// Smallest input side the conv stack accepts.
    pub fn min_side(&self) -> usize {
        // conv2 needs its input (ceil(side / s1)) to be at least one kernel wide.
        self.kernel.max((self.kernel - 1) * self.strides.0 + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionNet<T> {
    config: NetConfig,
    conv1: ConvLayer<T>,
    conv2: ConvLayer<T>,
    norm_gain: Tensor<T>,
    norm_bias: Tensor<T>,
    mlp1: DenseLayer<T>,
    mlp2: DenseLayer<T>,
    head: DenseLayer<T>,
    version: u64,
}

impl<T: Real> CompressionNet<T> {
    /// Randomly initialized network; identical seeds give identical nets.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        if config.n_channels == 0 {
            return Err(Error::invalid("n_channels", "must be at least 1"));
        }
        if config.conv_width == 0 || config.hidden == 0 || config.kernel == 0 {
            return Err(Error::invalid("config", "layer sizes must be nonzero"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n3 = OUT_CHANNELS * config.n_channels;
        let mut conv1 = ConvLayer::init(&mut rng, 1, config.conv_width, config.kernel, config.strides.0);
        let mut conv2 = ConvLayer::init(
            &mut rng,
            config.conv_width,
            OUT_CHANNELS,
            config.kernel,
            config.strides.1,
        );
        // Small positive biases keep the ReLUs alive at initialization.
        conv1.bias.data_mut().iter_mut().for_each(|b| *b = T::lit(0.01));
        conv2.bias.data_mut().iter_mut().for_each(|b| *b = T::lit(0.1));
        let mlp1 = DenseLayer::init(&mut rng, n3, config.hidden, 1.0);
        let mlp2 = DenseLayer::init(&mut rng, config.hidden, config.hidden, 1.0);
        // A small head starts the weights close to uniform.
        let head = DenseLayer::init(&mut rng, config.hidden, n3, 0.1);
        Ok(CompressionNet {
            config,
            conv1,
            conv2,
            norm_gain: Tensor::from_fn([OUT_CHANNELS], |_| T::one()),
            norm_bias: Tensor::zeros([OUT_CHANNELS]),
            mlp1,
            mlp2,
            head,
            version: 0,
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn n_channels(&self) -> usize {
        self.config.n_channels
    }

    /// Named parameters in a fixed order.
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        vec![
            ("conv1.weight", &self.conv1.weight),
            ("conv1.bias", &self.conv1.bias),
            ("conv2.weight", &self.conv2.weight),
            ("conv2.bias", &self.conv2.bias),
            ("norm.gain", &self.norm_gain),
            ("norm.bias", &self.norm_bias),
            ("mlp1.weight", &self.mlp1.weight),
            ("mlp1.bias", &self.mlp1.bias),
            ("mlp2.weight", &self.mlp2.weight),
            ("mlp2.bias", &self.mlp2.bias),
            ("head.weight", &self.head.weight),
            ("head.bias", &self.head.bias),
        ]
    }

    /// Mutable parameters in the order of [`params`](Self::params).
    /// Invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.version += 1;
        self.tensors_mut()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.norm_gain,
            &mut self.norm_bias,
            &mut self.mlp1.weight,
            &mut self.mlp1.bias,
            &mut self.mlp2.weight,
            &mut self.mlp2.bias,
            &mut self.head.weight,
            &mut self.head.bias,
        ]
    }

    /// Clears accumulated gradients; forward caches stay valid.
    pub fn zero_grad(&mut self) {
        for p in self.tensors_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> CompressionNet<U> {
        let conv = |c: &ConvLayer<T>| ConvLayer {
            weight: c.weight.cast(),
            bias: c.bias.cast(),
            stride: c.stride,
        };
        let dense = |d: &DenseLayer<T>| DenseLayer {
            weight: d.weight.cast(),
            bias: d.bias.cast(),
        };
        CompressionNet {
            config: self.config,
            conv1: conv(&self.conv1),
            conv2: conv(&self.conv2),
            norm_gain: self.norm_gain.cast(),
            norm_bias: self.norm_bias.cast(),
            mlp1: dense(&self.mlp1),
            mlp2: dense(&self.mlp2),
            head: dense(&self.head),
            version: 0,
        }
    }

    /// Equivalent network for embeddings supplied in a different order:
    /// new embedding `k` is old embedding `perm[k]`. The first MLP layer's
    /// input blocks and the head's rows are re-indexed accordingly.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_channels();
        check_permutation(perm, n)?;
        let mut out = self.clone();
        out.version = 0;
        let in_d = self.mlp1.in_dim();
        let w = self.mlp1.weight.data();
        let nw = out.mlp1.weight.data_mut();
        for row in 0..self.mlp1.out_dim() {
            for (k, &src) in perm.iter().enumerate() {
                for c in 0..OUT_CHANNELS {
                    nw[row * in_d + k * OUT_CHANNELS + c] = w[row * in_d + src * OUT_CHANNELS + c];
                }
            }
        }
        let hidden = self.head.in_dim();
        for i in 0..OUT_CHANNELS {
            for (k, &src) in perm.iter().enumerate() {
                let (dst_row, src_row) = (i * n + k, i * n + src);
                out.head.bias.data_mut()[dst_row] = self.head.bias.data()[src_row];
                out.head.weight.data_mut()[dst_row * hidden..][..hidden]
                    .copy_from_slice(&self.head.weight.data()[src_row * hidden..][..hidden]);
            }
        }
        Ok(out)
    }

    /// Direct access to the head for inspection and experiments.
    pub fn head_mut(&mut self) -> &mut DenseLayer<T> {
        self.version += 1;
        &mut self.head
    }
}

impl CompressionNet<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let c = &self.config;
        let mut ck = Checkpoint::default();
        let meta = vec![
            c.n_channels as f32,
            c.conv_width as f32,
            c.kernel as f32,
            c.strides.0 as f32,
            c.strides.1 as f32,
            c.hidden as f32,
            f32::from(c.norm_group.code()),
        ];
        ck.push("config", Tensor::new([meta.len()], meta).expect("rank 1"));
        for (name, t) in self.params() {
            ck.push(name, t.clone());
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = ck.get("config")?.data();
        if meta.len() != 7 || meta.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return Err(Error::format("TCNW", "malformed config tensor"));
        }
        let u = |i: usize| meta[i] as usize;
        let config = NetConfig {
            n_channels: u(0),
            conv_width: u(1),
            kernel: u(2),
            strides: (u(3), u(4)),
            hidden: u(5),
            norm_group: NormGroup::from_code(meta[6] as u8)?,
        };
        let mut net = CompressionNet::<f32>::init(config, 0)?;
        let names: Vec<&'static str> = net.params().iter().map(|(n, _)| *n).collect();
        for (name, slot) in names.into_iter().zip(net.params_mut()) {
            let t = ck.get(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Shape(format!(
                    "checkpoint tensor {name} has shape {:?}, config expects {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        net.version = 0;
        Ok(net)
    }
}

/// Activations retained by [`compress_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    version: u64,
    dims: [usize; 4],
    input: Tensor<T>,
    scaled: Tensor<T>,
    relu1: ReluCache,
    act1: Tensor<T>,
    relu2: ReluCache,
    act2_shape: [usize; 4],
    norm: LayerNormCache<T>,
    pooled: Tensor<T>,
    relu3: ReluCache,
    hidden1: Tensor<T>,
    relu4: ReluCache,
    hidden2: Tensor<T>,
    omega: Tensor<T>,
}

impl<T: Real> ForwardCache<T> {
    /// ReLU activation patterns of every layer, in network order.
    pub fn relu_masks(&self) -> [&[bool]; 4] {
        [
            self.relu1.active(),
            self.relu2.active(),
            self.relu3.active(),
            self.relu4.active(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    /// `[B, 3, H, W]` tone-mapped images.
    pub images: Tensor<T>,
    /// `[B, 3, N]` row-stochastic weights.
    pub weights: Tensor<T>,
    pub cache: ForwardCache<T>,
}

/// Runs the network on a `[B, N, H, W]` batch of embeddings in `[0, 255]`.
pub fn compress_forward<T: Real>(net: &CompressionNet<T>, embeddings: &Tensor<T>) -> Result<ForwardOutput<T>> {
    let [b, n, h, w] = embeddings.dims4()?;
    if n != net.n_channels() {
        return Err(Error::Shape(format!(
            "batch has {n} embedding channels, network expects {}",
            net.n_channels()
        )));
    }
    let min_side = net.config.min_side();
    if h < min_side || w < min_side {
        return Err(Error::Shape(format!(
            "{h}x{w} embeddings are smaller than the {min_side}x{min_side} minimum of the conv stack"
        )));
    }
    let inv = T::lit(1.0 / 255.0);
    let scaled = Tensor::new([b * n, 1, h, w], embeddings.data().iter().map(|&v| v * inv).collect())?;
    let (act1, relu1) = relu(&conv2d_forward(&scaled, &net.conv1)?);
    let (act2, relu2) = relu(&conv2d_forward(&act1, &net.conv2)?);
    let act2_shape = act2.dims4()?;
    let (normed, norm) = layer_norm(&act2, &net.norm_gain, &net.norm_bias, net.config.norm_group)?;
    let pooled = global_avg_pool(&normed)?.reshape([b, n * OUT_CHANNELS])?;
    let (hidden1, relu3) = relu(&dense_forward(&pooled, &net.mlp1)?);
    let (hidden2, relu4) = relu(&dense_forward(&hidden1, &net.mlp2)?);
    let logits = dense_forward(&hidden2, &net.head)?.reshape([b, OUT_CHANNELS, n])?;
    let omega = softmax(&logits, 2)?;

    let plane = h * w;
    let mut images = Tensor::zeros([b, OUT_CHANNELS, h, w]);
    {
        let out = images.data_mut();
        let e = embeddings.data();
        let om = omega.data();
        for bi in 0..b {
            for i in 0..OUT_CHANNELS {
                let dst = &mut out[(bi * OUT_CHANNELS + i) * plane..][..plane];
                for k in 0..n {
                    let wgt = om[(bi * OUT_CHANNELS + i) * n + k];
                    let src = &e[(bi * n + k) * plane..][..plane];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d += wgt * s;
                    }
                }
            }
        }
    }
    images.debug_check_finite("compress_forward");
    Ok(ForwardOutput {
        images,
        weights: omega.clone(),
        cache: ForwardCache {
            version: net.version,
            dims: [b, n, h, w],
            input: embeddings.clone(),
            scaled,
            relu1,
            act1,
            relu2,
            act2_shape,
            norm,
            pooled,
            relu3,
            hidden1,
            relu4,
            hidden2,
            omega,
        },
    })
}

/// Accumulates parameter gradients into `net` for the loss gradient
/// `grad_images` (`[B, 3, H, W]`) and returns the gradient with respect to
/// the input embeddings. Parameter gradients add to whatever is already
/// stored; call [`CompressionNet::zero_grad`] first for a fresh gradient.
pub fn compress_backward<T: Real>(
    net: &mut CompressionNet<T>,
    cache: &ForwardCache<T>,
    grad_images: &Tensor<T>,
) -> Result<Tensor<T>> {
    if cache.version != net.version {
        return Err(Error::Missing(
            "forward cache for the current parameters (cache is stale)",
        ));
    }
    let [b, n, h, w] = cache.dims;
    if grad_images.shape() != [b, OUT_CHANNELS, h, w] {
        return Err(Error::Shape(format!(
            "grad {:?} does not match output [{b}, {OUT_CHANNELS}, {h}, {w}]",
            grad_images.shape()
        )));
    }
    let plane = h * w;
    let g = grad_images.data();
    let e = cache.input.data();
    let om = cache.omega.data();

    // Weighted sum: dω[b,i,k] = <g_i, E_k>, dE_k += Σ_i ω[b,i,k] g_i.
    let mut grad_omega = Tensor::zeros([b, OUT_CHANNELS, n]);
    let mut grad_input = Tensor::zeros([b, n, h, w]);
    {
        let go = grad_omega.data_mut();
        let gi = grad_input.data_mut();
        for bi in 0..b {
            for i in 0..OUT_CHANNELS {
                let gimg = &g[(bi * OUT_CHANNELS + i) * plane..][..plane];
                for k in 0..n {
                    let src = &e[(bi * n + k) * plane..][..plane];
                    go[(bi * OUT_CHANNELS + i) * n + k] = gimg.iter().zip(src).map(|(&a, &s)| a * s).sum();
                    let wgt = om[(bi * OUT_CHANNELS + i) * n + k];
                    for (d, &gv) in gi[(bi * n + k) * plane..][..plane].iter_mut().zip(gimg) {
                        *d += wgt * gv;
                    }
                }
            }
        }
    }

    let grad_logits = softmax_backward(&cache.omega, &grad_omega, 2)?.reshape([b, OUT_CHANNELS * n])?;
    let grad_h2 = dense_backward(&cache.hidden2, &mut net.head, &grad_logits)?;
    let grad_h2 = relu_backward(&cache.relu4, &grad_h2)?;
    let grad_h1 = dense_backward(&cache.hidden1, &mut net.mlp2, &grad_h2)?;
    let grad_h1 = relu_backward(&cache.relu3, &grad_h1)?;
    let grad_pooled = dense_backward(&cache.pooled, &mut net.mlp1, &grad_h1)?.reshape([b * n, OUT_CHANNELS])?;
    let grad_normed = gap_backward(cache.act2_shape, &grad_pooled)?;
    let grad_act2 = layer_norm_backward(&cache.norm, &mut net.norm_gain, &mut net.norm_bias, &grad_normed)?;
    let grad_conv2 = relu_backward(&cache.relu2, &grad_act2)?;
    let grad_act1 = conv2d_backward(&cache.act1, &mut net.conv2, &grad_conv2)?;
    let grad_conv1 = relu_backward(&cache.relu1, &grad_act1)?;
    let grad_scaled = conv2d_backward(&cache.scaled, &mut net.conv1, &grad_conv1)?;

    let inv = T::lit(1.0 / 255.0);
    for (d, &gs) in grad_input.data_mut().iter_mut().zip(grad_scaled.data()) {
        *d += gs * inv;
    }
    Ok(grad_input)
}

/// Stacks embeddings into a `[B, N, H, W]` tensor.
pub fn stack_embeddings(embs: &[ThermalEmbedding]) -> Result<Tensor<f32>> {
    let first = embs.first().ok_or(Error::Missing("embeddings in batch"))?;
    let (n, h, w) = (first.channels(), first.height(), first.width());
    let mut data = Vec::with_capacity(embs.len() * n * h * w);
    for e in embs {
        if (e.channels(), e.height(), e.width()) != (n, h, w) {
            return Err(Error::Shape(format!(
                "embedding {}x{}x{} differs from batch {n}x{h}x{w}",
                e.channels(),
                e.height(),
                e.width()
            )));
        }
        data.extend_from_slice(e.data());
    }
    Tensor::new([embs.len(), n, h, w], data)
}

/// 3-channel tone-mapped image, channel-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneMappedImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ToneMappedImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width * height * OUT_CHANNELS != data.len() {
            return Err(Error::Shape(format!(
                "3x{height}x{width} image needs {} values, got {}",
                width * height * OUT_CHANNELS,
                data.len()
            )));
        }
        Ok(ToneMappedImage { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, i: usize) -> &[f32] {
        let plane = self.width * self.height;
        &self.data[i * plane..(i + 1) * plane]
    }

    /// Interleaved 8-bit RGB, rounded half away from zero.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(plane * OUT_CHANNELS);
        for p in 0..plane {
            for i in 0..OUT_CHANNELS {
                out.push(crate::baselines::quantize(f64::from(self.data[i * plane + p])));
            }
        }
        out
    }
}

/// The `3 × N` weight matrix of one image; each row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressionWeights {
    n: usize,
    omega: Vec<f64>,
}

impl CompressionWeights {
    pub fn new(n: usize, omega: Vec<f64>) -> Result<Self> {
        if n == 0 || omega.len() != OUT_CHANNELS * n {
            return Err(Error::Shape(format!("need 3x{n} weights, got {}", omega.len())));
        }
        for (i, row) in omega.chunks_exact(n).enumerate() {
            if row.iter().any(|&v| !(v > 0.0 && v <= 1.0)) {
                return Err(Error::invalid("omega", format!("row {i} has entries outside (0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-6 {
                return Err(Error::invalid("omega", format!("row {i} sums to {s}")));
            }
        }
        Ok(CompressionWeights { n, omega })
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.omega[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.omega[i * self.n + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.omega
    }

    /// Mean weight of each embedding over the three output channels.
    pub fn embedding_averages(&self) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..OUT_CHANNELS).map(|i| self.get(i, k)).sum::<f64>() / OUT_CHANNELS as f64)
            .collect()
    }
}

/// Inference on a batch of embeddings sharing `N`, `H`, `W`.
pub fn compress_embeddings(
    net: &CompressionNet<f32>,
    embs: &[ThermalEmbedding],
) -> Result<(Vec<ToneMappedImage>, Vec<CompressionWeights>)> {
    let batch = stack_embeddings(embs)?;
    let out = compress_forward(net, &batch)?;
    let [b, _, h, w] = out.images.dims4()?;
    let n = net.n_channels();
    let img_len = OUT_CHANNELS * h * w;
    let mut images = Vec::with_capacity(b);
    let mut weights = Vec::with_capacity(b);
    for bi in 0..b {
        let data = out.images.data()[bi * img_len..][..img_len]
            .iter()
            .map(|v| v.clamp(0.0, 255.0))
            .collect();
        images.push(ToneMappedImage::new(w, h, data)?);
        let om = out.weights.data()[bi * OUT_CHANNELS * n..][..OUT_CHANNELS * n]
            .iter()
            .map(|&v| f64::from(v))
            .collect();
        weights.push(CompressionWeights::new(n, om)?);
    }
    Ok((images, weights))
}

pub const CHANNEL_NAMES: [&str; OUT_CHANNELS] = ["R", "G", "B"];

#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub channel: &'static str,
    pub embedding: usize,
    pub period: f64,
    pub omega: f64,
}

/// Weights paired with their periods, ordered by period, plus the
/// per-embedding average over output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub rows: Vec<WeightRow>,
    /// `(embedding index, period, average weight)` ordered by period.
    pub averages: Vec<(usize, f64, f64)>,
}

impl WeightReport {
    /// Embedding index with the smallest average weight.
    pub fn argmin_average(&self) -> usize {
        self.averages
            .iter()
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .map(|a| a.0)
            .expect("report has at least one embedding")
    }

    pub fn average_for(&self, embedding: usize) -> f64 {
        self.averages
            .iter()
            .find(|a| a.0 == embedding)
            .map(|a| a.2)
            .expect("embedding in report")
    }

    /// CSV with columns `channel,D,omega`; average rows use channel `avg`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,D,omega\n");
        for r in &self.rows {
            writeln!(out, "{},{},{:.6}", r.channel, r.period, r.omega).unwrap();
        }
        for &(_, d, avg) in &self.averages {
            writeln!(out, "avg,{},{:.6}", d, avg).unwrap();
        }
        out
    }
}

pub fn inspect_weights(weights: &CompressionWeights, periods: &PeriodSet) -> Result<WeightReport> {
    let n = weights.n_channels();
    if periods.len() != n {
        return Err(Error::Shape(format!("{n} weight columns, {} periods", periods.len())));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| periods.periods()[a].total_cmp(&periods.periods()[b]));
    let avg = weights.embedding_averages();
    let mut rows = Vec::with_capacity(OUT_CHANNELS * n);
    for (i, &channel) in CHANNEL_NAMES.iter().enumerate() {
        for &k in &order {
            rows.push(WeightRow {
                channel,
                embedding: k,
                period: periods.periods()[k],
                omega: weights.get(i, k),
            });
        }
    }
    let averages = order.iter().map(|&k| (k, periods.periods()[k], avg[k])).collect();
    Ok(WeightReport { rows, averages })
}
