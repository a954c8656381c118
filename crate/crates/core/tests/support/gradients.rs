//! Finite-difference drivers shared by the gradient tests and the
//! acceptance suite. Each driver builds a random toy problem from `seed`,
//! reduces the output to a scalar with random weights and compares the
//! analytic gradient of every input and parameter with central differences.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tirtone::compression::{compress_backward, compress_forward, CompressionNet, NetConfig};
use tirtone::diffmath::gradcheck::{check_gradient, GradCheck, DEFAULT_STEP};
use tirtone::diffmath::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, gap_backward, global_avg_pool, layer_norm,
    layer_norm_backward, relu, relu_backward, softmax, softmax_backward, ConvLayer, DenseLayer, NormGroup, Tensor,
};
use tirtone::training::{generate_scene, synthetic_profile, SceneAnnotations, SceneParams, TaskLoss};

pub const GRAD_TOL: f64 = 1e-4;

fn rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

fn random(r: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// `<a - a0, b>`: subtracting the unperturbed output first keeps the
/// roundoff of a large sum out of the difference quotient.
fn dot_delta(a: &Tensor<f64>, a0: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data()
        .iter()
        .zip(a0.data())
        .zip(b.data())
        .map(|((x, x0), y)| (x - x0) * y)
        .sum()
}

/// Pixel-space step for the surrogate losses, whose smoothing scale is a
/// few gray levels.
const LOSS_STEP: f64 = 1e-5;

fn with(t: &Tensor<f64>, values: &[f64]) -> Tensor<f64> {
    Tensor::new(t.shape().to_vec(), values.to_vec()).unwrap()
}

pub fn conv(seed: u64, stride: usize) -> GradCheck {
    let mut r = rng(seed, 1 + stride as u64);
    let x = random(&mut r, &[2, 3, 7, 6], -1.0, 1.0);
    let mut layer = ConvLayer::new(
        random(&mut r, &[4, 3, 3, 3], -0.5, 0.5),
        random(&mut r, &[4], -0.5, 0.5),
        stride,
    )
    .unwrap();
    let y = conv2d_forward(&x, &layer).unwrap();
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = conv2d_backward(&x, &mut layer, &up).unwrap();
    let base = layer.clone();
    let fx = |v: &[f64]| Some(dot(&conv2d_forward(&with(&x, v), &base).unwrap(), &up));
    let fw = |v: &[f64]| {
        let l = ConvLayer::new(with(&base.weight, v), base.bias.clone(), stride).unwrap();
        Some(dot(&conv2d_forward(&x, &l).unwrap(), &up))
    };
    let fb = |v: &[f64]| {
        let l = ConvLayer::new(base.weight.clone(), with(&base.bias, v), stride).unwrap();
        Some(dot(&conv2d_forward(&x, &l).unwrap(), &up))
    };
    check_gradient(fx, x.data(), gx.data(), DEFAULT_STEP)
        .merge(check_gradient(
            fw,
            base.weight.data(),
            layer.weight.grad().unwrap(),
            DEFAULT_STEP,
        ))
        .merge(check_gradient(
            fb,
            base.bias.data(),
            layer.bias.grad().unwrap(),
            DEFAULT_STEP,
        ))
}

pub fn relu_layer(seed: u64) -> GradCheck {
    let mut r = rng(seed, 10);
    // Keep inputs clear of the kink so every step stays on one side.
    let x = Tensor::from_fn([2, 3, 4, 4], |_| {
        let v: f64 = r.random_range(0.05..1.0);
        if r.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let (y, cache) = relu(&x);
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = relu_backward(&cache, &up).unwrap();
    let f = |v: &[f64]| Some(dot(&relu(&with(&x, v)).0, &up));
    check_gradient(f, x.data(), gx.data(), DEFAULT_STEP)
}

pub fn norm(seed: u64, group: NormGroup) -> GradCheck {
    let mut r = rng(seed, 20 + u64::from(group.code()));
    let x = random(&mut r, &[2, 3, 4, 5], -2.0, 2.0);
    let mut gain = random(&mut r, &[3], 0.5, 1.5);
    let mut bias = random(&mut r, &[3], -0.5, 0.5);
    let (y, cache) = layer_norm(&x, &gain, &bias, group).unwrap();
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = layer_norm_backward(&cache, &mut gain, &mut bias, &up).unwrap();
    let (g0, b0) = (gain.clone(), bias.clone());
    let fx = |v: &[f64]| Some(dot(&layer_norm(&with(&x, v), &g0, &b0, group).unwrap().0, &up));
    let fg = |v: &[f64]| Some(dot(&layer_norm(&x, &with(&g0, v), &b0, group).unwrap().0, &up));
    let fb = |v: &[f64]| Some(dot(&layer_norm(&x, &g0, &with(&b0, v), group).unwrap().0, &up));
    check_gradient(fx, x.data(), gx.data(), DEFAULT_STEP)
        .merge(check_gradient(fg, g0.data(), gain.grad().unwrap(), DEFAULT_STEP))
        .merge(check_gradient(fb, b0.data(), bias.grad().unwrap(), DEFAULT_STEP))
}

pub fn pool(seed: u64) -> GradCheck {
    let mut r = rng(seed, 30);
    let x = random(&mut r, &[2, 3, 3, 5], -1.0, 1.0);
    let y = global_avg_pool(&x).unwrap();
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = gap_backward([2, 3, 3, 5], &up).unwrap();
    let f = |v: &[f64]| Some(dot(&global_avg_pool(&with(&x, v)).unwrap(), &up));
    check_gradient(f, x.data(), gx.data(), DEFAULT_STEP)
}

pub fn dense(seed: u64) -> GradCheck {
    let mut r = rng(seed, 40);
    let x = random(&mut r, &[3, 5], -1.0, 1.0);
    let mut layer = DenseLayer::new(random(&mut r, &[4, 5], -1.0, 1.0), random(&mut r, &[4], -1.0, 1.0)).unwrap();
    let y = dense_forward(&x, &layer).unwrap();
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = dense_backward(&x, &mut layer, &up).unwrap();
    let base = layer.clone();
    let fx = |v: &[f64]| Some(dot(&dense_forward(&with(&x, v), &base).unwrap(), &up));
    let fw = |v: &[f64]| {
        let l = DenseLayer::new(with(&base.weight, v), base.bias.clone()).unwrap();
        Some(dot(&dense_forward(&x, &l).unwrap(), &up))
    };
    let fb = |v: &[f64]| {
        let l = DenseLayer::new(base.weight.clone(), with(&base.bias, v)).unwrap();
        Some(dot(&dense_forward(&x, &l).unwrap(), &up))
    };
    check_gradient(fx, x.data(), gx.data(), DEFAULT_STEP)
        .merge(check_gradient(
            fw,
            base.weight.data(),
            layer.weight.grad().unwrap(),
            DEFAULT_STEP,
        ))
        .merge(check_gradient(
            fb,
            base.bias.data(),
            layer.bias.grad().unwrap(),
            DEFAULT_STEP,
        ))
}

pub fn softmax_axis(seed: u64, axis: usize) -> GradCheck {
    let mut r = rng(seed, 50 + axis as u64);
    let x = random(&mut r, &[2, 3, 4], -3.0, 3.0);
    let y = softmax(&x, axis).unwrap();
    let up = random(&mut r, y.shape(), -1.0, 1.0);
    let gx = softmax_backward(&y, &up, axis).unwrap();
    let f = |v: &[f64]| Some(dot(&softmax(&with(&x, v), axis).unwrap(), &up));
    check_gradient(f, x.data(), gx.data(), DEFAULT_STEP)
}

fn flat_params(net: &CompressionNet<f64>) -> Vec<f64> {
    net.params().iter().flat_map(|(_, t)| t.data().to_vec()).collect()
}

fn flat_grads(net: &CompressionNet<f64>) -> Vec<f64> {
    net.params()
        .iter()
        .flat_map(|(_, t)| t.grad().unwrap().to_vec())
        .collect()
}

fn load_params(net: &mut CompressionNet<f64>, values: &[f64]) {
    let mut rest = values;
    for p in net.params_mut() {
        let (head, tail) = rest.split_at(p.len());
        p.data_mut().copy_from_slice(head);
        rest = tail;
    }
}

fn masks_of(cache: &tirtone::compression::ForwardCache<f64>) -> Vec<Vec<bool>> {
    cache.relu_masks().iter().map(|m| m.to_vec()).collect()
}

/// The whole compression network at `B = 2, N = 3, H = W = 8`: gradients
/// of every parameter and of the input embeddings. Probes that flip a ReLU
/// are retried with smaller steps.
pub fn network(seed: u64) -> GradCheck {
    let mut r = rng(seed, 60);
    let mut net = CompressionNet::<f64>::init(NetConfig::new(3), seed).unwrap();
    let x = random(&mut r, &[2, 3, 8, 8], 0.0, 255.0);
    let out = compress_forward(&net, &x).unwrap();
    let up = random(&mut r, out.images.shape(), -1.0, 1.0);
    let masks = masks_of(&out.cache);
    net.zero_grad();
    let gx = compress_backward(&mut net, &out.cache, &up).unwrap();
    let p0 = flat_params(&net);
    let gp = flat_grads(&net);

    let base = net.clone();
    let fx = |v: &[f64]| {
        let o = compress_forward(&base, &with(&x, v)).unwrap();
        (masks_of(&o.cache) == masks).then(|| dot_delta(&o.images, &out.images, &up))
    };
    let mut probe = net.clone();
    let fp = |v: &[f64]| {
        load_params(&mut probe, v);
        let o = compress_forward(&probe, &x).unwrap();
        (masks_of(&o.cache) == masks).then(|| dot_delta(&o.images, &out.images, &up))
    };
    check_gradient(fx, x.data(), gx.data(), DEFAULT_STEP).merge(check_gradient(fp, &p0, &gp, DEFAULT_STEP))
}

fn small_scene(seed: u64) -> SceneAnnotations {
    let params = SceneParams {
        width: 24,
        height: 24,
        n_objects: 1,
        n_regions: 2,
        ..SceneParams::default()
    };
    generate_scene(seed, &params, &synthetic_profile()).unwrap().annotations
}

/// A surrogate loss on a random 3×24×24 image of a generated scene.
pub fn task_loss(seed: u64, loss: TaskLoss) -> GradCheck {
    let mut r = rng(seed, 70);
    let ann = small_scene(seed);
    let celsius: Vec<f32> = (0..576).map(|_| r.random_range(-10.0..40.0)).collect();
    let img: Vec<f64> = (0..3 * 576).map(|_| r.random_range(0.0..255.0)).collect();
    let (_, g) = loss.evaluate(&img, &ann, &celsius).unwrap();
    let f = |v: &[f64]| Some(loss.evaluate(v, &ann, &celsius).unwrap().0);
    check_gradient(f, &img, &g, LOSS_STEP)
}

/// Network followed by a surrogate loss, on a 24×24 scene, with respect
/// to the network parameters.
pub fn network_with_loss(seed: u64, loss: TaskLoss) -> GradCheck {
    let mut r = rng(seed, 80);
    let ann = small_scene(seed);
    let celsius: Vec<f32> = (0..576).map(|_| r.random_range(-10.0..40.0)).collect();
    let mut net = CompressionNet::<f64>::init(NetConfig::new(3), seed ^ 7).unwrap();
    let x = random(&mut r, &[1, 3, 24, 24], 0.0, 255.0);
    let out = compress_forward(&net, &x).unwrap();
    let masks = masks_of(&out.cache);
    let (_, g) = loss.evaluate(out.images.data(), &ann, &celsius).unwrap();
    net.zero_grad();
    compress_backward(&mut net, &out.cache, &with(&out.images, &g)).unwrap();
    let p0 = flat_params(&net);
    let gp = flat_grads(&net);
    let mut probe = net.clone();
    let f = |v: &[f64]| {
        load_params(&mut probe, v);
        let o = compress_forward(&probe, &x).unwrap();
        (masks_of(&o.cache) == masks).then(|| loss.evaluate(o.images.data(), &ann, &celsius).unwrap().0)
    };
    check_gradient(f, &p0, &gp, DEFAULT_STEP)
}

/// Checks of every layer, every surrogate loss and the whole network at
/// toy size, labelled.
pub fn toy_checks(seed: u64) -> Vec<(&'static str, GradCheck)> {
    let edge = TaskLoss::EdgeFidelity { lambda: 0.5 };
    vec![
        ("conv2d stride 1", conv(seed, 1)),
        ("conv2d stride 2", conv(seed, 2)),
        ("relu", relu_layer(seed)),
        ("layer norm per-channel", norm(seed, NormGroup::PerChannel)),
        ("layer norm joint", norm(seed, NormGroup::Joint)),
        ("global average pool", pool(seed)),
        ("dense", dense(seed)),
        ("softmax axis 0", softmax_axis(seed, 0)),
        ("softmax axis 1", softmax_axis(seed, 1)),
        ("softmax axis 2", softmax_axis(seed, 2)),
        ("object contrast loss", task_loss(seed, TaskLoss::ObjectContrast)),
        ("edge fidelity loss", task_loss(seed, edge)),
        ("reconstruction loss", task_loss(seed, TaskLoss::Reconstruction)),
        ("compression network", network(seed)),
    ]
}

/// The network composed with each surrogate loss on a generated scene.
pub fn composed_checks(seed: u64) -> Vec<(&'static str, GradCheck)> {
    vec![
        (
            "network + object contrast",
            network_with_loss(seed, TaskLoss::ObjectContrast),
        ),
        (
            "network + edge fidelity",
            network_with_loss(seed, TaskLoss::EdgeFidelity { lambda: 0.5 }),
        ),
    ]
}
