//! Differentiable surrogate task losses on a single 3-channel image.
//!
//! Every loss reads the image scaled to `[0, 1]` and returns the loss with
//! its gradient with respect to the unscaled `[0, 255]` pixels. Lower is
//! better. The contrast and edge losses score a constant image at exactly
//! zero.

use serde::{Deserialize, Serialize};

use crate::diffmath::Real;
use crate::error::{Error, Result};
use crate::training::scene::SceneAnnotations;

/// Variance floor of the contrast ratio, in squared `[0, 1]` units.
pub const CONTRAST_EPS: f64 = 1e-2;
/// Smoothing of the Sobel magnitude, in squared Sobel units.
pub const SOBEL_EPS: f64 = 1e-4;
pub const DEFAULT_EDGE_LAMBDA: f64 = 0.5;

const SCALE: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskLoss {
    /// Object-versus-background separation.
    ObjectContrast,
    /// Sharp true boundaries, quiet background; `lambda` weights the
    /// off-boundary penalty.
    EdgeFidelity { lambda: f64 },
    /// Mean squared error against the min-max normalized temperature.
    Reconstruction,
}

impl TaskLoss {
    pub fn name(&self) -> &'static str {
        match self {
            TaskLoss::ObjectContrast => "object_contrast",
            TaskLoss::EdgeFidelity { .. } => "edge_fidelity",
            TaskLoss::Reconstruction => "reconstruction",
        }
    }

    /// Parses `object_contrast`, `edge_fidelity` (default lambda) or
    /// `reconstruction`.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "object_contrast" => Ok(TaskLoss::ObjectContrast),
            "edge_fidelity" => Ok(TaskLoss::EdgeFidelity {
                lambda: DEFAULT_EDGE_LAMBDA,
            }),
            "reconstruction" => Ok(TaskLoss::Reconstruction),
            other => Err(Error::invalid("loss", format!("unknown kind `{other}`"))),
        }
    }

    /// Loss and gradient for one `[3, H, W]` image; `celsius` is the
    /// temperature map the image was produced from.
    pub fn evaluate<T: Real>(&self, img: &[T], ann: &SceneAnnotations, celsius: &[f32]) -> Result<(T, Vec<T>)> {
        match *self {
            TaskLoss::ObjectContrast => loss_object_contrast(img, ann),
            TaskLoss::EdgeFidelity { lambda } => loss_edge_fidelity(img, ann, lambda),
            TaskLoss::Reconstruction => loss_reconstruction(img, celsius),
        }
    }
}

fn channels<'a, T>(img: &'a [T], ann: &SceneAnnotations) -> Result<Vec<&'a [T]>> {
    let plane = ann.width() * ann.height();
    if plane == 0 || img.len() % plane != 0 || img.is_empty() {
        return Err(Error::Shape(format!(
            "image of {} values does not fit {}x{} annotations",
            img.len(),
            ann.width(),
            ann.height()
        )));
    }
    Ok(img.chunks_exact(plane).collect())
}

/// Negative sum over objects of the squared mean difference between object
/// and background, divided by the summed variances, averaged over channels.
pub fn loss_object_contrast<T: Real>(img: &[T], ann: &SceneAnnotations) -> Result<(T, Vec<T>)> {
    let chans = channels(img, ann)?;
    let k = ann.n_objects();
    if k == 0 {
        return Err(Error::invalid("object masks", "scene has no objects"));
    }
    let labels = ann.labels();
    let mut counts = vec![0usize; k + 1];
    for &l in labels {
        counts[l as usize] += 1;
    }
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::invalid("object masks", "an object or the background is empty"));
    }
    let scale = T::lit(SCALE);
    let eps = T::lit(CONTRAST_EPS);
    let inv_c = T::one() / T::from_usize(chans.len()).expect("channel count");
    let nf: Vec<T> = counts.iter().map(|&c| T::from_usize(c).expect("count")).collect();
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); img.len()];
    let plane = labels.len();
    for (ci, chan) in chans.iter().enumerate() {
        // Region 0 is background.
        let mut mean = vec![T::zero(); k + 1];
        for (&v, &l) in chan.iter().zip(labels) {
            mean[l as usize] += v * scale;
        }
        for (m, &n) in mean.iter_mut().zip(&nf) {
            *m = *m / n;
        }
        let mut var = vec![T::zero(); k + 1];
        for (&v, &l) in chan.iter().zip(labels) {
            let d = v * scale - mean[l as usize];
            var[l as usize] += d * d;
        }
        for (s, &n) in var.iter_mut().zip(&nf) {
            *s = *s / n;
        }
        // dterm/dmean_i = 2d/q, dterm/dvar_i = -d²/q², and the background
        // gets the mirrored sums over all objects.
        let mut d_mean = vec![T::zero(); k + 1];
        let mut d_var = vec![T::zero(); k + 1];
        for i in 1..=k {
            let d = mean[i] - mean[0];
            let q = var[i] + var[0] + eps;
            loss -= inv_c * d * d / q;
            let dm = -inv_c * two * d / q;
            let dv = inv_c * d * d / (q * q);
            d_mean[i] += dm;
            d_mean[0] -= dm;
            d_var[i] += dv;
            d_var[0] += dv;
        }
        let g = &mut grad[ci * plane..][..plane];
        for ((gp, &v), &l) in g.iter_mut().zip(chan.iter()).zip(labels) {
            let r = l as usize;
            let x = v * scale;
            *gp = scale * (d_mean[r] + d_var[r] * two * (x - mean[r])) / nf[r];
        }
    }
    Ok((loss, grad))
}

/// `-mean(|∇I| on boundaries) + lambda · mean(|∇I| elsewhere)`, Sobel
/// gradients on interior pixels, averaged over channels.
pub fn loss_edge_fidelity<T: Real>(img: &[T], ann: &SceneAnnotations, lambda: f64) -> Result<(T, Vec<T>)> {
    let chans = channels(img, ann)?;
    let (w, h) = (ann.width(), ann.height());
    if w < 3 || h < 3 {
        return Err(Error::Shape(format!("{w}x{h} image too small for Sobel")));
    }
    let edges = ann.edges();
    let interior = |i: usize| {
        let (x, y) = (i % w, i / w);
        x > 0 && y > 0 && x + 1 < w && y + 1 < h
    };
    let n_on = (0..w * h).filter(|&i| interior(i) && edges[i]).count();
    let n_off = (0..w * h).filter(|&i| interior(i) && !edges[i]).count();
    if n_on == 0 {
        return Err(Error::invalid("edge map", "no boundary pixels in the image interior"));
    }
    let scale = T::lit(SCALE);
    let eps = T::lit(SOBEL_EPS);
    let sqrt_eps = eps.sqrt();
    let inv_c = T::one() / T::from_usize(chans.len()).expect("channel count");
    let w_on = -inv_c / T::from_usize(n_on).expect("count");
    let w_off = if n_off > 0 {
        T::lit(lambda) * inv_c / T::from_usize(n_off).expect("count")
    } else {
        T::zero()
    };
    let two = T::lit(2.0);
    let plane = w * h;
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); img.len()];
    for (ci, chan) in chans.iter().enumerate() {
        let g = &mut grad[ci * plane..][..plane];
        let v = |x: usize, y: usize| chan[y * w + x] * scale;
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                let weight = if edges[i] { w_on } else { w_off };
                if weight == T::zero() {
                    continue;
                }
                let gx = (v(x + 1, y - 1) + two * v(x + 1, y) + v(x + 1, y + 1))
                    - (v(x - 1, y - 1) + two * v(x - 1, y) + v(x - 1, y + 1));
                let gy = (v(x - 1, y + 1) + two * v(x, y + 1) + v(x + 1, y + 1))
                    - (v(x - 1, y - 1) + two * v(x, y - 1) + v(x + 1, y - 1));
                let r = (gx * gx + gy * gy + eps).sqrt();
                loss += weight * (r - sqrt_eps);
                // Adjoint of the two Sobel stencils.
                let ax = weight * gx / r * scale;
                let ay = weight * gy / r * scale;
                let taps: [(usize, usize, T, T); 8] = [
                    (x + 1, y - 1, T::one(), -T::one()),
                    (x + 1, y, two, T::zero()),
                    (x + 1, y + 1, T::one(), T::one()),
                    (x - 1, y - 1, -T::one(), -T::one()),
                    (x - 1, y, -two, T::zero()),
                    (x - 1, y + 1, -T::one(), T::one()),
                    (x, y + 1, T::zero(), two),
                    (x, y - 1, T::zero(), -two),
                ];
                for (tx, ty, cx, cy) in taps {
                    g[ty * w + tx] += ax * cx + ay * cy;
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Mean over channels and pixels of `(I / 255 - t)²`, where `t` is the
/// temperature rescaled to `[0, 1]` (zero for a constant map).
pub fn loss_reconstruction<T: Real>(img: &[T], celsius: &[f32]) -> Result<(T, Vec<T>)> {
    let plane = celsius.len();
    if plane == 0 || img.is_empty() || img.len() % plane != 0 {
        return Err(Error::Shape(format!(
            "image of {} values does not fit a {plane}-pixel temperature map",
            img.len()
        )));
    }
    let lo = celsius.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = celsius.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let span = f64::from(hi) - f64::from(lo);
    let target: Vec<T> = celsius
        .iter()
        .map(|&c| {
            T::lit(if span > 0.0 {
                (f64::from(c) - f64::from(lo)) / span
            } else {
                0.0
            })
        })
        .collect();
    let scale = T::lit(SCALE);
    let inv = T::one() / T::from_usize(img.len()).expect("pixel count");
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(img.len());
    for (i, &v) in img.iter().enumerate() {
        let d = v * scale - target[i % plane];
        loss += inv * d * d;
        grad.push(inv * two * d * scale);
    }
    Ok((loss, grad))
}
