//! Histogram statistics of 8-bit tone-mapped outputs: entropy, average
//! histograms and smoothed KL divergence.
//!
//! Three-channel images are reduced to a single luminance plane, the
//! per-pixel channel mean rounded half away from zero, before any
//! histogram is taken.

use std::fmt::Write as _;

use crate::baselines::quantize;
use crate::compression::{ToneMappedImage, OUT_CHANNELS};
use crate::error::{Error, Result};

pub const BINS: usize = 256;
pub const DEFAULT_KL_SMOOTHING: f64 = 1e-9;
/// Allowed deviation of a normalized histogram's mass from one.
const NORM_TOL: f64 = 1e-9;

/// Raw 256-bin counts of one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram256 {
    bins: [u64; BINS],
    total: u64,
}

impl Histogram256 {
    pub fn from_gray(pixels: &[u8]) -> Result<Self> {
        if pixels.is_empty() {
            return Err(Error::invalid("image", "is empty"));
        }
        let mut bins = [0u64; BINS];
        for &p in pixels {
            bins[p as usize] += 1;
        }
        Ok(Histogram256 {
            bins,
            total: pixels.len() as u64,
        })
    }

    pub fn from_image(img: &ToneMappedImage) -> Result<Self> {
        Histogram256::from_gray(&luminance(img))
    }

    pub fn bins(&self) -> &[u64; BINS] {
        &self.bins
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn normalized(&self) -> NormalizedHistogram {
        let t = self.total as f64;
        NormalizedHistogram(self.bins.map(|c| c as f64 / t))
    }
}

/// Probability mass over the 256 gray levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedHistogram(pub [f64; BINS]);

impl NormalizedHistogram {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("histogram", "has negative or non-finite mass"));
        }
        let s: f64 = self.0.iter().sum();
        if (s - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid("histogram", format!("is not normalized (mass {s})")));
        }
        Ok(())
    }

    /// CSV with columns `bin,p`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin,p\n");
        for (k, p) in self.0.iter().enumerate() {
            writeln!(out, "{k},{p:.9e}").unwrap();
        }
        out
    }
}

/// Per-pixel mean of the three channels, quantized to 8 bits.
pub fn luminance(img: &ToneMappedImage) -> Vec<u8> {
    let plane = img.width() * img.height();
    (0..plane)
        .map(|p| {
            let s: f64 = (0..OUT_CHANNELS).map(|c| f64::from(img.channel(c)[p])).sum();
            quantize(s / OUT_CHANNELS as f64)
        })
        .collect()
}

/// Shannon entropy in bits of the gray-level distribution.
pub fn image_entropy(pixels: &[u8]) -> Result<f64> {
    Ok(entropy(&Histogram256::from_gray(pixels)?.normalized()))
}

/// Entropy of the luminance of a 3-channel image.
pub fn tonemapped_entropy(img: &ToneMappedImage) -> Result<f64> {
    image_entropy(&luminance(img))
}

pub fn entropy(p: &NormalizedHistogram) -> f64 {
    let h: f64 = p.0.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum();
    // A single occupied bin gives -1·log2(1) = -0.
    h.max(0.0)
}

/// Uniform average of the normalized histograms.
pub fn average_histogram(hists: &[Histogram256]) -> Result<NormalizedHistogram> {
    let first = hists.first().ok_or_else(|| Error::invalid("image list", "is empty"))?;
    let n = hists.len() as f64;
    if hists.iter().all(|h| h.total == first.total) {
        // Equal sizes: pool the counts, which is exact for repeated images.
        let denom = n * first.total as f64;
        let mut out = [0.0; BINS];
        for (k, o) in out.iter_mut().enumerate() {
            *o = hists.iter().map(|h| h.bins[k]).sum::<u64>() as f64 / denom;
        }
        return Ok(NormalizedHistogram(out));
    }
    let mut out = [0.0; BINS];
    for h in hists {
        for (o, p) in out.iter_mut().zip(h.normalized().0) {
            *o += p;
        }
    }
    Ok(NormalizedHistogram(out.map(|v| v / n)))
}

/// `KL(p ‖ q)` in nats after adding `smoothing` to every bin of both
/// distributions and renormalizing.
pub fn histogram_kl(p: &NormalizedHistogram, q: &NormalizedHistogram, smoothing: f64) -> Result<f64> {
    p.validate()?;
    q.validate()?;
    if !(smoothing.is_finite() && smoothing > 0.0) {
        return Err(Error::invalid("smoothing", "must be positive"));
    }
    let zp: f64 = p.0.iter().map(|v| v + smoothing).sum();
    let zq: f64 = q.0.iter().map(|v| v + smoothing).sum();
    let kl: f64 =
        p.0.iter()
            .zip(&q.0)
            .map(|(&a, &b)| {
                let (a, b) = ((a + smoothing) / zp, (b + smoothing) / zq);
                a * (a / b).ln()
            })
            .sum();
    Ok(kl.max(0.0))
}

/// Summary statistics of one set of outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputStats {
    pub label: String,
    pub mean_entropy: f64,
    pub histogram: NormalizedHistogram,
}

pub fn output_stats(label: impl Into<String>, images: &[ToneMappedImage]) -> Result<OutputStats> {
    let hists = images
        .iter()
        .map(Histogram256::from_image)
        .collect::<Result<Vec<_>>>()?;
    let histogram = average_histogram(&hists)?;
    let mean_entropy = hists.iter().map(|h| entropy(&h.normalized())).sum::<f64>() / hists.len() as f64;
    Ok(OutputStats {
        label: label.into(),
        mean_entropy,
        histogram,
    })
}

/// CSV comparing two output sets: one row per set with its mean entropy,
/// then the KL divergence of the first average histogram from the second.
pub fn comparison_csv(a: &OutputStats, b: &OutputStats, smoothing: f64) -> Result<String> {
    let kl = histogram_kl(&a.histogram, &b.histogram, smoothing)?;
    let mut out = String::from("metric,subject,value\n");
    for s in [a, b] {
        writeln!(out, "entropy_bits,{},{:.6}", s.label, s.mean_entropy).unwrap();
    }
    writeln!(out, "kl_nats,{}||{},{:.6}", a.label, b.label, kl).unwrap();
    Ok(out)
}
