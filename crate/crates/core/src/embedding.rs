//! Multichannel sinusoidal thermal embedding.
//!
//! Each channel projects absolute temperature through a sinusoid whose
//! half-period is `D` degrees Celsius:
//!
//! ```text
//! E_k(p) = 127.5 * sin(pi * T(p) / D_k) + 127.5
//! ```
//!
//! Small periods wrap quickly and produce sharp, artifact-prone edges;
//! large periods vary slowly and can saturate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baselines::{quantize, ToneMapped8};
use crate::codec::{checked_area, put_f32s, Reader};
use crate::error::{Error, Result};
use crate::radiometry::TemperatureMap;

pub const DEFAULT_PERIOD_LO: f64 = 4.5;
pub const DEFAULT_PERIOD_HI: f64 = 45.0;

const HALF_SCALE: f64 = 255.0 / 2.0;

/// Ordered temperature periods, one per embedding channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodSet {
    periods: Vec<f64>,
    seed: Option<u64>,
}

impl PeriodSet {
    pub fn new(periods: Vec<f64>) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::invalid("periods", "need at least one period"));
        }
        if let Some(d) = periods.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::invalid("periods", format!("{d} is not a positive period")));
        }
        Ok(PeriodSet { periods, seed: None })
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    /// Seed the set was sampled from, if it was sampled.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Reorders the periods so that new channel `k` is old channel `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.len())?;
        Ok(PeriodSet {
            periods: perm.iter().map(|&i| self.periods[i]).collect(),
            seed: self.seed,
        })
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n || perm.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::invalid(
            "permutation",
            format!("{perm:?} is not a permutation of 0..{n}"),
        ));
    }
    Ok(())
}

/// Draws `n` periods uniformly from `[lo, hi]` using a generator seeded
/// with `seed`.
pub fn sample_periods(n: usize, lo: f64, hi: f64, seed: u64) -> Result<PeriodSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = sample_periods_with(&mut rng, n, lo, hi)?;
    set.seed = Some(seed);
    Ok(set)
}

/// Draws `n` periods from `[lo, hi]` using the caller's generator.
pub fn sample_periods_with<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> Result<PeriodSet> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
        return Err(Error::invalid(
            "period range",
            format!("need 0 < lo <= hi, got [{lo}, {hi}]"),
        ));
    }
    let periods = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    PeriodSet::new(periods)
}

/// N-channel embedding stored channel-major, values in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalEmbedding {
    width: usize,
    height: usize,
    periods: PeriodSet,
    data: Vec<f32>,
}

impl ThermalEmbedding {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.periods.len()
    }

    pub fn periods(&self) -> &PeriodSet {
        &self.periods
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn channel(&self, k: usize) -> &[f32] {
        let hw = self.width * self.height;
        &self.data[k * hw..(k + 1) * hw]
    }
}

/// Value of one embedding channel at temperature `celsius`.
#[inline]
pub fn embed_value(celsius: f64, period: f64) -> f64 {
    // Reduce the phase to [-1, 1] half-cycles first so that periodicity is
    // exact and the sine argument stays small.
    let x = celsius / period;
    let r = x - 2.0 * (0.5 * x).round();
    HALF_SCALE * (PI * r).sin() + HALF_SCALE
}

/// Embeds a temperature map with one channel per period.
pub fn embed(temp: &TemperatureMap, periods: &PeriodSet) -> ThermalEmbedding {
    let hw = temp.width() * temp.height();
    let mut data = vec![0.0f32; hw * periods.len()];
    embed_into(temp.celsius(), periods.periods(), &mut data);
    ThermalEmbedding {
        width: temp.width(),
        height: temp.height(),
        periods: periods.clone(),
        data,
    }
}

/// Writes the embedding of `celsius` into `out` (channel-major, length
/// `celsius.len() * periods.len()`).
pub fn embed_into(celsius: &[f32], periods: &[f64], out: &mut [f32]) {
    assert_eq!(out.len(), celsius.len() * periods.len());
    for (chan, &d) in out.chunks_exact_mut(celsius.len().max(1)).zip(periods) {
        let inv = 1.0 / d;
        for (o, &t) in chan.iter_mut().zip(celsius) {
            *o = fast_embed(f64::from(t) * inv) as f32;
        }
    }
}

// Same as `embed_value` with a polynomial sine on the reduced phase. The
// polynomial is the degree-17 Taylor sine on |pi r| <= pi/2 after folding;
// truncation error is below 5e-14.
#[inline(always)]
fn fast_embed(x: f64) -> f64 {
    let mut r = x - 2.0 * (0.5 * x).round();
    // sin(pi r) = sin(pi (1 - r)) for r in (0.5, 1], and the mirror for negatives.
    if r > 0.5 {
        r = 1.0 - r;
    } else if r < -0.5 {
        r = -1.0 - r;
    }
    let z = PI * r;
    let z2 = z * z;
    let s = z
        * (1.0
            + z2 * (-1.0 / 6.0
                + z2 * (1.0 / 120.0
                    + z2 * (-1.0 / 5040.0
                        + z2 * (1.0 / 362_880.0
                            + z2 * (-1.0 / 39_916_800.0
                                + z2 * (1.0 / 6_227_020_800.0
                                    + z2 * (-1.0 / 1_307_674_368_000.0 + z2 * (1.0 / 355_687_428_096_000.0)))))))));
    HALF_SCALE * s + HALF_SCALE
}

/// Rounds each channel to an 8-bit image for inspection or export.
pub fn embedding_to_images(emb: &ThermalEmbedding) -> Vec<ToneMapped8> {
    (0..emb.channels())
        .map(|k| {
            let gray = emb.channel(k).iter().map(|&v| quantize(f64::from(v))).collect();
            ToneMapped8::new(emb.width, emb.height, gray).expect("channel matches embedding dimensions")
        })
        .collect()
}

const TEMB_MAGIC: &[u8; 4] = b"TEMB";

/// Embedding tensor file: magic `TEMB`, u32 N, u32 H, u32 W, then the
/// channel-major little-endian f32 payload.
pub fn encode_temb(emb: &ThermalEmbedding) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + emb.data.len() * 4);
    out.extend_from_slice(TEMB_MAGIC);
    for v in [emb.channels(), emb.height, emb.width] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    put_f32s(&mut out, emb.data.iter().copied());
    out
}

/// Decodes a `TEMB` file. The file carries no periods, so the caller
/// supplies them; their count must match the channel count.
pub fn decode_temb(bytes: &[u8], periods: PeriodSet) -> Result<ThermalEmbedding> {
    let mut r = Reader::new("TEMB", bytes);
    r.magic(TEMB_MAGIC)?;
    let n = r.u32("channel count")? as usize;
    let h = r.u32("height")?;
    let w = r.u32("width")?;
    if n != periods.len() {
        return Err(Error::Shape(format!(
            "file has {n} channels, {} periods given",
            periods.len()
        )));
    }
    let hw = checked_area(w, h, "TEMB")?;
    let data = r.f32_vec(hw.saturating_mul(n), "embedding payload")?;
    r.finish()?;
    if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::format("TEMB", format!("value {v} outside [0, 255]")));
    }
    Ok(ThermalEmbedding {
        width: w as usize,
        height: h as usize,
        periods,
        data,
    })
}

/// Assembles an embedding from raw channel-major data (used by decoders and tests).
pub fn embedding_from_parts(
    width: usize,
    height: usize,
    periods: PeriodSet,
    data: Vec<f32>,
) -> Result<ThermalEmbedding> {
    if width * height * periods.len() != data.len() {
        return Err(Error::Shape(format!(
            "{} channels of {width}x{height} need {} values, got {}",
            periods.len(),
            width * height * periods.len(),
            data.len()
        )));
    }
    if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::invalid("data", format!("value {v} outside [0, 255]")));
    }
    Ok(ThermalEmbedding {
        width,
        height,
        periods,
        data,
    })
}
