//! Classical 14-bit to 8-bit tone-mapping operators used as baselines.
//!
//! All operators round half away from zero. Linear operators map a constant
//! frame to all zeros; histogram equalization maps it to all 255.

use crate::error::{Error, Result};
use crate::radiometry::RadiometricFrame;

/// 8-bit single-channel image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToneMapped8 {
    width: usize,
    height: usize,
    gray: Vec<u8>,
}

impl ToneMapped8 {
    pub fn new(width: usize, height: usize, gray: Vec<u8>) -> Result<Self> {
        if width.checked_mul(height) != Some(gray.len()) {
            return Err(Error::Shape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width.saturating_mul(height),
                gray.len()
            )));
        }
        Ok(ToneMapped8 { width, height, gray })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn gray(&self) -> &[u8] {
        &self.gray
    }

    pub fn into_gray(self) -> Vec<u8> {
        self.gray
    }
}

/// Rounds to the nearest gray level, halves away from zero, and clamps.
#[inline]
pub fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Shared linear rescale so every linear operator rounds identically.
#[inline]
fn rescale(count: f64, lo: f64, hi: f64) -> u8 {
    if hi <= lo {
        return 0;
    }
    quantize((count.clamp(lo, hi) - lo) * 255.0 / (hi - lo))
}

fn map_frame(frame: &RadiometricFrame, f: impl Fn(usize, u32) -> u8) -> ToneMapped8 {
    let gray = frame.counts().iter().enumerate().map(|(i, &c)| f(i, c)).collect();
    ToneMapped8 {
        width: frame.width(),
        height: frame.height(),
        gray,
    }
}

fn min_max(counts: &[u32]) -> (u32, u32) {
    counts
        .iter()
        .fold((u32::MAX, u32::MIN), |(lo, hi), &c| (lo.min(c), hi.max(c)))
}

const RAW_FULL_SCALE: f64 = ((1u32 << 14) - 1) as f64;

/// Fixed linear rescale of the full 14-bit range.
pub fn tonemap_raw(frame: &RadiometricFrame) -> ToneMapped8 {
    map_frame(frame, |_, c| quantize(f64::from(c) * 255.0 / RAW_FULL_SCALE))
}

/// Linear rescale between the frame minimum and maximum.
pub fn tonemap_minmax(frame: &RadiometricFrame) -> ToneMapped8 {
    if frame.is_empty() {
        return map_frame(frame, |_, _| 0);
    }
    let (lo, hi) = min_max(frame.counts());
    let (lo, hi) = (f64::from(lo), f64::from(hi));
    map_frame(frame, |_, c| rescale(f64::from(c), lo, hi))
}

/// Nearest-rank percentile: the smallest value with at least `pct` of the
/// samples at or below it. `sorted` must be ascending and nonempty.
pub fn nearest_rank(sorted: &[u32], pct: f64) -> u32 {
    let n = sorted.len();
    // The epsilon absorbs representation error such as 0.99 * 100 = 99.000...01.
    let rank = (pct * n as f64 - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Linear rescale between the `lo_pct` and `hi_pct` nearest-rank percentiles.
pub fn tonemap_clip(frame: &RadiometricFrame, lo_pct: f64, hi_pct: f64) -> Result<ToneMapped8> {
    if !(0.0..=1.0).contains(&lo_pct) || !(0.0..=1.0).contains(&hi_pct) || lo_pct >= hi_pct {
        return Err(Error::invalid(
            "percentiles",
            format!("need 0 <= lo < hi <= 1, got lo={lo_pct}, hi={hi_pct}"),
        ));
    }
    if frame.is_empty() {
        return Ok(map_frame(frame, |_, _| 0));
    }
    let mut sorted = frame.counts().to_vec();
    sorted.sort_unstable();
    let lo = f64::from(nearest_rank(&sorted, lo_pct));
    let hi = f64::from(nearest_rank(&sorted, hi_pct));
    Ok(map_frame(frame, |_, c| rescale(f64::from(c), lo, hi)))
}

/// How the occupied count range is split into histogram bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeBins {
    /// Bins of a fixed width in counts.
    Width(u32),
    /// A fixed number of equal-width bins.
    Count(u32),
}

impl Default for HeBins {
    fn default() -> Self {
        HeBins::Width(30)
    }
}

/// Bin-based histogram equalization over the occupied range `[min, max]`.
pub fn tonemap_he(frame: &RadiometricFrame, bins: HeBins) -> Result<ToneMapped8> {
    match bins {
        HeBins::Width(0) => return Err(Error::invalid("bin_width", "must be at least 1")),
        HeBins::Count(0) => return Err(Error::invalid("bin_count", "must be at least 1")),
        _ => {}
    }
    if frame.is_empty() {
        return Ok(map_frame(frame, |_, _| 0));
    }
    let (lo, hi) = min_max(frame.counts());
    let span = u64::from(hi - lo) + 1;
    let (n_bins, bin_of): (usize, Box<dyn Fn(u32) -> usize>) = match bins {
        HeBins::Width(w) => {
            let w = u64::from(w);
            (
                span.div_ceil(w) as usize,
                Box::new(move |c| (u64::from(c - lo) / w) as usize),
            )
        }
        HeBins::Count(k) => {
            let k = u64::from(k).min(span);
            (k as usize, Box::new(move |c| (u64::from(c - lo) * k / span) as usize))
        }
    };
    let mut hist = vec![0u64; n_bins];
    for &c in frame.counts() {
        hist[bin_of(c)] += 1;
    }
    let total = frame.len() as f64;
    let mut acc = 0u64;
    let lut: Vec<u8> = hist
        .iter()
        .map(|&h| {
            acc += h;
            quantize(255.0 * acc as f64 / total)
        })
        .collect();
    Ok(map_frame(frame, |_, c| lut[bin_of(c)]))
}

/// Splits `len` into `parts` contiguous cells; returns the cell boundaries.
fn cell_bounds(len: usize, parts: usize) -> Vec<usize> {
    (0..=parts).map(|k| k * len / parts).collect()
}

/// Interpolates a per-cell field at integer coordinate `pos` given the cell
/// centers, holding the value constant beyond the outermost centers.
/// Returns the lower cell index and the fraction toward the next one.
fn locate(centers: &[f64], pos: f64) -> (usize, f64) {
    if centers.len() == 1 || pos <= centers[0] {
        return (0, 0.0);
    }
    let last = centers.len() - 1;
    if pos >= centers[last] {
        return (last, 0.0);
    }
    let k = centers.partition_point(|&c| c <= pos) - 1;
    (k, (pos - centers[k]) / (centers[k + 1] - centers[k]))
}

/// Grid-interpolated local min/max rescaling.
///
/// The frame is tiled into `rows × cols` cells. Each cell's minimum and
/// maximum are placed at the cell center and bilinearly interpolated to
/// every pixel; the pixel is then rescaled linearly between its
/// interpolated min and max.
pub fn tonemap_fieldscale_lite(frame: &RadiometricFrame, rows: usize, cols: usize) -> Result<ToneMapped8> {
    let (w, h) = (frame.width(), frame.height());
    if rows == 0 || cols == 0 || rows > h || cols > w {
        return Err(Error::invalid(
            "grid",
            format!("{rows}x{cols} grid must be nonzero and fit a {h}x{w} image"),
        ));
    }
    let rb = cell_bounds(h, rows);
    let cb = cell_bounds(w, cols);
    let mut mins = vec![f64::INFINITY; rows * cols];
    let mut maxs = vec![f64::NEG_INFINITY; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let k = r * cols + c;
            for y in rb[r]..rb[r + 1] {
                for &v in &frame.counts()[y * w + cb[c]..y * w + cb[c + 1]] {
                    mins[k] = mins[k].min(f64::from(v));
                    maxs[k] = maxs[k].max(f64::from(v));
                }
            }
        }
    }
    let centers = |b: &[usize]| -> Vec<f64> { b.windows(2).map(|p| (p[0] + p[1] - 1) as f64 / 2.0).collect() };
    let ry = centers(&rb);
    let cx = centers(&cb);
    // a + t(b - a) keeps equal corners exact, so a 1x1 grid matches min-max.
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + t * (b - a) };
    let cols_lookup: Vec<(usize, f64)> = (0..w).map(|x| locate(&cx, x as f64)).collect();
    let mut gray = Vec::with_capacity(w * h);
    for y in 0..h {
        let (r0, ty) = locate(&ry, y as f64);
        let r1 = (r0 + 1).min(rows - 1);
        for x in 0..w {
            let (c0, tx) = cols_lookup[x];
            let c1 = (c0 + 1).min(cols - 1);
            let field = |f: &[f64]| {
                let top = lerp(f[r0 * cols + c0], f[r0 * cols + c1], tx);
                let bottom = lerp(f[r1 * cols + c0], f[r1 * cols + c1], tx);
                lerp(top, bottom, ty)
            };
            let count = f64::from(frame.counts()[y * w + x]);
            gray.push(rescale(count, field(&mins), field(&maxs)));
        }
    }
    ToneMapped8::new(w, h, gray)
}
