//! Synthetic radiometric scenes: a smooth ambient temperature field with
//! hot and cold elliptical objects, encoded to raw counts through the
//! inverse of the temperature conversion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::radiometry::{counts_to_celsius, CameraProfile, RadiometricFrame, TemperatureMap};

/// Profile used to encode synthetic scenes.
pub fn synthetic_profile() -> CameraProfile {
    CameraProfile {
        name: "synthetic".into(),
        planck_p: 1428.0,
        planck_r: 366545.0,
        offset_o: 342.0,
        calib_f: 1.0,
        count_min: 343,
        count_max: 16383,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    /// Ambient field range in °C.
    pub ambient: (f64, f64),
    pub n_objects: usize,
    /// Magnitude range of object temperature offsets in °C; the sign is random.
    pub delta_range: (f64, f64),
    /// Standard deviation of additive count noise.
    pub noise_std: f64,
    /// Straight cuts splitting the background into low-contrast regions.
    pub n_regions: usize,
    /// Magnitude range of the temperature step across each cut, in °C.
    pub region_delta: (f64, f64),
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 64,
            height: 64,
            ambient: (-5.0, 35.0),
            n_objects: 3,
            delta_range: (5.0, 40.0),
            noise_std: 1.0,
            n_regions: 4,
            region_delta: (1.0, 4.0),
        }
    }
}

/// Per-pixel object labels (0 = background, `k` = object `k`), background
/// region ids, and the derived boundary map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneAnnotations {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    regions: Vec<u8>,
    n_objects: usize,
    edges: Vec<bool>,
}

impl SceneAnnotations {
    /// Objects on a single background region.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        let regions = vec![0; labels.len()];
        SceneAnnotations::with_regions(width, height, labels, regions)
    }

    /// Objects plus background region ids. Region ids are ignored inside
    /// objects.
    pub fn with_regions(width: usize, height: usize, labels: Vec<u8>, regions: Vec<u8>) -> Result<Self> {
        if width * height != labels.len() || labels.len() != regions.len() {
            return Err(Error::Shape(format!(
                "{width}x{height} annotations need {} entries, got {} labels and {} regions",
                width * height,
                labels.len(),
                regions.len()
            )));
        }
        let n_objects = labels.iter().copied().max().unwrap_or(0) as usize;
        let keys: Vec<u16> = labels
            .iter()
            .zip(&regions)
            .map(|(&l, &r)| if l > 0 { 0x100 | u16::from(l) } else { u16::from(r) })
            .collect();
        let edges = boundary_map(width, height, &keys);
        Ok(SceneAnnotations {
            width,
            height,
            labels,
            regions,
            n_objects,
            edges,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn regions(&self) -> &[u8] {
        &self.regions
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    /// Binary mask of object `k` (1-based).
    pub fn mask(&self, k: usize) -> Vec<bool> {
        self.labels.iter().map(|&l| l as usize == k).collect()
    }

    /// Boundaries between objects, background and background regions.
    pub fn edges(&self) -> &[bool] {
        &self.edges
    }
}

/// A pixel is on a boundary when its 3×3 neighbourhood holds more than one
/// key, so both sides of every border are marked.
pub fn boundary_map<K: Copy + PartialEq>(width: usize, height: usize, keys: &[K]) -> Vec<bool> {
    let mut edges = vec![false; keys.len()];
    for y in 0..height {
        for x in 0..width {
            let l = keys[y * width + x];
            'scan: for ny in y.saturating_sub(1)..(y + 2).min(height) {
                for nx in x.saturating_sub(1)..(x + 2).min(width) {
                    if keys[ny * width + nx] != l {
                        edges[y * width + x] = true;
                        break 'scan;
                    }
                }
            }
        }
    }
    edges
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub frame: RadiometricFrame,
    /// Noise-free ground-truth temperature.
    pub temp: TemperatureMap,
    pub annotations: SceneAnnotations,
}

impl SyntheticScene {
    /// Temperature decoded from the raw frame, as the pipeline sees it.
    pub fn decode(&self, profile: &CameraProfile) -> Result<TemperatureMap> {
        counts_to_celsius(&self.frame, profile)
    }
}

const MAX_PLACEMENT_ATTEMPTS: usize = 2000;
const MAX_REGION_CUTS: usize = 8;
/// Minimum gap in pixels between distinct objects.
const OBJECT_GAP: usize = 2;

pub fn generate_scene(seed: u64, params: &SceneParams, profile: &CameraProfile) -> Result<SyntheticScene> {
    let (w, h) = (params.width, params.height);
    if w < 16 || h < 16 {
        return Err(Error::invalid(
            "dimensions",
            format!("{w}x{h} is below the 16x16 minimum"),
        ));
    }
    if params.n_objects > u8::MAX as usize {
        return Err(Error::invalid("n_objects", "at most 255 objects"));
    }
    if params.n_regions > MAX_REGION_CUTS {
        return Err(Error::invalid("n_regions", format!("at most {MAX_REGION_CUTS} cuts")));
    }
    let (rmin, rmax) = params.region_delta;
    if !(rmin >= 0.0 && rmin <= rmax) {
        return Err(Error::invalid("region_delta", format!("bad range [{rmin}, {rmax}]")));
    }
    let (lo, hi) = params.ambient;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::invalid("ambient", format!("bad range [{lo}, {hi}]")));
    }
    let (dmin, dmax) = params.delta_range;
    if !(dmin >= 0.0 && dmin <= dmax) {
        return Err(Error::invalid("delta_range", format!("bad range [{dmin}, {dmax}]")));
    }
    if !(params.noise_std >= 0.0) {
        return Err(Error::invalid("noise_std", "must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Ambient: random quadratic in normalized coordinates, rescaled onto a
    // random sub-interval covering at least 30% of the ambient range.
    let coef: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let span = rng.random_range(0.3..=1.0) * (hi - lo);
    let start = lo + rng.random_range(0.0..=1.0) * (hi - lo - span);
    let nx = |x: usize| 2.0 * x as f64 / (w - 1) as f64 - 1.0;
    let ny = |y: usize| 2.0 * y as f64 / (h - 1) as f64 - 1.0;
    let mut field: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = (nx(i % w), ny(i / w));
            coef[0] * x + coef[1] * y + coef[2] * x * y + coef[3] * x * x + coef[4] * y * y
        })
        .collect();
    let fmin = field.iter().copied().fold(f64::INFINITY, f64::min);
    let fmax = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for v in &mut field {
        *v = if fmax - fmin > 1e-12 {
            start + (*v - fmin) / (fmax - fmin) * span
        } else {
            start + span / 2.0
        };
    }

    let mut labels = vec![0u8; w * h];
    let short = w.min(h) as f64;
    let (amin, amax) = ((short / 16.0).max(2.0), (short / 6.0).max(3.0));
    for k in 1..=params.n_objects {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let ax = rng.random_range(amin..=amax);
            let ay = rng.random_range(amin..=amax);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            let reach = ax.max(ay) + OBJECT_GAP as f64;
            let cx = rng.random_range(reach..=(w as f64 - 1.0 - reach).max(reach));
            let cy = rng.random_range(reach..=(h as f64 - 1.0 - reach).max(reach));
            let (s, c) = theta.sin_cos();
            let inside = |x: usize, y: usize| {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let u = (dx * c + dy * s) / ax;
                let v = (-dx * s + dy * c) / ay;
                u * u + v * v <= 1.0
            };
            let pixels: Vec<usize> = (0..w * h).filter(|&i| inside(i % w, i / w)).collect();
            if pixels.is_empty() {
                continue;
            }
            let clear = pixels.iter().all(|&i| {
                let (x, y) = (i % w, i / w);
                (y.saturating_sub(OBJECT_GAP)..(y + OBJECT_GAP + 1).min(h)).all(|yy| {
                    (x.saturating_sub(OBJECT_GAP)..(x + OBJECT_GAP + 1).min(w)).all(|xx| labels[yy * w + xx] == 0)
                })
            });
            if !clear {
                continue;
            }
            let delta = rng.random_range(dmin..=dmax) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for &i in &pixels {
                labels[i] = k as u8;
                field[i] += delta;
            }
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::invalid(
                "n_objects",
                format!("could not place object {k} of {} in a {w}x{h} scene", params.n_objects),
            ));
        }
    }

    // Background cuts: each straight line through the image raises the
    // background on one side by a small step. Region ids are the bit
    // patterns of which side of each cut a pixel lies on.
    let mut regions = vec![0u8; w * h];
    for k in 0..params.n_regions {
        let px = rng.random_range(0.0..w as f64);
        let py = rng.random_range(0.0..h as f64);
        let (s, c) = rng.random_range(0.0..std::f64::consts::PI).sin_cos();
        let step = rng.random_range(rmin..=rmax) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        for i in 0..w * h {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            if (x - px) * c + (y - py) * s > 0.0 {
                regions[i] |= 1 << k;
                if labels[i] == 0 {
                    field[i] += step;
                }
            }
        }
    }
    for (r, &l) in regions.iter_mut().zip(&labels) {
        if l > 0 {
            *r = 0;
        }
    }

    let noise = Normal::new(0.0, params.noise_std.max(f64::MIN_POSITIVE)).expect("valid std");
    let mut counts = Vec::with_capacity(w * h);
    for &t in &field {
        let mut s = profile.celsius_to_count(t);
        if params.noise_std > 0.0 {
            s += noise.sample(&mut rng);
        }
        let s = s
            .round()
            .clamp(f64::from(profile.count_min), f64::from(profile.count_max));
        counts.push(s as u32);
    }
    let bit_depth = (32 - profile.count_max.leading_zeros()).max(1) as u8;
    let frame = RadiometricFrame::new(w, h, bit_depth, counts)?;
    let temp = TemperatureMap::new(w, h, field.iter().map(|&t| t as f32).collect())?;
    Ok(SyntheticScene {
        seed,
        frame,
        temp,
        annotations: SceneAnnotations::with_regions(w, h, labels, regions)?,
    })
}

/// Generates `count` scenes whose seeds derive from `seed`.
pub fn generate_scenes(
    seed: u64,
    count: usize,
    params: &SceneParams,
    profile: &CameraProfile,
) -> Result<Vec<SyntheticScene>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s: u64 = rng.random();
            generate_scene(s, params, profile)
        })
        .collect()
}
