//! Raw radiometric frames and their conversion to absolute temperature.
//!
//! A radiometric camera reports a count `S` per pixel. With the Planck
//! constants `P`, `R` and the camera offset `O` and calibration `F`, the
//! scene temperature in degrees Celsius is
//!
//! ```text
//! T = P / ln(R / (S - O) + F) - 273.15
//! ```
//!
//! The offset `O` is applied at conversion time: frames hold the counts as
//! read from the sensor, before any offset is subtracted.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{checked_area, Reader};
use crate::error::{Error, Result};

pub const KELVIN_OFFSET: f64 = 273.15;

/// Planck constants and per-camera calibration for count to temperature
/// conversion, plus the count range the profile is declared valid for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraProfile {
    pub name: String,
    pub planck_p: f64,
    pub planck_r: f64,
    pub offset_o: f64,
    pub calib_f: f64,
    pub count_min: u32,
    pub count_max: u32,
}

impl CameraProfile {
    /// Checks the profile invariants, including that the log argument
    /// `R/(S-O) + F` stays above one over `[count_min, count_max]`.
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("planck_p", self.planck_p),
            ("planck_r", self.planck_r),
            ("offset_o", self.offset_o),
            ("calib_f", self.calib_f),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid(field, "must be finite"));
            }
        }
        if self.planck_p <= 0.0 {
            return Err(Error::invalid("planck_p", "must be positive"));
        }
        if self.planck_r <= 0.0 {
            return Err(Error::invalid("planck_r", "must be positive"));
        }
        if self.count_min > self.count_max {
            return Err(Error::invalid(
                "count_min",
                format!("{} exceeds count_max {}", self.count_min, self.count_max),
            ));
        }
        if f64::from(self.count_min) <= self.offset_o {
            return Err(Error::invalid(
                "count_min",
                format!(
                    "{} must exceed offset_o {} so that S - O > 0",
                    self.count_min, self.offset_o
                ),
            ));
        }
        // R/(S-O) is decreasing in S, so the smallest log argument sits at count_max.
        let arg = self.log_argument(f64::from(self.count_max));
        if !(arg > 1.0) {
            return Err(Error::invalid(
                "count_max",
                format!(
                    "log argument R/(S-O)+F = {arg} is not above 1 at S = {}",
                    self.count_max
                ),
            ));
        }
        Ok(())
    }

    #[inline]
    fn log_argument(&self, count: f64) -> f64 {
        self.planck_r / (count - self.offset_o) + self.calib_f
    }

    /// Temperature in °C of a single count, evaluated in double precision.
    pub fn count_to_celsius(&self, count: f64) -> Option<f64> {
        if count <= self.offset_o {
            return None;
        }
        let arg = self.log_argument(count);
        if !(arg > 1.0) {
            return None;
        }
        Some(self.planck_p / arg.ln() - KELVIN_OFFSET)
    }

    /// Algebraic inverse of [`count_to_celsius`](Self::count_to_celsius):
    /// the (real-valued) count that encodes `celsius`.
    pub fn celsius_to_count(&self, celsius: f64) -> f64 {
        let kelvin = celsius + KELVIN_OFFSET;
        self.offset_o + self.planck_r / ((self.planck_p / kelvin).exp() - self.calib_f)
    }
}

/// Parses and validates a profile from its TOML text form.
pub fn parse_profile(text: &str) -> Result<CameraProfile> {
    let profile: CameraProfile = toml::from_str(text).map_err(|e| Error::Parse {
        what: "camera profile".into(),
        reason: e.to_string(),
    })?;
    profile.validate()?;
    Ok(profile)
}

pub fn load_profile(path: impl AsRef<Path>) -> Result<CameraProfile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_profile(&text)
}

pub fn profile_to_toml(profile: &CameraProfile) -> String {
    toml::to_string(profile).expect("profile fields are always serializable")
}

/// Single-channel raw count image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadiometricFrame {
    width: usize,
    height: usize,
    bit_depth: u8,
    counts: Vec<u32>,
}

impl RadiometricFrame {
    pub fn new(width: usize, height: usize, bit_depth: u8, counts: Vec<u32>) -> Result<Self> {
        if !(1..=31).contains(&bit_depth) {
            return Err(Error::invalid("bit_depth", format!("{bit_depth} outside 1..=31")));
        }
        if width.checked_mul(height) != Some(counts.len()) {
            return Err(Error::Shape(format!(
                "{width}x{height} frame needs {} counts, got {}",
                width.saturating_mul(height),
                counts.len()
            )));
        }
        let limit = (1u32 << bit_depth) - 1;
        if let Some((i, &c)) = counts.iter().enumerate().find(|(_, &c)| c > limit) {
            return Err(Error::invalid(
                "counts",
                format!("count {c} at index {i} exceeds {bit_depth}-bit maximum {limit}"),
            ));
        }
        Ok(RadiometricFrame {
            width,
            height,
            bit_depth,
            counts,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Per-pixel absolute temperature in °C.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureMap {
    width: usize,
    height: usize,
    celsius: Vec<f32>,
}

impl TemperatureMap {
    pub fn new(width: usize, height: usize, celsius: Vec<f32>) -> Result<Self> {
        if width.checked_mul(height) != Some(celsius.len()) {
            return Err(Error::Shape(format!(
                "{width}x{height} temperature map needs {} values, got {}",
                width.saturating_mul(height),
                celsius.len()
            )));
        }
        if let Some(i) = celsius.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "celsius",
                format!("non-finite temperature at index {i}"),
            ));
        }
        Ok(TemperatureMap { width, height, celsius })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn celsius(&self) -> &[f32] {
        &self.celsius
    }
}

/// Converts every count of `frame` to °C under `profile`.
///
/// Fails on the first pixel whose count is at or below the offset or whose
/// log argument is not above one; such pixels mean the profile does not
/// belong to the frame.
pub fn counts_to_celsius(frame: &RadiometricFrame, profile: &CameraProfile) -> Result<TemperatureMap> {
    let mut celsius = Vec::with_capacity(frame.len());
    for (index, &count) in frame.counts().iter().enumerate() {
        let s = f64::from(count);
        if s <= profile.offset_o {
            return Err(Error::Saturation {
                index,
                count,
                reason: "count at or below camera offset",
            });
        }
        let t = profile.count_to_celsius(s).ok_or(Error::Saturation {
            index,
            count,
            reason: "log argument not above 1",
        })?;
        celsius.push(t as f32);
    }
    TemperatureMap::new(frame.width(), frame.height(), celsius)
}

/// Container formats accepted by [`load_raw_frame`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameFormat {
    /// 16-bit single-channel grayscale PNG.
    Png16,
    /// `TIRF` little-endian binary frame.
    RawBinary,
}

impl FrameFormat {
    /// Guesses the format from a file extension (`.png` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") => FrameFormat::Png16,
            _ => FrameFormat::RawBinary,
        }
    }
}

const TIRF_MAGIC: &[u8; 4] = b"TIRF";
const TIRF_VERSION: u16 = 1;

/// Decodes a `TIRF` frame: magic, u16 version, u16 bit depth, u32 width,
/// u32 height, then width·height u16 counts, all little-endian.
pub fn decode_tirf(bytes: &[u8]) -> Result<RadiometricFrame> {
    let mut r = Reader::new("TIRF", bytes);
    r.magic(TIRF_MAGIC)?;
    let version = r.u16("version")?;
    if version != TIRF_VERSION {
        return Err(Error::format("TIRF", format!("unsupported version {version}")));
    }
    let bit_depth = r.u16("bit depth")?;
    if !(1..=16).contains(&bit_depth) {
        return Err(Error::format("TIRF", format!("bit depth {bit_depth} outside 1..=16")));
    }
    let width = r.u32("width")?;
    let height = r.u32("height")?;
    let n = checked_area(width, height, "TIRF")?;
    let payload = r.take(n.saturating_mul(2), "pixel payload")?;
    r.finish()?;
    let counts = payload
        .chunks_exact(2)
        .map(|c| u32::from(u16::from_le_bytes([c[0], c[1]])))
        .collect();
    RadiometricFrame::new(width as usize, height as usize, bit_depth as u8, counts)
}

pub fn encode_tirf(frame: &RadiometricFrame) -> Result<Vec<u8>> {
    if frame.bit_depth() > 16 {
        return Err(Error::invalid(
            "bit_depth",
            format!("{} does not fit the 16-bit TIRF payload", frame.bit_depth()),
        ));
    }
    let mut out = Vec::with_capacity(16 + frame.len() * 2);
    out.extend_from_slice(TIRF_MAGIC);
    out.extend_from_slice(&TIRF_VERSION.to_le_bytes());
    out.extend_from_slice(&u16::from(frame.bit_depth()).to_le_bytes());
    out.extend_from_slice(&(frame.width() as u32).to_le_bytes());
    out.extend_from_slice(&(frame.height() as u32).to_le_bytes());
    for &c in frame.counts() {
        out.extend_from_slice(&(c as u16).to_le_bytes());
    }
    Ok(out)
}

/// Loads a raw frame. For PNG input the bit depth is 16 unless `mask_14bit`
/// is set, in which case only the low 14 bits of each sample are kept.
pub fn load_raw_frame(path: impl AsRef<Path>, format: FrameFormat, mask_14bit: bool) -> Result<RadiometricFrame> {
    let path = path.as_ref();
    let frame = match format {
        FrameFormat::RawBinary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            decode_tirf(&bytes)?
        }
        FrameFormat::Png16 => {
            let img = image::open(path).map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::format("png16", other.to_string()),
            })?;
            let gray = match img {
                image::DynamicImage::ImageLuma16(g) => g,
                other => {
                    return Err(Error::format(
                        "png16",
                        format!("expected 16-bit grayscale, got {:?}", other.color()),
                    ))
                }
            };
            let (w, h) = gray.dimensions();
            let counts = gray.into_raw().into_iter().map(u32::from).collect();
            RadiometricFrame::new(w as usize, h as usize, 16, counts)?
        }
    };
    if mask_14bit && frame.bit_depth() > 14 {
        let counts = frame.counts().iter().map(|&c| c & 0x3FFF).collect();
        return RadiometricFrame::new(frame.width(), frame.height(), 14, counts);
    }
    Ok(frame)
}

pub fn save_png16(frame: &RadiometricFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if frame.bit_depth() > 16 {
        return Err(Error::invalid("bit_depth", "does not fit a 16-bit PNG"));
    }
    let raw: Vec<u16> = frame.counts().iter().map(|&c| c as u16).collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(frame.width() as u32, frame.height() as u32, raw)
        .ok_or_else(|| Error::Shape("frame buffer does not match dimensions".into()))?;
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("png16", other.to_string()),
    })
}

const TCEL_MAGIC: &[u8; 4] = b"TCEL";

/// Temperature map file: magic `TCEL`, u32 width, u32 height, little-endian
/// f32 °C payload, row-major.
pub fn encode_temperature(map: &TemperatureMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + map.celsius().len() * 4);
    out.extend_from_slice(TCEL_MAGIC);
    out.extend_from_slice(&(map.width() as u32).to_le_bytes());
    out.extend_from_slice(&(map.height() as u32).to_le_bytes());
    crate::codec::put_f32s(&mut out, map.celsius().iter().copied());
    out
}

pub fn decode_temperature(bytes: &[u8]) -> Result<TemperatureMap> {
    let mut r = Reader::new("TCEL", bytes);
    r.magic(TCEL_MAGIC)?;
    let w = r.u32("width")?;
    let h = r.u32("height")?;
    let n = checked_area(w, h, "TCEL")?;
    let celsius = r.f32_vec(n, "temperature payload")?;
    r.finish()?;
    TemperatureMap::new(w as usize, h as usize, celsius)
}
