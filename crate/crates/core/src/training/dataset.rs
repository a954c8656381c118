//! Scene datasets: in-memory training samples and the on-disk layout.
//!
//! A dataset directory holds `manifest.json`, one `TIRF` frame and one
//! `TLBL` label map per scene. The manifest records the generator seed,
//! scene parameters and camera profile so the directory can be rebuilt.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{checked_area, Reader};
use crate::error::{Error, Result};
use crate::radiometry::{counts_to_celsius, decode_tirf, encode_tirf, CameraProfile, RadiometricFrame};
use crate::training::scene::{generate_scenes, SceneAnnotations, SceneParams, SyntheticScene};

pub const MANIFEST_NAME: &str = "manifest.json";
const TLBL_MAGIC: &[u8; 4] = b"TLBL";

/// One training sample: the temperature the pipeline decodes from the raw
/// frame, plus annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub celsius: Vec<f32>,
    pub annotations: SceneAnnotations,
}

/// Samples sharing one image size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    width: usize,
    height: usize,
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let first = samples.first().ok_or(Error::Missing("scenes in dataset"))?;
        let (width, height) = (first.annotations.width(), first.annotations.height());
        for (i, s) in samples.iter().enumerate() {
            let (w, h) = (s.annotations.width(), s.annotations.height());
            if (w, h) != (width, height) || s.celsius.len() != w * h {
                return Err(Error::Shape(format!(
                    "scene {i} is {w}x{h} with {} temperatures, dataset is {width}x{height}",
                    s.celsius.len()
                )));
            }
        }
        Ok(Dataset { width, height, samples })
    }

    /// Decodes synthetic scenes through `profile`, as a camera pipeline would.
    pub fn from_scenes(scenes: &[SyntheticScene], profile: &CameraProfile) -> Result<Self> {
        let samples = scenes
            .iter()
            .map(|s| {
                Ok(Sample {
                    celsius: s.decode(profile)?.celsius().to_vec(),
                    annotations: s.annotations.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }
}

/// Label map file: magic `TLBL`, u32 width, u32 height, then two u8
/// planes, row-major: object labels followed by background region ids.
pub fn encode_labels(ann: &SceneAnnotations) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 2 * ann.labels().len());
    out.extend_from_slice(TLBL_MAGIC);
    out.extend_from_slice(&(ann.width() as u32).to_le_bytes());
    out.extend_from_slice(&(ann.height() as u32).to_le_bytes());
    out.extend_from_slice(ann.labels());
    out.extend_from_slice(ann.regions());
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<SceneAnnotations> {
    let mut r = Reader::new("TLBL", bytes);
    r.magic(TLBL_MAGIC)?;
    let w = r.u32("width")?;
    let h = r.u32("height")?;
    let n = checked_area(w, h, "TLBL")?;
    let labels = r.take(n, "labels")?.to_vec();
    let regions = r.take(n, "regions")?.to_vec();
    r.finish()?;
    SceneAnnotations::with_regions(w as usize, h as usize, labels, regions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub frame: String,
    pub labels: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator_seed: u64,
    pub width: usize,
    pub height: usize,
    pub ambient: (f64, f64),
    pub n_objects: usize,
    pub delta_range: (f64, f64),
    pub noise_std: f64,
    pub n_regions: usize,
    pub region_delta: (f64, f64),
    pub profile: CameraProfile,
    pub scenes: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn params(&self) -> SceneParams {
        SceneParams {
            width: self.width,
            height: self.height,
            ambient: self.ambient,
            n_objects: self.n_objects,
            delta_range: self.delta_range,
            noise_std: self.noise_std,
            n_regions: self.n_regions,
            region_delta: self.region_delta,
        }
    }
}

/// Generates `count` scenes and writes them with a manifest into `dir`,
/// which is created if needed.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    seed: u64,
    count: usize,
    params: &SceneParams,
    profile: &CameraProfile,
) -> Result<Manifest> {
    let dir = dir.as_ref();
    let scenes = generate_scenes(seed, count, params, profile)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for (i, scene) in scenes.iter().enumerate() {
        let entry = ManifestEntry {
            seed: scene.seed,
            frame: format!("scene_{i:04}.tirf"),
            labels: format!("scene_{i:04}.tlbl"),
        };
        write_file(&dir.join(&entry.frame), &encode_tirf(&scene.frame)?)?;
        write_file(&dir.join(&entry.labels), &encode_labels(&scene.annotations))?;
        entries.push(entry);
    }
    let manifest = Manifest {
        generator_seed: seed,
        width: params.width,
        height: params.height,
        ambient: params.ambient,
        n_objects: params.n_objects,
        delta_range: params.delta_range,
        noise_std: params.noise_std,
        n_regions: params.n_regions,
        region_delta: params.region_delta,
        profile: profile.clone(),
        scenes: entries,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_NAME), text.as_bytes())?;
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path: PathBuf = dir.as_ref().join(MANIFEST_NAME);
    let text = read_file(&path)?;
    serde_json::from_slice(&text).map_err(|e| Error::Parse {
        what: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Frames and labels of a dataset directory, in manifest order.
pub fn read_scenes(dir: impl AsRef<Path>) -> Result<(Manifest, Vec<(RadiometricFrame, SceneAnnotations)>)> {
    let dir = dir.as_ref();
    let manifest = read_manifest(dir)?;
    let mut out = Vec::with_capacity(manifest.scenes.len());
    for e in &manifest.scenes {
        let frame = decode_tirf(&read_file(&dir.join(&e.frame))?)?;
        let ann = decode_labels(&read_file(&dir.join(&e.labels))?)?;
        if (frame.width(), frame.height()) != (ann.width(), ann.height()) {
            return Err(Error::Shape(format!("{} and {} differ in size", e.frame, e.labels)));
        }
        out.push((frame, ann));
    }
    Ok((manifest, out))
}

/// Loads a dataset directory, decoding frames with the manifest's profile.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let (manifest, scenes) = read_scenes(dir)?;
    manifest.profile.validate()?;
    let samples = scenes
        .into_iter()
        .map(|(frame, annotations)| {
            Ok(Sample {
                celsius: counts_to_celsius(&frame, &manifest.profile)?.celsius().to_vec(),
                annotations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::scene::synthetic_profile;

    #[test]
    fn labels_round_trip() {
        let ann = SceneAnnotations::with_regions(3, 2, vec![0, 1, 1, 0, 2, 0], vec![1, 0, 0, 3, 0, 3]).unwrap();
        let bytes = encode_labels(&ann);
        assert_eq!(&bytes[..4], b"TLBL");
        assert_eq!(&bytes[4..12], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(decode_labels(&bytes).unwrap(), ann);
        assert!(decode_labels(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn directory_round_trip_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let profile = synthetic_profile();
        let params = SceneParams {
            width: 32,
            height: 24,
            ..SceneParams::default()
        };
        let manifest = write_dataset(dir.path(), 9, 4, &params, &profile).unwrap();
        assert_eq!(manifest.scenes.len(), 4);
        assert_eq!(read_manifest(dir.path()).unwrap(), manifest);
        let loaded = load_dataset(dir.path()).unwrap();
        let scenes = generate_scenes(9, 4, &params, &profile).unwrap();
        assert_eq!(loaded, Dataset::from_scenes(&scenes, &profile).unwrap());
        assert_eq!(manifest.params(), params);
    }

    #[test]
    fn empty_and_mixed_datasets_are_rejected() {
        assert!(Dataset::new(Vec::new()).is_err());
        let a = Sample {
            celsius: vec![0.0; 4],
            annotations: SceneAnnotations::from_labels(2, 2, vec![0; 4]).unwrap(),
        };
        let b = Sample {
            celsius: vec![0.0; 6],
            annotations: SceneAnnotations::from_labels(3, 2, vec![0; 6]).unwrap(),
        };
        assert!(Dataset::new(vec![a, b]).is_err());
    }

    #[test]
    fn missing_manifest_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dataset(dir.path()).unwrap_err().is_io());
    }
}
