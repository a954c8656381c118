//! Output files are written to a temporary sibling and renamed into place,
//! so a failed command never leaves a partial file behind.

use std::fs;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, ImageFormat, Luma, Rgb};
use tempfile::NamedTempFile;

use crate::error::{CliError, Result};

fn parent_of(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = parent_of(path);
    let mut tmp = NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// Builds a directory under a temporary name next to `path` and renames it
/// into place once `fill` succeeds. `path` must not already exist.
pub fn write_dir_atomic<T>(path: &Path, fill: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    if path.exists() {
        return Err(CliError::usage(format!("{} already exists", path.display())));
    }
    let dir = parent_of(path);
    let tmp = tempfile::Builder::new()
        .prefix(".tirtone-")
        .tempdir_in(&dir)
        .map_err(|e| CliError::io(&dir, e))?;
    let out = fill(tmp.path())?;
    let staged = tmp.keep();
    fs::rename(&staged, path).map_err(|e| {
        let _ = fs::remove_dir_all(&staged);
        CliError::io(path, e)
    })?;
    Ok(out)
}

fn encode_png<P: image::Pixel<Subpixel = u8> + image::PixelWithColorType>(
    w: usize,
    h: usize,
    data: Vec<u8>,
) -> Result<Vec<u8>> {
    let img = ImageBuffer::<P, _>::from_raw(w as u32, h as u32, data)
        .ok_or_else(|| CliError::usage("image buffer does not match its dimensions"))?;
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| CliError::usage(format!("PNG encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn write_gray_png(path: &Path, w: usize, h: usize, gray: Vec<u8>) -> Result<()> {
    write_atomic(path, &encode_png::<Luma<u8>>(w, h, gray)?)
}

pub fn write_rgb_png(path: &Path, w: usize, h: usize, rgb: Vec<u8>) -> Result<()> {
    write_atomic(path, &encode_png::<Rgb<u8>>(w, h, rgb)?)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}
