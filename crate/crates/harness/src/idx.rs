//! IDX image/label file parsing and writing.
//!
//! The format is big-endian: a magic number (0x00000803 for unsigned-byte
//! images with 3 dimensions, 0x00000801 for label vectors), the dimension
//! sizes as u32s, then the raw payload. Pixels are scaled to [0, 1].

use crate::error::{HarnessError, Result};
use ssdrl_core::models::Example;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(reader: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader
        .read_exact(&mut buf)
        .map_err(|_| HarnessError::format(format!("truncated file while reading {what}")))?;
    Ok(u32::from_be_bytes(buf))
}

/// Parse a matching pair of IDX image and label files into labeled examples.
pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<Example>> {
    let mut images = BufReader::new(File::open(images_path)?);
    let magic = read_u32_be(&mut images, "image magic")?;
    if magic != IMAGE_MAGIC {
        return Err(HarnessError::format(format!(
            "bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_u32_be(&mut images, "image count")? as usize;
    let rows = read_u32_be(&mut images, "rows")? as usize;
    let cols = read_u32_be(&mut images, "cols")? as usize;
    let pixels = rows * cols;
    let mut image_data = vec![0u8; count * pixels];
    images
        .read_exact(&mut image_data)
        .map_err(|_| HarnessError::format("truncated image payload"))?;

    let mut labels = BufReader::new(File::open(labels_path)?);
    let magic = read_u32_be(&mut labels, "label magic")?;
    if magic != LABEL_MAGIC {
        return Err(HarnessError::format(format!(
            "bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let label_count = read_u32_be(&mut labels, "label count")? as usize;
    if label_count != count {
        return Err(HarnessError::format(format!(
            "count mismatch: {count} images vs {label_count} labels"
        )));
    }
    let mut label_data = vec![0u8; label_count];
    labels
        .read_exact(&mut label_data)
        .map_err(|_| HarnessError::format("truncated label payload"))?;

    let mut examples = Vec::with_capacity(count);
    for (chunk, &label) in image_data.chunks_exact(pixels).zip(&label_data) {
        let features: Vec<f64> = chunk.iter().map(|&b| b as f64 / 255.0).collect();
        examples.push(Example::labeled(features, label as usize));
    }
    Ok(examples)
}

/// Write examples out as an IDX image/label pair. Features are clamped to
/// [0, 1] and quantized to bytes; the inverse of [`read_idx`] up to that
/// quantization.
pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    examples: &[Example],
    rows: usize,
    cols: usize,
) -> Result<()> {
    let pixels = rows * cols;
    let mut images = BufWriter::new(File::create(images_path)?);
    images.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    images.write_all(&(examples.len() as u32).to_be_bytes())?;
    images.write_all(&(rows as u32).to_be_bytes())?;
    images.write_all(&(cols as u32).to_be_bytes())?;
    for ex in examples {
        if ex.features.len() != pixels {
            return Err(HarnessError::format(format!(
                "example has {} pixels, expected {pixels}",
                ex.features.len()
            )));
        }
        let bytes: Vec<u8> = ex
            .features
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        images.write_all(&bytes)?;
    }
    images.flush()?;

    let mut labels = BufWriter::new(File::create(labels_path)?);
    labels.write_all(&LABEL_MAGIC.to_be_bytes())?;
    labels.write_all(&(examples.len() as u32).to_be_bytes())?;
    for ex in examples {
        let label = ex
            .label
            .ok_or_else(|| HarnessError::format("cannot write an unlabeled example"))?;
        labels.write_all(&[label as u8])?;
    }
    labels.flush()?;
    Ok(())
}
