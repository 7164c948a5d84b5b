//! Deterministic patch extraction.
//!
//! The image is first resized so its shorter side is 448 (upscaling when
//! needed), then 224 x 224 crops are taken: the classic five-crop (four
//! corners plus center) for n = 5, a single center crop for n = 1, and an
//! evenly spaced grid for any other n. Same image and n always give the same
//! crops.

use crate::error::{Error, Result};

use super::ImageInput;

/// Side length of each crop.
pub const CROP_SIZE: u32 = 224;

/// Shorter-side target before cropping; twice the crop size so the five-crop
/// tiles a square image exactly.
pub const CROP_BASE_SIDE: u32 = 448;

/// Top-left offsets of the crops on a `w` x `h` canvas.
fn crop_offsets(w: u32, h: u32, n: usize) -> Vec<(u32, u32)> {
    let max_x = w - CROP_SIZE;
    let max_y = h - CROP_SIZE;
    if n == 5 {
        return vec![
            (0, 0),
            (max_x, 0),
            (0, max_y),
            (max_x, max_y),
            (max_x / 2, max_y / 2),
        ];
    }
    // grid layout: cols x rows covering n positions, row-major
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols);
    let place = |idx: usize, count: usize, max: u32| -> u32 {
        if count <= 1 {
            max / 2
        } else {
            ((idx as f64) * (max as f64) / ((count - 1) as f64)).round() as u32
        }
    };
    let mut offsets = Vec::with_capacity(n);
    'outer: for r in 0..rows {
        for c in 0..cols {
            offsets.push((place(c, cols, max_x), place(r, rows, max_y)));
            if offsets.len() == n {
                break 'outer;
            }
        }
    }
    offsets
}

/// Extracts `n` deterministic 224 x 224 crops from the image.
pub fn crop_patches(img: &ImageInput, n: usize) -> Result<Vec<ImageInput>> {
    if n == 0 {
        return Err(Error::Input("patch count must be at least 1".into()));
    }
    let base = img.resized_shorter_side(CROP_BASE_SIDE);
    let (w, h) = base.pixels.dimensions();
    let offsets = crop_offsets(w, h, n);
    let patches = offsets
        .into_iter()
        .enumerate()
        .map(|(i, (x, y))| ImageInput {
            pixels: image::imageops::crop_imm(&base.pixels, x, y, CROP_SIZE, CROP_SIZE)
                .to_image(),
            id: format!("{}#patch{i}", img.id),
        })
        .collect();
    Ok(patches)
}
