//! Minimal scatter-plot renderer (prediction vs. MOS) with no font or GUI
//! dependencies: axes, gridlines, numeric tick labels from a built-in 3x5
//! digit face, and one square marker per point.

use anyhow::Result;
use image::{Rgb, RgbImage};
use std::path::Path;

const WIDTH: u32 = 640;
const HEIGHT: u32 = 480;
const MARGIN: u32 = 56;
const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const POINT: Rgb<u8> = Rgb([36, 90, 180]);

// 3x5 glyphs for '0'-'9', '-', '.', each row is 3 bits (msb = left)
const GLYPHS: [(char, [u8; 5]); 12] = [
    ('0', [0b111, 0b101, 0b101, 0b101, 0b111]),
    ('1', [0b010, 0b110, 0b010, 0b010, 0b111]),
    ('2', [0b111, 0b001, 0b111, 0b100, 0b111]),
    ('3', [0b111, 0b001, 0b111, 0b001, 0b111]),
    ('4', [0b101, 0b101, 0b111, 0b001, 0b001]),
    ('5', [0b111, 0b100, 0b111, 0b001, 0b111]),
    ('6', [0b111, 0b100, 0b111, 0b101, 0b111]),
    ('7', [0b111, 0b001, 0b010, 0b010, 0b010]),
    ('8', [0b111, 0b101, 0b111, 0b101, 0b111]),
    ('9', [0b111, 0b101, 0b111, 0b001, 0b111]),
    ('-', [0b000, 0b000, 0b111, 0b000, 0b000]),
    ('.', [0b000, 0b000, 0b000, 0b000, 0b010]),
];

fn draw_glyph(img: &mut RgbImage, ch: char, x: i64, y: i64) {
    let Some((_, rows)) = GLYPHS.iter().find(|(c, _)| *c == ch) else {
        return;
    };
    for (dy, row) in rows.iter().enumerate() {
        for dx in 0..3 {
            if row & (0b100 >> dx) != 0 {
                put(img, x + dx as i64, y + dy as i64, AXIS);
            }
        }
    }
}

fn draw_label(img: &mut RgbImage, text: &str, x: i64, y: i64) {
    for (i, ch) in text.chars().enumerate() {
        draw_glyph(img, ch, x + i as i64 * 4, y);
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() || !max.is_finite() {
        return (0.0, 1.0);
    }
    if min == max {
        (min - 0.5, max + 0.5)
    } else {
        let pad = (max - min) * 0.05;
        (min - pad, max + pad)
    }
}

/// Renders predictions (y) against targets (x) into a PNG file.
pub fn scatter_png(path: &Path, targets: &[f64], predictions: &[f64]) -> Result<()> {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let (x0, x1) = bounds(targets);
    let (y0, y1) = bounds(predictions);
    let plot_w = (WIDTH - 2 * MARGIN) as f64;
    let plot_h = (HEIGHT - 2 * MARGIN) as f64;
    let sx = |v: f64| MARGIN as i64 + ((v - x0) / (x1 - x0) * plot_w).round() as i64;
    let sy = |v: f64| (HEIGHT - MARGIN) as i64 - ((v - y0) / (y1 - y0) * plot_h).round() as i64;

    // gridlines and tick labels
    for i in 0..=4 {
        let tx = x0 + (x1 - x0) * i as f64 / 4.0;
        let ty = y0 + (y1 - y0) * i as f64 / 4.0;
        let px = sx(tx);
        let py = sy(ty);
        for y in MARGIN..(HEIGHT - MARGIN) {
            put(&mut img, px, y as i64, GRID);
        }
        for x in MARGIN..(WIDTH - MARGIN) {
            put(&mut img, x as i64, py, GRID);
        }
        draw_label(&mut img, &format!("{tx:.1}"), px - 8, (HEIGHT - MARGIN + 8) as i64);
        draw_label(&mut img, &format!("{ty:.1}"), (MARGIN - 28) as i64, py - 2);
    }
    // axes
    for x in MARGIN..=(WIDTH - MARGIN) {
        put(&mut img, x as i64, (HEIGHT - MARGIN) as i64, AXIS);
    }
    for y in MARGIN..=(HEIGHT - MARGIN) {
        put(&mut img, MARGIN as i64, y as i64, AXIS);
    }
    // points
    for (&t, &p) in targets.iter().zip(predictions) {
        let cx = sx(t);
        let cy = sy(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                put(&mut img, cx + dx, cy + dy, POINT);
            }
        }
    }
    img.save(path)?;
    Ok(())
}
