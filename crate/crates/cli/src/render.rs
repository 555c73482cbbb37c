//! PNG visualizations of masks, probability maps and entropy maps.

use std::path::Path;

use image::{Rgb, RgbImage};

use probseg_core::{InstanceMasks, UncertaintyMap};

use crate::error::{CliError, Result};
use crate::npy::{NpyArray, NpyData};

/// Distinct instance color from a golden-angle hue walk.
fn instance_color(i: usize) -> [f64; 3] {
    let hue = (i as f64 * 137.50776405) % 360.0;
    hsv_to_rgb(hue, 0.85, 0.95)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let c = v * s;
    let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match (h / 60.0) as u32 % 6 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn save(path: &Path, img: RgbImage) -> Result<()> {
    img.save(path)
        .map_err(|e| CliError::io(path, std::io::Error::other(e.to_string())))
}

/// Instances in distinct colors; pixels claimed by several instances blend
/// additively towards white.
pub fn render_masks(path: &Path, masks: &InstanceMasks) -> Result<()> {
    let (h, w) = masks.shape();
    let mut acc = vec![[0.0f64; 3]; h * w];
    for (i, mask) in masks.iter().enumerate() {
        let color = instance_color(i);
        for (a, &on) in acc.iter_mut().zip(mask.iter()) {
            if on {
                for k in 0..3 {
                    a[k] += color[k];
                }
            }
        }
    }
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let a = acc[r * w + c];
            img.put_pixel(
                c as u32,
                r as u32,
                Rgb([
                    (a[0].min(1.0) * 255.0) as u8,
                    (a[1].min(1.0) * 255.0) as u8,
                    (a[2].min(1.0) * 255.0) as u8,
                ]),
            );
        }
    }
    save(path, img)
}

/// Per-pixel maximum probability over instances, tinted by the arg-max
/// instance color.
pub fn render_probabilities(path: &Path, array: &NpyArray) -> Result<()> {
    if array.shape.len() != 3 {
        return Err(CliError::data(format!(
            "probability render expects (instances, height, width), got {:?}",
            array.shape
        )));
    }
    let NpyData::F32(data) = &array.data else {
        return Err(CliError::data("probability maps must be float32".to_string()));
    };
    let (k, h, w) = (array.shape[0], array.shape[1], array.shape[2]);
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let mut best = 0.0f32;
            let mut best_i = 0usize;
            for i in 0..k {
                let v = data[i * h * w + r * w + c];
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            let color = instance_color(best_i);
            let scale = best as f64;
            img.put_pixel(
                c as u32,
                r as u32,
                Rgb([
                    (color[0] * scale * 255.0) as u8,
                    (color[1] * scale * 255.0) as u8,
                    (color[2] * scale * 255.0) as u8,
                ]),
            );
        }
    }
    save(path, img)
}

/// Entropy on a black-orange-white ramp, scaled to the Bernoulli bound.
pub fn render_entropy(path: &Path, unc: &UncertaintyMap) -> Result<()> {
    let (h, w) = unc.shape();
    let max = std::f64::consts::LN_2;
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let t = (unc.get(r, c) / max).clamp(0.0, 1.0);
            let rgb = if t < 0.5 {
                let u = t * 2.0;
                [u, u * 0.55, 0.0]
            } else {
                let u = (t - 0.5) * 2.0;
                [1.0, 0.55 + 0.45 * u, u]
            };
            img.put_pixel(
                c as u32,
                r as u32,
                Rgb([
                    (rgb[0] * 255.0) as u8,
                    (rgb[1] * 255.0) as u8,
                    (rgb[2] * 255.0) as u8,
                ]),
            );
        }
    }
    save(path, img)
}
