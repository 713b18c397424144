//! Minimal raster charts. Every chart is written next to a CSV holding the plotted numbers.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::CliError;

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const GREY: Rgb<u8> = Rgb([160, 160, 160]);
pub const BLUE: Rgb<u8> = Rgb([40, 90, 200]);
pub const RED: Rgb<u8> = Rgb([210, 50, 40]);

fn save(img: &RgbImage, path: &Path) -> Result<(), CliError> {
    img.save(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: String) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Diverging colour: blue below zero, white at zero, red above; scaled by `max_abs`.
fn diverging(v: f64, max_abs: f64) -> Rgb<u8> {
    let t = if max_abs > 0.0 { (v / max_abs).clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: u8, t: f64| (255.0 - (255.0 - c as f64) * t.abs()).round() as u8;
    let base = if t < 0.0 { BLUE } else { RED };
    Rgb([fade(base[0], t), fade(base[1], t), fade(base[2], t)])
}

/// Matrix heatmap (`stem.png`) with the full matrix as `stem.csv`.
pub fn heatmap(m: &Array2<f64>, dir: &Path, stem: &str) -> Result<(), CliError> {
    let (rows, cols) = m.dim();
    let cell = (512 / rows.max(cols).max(1)).clamp(2, 32) as u32;
    let max_abs = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut img = RgbImage::from_pixel(cols as u32 * cell, rows as u32 * cell, WHITE);
    for ((i, j), &v) in m.indexed_iter() {
        let c = diverging(v, max_abs);
        for dy in 0..cell {
            for dx in 0..cell {
                img.put_pixel(j as u32 * cell + dx, i as u32 * cell + dy, c);
            }
        }
    }
    save(&img, &dir.join(format!("{stem}.png")))?;
    let text: String = m
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    write(&dir.join(format!("{stem}.csv")), text)
}

/// Histogram of the given values over `bins` equal-width bins; sidecar `bin_lo,bin_hi,count`.
pub fn histogram(values: &[f64], bins: usize, dir: &Path, stem: &str) -> Result<(), CliError> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if values.is_empty() { (0.0, 1.0) } else if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let (w, h) = (bins as u32 * 12, 240u32);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let top = *counts.iter().max().unwrap_or(&1).max(&1) as f64;
    for (b, &c) in counts.iter().enumerate() {
        let bar = ((c as f64 / top) * (h - 10) as f64) as u32;
        let colour = if lo + (b as f64 + 0.5) * width < 0.0 { BLUE } else { RED };
        for x in b as u32 * 12 + 1..(b as u32 + 1) * 12 - 1 {
            for y in h - bar..h {
                img.put_pixel(x, y, colour);
            }
        }
    }
    save(&img, &dir.join(format!("{stem}.png")))?;
    let mut text = String::from("bin_lo,bin_hi,count\n");
    for (b, c) in counts.iter().enumerate() {
        text.push_str(&format!("{},{},{c}\n", lo + b as f64 * width, lo + (b + 1) as f64 * width));
    }
    write(&dir.join(format!("{stem}.csv")), text)
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Overlaid polylines sharing one x axis; sidecar has one column per series.
pub fn lines(x: &[f64], series: &[(&str, Vec<f64>, Rgb<u8>)], dir: &Path, stem: &str) -> Result<(), CliError> {
    let (w, h, pad) = (640u32, 320u32, 10.0);
    let mut img = RgbImage::from_pixel(w, h, WHITE);
    let all = series.iter().flat_map(|s| s.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, lo + 1.0) };
    let (xlo, xhi) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let xspan = if xhi > xlo { xhi - xlo } else { 1.0 };
    let px = |xv: f64, yv: f64| {
        (
            (pad + (xv - xlo) / xspan * (w as f64 - 2.0 * pad)) as i64,
            (h as f64 - pad - (yv - lo) / (hi - lo) * (h as f64 - 2.0 * pad)) as i64,
        )
    };
    line(&mut img, px(xlo, lo), px(xhi, lo), GREY);
    for (_, ys, colour) in series {
        for k in 1..ys.len().min(x.len()) {
            line(&mut img, px(x[k - 1], ys[k - 1]), px(x[k], ys[k]), *colour);
        }
    }
    save(&img, &dir.join(format!("{stem}.png")))?;
    let mut text = String::from("x");
    for (name, _, _) in series {
        text.push(',');
        text.push_str(name);
    }
    text.push('\n');
    for (k, xv) in x.iter().enumerate() {
        text.push_str(&xv.to_string());
        for (_, ys, _) in series {
            text.push(',');
            text.push_str(&ys.get(k).map_or(String::new(), |v| v.to_string()));
        }
        text.push('\n');
    }
    write(&dir.join(format!("{stem}.csv")), text)
}
