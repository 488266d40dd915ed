//! Minimal PNG line charts: axes, gridlines, numeric tick labels in a tiny
//! bitmap font, and one polyline per series. Enough to eyeball loss curves,
//! accuracy-vs-epoch traces, and ROC overlays without pulling in a plotting
//! stack.

use std::path::Path;

use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{CliError, Result};

pub struct Series {
    pub points: Vec<(f64, f64)>,
    pub color: [u8; 3],
}

/// Matplotlib-style categorical palette.
pub const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

const W: u32 = 720;
const H: u32 = 480;
const MARGIN_L: u32 = 56;
const MARGIN_R: u32 = 16;
const MARGIN_T: u32 = 16;
const MARGIN_B: u32 = 36;

/// 3x5 glyphs for digits, minus, and dot; rows packed LSB-left.
fn glyph(c: char) -> Option<[u8; 5]> {
    let g = match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => return None,
    };
    Some(g)
}

fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: [u8; 3]) {
    let mut cx = x;
    for c in text.chars() {
        if let Some(g) = glyph(c) {
            for (ry, row) in g.iter().enumerate() {
                for rx in 0..3 {
                    if row & (0b100 >> rx) != 0 {
                        put(img, cx + rx as i64, y + ry as i64, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(color));
    }
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (x0, y0);
    loop {
        put(img, x, y, color);
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

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    } * mag;
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 100.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Render the series to a PNG file.
pub fn render_chart(series: &[Series], out: &Path) -> Result<()> {
    let mut img: RgbImage = ImageBuffer::from_pixel(W, H, Rgb([255, 255, 255]));
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        (xmin, xmax, ymin, ymax) = (0.0, 1.0, 0.0, 1.0);
    }
    if xmax == xmin {
        xmax = xmin + 1.0;
    }
    if ymax == ymin {
        ymax = ymin + 1.0;
        ymin -= 1.0;
    } else {
        let pad = (ymax - ymin) * 0.05;
        ymin -= pad;
        ymax += pad;
    }

    let plot_w = (W - MARGIN_L - MARGIN_R) as f64;
    let plot_h = (H - MARGIN_T - MARGIN_B) as f64;
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = MARGIN_L as f64 + (x - xmin) / (xmax - xmin) * plot_w;
        let py = MARGIN_T as f64 + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h;
        (px.round() as i64, py.round() as i64)
    };

    let grid = [225u8, 225, 225];
    let axis = [80u8, 80, 80];
    for t in nice_ticks(xmin, xmax, 8) {
        let (px, _) = to_px(t, ymin);
        draw_line(&mut img, px, MARGIN_T as i64, px, (H - MARGIN_B) as i64, grid);
        draw_text(&mut img, px - 8, (H - MARGIN_B + 6) as i64, &fmt_tick(t), axis);
    }
    for t in nice_ticks(ymin, ymax, 6) {
        let (_, py) = to_px(xmin, t);
        draw_line(&mut img, MARGIN_L as i64, py, (W - MARGIN_R) as i64, py, grid);
        draw_text(&mut img, 8, py - 2, &fmt_tick(t), axis);
    }
    // frame
    draw_line(&mut img, MARGIN_L as i64, MARGIN_T as i64, MARGIN_L as i64, (H - MARGIN_B) as i64, axis);
    draw_line(
        &mut img,
        MARGIN_L as i64,
        (H - MARGIN_B) as i64,
        (W - MARGIN_R) as i64,
        (H - MARGIN_B) as i64,
        axis,
    );

    for (si, s) in series.iter().enumerate() {
        for w in s.points.windows(2) {
            let (x0, y0) = to_px(w[0].0, w[0].1);
            let (x1, y1) = to_px(w[1].0, w[1].1);
            draw_line(&mut img, x0, y0, x1, y1, s.color);
        }
        // legend swatch, top-right, one row per series
        let ly = MARGIN_T as i64 + 6 + 10 * si as i64;
        let lx = (W - MARGIN_R) as i64 - 40;
        draw_line(&mut img, lx, ly, lx + 24, ly, s.color);
        draw_line(&mut img, lx, ly + 1, lx + 24, ly + 1, s.color);
    }

    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir.display().to_string()))?;
    }
    img.save(out)
        .map_err(|e| CliError::Format(format!("{}: {e}", out.display())))?;
    Ok(())
}
