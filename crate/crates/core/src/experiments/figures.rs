//! PNG figure rendering: distance-matrix heatmaps, scatter plots with
//! linear fits, grouped bars with error whiskers, and mean/std band
//! curves. Everything is drawn directly onto an RGB buffer with an
//! embedded 5x7 bitmap font, so output bytes are deterministic and there
//! is no font-discovery dependency.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::error::{Error, Result};

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [214, 39, 40],
    [44, 160, 44],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
];

pub fn series_color(i: usize) -> [u8; 3] {
    PALETTE[i % PALETTE.len()]
}

/// 5x7 glyphs, one byte per row, low 5 bits used (bit 4 = left column).
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '+' => [0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '/' => [0x01, 0x02, 0x04, 0x04, 0x04, 0x08, 0x10],
        '%' => [0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        _ => [0x00; 7],
    }
}

pub struct Canvas {
    pub img: RgbImage,
}

impl Canvas {
    pub fn new(width: u32, height: u32) -> Self {
        let img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
        Canvas { img }
    }

    pub fn set(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
        let (x0, x1) = (x0.min(x1), x0.max(x1));
        let (y0, y1) = (y0.min(y1), y0.max(y1));
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.set(x, y, color);
            }
        }
    }

    pub fn line(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        let (mut x, mut y) = (x0, y0);
        loop {
            self.set(x, y, color);
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

    /// Draw `text` with its top-left corner at `(x, y)`, scaled by
    /// `scale`. Returns the width drawn.
    pub fn text(&mut self, x: i64, y: i64, text: &str, scale: i64, color: [u8; 3]) -> i64 {
        let mut cx = x;
        for c in text.chars() {
            let g = glyph(c);
            for (row, bits) in g.iter().enumerate() {
                for col in 0..5 {
                    if bits & (0x10 >> col) != 0 {
                        self.fill_rect(
                            cx + col as i64 * scale,
                            y + row as i64 * scale,
                            cx + (col as i64 + 1) * scale - 1,
                            y + (row as i64 + 1) * scale - 1,
                            color,
                        );
                    }
                }
            }
            cx += 6 * scale;
        }
        cx - x
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.img
            .save(path)
            .map_err(|e| Error::Format(format!("png encode: {e}")))
    }
}

/// Axis frame mapping a data rectangle onto pixels.
struct Frame {
    left: i64,
    top: i64,
    right: i64,
    bottom: i64,
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> i64 {
        let t = (x - self.x_min) / (self.x_max - self.x_min);
        self.left + (t * (self.right - self.left) as f64).round() as i64
    }

    fn py(&self, y: f64) -> i64 {
        let t = (y - self.y_min) / (self.y_max - self.y_min);
        self.bottom - (t * (self.bottom - self.top) as f64).round() as i64
    }

    fn draw_axes(&self, canvas: &mut Canvas, title: &str, x_ticks: &[(f64, String)], y_ticks: &[(f64, String)]) {
        let black = [0, 0, 0];
        canvas.line(self.left, self.top, self.left, self.bottom, black);
        canvas.line(self.left, self.bottom, self.right, self.bottom, black);
        canvas.text(self.left, self.top - 24, title, 2, black);
        for (v, label) in x_ticks {
            let x = self.px(*v);
            canvas.line(x, self.bottom, x, self.bottom + 4, black);
            let w = 6 * label.len() as i64;
            canvas.text(x - w / 2, self.bottom + 8, label, 1, black);
        }
        for (v, label) in y_ticks {
            let y = self.py(*v);
            canvas.line(self.left - 4, y, self.left, y, black);
            let w = 6 * label.len() as i64;
            canvas.text(self.left - 8 - w, y - 3, label, 1, black);
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else if v.abs() >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = (hi - lo) * 0.08;
        (lo - pad, hi + pad)
    }
}

fn ticks(lo: f64, hi: f64, n: usize) -> Vec<(f64, String)> {
    (0..=n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / n as f64;
            (v, fmt_tick(v))
        })
        .collect()
}

/// Greyscale heatmap of a matrix, upscaled to at least 256 px.
pub fn heatmap(values: &Array2<f64>, path: &Path) -> Result<()> {
    let (rows, cols) = values.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::Precondition("empty matrix".into()));
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = ((256 / rows.max(cols)).max(1)) as u32;
    let mut img = RgbImage::new(cols as u32 * scale, rows as u32 * scale);
    for r in 0..rows {
        for c in 0..cols {
            let t = if max > min { (values[(r, c)] - min) / (max - min) } else { 0.0 };
            let v = (t * 255.0).round() as u8;
            let pixel = Rgb([v, v, v]);
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(c as u32 * scale + dx, r as u32 * scale + dy, pixel);
                }
            }
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    img.save(path).map_err(|e| Error::Format(format!("png encode: {e}")))
}

pub struct ScatterSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    /// Draw a least-squares line through the points.
    pub fit: bool,
}

/// Least-squares slope and intercept.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Scatter plot with optional per-series linear fits.
pub fn scatter_fit(series: &[ScatterSeries], title: &str, path: &Path) -> Result<()> {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    if all.is_empty() {
        return Err(Error::Precondition("no points to plot".into()));
    }
    let (x_min, x_max) = nice_range(
        all.iter().map(|p| p.0).fold(f64::INFINITY, f64::min),
        all.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max),
    );
    let (y_min, y_max) = nice_range(
        all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        all.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    );
    let mut canvas = Canvas::new(640, 480);
    let frame = Frame { left: 70, top: 40, right: 610, bottom: 420, x_min, x_max, y_min, y_max };
    frame.draw_axes(&mut canvas, title, &ticks(x_min, x_max, 5), &ticks(y_min, y_max, 5));
    for (i, s) in series.iter().enumerate() {
        let color = series_color(i);
        for &(x, y) in &s.points {
            let (px, py) = (frame.px(x), frame.py(y));
            canvas.fill_rect(px - 2, py - 2, px + 2, py + 2, color);
        }
        if s.fit {
            if let Some((slope, intercept)) = linear_fit(&s.points) {
                let y0 = slope * x_min + intercept;
                let y1 = slope * x_max + intercept;
                canvas.line(frame.px(x_min), frame.py(y0), frame.px(x_max), frame.py(y1), color);
            }
        }
        canvas.fill_rect(480, 50 + 16 * i as i64, 492, 58 + 16 * i as i64, color);
        canvas.text(498, 50 + 16 * i as i64, &s.name, 1, [0, 0, 0]);
    }
    canvas.save(path)
}

pub struct BarSeries {
    pub name: String,
    /// One (mean, std) per group.
    pub values: Vec<(f64, f64)>,
    pub hatched: bool,
}

/// Grouped bar chart with std-error whiskers.
pub fn grouped_bars(groups: &[String], series: &[BarSeries], title: &str, path: &Path) -> Result<()> {
    if groups.is_empty() || series.is_empty() {
        return Err(Error::Precondition("nothing to plot".into()));
    }
    let mut y_max = f64::NEG_INFINITY;
    let mut y_min: f64 = 0.0;
    for s in series {
        for &(m, sd) in &s.values {
            if m.is_nan() {
                continue; // absent bar (e.g. no ground-truth variant)
            }
            y_max = y_max.max(m + sd);
            y_min = y_min.min(m - sd);
        }
    }
    if y_max == f64::NEG_INFINITY {
        return Err(Error::Precondition("no finite bars to plot".into()));
    }
    let (y_min, y_max) = nice_range(y_min, y_max.max(0.0));
    let mut canvas = Canvas::new(720, 480);
    let frame = Frame { left: 70, top: 40, right: 690, bottom: 420, x_min: 0.0, x_max: groups.len() as f64, y_min, y_max };
    let x_ticks: Vec<(f64, String)> = groups
        .iter()
        .enumerate()
        .map(|(i, g)| (i as f64 + 0.5, g.clone()))
        .collect();
    frame.draw_axes(&mut canvas, title, &x_ticks, &ticks(y_min, y_max, 5));
    let group_width = 0.8;
    let bar_width = group_width / series.len() as f64;
    let zero_y = frame.py(0.0f64.clamp(y_min, y_max));
    for (si, s) in series.iter().enumerate() {
        let color = series_color(si);
        for (gi, &(mean, std)) in s.values.iter().enumerate() {
            if mean.is_nan() {
                continue;
            }
            let x0 = gi as f64 + 0.1 + si as f64 * bar_width;
            let x1 = x0 + bar_width * 0.9;
            let (px0, px1) = (frame.px(x0), frame.px(x1));
            let py = frame.py(mean);
            canvas.fill_rect(px0, py.min(zero_y), px1, py.max(zero_y), color);
            if s.hatched {
                for x in (px0..=px1).step_by(4) {
                    canvas.line(x, py.min(zero_y), x, py.max(zero_y), [255, 255, 255]);
                }
            }
            // Whiskers.
            let cx = (px0 + px1) / 2;
            canvas.line(cx, frame.py(mean - std), cx, frame.py(mean + std), [0, 0, 0]);
            canvas.line(cx - 3, frame.py(mean - std), cx + 3, frame.py(mean - std), [0, 0, 0]);
            canvas.line(cx - 3, frame.py(mean + std), cx + 3, frame.py(mean + std), [0, 0, 0]);
        }
        canvas.fill_rect(520, 50 + 16 * si as i64, 532, 58 + 16 * si as i64, color);
        canvas.text(538, 50 + 16 * si as i64, &s.name, 1, [0, 0, 0]);
    }
    canvas.save(path)
}

pub struct CurveSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean curves with +-std shaded bands, x = episode index.
pub fn curves_band(series: &[CurveSeries], title: &str, path: &Path) -> Result<()> {
    let len = series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::Precondition("no curves to plot".into()));
    }
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for (m, sd) in s.mean.iter().zip(&s.std) {
            y_min = y_min.min(m - sd);
            y_max = y_max.max(m + sd);
        }
    }
    let (y_min, y_max) = nice_range(y_min, y_max);
    let mut canvas = Canvas::new(640, 480);
    let frame = Frame { left: 70, top: 40, right: 610, bottom: 420, x_min: 0.0, x_max: (len - 1).max(1) as f64, y_min, y_max };
    frame.draw_axes(&mut canvas, title, &ticks(0.0, (len - 1).max(1) as f64, 5), &ticks(y_min, y_max, 5));
    for (si, s) in series.iter().enumerate() {
        let color = series_color(si);
        let band = [
            200u8.saturating_add(color[0] / 5),
            200u8.saturating_add(color[1] / 5),
            200u8.saturating_add(color[2] / 5),
        ];
        for i in 0..s.mean.len() {
            let x = frame.px(i as f64);
            let lo = frame.py(s.mean[i] - s.std[i]);
            let hi = frame.py(s.mean[i] + s.std[i]);
            canvas.line(x, hi, x, lo, band);
        }
        for i in 1..s.mean.len() {
            canvas.line(
                frame.px((i - 1) as f64),
                frame.py(s.mean[i - 1]),
                frame.px(i as f64),
                frame.py(s.mean[i]),
                color,
            );
        }
        canvas.fill_rect(480, 50 + 16 * si as i64, 492, 58 + 16 * si as i64, color);
        canvas.text(498, 50 + 16 * si as i64, &s.name, 1, [0, 0, 0]);
    }
    canvas.save(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 2.0 * i as f64)).collect();
        let (slope, intercept) = linear_fit(&pts).unwrap();
        assert!((slope + 2.0).abs() < 1e-12);
        assert!((intercept - 3.0).abs() < 1e-12);
    }

    #[test]
    fn figures_render_and_are_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = array![[0.0, 1.0], [1.0, 0.0]];
        let p1 = dir.path().join("heat.png");
        heatmap(&m, &p1).unwrap();
        let p2 = dir.path().join("heat2.png");
        heatmap(&m, &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());

        let scatter = vec![ScatterSeries {
            name: "A".into(),
            points: vec![(1.0, 0.5), (2.0, 0.3), (3.0, 0.1)],
            fit: true,
        }];
        scatter_fit(&scatter, "TEST", &dir.path().join("scatter.png")).unwrap();

        let bars = vec![BarSeries { name: "B".into(), values: vec![(0.5, 0.1), (0.8, 0.05)], hatched: false }];
        grouped_bars(&["G1".into(), "G2".into()], &bars, "BARS", &dir.path().join("bars.png")).unwrap();

        let curves = vec![CurveSeries { name: "C".into(), mean: vec![-20.0, -10.0, -6.0], std: vec![2.0, 1.0, 0.5] }];
        curves_band(&curves, "CURVES", &dir.path().join("curves.png")).unwrap();
    }
}
