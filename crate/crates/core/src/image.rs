//! Raster images: netpbm and CSV I/O, color transforms, bilinear resizing.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major image with interleaved channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
}

impl RasterImage {
    pub fn new(rows: usize, cols: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::domain(format!("images have 1 or 3 channels, got {channels}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::domain("image dimensions must be positive"));
        }
        if pixels.len() != rows * cols * channels {
            return Err(Error::InvalidData(format!(
                "{} values for a {rows}x{cols}x{channels} image",
                pixels.len()
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(Error::Range(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(RasterImage {
            rows,
            cols,
            channels,
            pixels,
        })
    }

    pub fn filled(rows: usize, cols: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, channels, vec![value; rows * cols * channels])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.cols + col) * self.channels + channel]
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, channel: usize) -> Vec<f64> {
        self.pixels.iter().skip(channel).step_by(self.channels).copied().collect()
    }

    fn require_rgb(&self, op: &str) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::domain(format!("{op} needs a 3-channel image")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Any netpbm variant P2, P3, P5 or P6.
    Netpbm,
    Csv,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "ppm" | "pnm" => Some(ImageFormat::Netpbm),
            "csv" => Some(ImageFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm" | "ppm" | "pnm" | "netpbm" => Ok(ImageFormat::Netpbm),
            "csv" => Ok(ImageFormat::Csv),
            other => Err(Error::domain(format!("unknown image format '{other}'"))),
        }
    }
}

pub fn load_image(path: &Path, format: ImageFormat) -> Result<RasterImage> {
    let bytes = fs::read(path)?;
    match format {
        ImageFormat::Netpbm => Ok(decode_netpbm(&bytes)?.0),
        ImageFormat::Csv => {
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::parse(format!("byte {}", e.utf8_error().valid_up_to()), "not UTF-8"))?;
            decode_csv(&text)
        }
    }
}

/// Loads with the format implied by the file extension.
pub fn load_image_auto(path: &Path) -> Result<RasterImage> {
    let format = ImageFormat::from_path(path).ok_or_else(|| {
        Error::domain(format!("cannot infer image format of {}", path.display()))
    })?;
    load_image(path, format)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn line(&self) -> usize {
        1 + self.bytes[..self.pos.min(self.bytes.len())].iter().filter(|&&b| b == b'\n').count()
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::parse(format!("line {}, byte {}", self.line(), self.pos), message)
    }

    /// Skips whitespace and `#` comments.
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                b if b.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn uint(&mut self, what: &str) -> Result<u32> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("ascii digits")
            .parse()
            .map_err(|_| {
                Error::parse(format!("line {}, byte {start}", self.line()), format!("{what} too large"))
            })
    }
}

/// Decodes P2, P3, P5 or P6. Returns the image and its maxval.
pub fn decode_netpbm(bytes: &[u8]) -> Result<(RasterImage, u32)> {
    let mut c = Cursor { bytes, pos: 0 };
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(c.error("missing netpbm magic number"));
    }
    let (channels, raw) = match bytes[1] {
        b'2' => (1, false),
        b'3' => (3, false),
        b'5' => (1, true),
        b'6' => (3, true),
        other => return Err(c.error(format!("unsupported netpbm type P{}", other as char))),
    };
    c.pos = 2;
    let cols = c.uint("width")? as usize;
    let rows = c.uint("height")? as usize;
    let maxval = c.uint("maxval")?;
    if cols == 0 || rows == 0 {
        return Err(c.error("zero image dimension"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(c.error(format!("maxval {maxval} outside 1..=65535")));
    }
    let count = rows * cols * channels;
    let scale = maxval as f64;
    let mut values = Vec::with_capacity(count);
    if raw {
        if c.pos >= bytes.len() || !bytes[c.pos].is_ascii_whitespace() {
            return Err(c.error("expected a single whitespace byte before the raster"));
        }
        c.pos += 1;
        let width = if maxval > 255 { 2 } else { 1 };
        let need = count * width;
        let data = &bytes[c.pos..];
        if data.len() < need {
            c.pos = bytes.len();
            return Err(c.error(format!("truncated raster: {} of {need} bytes", data.len())));
        }
        for k in 0..count {
            let v = if width == 2 {
                u16::from_be_bytes([data[2 * k], data[2 * k + 1]]) as u32
            } else {
                data[k] as u32
            };
            if v > maxval {
                c.pos += k * width;
                return Err(c.error(format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 / scale);
        }
    } else {
        for _ in 0..count {
            let v = c.uint("pixel value")?;
            if v > maxval {
                return Err(c.error(format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v as f64 / scale);
        }
    }
    Ok((RasterImage::new(rows, cols, channels, values)?, maxval))
}

/// Encodes P2/P3 (`plain`) or P5/P6, rounding each value to `maxval` levels.
pub fn encode_netpbm(img: &RasterImage, maxval: u32, plain: bool) -> Result<Vec<u8>> {
    if maxval == 0 || maxval > 65535 {
        return Err(Error::domain(format!("maxval {maxval} outside 1..=65535")));
    }
    let magic = match (img.channels, plain) {
        (1, true) => "P2",
        (3, true) => "P3",
        (1, false) => "P5",
        _ => "P6",
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.cols, img.rows).into_bytes();
    let quant = |v: f64| (v * maxval as f64).round() as u32;
    if plain {
        let per_row = img.cols * img.channels;
        for row in img.pixels.chunks(per_row) {
            let line: Vec<String> = row.iter().map(|&v| quant(v).to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    } else {
        for &v in &img.pixels {
            let q = quant(v);
            if maxval > 255 {
                out.extend_from_slice(&(q as u16).to_be_bytes());
            } else {
                out.push(q as u8);
            }
        }
    }
    Ok(out)
}

pub fn save_netpbm(img: &RasterImage, path: &Path, maxval: u32, plain: bool) -> Result<()> {
    fs::write(path, encode_netpbm(img, maxval, plain)?)?;
    Ok(())
}

/// Single-channel matrix, one row per line, comma-separated, no header.
pub fn decode_csv(text: &str) -> Result<RasterImage> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for (k, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(format!("line {}, field {}", ln + 1, k + 1), format!("not a number: '{}'", field.trim()))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Range(format!(
                    "value {v} at line {}, field {} outside [0, 1]",
                    ln + 1,
                    k + 1
                )));
            }
            values.push(v);
            n += 1;
        }
        match cols {
            None => cols = Some(n),
            Some(c) if c != n => {
                return Err(Error::parse(
                    format!("line {}", ln + 1),
                    format!("expected {c} fields, found {n}"),
                ))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::parse("line 1", "empty matrix"))?;
    RasterImage::new(rows, cols, 1, values)
}

pub fn encode_csv(img: &RasterImage) -> Result<String> {
    if img.channels != 1 {
        return Err(Error::domain("CSV output needs a single-channel image"));
    }
    let mut s = String::new();
    for row in img.pixels.chunks(img.cols) {
        let line: Vec<String> = row.iter().map(|v| crate::format::num(*v)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GrayWeights {
    /// 0.299 R + 0.587 G + 0.114 B.
    #[default]
    Luma601,
    /// (R + G + B) / 3.
    Equal,
}

impl FromStr for GrayWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "luma" | "601" => Ok(GrayWeights::Luma601),
            "equal" | "mean" => Ok(GrayWeights::Equal),
            other => Err(Error::domain(format!("unknown grayscale weights '{other}'"))),
        }
    }
}

fn map_pixels(img: &RasterImage, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<f64> {
    img.pixels
        .par_chunks(img.cols * img.channels)
        .flat_map_iter(|row| row.chunks(img.channels).map(&f).collect::<Vec<_>>())
        .collect()
}

pub fn to_grayscale(img: &RasterImage, weights: GrayWeights) -> Result<RasterImage> {
    img.require_rgb("grayscale conversion")?;
    let w = match weights {
        GrayWeights::Luma601 => [0.299, 0.587, 0.114],
        GrayWeights::Equal => [1.0 / 3.0; 3],
    };
    let px = map_pixels(img, |p| (w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).clamp(0.0, 1.0));
    RasterImage::new(img.rows, img.cols, 1, px)
}

/// Green chromatic coordinate `G / (R + G + B)`. Black pixels map to 0;
/// their count is returned alongside.
pub fn to_gcc(img: &RasterImage) -> Result<(RasterImage, usize)> {
    img.require_rgb("g_cc transform")?;
    let px = map_pixels(img, |p| {
        let s = p[0] + p[1] + p[2];
        if s > 0.0 {
            p[1] / s
        } else {
            0.0
        }
    });
    let black = img.pixels.chunks(3).filter(|p| p[0] + p[1] + p[2] == 0.0).count();
    Ok((RasterImage::new(img.rows, img.cols, 1, px)?, black))
}

/// Bilinear resampling with pixel-centre alignment and edge clamping.
pub fn resize_bilinear(img: &RasterImage, new_rows: usize, new_cols: usize) -> Result<RasterImage> {
    if new_rows == 0 || new_cols == 0 {
        return Err(Error::domain("target dimensions must be positive"));
    }
    if new_rows == img.rows && new_cols == img.cols {
        return Ok(img.clone());
    }
    let taps = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        (0..out)
            .map(|d| {
                let src = ((d as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
                let i0 = src.floor() as usize;
                let i1 = (i0 + 1).min(inp - 1);
                (i0, i1, src - i0 as f64)
            })
            .collect()
    };
    let ty = taps(new_rows, img.rows);
    let tx = taps(new_cols, img.cols);
    let ch = img.channels;
    let px: Vec<f64> = ty
        .par_iter()
        .flat_map_iter(|&(y0, y1, fy)| {
            let mut row = Vec::with_capacity(new_cols * ch);
            for &(x0, x1, fx) in &tx {
                for c in 0..ch {
                    let top = img.get(y0, x0, c) * (1.0 - fx) + img.get(y0, x1, c) * fx;
                    let bot = img.get(y1, x0, c) * (1.0 - fx) + img.get(y1, x1, c) * fx;
                    row.push((top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0));
                }
            }
            row
        })
        .collect();
    RasterImage::new(new_rows, new_cols, ch, px)
}

/// Two co-registered single-channel images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePair {
    pub a: RasterImage,
    pub b: RasterImage,
    pub labels: (String, String),
}

impl ImagePair {
    pub fn new(a: RasterImage, b: RasterImage, labels: (String, String)) -> Result<Self> {
        if a.channels != 1 || b.channels != 1 {
            return Err(Error::domain("image pairs must be single-channel; transform first"));
        }
        if a.rows != b.rows || a.cols != b.cols {
            return Err(Error::InvalidData(format!(
                "images are not co-registered: {}x{} vs {}x{}",
                a.rows, a.cols, b.rows, b.cols
            )));
        }
        Ok(ImagePair { a, b, labels })
    }

    pub fn rows(&self) -> usize {
        self.a.rows
    }

    pub fn cols(&self) -> usize {
        self.a.cols
    }

    /// Pair of `size x size` blocks at `(row, col)` in row-major order.
    pub fn block(&self, row: usize, col: usize, size: usize) -> (Vec<f64>, Vec<f64>) {
        let mut z1 = Vec::with_capacity(size * size);
        let mut z2 = Vec::with_capacity(size * size);
        for r in row..row + size {
            let start = r * self.a.cols + col;
            z1.extend_from_slice(&self.a.pixels[start..start + size]);
            z2.extend_from_slice(&self.b.pixels[start..start + size]);
        }
        (z1, z2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_pgm_normalization() {
        let (img, maxval) = decode_netpbm(b"P2\n# comment\n2 2\n255\n0 255\n128 64\n").unwrap();
        assert_eq!(maxval, 255);
        assert_eq!(img.pixels, vec![0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
    }

    #[test]
    fn truncated_raw_is_parse_error() {
        let mut bytes = b"P5\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4]);
        assert!(matches!(decode_netpbm(&bytes), Err(Error::Parse { .. })));
    }

    #[test]
    fn sixteen_bit_raw() {
        let mut bytes = b"P5 2 1 1000\n".to_vec();
        bytes.extend_from_slice(&500u16.to_be_bytes());
        bytes.extend_from_slice(&1000u16.to_be_bytes());
        let (img, _) = decode_netpbm(&bytes).unwrap();
        assert_eq!(img.pixels, vec![0.5, 1.0]);
    }

    #[test]
    fn ppm_round_trip() {
        let (img, _) = decode_netpbm(b"P3 2 1 15 0 5 15 3 0 9").unwrap();
        assert_eq!(img.channels, 3);
        let raw = encode_netpbm(&img, 15, false).unwrap();
        assert_eq!(decode_netpbm(&raw).unwrap().0, img);
    }

    #[test]
    fn csv_checks() {
        let img = decode_csv("0,0.5\n1,0.25\n").unwrap();
        assert_eq!((img.rows, img.cols), (2, 2));
        assert!(matches!(decode_csv("0,1.5\n"), Err(Error::Range(_))));
        assert!(matches!(decode_csv("0,0.5\n1\n"), Err(Error::Parse { .. })));
        assert!(matches!(decode_csv("0,x\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn color_transforms() {
        let img = RasterImage::new(1, 4, 3, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.2, 0.4, 0.6, 0.0, 0.0, 0.0]).unwrap();
        let g = to_grayscale(&img, GrayWeights::Luma601).unwrap();
        assert!((g.pixels[0] - 1.0).abs() < 1e-15);
        assert!((g.pixels[1] - 0.299).abs() < 1e-15);
        assert!((g.pixels[2] - 0.363).abs() < 1e-12);
        let (gcc, black) = to_gcc(&img).unwrap();
        assert!((gcc.pixels[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(gcc.pixels[1], 0.0);
        assert_eq!(gcc.pixels[3], 0.0);
        assert_eq!(black, 1);
        assert!(to_gcc(&g).is_err());
    }

    #[test]
    fn bilinear_checkerboard() {
        let img = RasterImage::new(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let r = resize_bilinear(&img, 3, 3).unwrap();
        assert!((r.get(1, 1, 0) - 0.5).abs() < 1e-15);
        assert_eq!(r.get(0, 0, 0), 0.0);
        assert_eq!(resize_bilinear(&img, 2, 2).unwrap(), img);
        assert!(resize_bilinear(&img, 0, 2).is_err());
    }

    #[test]
    fn pair_requires_registration() {
        let a = RasterImage::filled(3, 3, 1, 0.5).unwrap();
        let b = RasterImage::filled(3, 4, 1, 0.5).unwrap();
        assert!(ImagePair::new(a.clone(), b, Default::default()).is_err());
        let p = ImagePair::new(a.clone(), a, Default::default()).unwrap();
        assert_eq!(p.block(1, 1, 2).0, vec![0.5; 4]);
    }
}
