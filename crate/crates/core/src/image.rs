//! Binary portable pixmap (P6) / graymap (P5) I/O and small image utilities.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::ImageProbe;
use crate::nnet::Tensor;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("not a binary pixmap: {0}")]
    Format(String),
}

/// 8-bit RGB image, row-major, interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height * 3, "pixel buffer size");
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        RgbImage::new(width, height, pixels)
    }

    /// Mean over pixels of `max(R,G,B) - min(R,G,B)`.
    pub fn mean_channel_spread(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        let total: u64 = self
            .pixels
            .chunks_exact(3)
            .map(|px| {
                let max = px.iter().max().copied().unwrap_or(0);
                let min = px.iter().min().copied().unwrap_or(0);
                u64::from(max - min)
            })
            .sum();
        total as f64 / (self.width * self.height) as f64
    }

    /// `[H, W, 3]` tensor in [0, 1], bilinearly resampled to `height x width`.
    pub fn to_tensor(&self, height: usize, width: usize) -> Tensor {
        let src: Vec<f64> = self.pixels.iter().map(|&v| f64::from(v) / 255.0).collect();
        let data = resize_bilinear(&src, self.height, self.width, 3, height, width);
        Tensor::from_vec(vec![height, width, 3], data)
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let shape = t.shape();
        assert!(shape.len() == 3 && shape[2] == 3, "expected [H, W, 3]");
        let pixels = t.data().iter().map(|&v| to_byte(v)).collect();
        RgbImage::new(shape[1], shape[0], pixels)
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Self, ImageError> {
        let (magic, width, height, maxval, body) = parse_netpbm_header(bytes)?;
        if magic != "P6" {
            return Err(ImageError::Format(format!("magic {magic:?}, expected P6")));
        }
        if maxval == 0 || maxval > 255 {
            return Err(ImageError::Format(format!("maxval {maxval} is not 8-bit")));
        }
        let needed = width * height * 3;
        if body.len() < needed {
            return Err(ImageError::Format(format!(
                "truncated: {} of {needed} pixel bytes",
                body.len()
            )));
        }
        let pixels = body[..needed]
            .iter()
            .map(|&v| ((u32::from(v) * 255 + maxval / 2) / maxval) as u8)
            .collect();
        Ok(RgbImage::new(width, height, pixels))
    }

    pub fn read(path: &Path) -> Result<Self, ImageError> {
        let bytes = fs::read(path).map_err(|source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::decode_ppm(&bytes)
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary graymap (P5) of values in [0, 1].
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Vec<u8> {
    assert_eq!(values.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| to_byte(v)));
    out
}

fn parse_netpbm_header(bytes: &[u8]) -> Result<(String, usize, usize, u32, &[u8]), ImageError> {
    let mut tokens = Vec::with_capacity(4);
    let mut pos = 0;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::Format("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // single whitespace byte separates the header from the raster
    pos += 1;
    let num = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| ImageError::Format(format!("bad header field {s:?}")))
    };
    let width = num(&tokens[1])?;
    let height = num(&tokens[2])?;
    let maxval = num(&tokens[3])? as u32;
    Ok((
        tokens[0].clone(),
        width,
        height,
        maxval,
        bytes.get(pos..).unwrap_or(&[]),
    ))
}

/// Bilinear resampling of an interleaved `[H, W, C]` buffer (align-corners
/// off, pixel centres at half-integers).
pub fn resize_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    channels: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    assert_eq!(src.len(), src_h * src_w * channels);
    if src_h == dst_h && src_w == dst_w {
        return src.to_vec();
    }
    let mut out = vec![0.0; dst_h * dst_w * channels];
    let sy = src_h as f64 / dst_h as f64;
    let sx = src_w as f64 / dst_w as f64;
    for y in 0..dst_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (src_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(src_h - 1);
        let wy = fy - y0 as f64;
        for x in 0..dst_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (src_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(src_w - 1);
            let wx = fx - x0 as f64;
            for c in 0..channels {
                let at = |yy: usize, xx: usize| src[(yy * src_w + xx) * channels + c];
                let top = at(y0, x0) * (1.0 - wx) + at(y0, x1) * wx;
                let bottom = at(y1, x0) * (1.0 - wx) + at(y1, x1) * wx;
                out[(y * dst_w + x) * channels + c] = top * (1.0 - wy) + bottom * wy;
            }
        }
    }
    out
}

/// Blends a [0, 1] heat map over an image using a blue-to-red ramp.
pub fn heat_overlay(image: &RgbImage, heat: &[f64], alpha: f64) -> RgbImage {
    assert_eq!(heat.len(), image.width * image.height);
    let mut pixels = Vec::with_capacity(image.pixels.len());
    for (px, &h) in image.pixels.chunks_exact(3).zip(heat) {
        let color = heat_color(h);
        for c in 0..3 {
            let base = f64::from(px[c]) / 255.0;
            pixels.push(to_byte(base * (1.0 - alpha) + color[c] * alpha));
        }
    }
    RgbImage::new(image.width, image.height, pixels)
}

fn heat_color(h: f64) -> [f64; 3] {
    let h = h.clamp(0.0, 1.0);
    let r = (1.5 - (4.0 * h - 3.0).abs()).clamp(0.0, 1.0);
    let g = (1.5 - (4.0 * h - 2.0).abs()).clamp(0.0, 1.0);
    let b = (1.5 - (4.0 * h - 1.0).abs()).clamp(0.0, 1.0);
    [r, g, b]
}

/// [`ImageProbe`] reading P6 files relative to a root directory.
#[derive(Debug, Clone)]
pub struct PpmProbe {
    pub root: PathBuf,
}

impl PpmProbe {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PpmProbe { root: root.into() }
    }
}

impl ImageProbe for PpmProbe {
    fn channel_spread(&self, image_ref: &str) -> Result<f64, String> {
        RgbImage::read(&self.root.join(image_ref))
            .map(|img| img.mean_channel_spread())
            .map_err(|e| e.to_string())
    }
}
