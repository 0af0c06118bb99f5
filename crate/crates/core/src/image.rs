//! Grayscale f32 images with 8-bit PNG interchange.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major grayscale image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Input(format!("{} pixels for a {width}x{height} image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, v: f32) -> Self {
        Self { width, height, data: vec![v; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel at integer coordinates, reflected at the borders
    /// (`-1 -> 0`, `w -> w - 1`).
    #[inline]
    pub fn get_mirrored(&self, x: i64, y: i64) -> f32 {
        self.get(mirror(x, self.width), mirror(y, self.height))
    }

    /// Square `side x side` crop centred on pixel `(cx, cy)` (top-left at
    /// `c - side / 2`), mirror padded where it leaves the image.
    pub fn patch(&self, cx: i64, cy: i64, side: usize) -> Vec<f32> {
        let h = (side / 2) as i64;
        let mut out = Vec::with_capacity(side * side);
        for y in 0..side as i64 {
            for x in 0..side as i64 {
                out.push(self.get_mirrored(cx - h + x, cy - h + y));
            }
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Box mean over a `(2r + 1)^2` window with mirrored borders.
    pub fn box_blur(&self, r: usize) -> GrayImage {
        let (w, h) = (self.width, self.height);
        let r = r as i64;
        let norm = 1.0 / (2 * r + 1) as f32;
        let mut tmp = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let s: f32 = (-r..=r).map(|d| self.get_mirrored(x as i64 + d, y as i64)).sum();
                tmp[y * w + x] = s * norm;
            }
        }
        let tmp = GrayImage { width: w, height: h, data: tmp };
        let mut out = vec![0.0f32; w * h];
        for y in 0..h {
            for x in 0..w {
                let s: f32 = (-r..=r).map(|d| tmp.get_mirrored(x as i64, y as i64 + d)).sum();
                out[y * w + x] = s * norm;
            }
        }
        GrayImage { width: w, height: h, data: out }
    }

    /// Writes an 8-bit grayscale PNG, clamping to `[0, 1]`.
    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Input(format!("png: {e}")))?;
        writer.write_image_data(&self.to_u8()).map_err(|e| Error::Input(format!("png: {e}")))?;
        writer.finish().map_err(|e| Error::Input(format!("png: {e}")))?;
        Ok(())
    }

    pub fn read_png<R: Read + std::io::BufRead + std::io::Seek>(r: R) -> Result<Self> {
        let dec = png::Decoder::new(r);
        let mut reader = dec.read_info().map_err(|e| Error::Input(format!("png: {e}")))?;
        let size = reader.output_buffer_size().ok_or_else(|| Error::Input("png: image too large".into()))?;
        let mut buf = vec![0u8; size];
        let info = reader.next_frame(&mut buf).map_err(|e| Error::Input(format!("png: {e}")))?;
        if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Eight {
            return Err(Error::Input(format!("png: expected 8-bit grayscale, got {:?} {:?}", info.color_type, info.bit_depth)));
        }
        let (w, h) = (info.width as usize, info.height as usize);
        let data = (0..h).flat_map(|y| buf[y * info.line_size..y * info.line_size + w].iter().map(|&b| b as f32 / 255.0)).collect();
        GrayImage::new(w, h, data)
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
    }

    /// Quantises to the 8-bit grid, matching a PNG round trip.
    pub fn quantized(&self) -> GrayImage {
        GrayImage { width: self.width, height: self.height, data: self.to_u8().into_iter().map(|b| b as f32 / 255.0).collect() }
    }
}

#[inline]
pub(crate) fn mirror(i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}
