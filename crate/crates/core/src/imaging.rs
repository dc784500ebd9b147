//! Plain row-major images, wrap-addressed texture sampling and PNG I/O.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image io error on {path}: {source}")]
    Codec {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },
    #[error("resolution mismatch: {a:?} vs {b:?}")]
    ResolutionMismatch { a: (usize, usize), b: (usize, usize) },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

pub type RgbImage = Image<[f32; 3]>;
pub type GrayImage = Image<f32>;
pub type BinaryImage = Image<bool>;

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "image data length mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        let i = self.index(x, y);
        self.data[i] = v;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    /// Nearest-texel lookup with wrap addressing. `u` runs left to right and
    /// `v` bottom to top, so `v = 1` is the first row.
    pub fn sample_wrap(&self, u: f64, v: f64) -> &T {
        let fu = u - u.floor();
        let fv = v - v.floor();
        let x = ((fu * self.width as f64) as usize).min(self.width - 1);
        let y = (((1.0 - fv) * self.height as f64) as usize).min(self.height - 1);
        self.get(x, y)
    }
}

impl BinaryImage {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn or_assign(&mut self, other: &BinaryImage) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }
}

/// Texel-center UV of atlas texel `(x, y)` under the `v`-up convention.
pub fn texel_center_uv(x: usize, y: usize, width: usize, height: usize) -> (f64, f64) {
    ((x as f64 + 0.5) / width as f64, 1.0 - (y as f64 + 0.5) / height as f64)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn codec_err(path: &Path) -> impl FnOnce(image::ImageError) -> ImageError + '_ {
    move |source| ImageError::Codec { path: path.display().to_string(), source }
}

pub fn save_rgb_png(img: &RgbImage, path: &Path) -> Result<(), ImageError> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
            Rgb(img.get(x as usize, y as usize).map(to_u8))
        });
    buf.save(path).map_err(codec_err(path))
}

pub fn save_gray_png(img: &GrayImage, path: &Path) -> Result<(), ImageError> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
            Luma([to_u8(*img.get(x as usize, y as usize))])
        });
    buf.save(path).map_err(codec_err(path))
}

/// Single-channel 0/255 PNG.
pub fn save_mask_png(mask: &BinaryImage, path: &Path) -> Result<(), ImageError> {
    save_gray_png(&mask.map(|&b| if b { 1.0 } else { 0.0 }), path)
}

pub fn save_u16_png(img: &Image<u16>, path: &Path) -> Result<(), ImageError> {
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
            Luma([*img.get(x as usize, y as usize)])
        });
    buf.save(path).map_err(codec_err(path))
}

/// PNG bytes of an RGB image, for request payloads.
pub fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let buf: ImageBuffer<Rgb<u8>, Vec<u8>> =
        ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
            Rgb(img.get(x as usize, y as usize).map(to_u8))
        });
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

pub fn encode_mask_png(mask: &BinaryImage) -> Vec<u8> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_fn(mask.width as u32, mask.height as u32, |x, y| {
            Luma([if *mask.get(x as usize, y as usize) { 255 } else { 0 }])
        });
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png).expect("in-memory PNG encoding cannot fail");
    out.into_inner()
}

pub fn load_rgb_png(path: &Path) -> Result<RgbImage, ImageError> {
    let img = image::open(path).map_err(codec_err(path))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Image::from_vec(w, h, img.pixels().map(|p| p.0.map(|c| c as f32 / 255.0)).collect()))
}

pub fn load_gray_png(path: &Path) -> Result<GrayImage, ImageError> {
    let img = image::open(path).map_err(codec_err(path))?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Image::from_vec(w, h, img.pixels().map(|p| p.0[0] as f32 / 255.0).collect()))
}

pub fn load_mask_png(path: &Path) -> Result<BinaryImage, ImageError> {
    Ok(load_gray_png(path)?.map(|&v| v >= 0.5))
}

pub fn load_u16_png(path: &Path) -> Result<Image<u16>, ImageError> {
    let img = image::open(path).map_err(codec_err(path))?.to_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Image::from_vec(w, h, img.pixels().map(|p| p.0[0]).collect()))
}

/// Binary PPM (P6).
pub fn save_rgb_ppm(img: &RgbImage, path: &Path) -> Result<(), ImageError> {
    let mut bytes = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    for px in &img.data {
        bytes.extend(px.map(to_u8));
    }
    std::fs::write(path, bytes)
        .map_err(|source| ImageError::Io { path: path.display().to_string(), source })
}

/// HSV value (max channel) and saturation of a linear RGB color. Both are
/// unchanged by rotating the hue.
pub fn value_saturation(c: [f32; 3]) -> (f32, f32) {
    let max = c[0].max(c[1]).max(c[2]);
    let min = c[0].min(c[1]).min(c[2]);
    let sat = if max > 0.0 { (max - min) / max } else { 0.0 };
    (max, sat)
}

/// 4-connected components of the `true` pixels, in scan order of their
/// first pixel. Each component lists pixel indices in BFS order.
pub fn connected_components(mask: &BinaryImage) -> Vec<Vec<usize>> {
    let (w, h) = mask.resolution();
    let mut seen = vec![false; w * h];
    let mut comps = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.data[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        comps.push(comp);
    }
    comps
}
