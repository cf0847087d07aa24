//! Dataset ingestion, landmark heatmaps, attribute encoding, flip
//! augmentation, target-attribute sampling and the procedural toy faces.
//!
//! Single images are plain CHW `f32` buffers ([`Image`]) with values in
//! `[-1, 1]`; batches are `tch` tensors.

mod attributes;
mod heatmap;
mod manifest;
pub mod toy;

pub use attributes::{encode_attributes, sample_target_attributes, sample_target_permutation, Vocabulary};
pub use heatmap::{render_heatmap, Heatmap, HeatmapSpec};
pub(crate) use manifest::load_sample;
pub use manifest::{read_landmarks, write_landmarks, Batch, Dataset, DatasetManifest, ManifestEntry, SideSource};

use image::{Rgb, RgbImage};
use rand::Rng;
use tch::{Kind, Tensor};

/// A 2D landmark in pixel coordinates (`x` = column, `y` = row).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Landmark {
    pub x: f32,
    pub y: f32,
}

impl Landmark {
    pub fn new(x: f32, y: f32) -> Self {
        Landmark { x, y }
    }
}

pub type LandmarkSet = Vec<Landmark>;

/// CHW image with values in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn filled(channels: usize, height: usize, width: usize, value: f32) -> Self {
        Image { channels, height, width, data: vec![value; channels * height * width] }
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Maps 8-bit RGB to `[-1, 1]` via `v / 127.5 − 1`.
    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Image::filled(3, h, w, 0.0);
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, f32::from(px[c]) / 127.5 - 1.0);
            }
        }
        out
    }

    /// Inverse of [`Image::from_rgb8`]: `round((v + 1)·127.5)` clamped to
    /// `0..=255`. Single-channel images are replicated to gray RGB.
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c: usize| to_u8(self.get(c.min(self.channels - 1), y as usize, x as usize));
            Rgb([px(0), px(1), px(2)])
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(c, y, self.width - 1 - x, self.get(c, y, x));
                }
            }
        }
        out
    }

    /// `(1, C, H, W)` float tensor.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_slice(&self.data).view([1, self.channels as i64, self.height as i64, self.width as i64])
    }

    /// Reads sample `index` of an NCHW tensor.
    pub fn from_tensor(t: &Tensor, index: i64) -> Self {
        let (_, c, h, w) = t.size4().expect("rank-4 tensor");
        let data: Vec<f32> = t.get(index).to_kind(Kind::Float).contiguous().view([-1]).try_into().expect("float tensor");
        Image { channels: c as usize, height: h as usize, width: w as usize, data }
    }
}

/// `round((v + 1)·127.5)` clamped to the 8-bit range.
pub fn to_u8(v: f32) -> u8 {
    ((f64::from(v) + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// One training triple plus the landmarks its side image came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Image,
    pub s: Image,
    pub landmarks: LandmarkSet,
    pub labels: Vec<f32>,
}

/// Mirrors `x`, `s` and the landmark columns together.
pub fn flip_sample(sample: &Sample) -> Sample {
    let width = sample.x.width as f32;
    Sample {
        x: sample.x.flip_horizontal(),
        s: sample.s.flip_horizontal(),
        landmarks: sample.landmarks.iter().map(|l| Landmark::new(width - 1.0 - l.x, l.y)).collect(),
        labels: sample.labels.clone(),
    }
}

/// With probability 0.5, applies [`flip_sample`]. Returns whether it flipped.
pub fn augment_flip<R: Rng + ?Sized>(sample: Sample, rng: &mut R) -> (Sample, bool) {
    if rng.random_bool(0.5) {
        (flip_sample(&sample), true)
    } else {
        (sample, false)
    }
}
