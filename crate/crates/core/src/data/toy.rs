//! Procedural flat-shaded toy faces.
//!
//! Geometry is laid out on a 32-unit reference frame and scaled to the
//! requested size. Pixel `(col, row)` covers the point `(col, row)` in
//! landmark coordinates, so shapes are rasterized by testing pixel centers.

use std::fs;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;

use super::manifest::{IMAGES_DIR, LANDMARKS_DIR, SIDES_DIR};
use super::{write_landmarks, DatasetManifest, Landmark, LandmarkSet, ManifestEntry, Vocabulary};
use crate::error::{Error, Result};
use crate::model::layers::init_rng;

/// Built-in expression archetypes, in one-hot order.
pub const EXPRESSIONS: [&str; 4] = ["neutral", "happy", "sad", "surprised"];

pub const BACKGROUND: [u8; 3] = [24, 24, 32];
pub const EYE_COLOR: [u8; 3] = [16, 16, 16];
pub const MOUTH_COLOR: [u8; 3] = [150, 20, 40];

const REFERENCE_SIZE: f64 = 32.0;
const RNG_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expression {
    Neutral,
    Happy,
    Sad,
    Surprised,
}

impl Expression {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => Expression::Neutral,
            1 => Expression::Happy,
            2 => Expression::Sad,
            _ => Expression::Surprised,
        }
    }

    pub fn name(self) -> &'static str {
        EXPRESSIONS[self as usize]
    }
}

/// Identity and expression of one face, in reference units.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyFace {
    pub center: (f64, f64),
    pub radii: (f64, f64),
    pub skin: [u8; 3],
    pub expression: Expression,
}

impl ToyFace {
    pub fn sample(rng: &mut impl Rng, expression: Expression) -> Self {
        ToyFace {
            center: (16.0 + rng.random_range(-1.5..1.5), 16.0 + rng.random_range(-1.5..1.5)),
            radii: (rng.random_range(10.0..12.5), rng.random_range(11.5..13.5)),
            skin: [rng.random_range(195..=235), rng.random_range(145..=185), rng.random_range(115..=155)],
            expression,
        }
    }

    fn eyes(&self) -> [(f64, f64); 2] {
        let (cx, cy) = self.center;
        let (rx, ry) = self.radii;
        [(cx - 0.4 * rx, cy - 0.25 * ry), (cx + 0.4 * rx, cy - 0.25 * ry)]
    }

    fn mouth_row(&self) -> f64 {
        self.center.1 + 0.45 * self.radii.1
    }

    fn mouth_half_width(&self) -> f64 {
        0.4 * self.radii.0
    }

    /// Vertical offset of the mouth curve at horizontal offset `t`; positive
    /// is downward.
    fn mouth_curve(&self, t: f64) -> f64 {
        let a = 2.0;
        let u = t / self.mouth_half_width();
        match self.expression {
            Expression::Happy => a * (1.0 - 2.0 * u * u),
            Expression::Sad => -a * (1.0 - 2.0 * u * u),
            Expression::Neutral | Expression::Surprised => 0.0,
        }
    }

    /// Left eye, right eye, left mouth corner, right mouth corner, mouth
    /// center, in reference units.
    pub fn reference_landmarks(&self) -> [(f64, f64); 5] {
        let [l, r] = self.eyes();
        let cx = self.center.0;
        let my = self.mouth_row();
        let w = match self.expression {
            Expression::Surprised => 0.5 * self.mouth_half_width(),
            _ => self.mouth_half_width(),
        };
        [l, r, (cx - w, my + self.mouth_curve(-w)), (cx + w, my + self.mouth_curve(w)), (cx, my + self.mouth_curve(0.0))]
    }

    /// Landmarks in pixel coordinates of a `size × size` render.
    pub fn landmarks(&self, size: usize) -> LandmarkSet {
        let k = scale(size);
        self.reference_landmarks().iter().map(|&(x, y)| Landmark::new((x * k) as f32, (y * k) as f32)).collect()
    }

    /// Flat-shaded render without antialiasing.
    pub fn render(&self, size: usize) -> RgbImage {
        let k = scale(size);
        let (cx, cy) = self.center;
        let (rx, ry) = self.radii;
        let eyes = self.eyes();
        let my = self.mouth_row();
        let w = self.mouth_half_width();
        RgbImage::from_fn(size as u32, size as u32, |col, row| {
            let (x, y) = (f64::from(col) / k, f64::from(row) / k);
            let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
            if dx * dx + dy * dy > 1.0 {
                return Rgb(BACKGROUND);
            }
            if eyes.iter().any(|&(ex, ey)| (x - ex).powi(2) + (y - ey).powi(2) <= 1.6 * 1.6) {
                return Rgb(EYE_COLOR);
            }
            let in_mouth = match self.expression {
                Expression::Surprised => {
                    let r = 0.5 * w;
                    (x - cx).powi(2) + (y - my).powi(2) <= r * r
                }
                _ => (x - cx).abs() <= w && (y - my - self.mouth_curve(x - cx)).abs() <= 0.9,
            };
            if in_mouth {
                Rgb(MOUTH_COLOR)
            } else {
                Rgb(self.skin)
            }
        })
    }
}

fn scale(size: usize) -> f64 {
    size as f64 / REFERENCE_SIZE
}

/// ITU-R BT.601 luma, replicated to three channels.
pub fn to_gray(img: &RgbImage) -> RgbImage {
    let mut out = img.clone();
    for px in out.pixels_mut() {
        let [r, g, b] = px.0;
        let l = (0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)).round() as u8;
        *px = Rgb([l, l, l]);
    }
    out
}

/// Vocabulary of the first `num_attributes` expressions.
pub fn toy_vocabulary(num_attributes: usize) -> Result<Vocabulary> {
    if num_attributes == 0 || num_attributes > EXPRESSIONS.len() {
        return Err(Error::config(format!("num_attributes {num_attributes} must be in 1..={}", EXPRESSIONS.len())));
    }
    Vocabulary::new(EXPRESSIONS[..num_attributes].iter().copied())
}

/// The faces of a toy dataset. Classes are balanced by cycling through the
/// vocabulary.
pub fn toy_faces(num_samples: usize, num_attributes: usize, seed: u64) -> Vec<ToyFace> {
    let mut rng = init_rng(seed, RNG_STREAM);
    (0..num_samples).map(|i| ToyFace::sample(&mut rng, Expression::from_index(i % num_attributes))).collect()
}

/// Writes a labeled toy dataset under `dir`.
pub fn generate_toy_dataset(
    dir: impl AsRef<Path>,
    num_samples: usize,
    num_attributes: usize,
    image_size: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    write_dataset(dir.as_ref(), num_samples, num_attributes, image_size, seed, false)
}

/// Writes a refinement dataset: gray-shaded faces in `images/` and the
/// colored faces of the same geometry in `sides/`.
pub fn generate_refinement_dataset(
    dir: impl AsRef<Path>,
    num_samples: usize,
    num_attributes: usize,
    image_size: usize,
    seed: u64,
) -> Result<DatasetManifest> {
    write_dataset(dir.as_ref(), num_samples, num_attributes, image_size, seed, true)
}

fn write_dataset(
    root: &Path,
    num_samples: usize,
    num_attributes: usize,
    image_size: usize,
    seed: u64,
    refinement: bool,
) -> Result<DatasetManifest> {
    let vocabulary = toy_vocabulary(num_attributes)?;
    if image_size < 8 {
        return Err(Error::config(format!("toy image_size {image_size} must be at least 8")));
    }
    fs::create_dir_all(root.join(IMAGES_DIR))?;
    fs::create_dir_all(root.join(LANDMARKS_DIR))?;
    if refinement {
        fs::create_dir_all(root.join(SIDES_DIR))?;
    }
    let mut entries = Vec::with_capacity(num_samples);
    for (i, face) in toy_faces(num_samples, num_attributes, seed).iter().enumerate() {
        let name = format!("toy_{i:05}");
        let image_path = root.join(IMAGES_DIR).join(format!("{name}.png"));
        let landmark_path = root.join(LANDMARKS_DIR).join(format!("{name}.txt"));
        let colored = face.render(image_size);
        let side_path = if refinement {
            let p = root.join(SIDES_DIR).join(format!("{name}.png"));
            colored.save(&p)?;
            to_gray(&colored).save(&image_path)?;
            Some(p)
        } else {
            colored.save(&image_path)?;
            None
        };
        write_landmarks(&landmark_path, &face.landmarks(image_size))?;
        entries.push(ManifestEntry { name, image_path, landmark_path, side_path, labels: vec![face.expression.name().to_string()] });
    }
    let manifest = DatasetManifest { root: root.to_path_buf(), entries, vocabulary };
    manifest.write_index()?;
    Ok(manifest)
}
