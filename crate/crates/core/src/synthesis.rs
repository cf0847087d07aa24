//! Inference: attribute-transfer grids and realism refinement.
//!
//! Pixels leave the model through the Tanh heads and are mapped to 8 bits
//! with `round((v + 1)·127.5)`, clamped to `0..=255`.

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::data::{load_sample, Image, ManifestEntry, Sample, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Generator;
use crate::training::load_generator;

/// Width of the blank strip between grid cells.
pub const SEPARATOR: u32 = 2;
const SEPARATOR_COLOR: Rgb<u8> = Rgb([255, 255, 255]);

/// Which attributes a grid shows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TargetAttributes {
    All,
    Named(Vec<String>),
}

impl TargetAttributes {
    /// Parses `"all"` or a comma-separated list of names.
    pub fn parse(text: &str) -> Self {
        if text.trim() == "all" {
            TargetAttributes::All
        } else {
            TargetAttributes::Named(text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
        }
    }

    /// Vocabulary indices in request order.
    pub fn resolve(&self, vocabulary: &Vocabulary) -> Result<Vec<usize>> {
        match self {
            TargetAttributes::All => Ok((0..vocabulary.len()).collect()),
            TargetAttributes::Named(names) if names.is_empty() => Err(Error::validation("no target attributes requested")),
            TargetAttributes::Named(names) => names
                .iter()
                .map(|n| {
                    vocabulary
                        .index_of(n)
                        .ok_or_else(|| Error::config(format!("attribute {n:?} is not in the checkpoint vocabulary {:?}", vocabulary.names())))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisRequest {
    pub checkpoint_path: PathBuf,
    pub input_image_path: PathBuf,
    pub landmark_path: PathBuf,
    pub target_attributes: TargetAttributes,
    pub output_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RefinementRequest {
    pub checkpoint_path: PathBuf,
    /// Synthetic frontal image `x`.
    pub synthetic_frontal_path: PathBuf,
    /// Real image `s` fed in the side slot.
    pub real_side_image_path: PathBuf,
    pub target_attribute: Option<String>,
    pub output_path: PathBuf,
}

/// A loaded generator with its attribute names.
#[derive(Debug)]
pub struct Model {
    pub generator: Generator,
    pub vocabulary: Vocabulary,
    /// Whether the checkpoint was trained with raw side images.
    pub refinement: bool,
}

impl Model {
    pub fn load(checkpoint: &Path) -> Result<Self> {
        let (generator, cfg, vocabulary) = load_generator(checkpoint)?;
        Ok(Model { generator, vocabulary, refinement: cfg.refinement })
    }

    pub fn image_size(&self) -> usize {
        self.generator.config().image_size as usize
    }

    /// Image head of `generate(x, s, y)` for each attribute vector in `ys`.
    pub fn translate(&self, x: &Image, s: &Image, ys: &[Vec<f32>]) -> Result<Vec<Image>> {
        let n = ys.len() as i64;
        if n == 0 {
            return Ok(Vec::new());
        }
        let xb = x.to_tensor().expand([n, -1, -1, -1], false);
        let sb = s.to_tensor().expand([n, -1, -1, -1], false);
        let flat: Vec<f32> = ys.iter().flatten().copied().collect();
        let y = Tensor::from_slice(&flat).view([n, -1]);
        let out = tch::no_grad(|| self.generator.generate(&xb, &sb, &y))?.image.to_kind(Kind::Float);
        Ok((0..n).map(|i| Image::from_tensor(&out, i)).collect())
    }

    fn one_hot(&self, index: usize) -> Vec<f32> {
        let mut v = vec![0.0; self.vocabulary.len()];
        v[index] = 1.0;
        v
    }
}

/// Reads `x` and its side image (a raw image, or a heatmap rendered from
/// landmarks), resized to `size`.
fn load_input(image: &Path, landmarks: &Path, side: Option<&Path>, size: usize) -> Result<Sample> {
    let entry = ManifestEntry {
        name: String::new(),
        image_path: image.to_path_buf(),
        landmark_path: landmarks.to_path_buf(),
        side_path: side.map(Path::to_path_buf),
        labels: Vec::new(),
    };
    let empty = Vocabulary::new(["none"])?;
    Ok(load_sample(&entry, &empty, size)?.0)
}

/// One row: `x`, then one cell per image, separated by [`SEPARATOR`] pixels.
pub fn grid_row(x: &Image, cells: &[Image]) -> RgbImage {
    let (w, h) = (x.width as u32, x.height as u32);
    let columns = cells.len() as u32 + 1;
    let mut out = RgbImage::from_pixel(columns * w + (columns - 1) * SEPARATOR, h, SEPARATOR_COLOR);
    for (col, img) in std::iter::once(x).chain(cells).enumerate() {
        image::imageops::replace(&mut out, &img.to_rgb8(), i64::from(col as u32 * (w + SEPARATOR)), 0);
    }
    out
}

fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    let sum: f64 = a.data.iter().zip(&b.data).map(|(p, q)| f64::from((p - q).abs())).sum();
    sum / a.data.len().max(1) as f64
}

/// Per-column result of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridColumn {
    pub attribute: String,
    /// Mean `|x − cell|` in `[-1, 1]` units.
    pub mean_abs_diff: f64,
}

/// Renders the attribute-transfer grid for `x` with side image `s`.
pub fn render_grid(model: &Model, x: &Image, s: &Image, targets: &TargetAttributes) -> Result<(RgbImage, Vec<GridColumn>)> {
    let indices = targets.resolve(&model.vocabulary)?;
    let ys: Vec<Vec<f32>> = indices.iter().map(|&k| model.one_hot(k)).collect();
    let cells = model.translate(x, s, &ys)?;
    let columns = indices
        .iter()
        .zip(&cells)
        .map(|(&k, cell)| GridColumn { attribute: model.vocabulary.names()[k].clone(), mean_abs_diff: mean_abs_diff(x, cell) })
        .collect();
    Ok((grid_row(x, &cells), columns))
}

/// Loads the checkpoint and input, writes the grid PNG and returns the
/// per-column differences from the input.
pub fn synthesize_grid(req: &SynthesisRequest) -> Result<Vec<GridColumn>> {
    let model = Model::load(&req.checkpoint_path)?;
    if model.refinement {
        log::warn!("checkpoint was trained for refinement; grid uses a landmark heatmap side input");
    }
    let sample = load_input(&req.input_image_path, &req.landmark_path, None, model.image_size())?;
    let (grid, columns) = render_grid(&model, &sample.x, &sample.s, &req.target_attributes)?;
    grid.save(&req.output_path)?;
    for c in &columns {
        log::info!("{}: mean |x - output| = {:.4}", c.attribute, c.mean_abs_diff);
    }
    Ok(columns)
}

/// Sidecar written next to a refined image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementMetadata {
    pub checkpoint: PathBuf,
    pub synthetic_frontal: PathBuf,
    pub real_side_image: PathBuf,
    /// `None` feeds an all-zero attribute vector.
    pub target_attribute: Option<String>,
    pub image_size: usize,
}

/// Refines `x` against side image `s`; with a target attribute, the
/// attribute is transferred in the same pass.
pub fn refine_image(model: &Model, x: &Image, s: &Image, target: Option<&str>) -> Result<Image> {
    let y = match target {
        Some(name) => {
            let k = TargetAttributes::Named(vec![name.to_string()]).resolve(&model.vocabulary)?[0];
            model.one_hot(k)
        }
        None => vec![0.0; model.vocabulary.len()],
    };
    Ok(model.translate(x, s, &[y])?.remove(0))
}

/// Writes the refined image to `output_path` and its metadata to the same
/// path with a `.json` extension. Returns the metadata path.
pub fn refine(req: &RefinementRequest) -> Result<PathBuf> {
    let model = Model::load(&req.checkpoint_path)?;
    if !model.refinement {
        log::warn!("checkpoint was not trained for refinement");
    }
    let size = model.image_size();
    let sample = load_input(&req.synthetic_frontal_path, Path::new(""), Some(&req.real_side_image_path), size)?;
    let out = refine_image(&model, &sample.x, &sample.s, req.target_attribute.as_deref())?;
    out.to_rgb8().save(&req.output_path)?;
    let meta = RefinementMetadata {
        checkpoint: req.checkpoint_path.clone(),
        synthetic_frontal: req.synthetic_frontal_path.clone(),
        real_side_image: req.real_side_image_path.clone(),
        target_attribute: req.target_attribute.clone(),
        image_size: size,
    };
    let meta_path = req.output_path.with_extension("json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(meta_path)
}

/// Mean over pixels of `image` of the RGB distance to the nearest color
/// that occurs in `reference`.
pub fn palette_distance(image: &RgbImage, reference: &RgbImage) -> f64 {
    let mut palette: Vec<[u8; 3]> = reference.pixels().map(|p| p.0).collect();
    palette.sort_unstable();
    palette.dedup();
    let nearest = |p: [u8; 3]| {
        palette
            .iter()
            .map(|q| (0..3).map(|c| (f64::from(p[c]) - f64::from(q[c])).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    };
    let total: f64 = image.pixels().map(|p| nearest(p.0)).sum();
    total / f64::from(image.width() * image.height()).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::toy::{generate_refinement_dataset, generate_toy_dataset};
    use crate::training::{TrainConfig, Trainer};

    fn toy_checkpoint(dir: &Path, refinement: bool) -> PathBuf {
        let cfg = TrainConfig { refinement, ..TrainConfig::toy(4) };
        let vocab = Vocabulary::new(crate::data::toy::EXPRESSIONS).unwrap();
        let path = dir.join("model.safetensors");
        Trainer::new(cfg, vocab).unwrap().save(&path, 0).unwrap();
        path
    }

    #[test]
    fn parse_targets() {
        assert_eq!(TargetAttributes::parse("all"), TargetAttributes::All);
        assert_eq!(TargetAttributes::parse("happy, sad"), TargetAttributes::Named(vec!["happy".into(), "sad".into()]));
        let v = Vocabulary::new(["a", "b", "c"]).unwrap();
        assert_eq!(TargetAttributes::parse("c,a").resolve(&v).unwrap(), vec![2, 0]);
        assert!(matches!(TargetAttributes::parse("d").resolve(&v), Err(Error::Config(_))));
        assert!(TargetAttributes::parse("").resolve(&v).is_err());
    }

    #[test]
    fn grid_layout_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = toy_checkpoint(dir.path(), false);
        generate_toy_dataset(dir.path().join("data"), 2, 4, 32, 1).unwrap();
        let req = |out: &str| SynthesisRequest {
            checkpoint_path: ckpt.clone(),
            input_image_path: dir.path().join("data/images/toy_00000.png"),
            landmark_path: dir.path().join("data/landmarks/toy_00000.txt"),
            target_attributes: TargetAttributes::All,
            output_path: dir.path().join(out),
        };
        let columns = synthesize_grid(&req("a.png")).unwrap();
        synthesize_grid(&req("b.png")).unwrap();
        assert_eq!(columns.len(), 4);
        let a = std::fs::read(dir.path().join("a.png")).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b.png")).unwrap());
        let grid = image::open(dir.path().join("a.png")).unwrap().to_rgb8();
        assert_eq!(grid.dimensions(), (5 * 32 + 4 * SEPARATOR, 32));
        // First column is the input itself.
        let input = image::open(dir.path().join("data/images/toy_00000.png")).unwrap().to_rgb8();
        assert_eq!(image::imageops::crop_imm(&grid, 0, 0, 32, 32).to_image(), input);
        assert_eq!(grid.get_pixel(32, 0), &SEPARATOR_COLOR);
    }

    #[test]
    fn zero_head_refinement_is_blank() {
        let dir = tempfile::tempdir().unwrap();
        let ckpt = toy_checkpoint(dir.path(), true);
        generate_refinement_dataset(dir.path().join("data"), 1, 4, 32, 2).unwrap();
        let mut model = Model::load(&ckpt).unwrap();
        model.generator.zero_output_heads();
        let sample = load_input(
            &dir.path().join("data/images/toy_00000.png"),
            Path::new(""),
            Some(&dir.path().join("data/sides/toy_00000.png")),
            32,
        )
        .unwrap();
        let out = refine_image(&model, &sample.x, &sample.s, Some("sad")).unwrap();
        assert_eq!((out.height, out.width), (32, 32));
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert!(matches!(refine_image(&model, &sample.x, &sample.s, Some("angry")), Err(Error::Config(_))));

        let req = RefinementRequest {
            checkpoint_path: ckpt,
            synthetic_frontal_path: dir.path().join("data/images/toy_00000.png"),
            real_side_image_path: dir.path().join("data/sides/toy_00000.png"),
            target_attribute: None,
            output_path: dir.path().join("refined.png"),
        };
        let meta_path = refine(&req).unwrap();
        let meta: RefinementMetadata = serde_json::from_str(&std::fs::read_to_string(meta_path).unwrap()).unwrap();
        assert_eq!(meta.target_attribute, None);
        assert_eq!(image::open(dir.path().join("refined.png")).unwrap().to_rgb8().dimensions(), (32, 32));
    }

    #[test]
    fn palette_distance_prefers_matching_colors() {
        let red = RgbImage::from_pixel(4, 4, Rgb([200, 0, 0]));
        let gray = RgbImage::from_pixel(4, 4, Rgb([60, 60, 60]));
        let reddish = RgbImage::from_pixel(4, 4, Rgb([180, 10, 10]));
        assert_eq!(palette_distance(&red, &red), 0.0);
        assert!(palette_distance(&reddish, &red) < palette_distance(&reddish, &gray));
        assert!((palette_distance(&gray, &RgbImage::from_pixel(1, 1, Rgb([63, 64, 60]))) - 5.0).abs() < 1e-12);
    }
}
