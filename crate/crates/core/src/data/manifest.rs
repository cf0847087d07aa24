use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use tch::Tensor;

use super::{augment_flip, encode_attributes, render_heatmap, HeatmapSpec, Image, Landmark, LandmarkSet, Sample, Vocabulary};
use crate::error::{Error, Result};

pub const IMAGES_DIR: &str = "images";
pub const LANDMARKS_DIR: &str = "landmarks";
pub const SIDES_DIR: &str = "sides";
pub const LABELS_FILE: &str = "labels.tsv";
pub const VOCABULARY_FILE: &str = "vocabulary.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub image_path: PathBuf,
    pub landmark_path: PathBuf,
    /// Raw side image, present only in refinement datasets.
    pub side_path: Option<PathBuf>,
    pub labels: Vec<String>,
}

/// Index of a dataset directory:
///
/// ```text
/// images/<name>.png      8-bit RGB
/// landmarks/<name>.txt   one "x y" pair per line, pixel coordinates
/// sides/<name>.png       optional raw side images (refinement datasets)
/// labels.tsv             <name>\t<attr>\t<attr>...
/// vocabulary.txt         one attribute per line, one-hot order
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub vocabulary: Vocabulary,
}

impl DatasetManifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let vocab_path = root.join(VOCABULARY_FILE);
        let vocab_text = fs::read_to_string(&vocab_path).map_err(|e| Error::ingestion(&vocab_path, e.to_string()))?;
        let vocabulary = Vocabulary::new(vocab_text.lines().map(str::trim).filter(|l| !l.is_empty()))?;

        let labels_path = root.join(LABELS_FILE);
        let labels_text = fs::read_to_string(&labels_path).map_err(|e| Error::ingestion(&labels_path, e.to_string()))?;
        let has_sides = root.join(SIDES_DIR).is_dir();
        let mut entries = Vec::new();
        for (lineno, line) in labels_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let name = fields.next().unwrap_or_default().trim().to_string();
            let labels: Vec<String> = fields.map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
            if name.is_empty() {
                return Err(Error::ingestion(&labels_path, format!("line {}: missing sample name", lineno + 1)));
            }
            for l in &labels {
                if vocabulary.index_of(l).is_none() {
                    return Err(Error::ingestion(&labels_path, format!("line {}: label {l:?} not in vocabulary", lineno + 1)));
                }
            }
            let entry = ManifestEntry {
                image_path: root.join(IMAGES_DIR).join(format!("{name}.png")),
                landmark_path: root.join(LANDMARKS_DIR).join(format!("{name}.txt")),
                side_path: has_sides.then(|| root.join(SIDES_DIR).join(format!("{name}.png"))),
                name,
                labels,
            };
            if !entry.image_path.is_file() {
                return Err(Error::ingestion(&entry.image_path, "image file missing"));
            }
            match &entry.side_path {
                Some(p) if !p.is_file() => return Err(Error::ingestion(p, "side image missing")),
                None if !entry.landmark_path.is_file() => {
                    return Err(Error::ingestion(&entry.landmark_path, "landmark file missing for image"))
                }
                _ => {}
            }
            entries.push(entry);
        }
        Ok(DatasetManifest { root, entries, vocabulary })
    }

    /// Writes `labels.tsv` and `vocabulary.txt` for the current entries.
    pub fn write_index(&self) -> Result<()> {
        let mut vocab = fs::File::create(self.root.join(VOCABULARY_FILE))?;
        for n in self.vocabulary.names() {
            writeln!(vocab, "{n}")?;
        }
        let mut labels = fs::File::create(self.root.join(LABELS_FILE))?;
        for e in &self.entries {
            let mut line = e.name.clone();
            for l in &e.labels {
                line.push('\t');
                line.push_str(l);
            }
            writeln!(labels, "{line}")?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> DatasetManifest {
        DatasetManifest {
            root: self.root.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            vocabulary: self.vocabulary.clone(),
        }
    }

    /// Reads, resizes and encodes entries `indices` straight from disk.
    pub fn load_batch(&self, indices: &[usize], image_size: usize, flip_rng: Option<&mut dyn rand::RngCore>) -> Result<Batch> {
        let samples = indices
            .iter()
            .map(|&i| {
                let e = self.entries.get(i).ok_or_else(|| Error::validation(format!("index {i} out of range")))?;
                load_sample(e, &self.vocabulary, image_size).map(|(s, _)| s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(samples, flip_rng))
    }
}

/// Parses a landmark file: one `x y` pair per line.
pub fn read_landmarks(path: &Path) -> Result<LandmarkSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::ingestion(path, e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let nums: Vec<f32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| Error::ingestion(path, format!("line {}: {e}", i + 1)))?;
            match nums.as_slice() {
                [x, y] => Ok(Landmark::new(*x, *y)),
                _ => Err(Error::ingestion(path, format!("line {}: expected \"x y\"", i + 1))),
            }
        })
        .collect()
}

pub fn write_landmarks(path: &Path, landmarks: &[Landmark]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for l in landmarks {
        writeln!(f, "{} {}", l.x, l.y)?;
    }
    Ok(())
}

/// Reads an RGB image and resizes it to `size × size` if needed. Returns
/// the image and the per-axis scale `(size / width, size / height)`.
pub(crate) fn read_image(path: &Path, size: usize) -> Result<(Image, f32, f32)> {
    let img = image::open(path).map_err(|e| Error::ingestion(path, e.to_string()))?.to_rgb8();
    let (w, h) = img.dimensions();
    if (w as usize, h as usize) == (size, size) {
        return Ok((Image::from_rgb8(&img), 1.0, 1.0));
    }
    let resized = image::imageops::resize(&img, size as u32, size as u32, FilterType::Triangle);
    Ok((Image::from_rgb8(&resized), size as f32 / w as f32, size as f32 / h as f32))
}

/// Loads one entry. Returns the sample and the number of clamped landmarks.
pub(crate) fn load_sample(entry: &ManifestEntry, vocabulary: &Vocabulary, size: usize) -> Result<(Sample, usize)> {
    let (x, sx, sy) = read_image(&entry.image_path, size)?;
    let raw_landmarks = if entry.landmark_path.is_file() {
        read_landmarks(&entry.landmark_path)?
    } else if entry.side_path.is_some() {
        Vec::new()
    } else {
        return Err(Error::ingestion(&entry.landmark_path, "landmark file missing for image"));
    };
    // Scale about pixel centers.
    let landmarks: LandmarkSet =
        raw_landmarks.iter().map(|l| Landmark::new((l.x + 0.5) * sx - 0.5, (l.y + 0.5) * sy - 0.5)).collect();
    let (s, clamped) = match &entry.side_path {
        Some(p) => (read_image(p, size)?.0, 0),
        None => {
            let h = render_heatmap(&landmarks, size, &HeatmapSpec::for_size(size));
            if h.empty {
                log::warn!("{}: no landmarks, side heatmap is blank", entry.landmark_path.display());
            }
            if h.clamped > 0 {
                log::warn!("{}: clamped {} out-of-frame landmarks", entry.landmark_path.display(), h.clamped);
            }
            (h.image, h.clamped)
        }
    };
    let labels = encode_attributes(&entry.labels, vocabulary)?;
    Ok((Sample { x, s, landmarks, labels }, clamped))
}

/// Images `x`, side images `s` and attribute rows `y` of a batch.
#[derive(Debug)]
pub struct Batch {
    pub x: Tensor,
    pub s: Tensor,
    pub y: Tensor,
}

impl Batch {
    pub fn len(&self) -> i64 {
        self.x.size()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_kind(&self, kind: tch::Kind) -> Batch {
        Batch { x: self.x.to_kind(kind), s: self.s.to_kind(kind), y: self.y.to_kind(kind) }
    }
}

fn assemble(samples: Vec<Sample>, mut flip_rng: Option<&mut dyn rand::RngCore>) -> Batch {
    let n = samples.len() as i64;
    let mut xs = Vec::new();
    let mut ss = Vec::new();
    let mut ys = Vec::new();
    let (c, h, w) = samples.first().map(|s| (s.x.channels, s.x.height, s.x.width)).unwrap_or((3, 0, 0));
    let ny = samples.first().map(|s| s.labels.len()).unwrap_or(0);
    for sample in samples {
        let sample = match flip_rng.as_deref_mut() {
            Some(rng) => augment_flip(sample, rng).0,
            None => sample,
        };
        xs.extend_from_slice(&sample.x.data);
        ss.extend_from_slice(&sample.s.data);
        ys.extend_from_slice(&sample.labels);
    }
    let shape = [n, c as i64, h as i64, w as i64];
    Batch {
        x: Tensor::from_slice(&xs).view(shape),
        s: Tensor::from_slice(&ss).view(shape),
        y: Tensor::from_slice(&ys).view([n, ny as i64]),
    }
}

/// How side images are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideSource {
    /// Rendered from landmarks.
    Heatmap,
    /// Read from `sides/` (refinement datasets).
    Image,
}

/// A manifest decoded into memory at a fixed image size.
#[derive(Debug, Clone)]
pub struct Dataset {
    manifest: DatasetManifest,
    image_size: usize,
    samples: Vec<Sample>,
    clamped_landmarks: usize,
}

impl Dataset {
    pub fn load(manifest: DatasetManifest, image_size: usize) -> Result<Self> {
        let mut samples = Vec::with_capacity(manifest.len());
        let mut clamped_landmarks = 0;
        for e in &manifest.entries {
            let (s, c) = load_sample(e, &manifest.vocabulary, image_size)?;
            clamped_landmarks += c;
            samples.push(s);
        }
        Ok(Dataset { manifest, image_size, samples, clamped_landmarks })
    }

    pub fn from_samples(manifest: DatasetManifest, image_size: usize, samples: Vec<Sample>) -> Self {
        Dataset { manifest, image_size, samples, clamped_landmarks: 0 }
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.manifest.vocabulary
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total number of landmarks clamped onto the frame while loading.
    pub fn clamped_landmarks(&self) -> usize {
        self.clamped_landmarks
    }

    pub fn side_source(&self) -> SideSource {
        match self.manifest.entries.first().and_then(|e| e.side_path.as_ref()) {
            Some(_) => SideSource::Image,
            None => SideSource::Heatmap,
        }
    }

    /// Batch of `indices`, each sample flipped with probability 0.5 when
    /// `flip_rng` is given.
    pub fn load_batch(&self, indices: &[usize], flip_rng: Option<&mut dyn rand::RngCore>) -> Result<Batch> {
        let samples = indices
            .iter()
            .map(|&i| self.samples.get(i).cloned().ok_or_else(|| Error::validation(format!("index {i} out of range"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(samples, flip_rng))
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            manifest: self.manifest.subset(indices),
            image_size: self.image_size,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            clamped_landmarks: 0,
        }
    }

    /// Index of the single label of each sample (`None` if not exactly one).
    pub fn class_indices(&self) -> Vec<Option<usize>> {
        self.samples
            .iter()
            .map(|s| {
                let ones: Vec<usize> = s.labels.iter().enumerate().filter(|(_, &v)| v == 1.0).map(|(i, _)| i).collect();
                (ones.len() == 1).then(|| ones[0])
            })
            .collect()
    }
}
