//! Dataset ingestion, deterministic stratified splitting, training
//! augmentation, and a synthetic glyph generator for self-contained
//! desk-scale experiments.
//!
//! The synthetic classes come in coarse-similar pairs (solid disk vs ring,
//! solid vs dashed bars, ...) so that a pinhole capture separates them
//! easily while heavily blurred captures mostly cannot: identity lives at
//! the fine scale, as with faces.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;

/// Labeled image collection; all images share one side length.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        num_classes: usize,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dataset("dataset is empty".to_string()));
        }
        if images.len() != labels.len() {
            return Err(Error::Dataset(format!(
                "{} images vs {} labels",
                images.len(),
                labels.len()
            )));
        }
        if class_names.len() != num_classes {
            return Err(Error::Dataset(format!(
                "{} class names vs {num_classes} classes",
                class_names.len()
            )));
        }
        let n = images[0].n();
        if images.iter().any(|img| img.n() != n) {
            return Err(Error::Dataset("images differ in size".to_string()));
        }
        let mut counts = vec![0usize; num_classes];
        for &label in &labels {
            if label >= num_classes {
                return Err(Error::Dataset(format!(
                    "label {label} out of range for {num_classes} classes"
                )));
            }
            counts[label] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Dataset(format!("class {empty} has no samples")));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Pixels per side of every image in the set.
    pub fn n(&self) -> usize {
        self.images[0].n()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &label in &self.labels {
            counts[label] += 1;
        }
        counts
    }
}

/// Train/test split parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.95,
            seed: 0,
        }
    }
}

/// Per-class stratified split with a seeded shuffle. Each class keeps at
/// least one sample on both sides, so classes with a single sample are
/// rejected.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must be in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.len() < 2 {
            return Err(Error::Dataset(format!(
                "class {class} has {} sample(s); need at least 2 to split",
                members.len()
            )));
        }
        // Fisher-Yates driven by the spec seed.
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        let exact = spec.train_fraction * members.len() as f64;
        let n_train = (exact.round() as usize).clamp(1, members.len() - 1);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let subset = |idx: &[usize]| {
        Dataset::new(
            idx.iter().map(|&i| ds.images[i].clone()).collect(),
            idx.iter().map(|&i| ds.labels[i]).collect(),
            ds.num_classes,
            ds.class_names.clone(),
        )
    };
    Ok((subset(&train_idx)?, subset(&test_idx)?))
}

/// Which axis the random training flip mirrors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAxis {
    /// Top-bottom mirror.
    Vertical,
    /// Left-right mirror.
    Horizontal,
}

/// Random crop with replicate padding, then a coin-flip mirror.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmenter {
    pub pad: usize,
    pub flip_axis: FlipAxis,
}

impl Default for Augmenter {
    fn default() -> Self {
        Self {
            pad: 4,
            flip_axis: FlipAxis::Vertical,
        }
    }
}

impl Augmenter {
    pub fn apply(&self, img: &Image, rng: &mut impl Rng) -> Image {
        let dy = rng.random_range(0..=2 * self.pad);
        let dx = rng.random_range(0..=2 * self.pad);
        let flip = rng.random::<bool>();
        self.apply_with(img, dy, dx, flip)
    }

    /// Deterministic variant with explicit crop offset and flip decision.
    /// Offset `(pad, pad)` with no flip reproduces the input exactly.
    pub fn apply_with(&self, img: &Image, dy: usize, dx: usize, flip: bool) -> Image {
        let n = img.n();
        let pad = self.pad as isize;
        let clamp = |v: isize| v.clamp(0, n as isize - 1) as usize;
        let mut out = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (rr, cc) = if flip {
                    match self.flip_axis {
                        FlipAxis::Vertical => (n - 1 - r, c),
                        FlipAxis::Horizontal => (r, n - 1 - c),
                    }
                } else {
                    (r, c)
                };
                let src_r = clamp(rr as isize + dy as isize - pad);
                let src_c = clamp(cc as isize + dx as isize - pad);
                out.push(img.get(src_r, src_c));
            }
        }
        Image::new(n, out).expect("augmentation preserves range")
    }
}

/// Loads `root/<class_name>/<image>.pgm`, sorted by name, resized to `n`.
pub fn load_dataset(root: &Path, n: usize) -> Result<Dataset> {
    let mut class_dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::Dataset(format!(
            "no class directories under {}",
            root.display()
        )));
    }

    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut class_names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let mut files: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Dataset(format!(
                "class directory {} has no .pgm images",
                dir.display()
            )));
        }
        for file in files {
            images.push(Image::read_pgm(&file)?.resize_bilinear(n)?);
            labels.push(label);
        }
        class_names.push(
            dir.file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("class_{label:02}")),
        );
    }
    let num_classes = class_names.len();
    Dataset::new(images, labels, num_classes, class_names)
}

/// Writes `root/<class_name>/img_NNNN.pgm` plus a `manifest.json` with
/// per-class counts and a sha256 digest of every file.
pub fn save_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    let mut per_class_index = vec![0usize; ds.num_classes];
    let mut files = BTreeMap::new();
    for (img, &label) in ds.images.iter().zip(&ds.labels) {
        let dir = root.join(&ds.class_names[label]);
        fs::create_dir_all(&dir)?;
        let name = format!("img_{:04}.pgm", per_class_index[label]);
        per_class_index[label] += 1;
        let path = dir.join(&name);
        img.write_pgm(&path)?;
        let digest = Sha256::digest(fs::read(&path)?);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        files.insert(format!("{}/{}", ds.class_names[label], name), hex);
    }
    let manifest = serde_json::json!({
        "n": ds.n(),
        "num_classes": ds.num_classes,
        "classes": ds
            .class_names
            .iter()
            .zip(ds.class_counts())
            .map(|(name, count)| serde_json::json!({"name": name, "count": count}))
            .collect::<Vec<_>>(),
        "files": files,
    });
    fs::write(
        root.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

// Synthetic glyphs. Classes are paired so that the members of a pair agree
// at coarse scale and differ only in fine structure.

const GLYPH_COUNT: usize = 10;

fn dash_kept(t: f64, period: f64) -> bool {
    (t / period).rem_euclid(1.0) < 0.55
}

fn glyph_indicator(class: usize, u: f64, v: f64) -> bool {
    let r2 = u * u + v * v;
    match class {
        // Disk vs ring with the same outer radius.
        0 => r2 <= 0.52 * 0.52,
        1 => r2 <= 0.52 * 0.52 && r2 >= 0.30 * 0.30,
        // Solid vs dashed horizontal bar.
        2 => v.abs() <= 0.16 && u.abs() <= 0.72,
        3 => v.abs() <= 0.16 && u.abs() <= 0.72 && dash_kept(u, 0.30),
        // Solid vs dashed vertical bar.
        4 => u.abs() <= 0.16 && v.abs() <= 0.72,
        5 => u.abs() <= 0.16 && v.abs() <= 0.72 && dash_kept(v, 0.30),
        // Solid vs dashed X.
        6 | 7 => {
            let d1 = (u + v) / std::f64::consts::SQRT_2;
            let d2 = (u - v) / std::f64::consts::SQRT_2;
            let in_stroke1 = d2.abs() <= 0.13 && d1.abs() <= 0.80;
            let in_stroke2 = d1.abs() <= 0.13 && d2.abs() <= 0.80;
            if class == 6 {
                in_stroke1 || in_stroke2
            } else {
                (in_stroke1 && dash_kept(d1, 0.30)) || (in_stroke2 && dash_kept(d2, 0.30))
            }
        }
        // Solid vs dashed square frame.
        8 | 9 => {
            let outer = u.abs().max(v.abs());
            let in_frame = outer <= 0.62 && outer >= 0.44;
            if class == 8 {
                in_frame
            } else {
                // Dash along the perimeter direction of the nearest edge.
                let t = if u.abs() >= v.abs() { v } else { u };
                in_frame && dash_kept(t, 0.30)
            }
        }
        _ => unreachable!("glyph class out of range"),
    }
}

fn render_glyph(class: usize, n: usize, theta: f64, shift: (f64, f64), brightness: f64) -> Image {
    let (sin_t, cos_t) = theta.sin_cos();
    let half = n as f64 / 2.0;
    // 3x3 supersampling per pixel.
    let offsets = [-1.0 / 3.0, 0.0, 1.0 / 3.0];
    Image::from_fn(n, |r, c| {
        let mut hits = 0u32;
        for oy in offsets {
            for ox in offsets {
                let px = (c as f64 + 0.5 + ox - half - shift.0) / half;
                let py = (r as f64 + 0.5 + oy - half - shift.1) / half;
                // Rotate sample into glyph coordinates.
                let u = cos_t * px + sin_t * py;
                let v = -sin_t * px + cos_t * py;
                if glyph_indicator(class, u, v) {
                    hits += 1;
                }
            }
        }
        brightness * hits as f64 / 9.0
    })
    .expect("glyph values stay in range")
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 over seed ^ salt-step.
    let mut z = seed ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Generates a balanced synthetic glyph dataset: per sample a random
/// rotation of +/-10 degrees, a sub-pixel shift, and +/-10% brightness
/// jitter, all deterministic per seed.
pub fn gen_synthetic(num_classes: usize, per_class: usize, n: usize, seed: u64) -> Result<Dataset> {
    if num_classes < 2 || num_classes > GLYPH_COUNT {
        return Err(Error::InvalidArgument(format!(
            "num_classes must be in 2..={GLYPH_COUNT}, got {num_classes}"
        )));
    }
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be > 0".to_string()));
    }
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "side must be >= 8 to resolve the glyphs, got {n}"
        )));
    }
    let max_angle = 10.0f64.to_radians();
    let mut images = Vec::with_capacity(num_classes * per_class);
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for class in 0..num_classes {
        for index in 0..per_class {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                seed,
                (class as u64) << 32 | index as u64,
            ));
            let theta = rng.random_range(-max_angle..max_angle);
            let shift = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let brightness = 0.85 * rng.random_range(0.9..1.1);
            images.push(render_glyph(class, n, theta, shift, brightness));
            labels.push(class);
        }
    }
    let class_names = (0..num_classes).map(|c| format!("class_{c:02}")).collect();
    Dataset::new(images, labels, num_classes, class_names)
}
