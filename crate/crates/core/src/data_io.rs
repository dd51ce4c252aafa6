//! Synthetic datasets, deterministic splits, and on-disk formats.
//!
//! Images and masks are stored as binary 8-bit PGM with intensities in
//! `[0, 1]` mapped linearly to `0..=255`. Generated images are quantized to
//! that grid, so image and mask round trips are exact. Probability maps and
//! level-set functions are stored as raw little-endian `f64` with a JSON
//! sidecar.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::ScalarField2D;
use crate::training::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlobKind {
    Disc,
    Ellipse,
    /// An ellipse with a circular bite taken out of one long side.
    Bean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    pub blob_kind: BlobKind,
    /// Blob radius (semi-major axis for ellipses) as a fraction of the
    /// smaller image side, drawn uniformly from `[min, max]`.
    pub min_radius: f64,
    pub max_radius: f64,
    /// Per-image foreground level is drawn from `N(fg_mean, fg_std²)`.
    pub fg_mean: f64,
    pub fg_std: f64,
    pub bg_mean: f64,
    pub bg_std: f64,
    /// Per-pixel Gaussian noise added after blurring.
    pub noise_std: f64,
    /// Gaussian blur of the clean image; zero disables it.
    pub edge_blur_sigma: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            count: 40,
            width: 64,
            height: 64,
            blob_kind: BlobKind::Ellipse,
            min_radius: 0.15,
            max_radius: 0.3,
            fg_mean: 0.65,
            fg_std: 0.03,
            bg_mean: 0.35,
            bg_std: 0.03,
            noise_std: 0.3,
            edge_blur_sigma: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config("count", "must be at least 1"));
        }
        if self.width < 4 || self.height < 4 {
            return Err(Error::config("width", "images must be at least 4x4"));
        }
        if !(self.min_radius > 0.0 && self.min_radius <= self.max_radius) {
            return Err(Error::config("min_radius", "need 0 < min_radius <= max_radius"));
        }
        if self.max_radius >= 0.5 {
            return Err(Error::config("max_radius", "blob does not fit inside the image"));
        }
        for (field, v) in [
            ("fg_std", self.fg_std),
            ("bg_std", self.bg_std),
            ("noise_std", self.noise_std),
            ("edge_blur_sigma", self.edge_blur_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be a finite non-negative number"));
            }
        }
        if (self.fg_mean - self.bg_mean).abs() < self.noise_std {
            log::warn!(
                "foreground and background means differ by less than one noise standard deviation ({} vs {}, noise {})",
                self.fg_mean,
                self.bg_mean,
                self.noise_std
            );
        }
        Ok(())
    }
}

/// Pixel-centre membership test of one blob.
#[derive(Debug, Clone, Copy)]
struct Blob {
    kind: BlobKind,
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
}

impl Blob {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        let inside = (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0;
        match self.kind {
            BlobKind::Disc | BlobKind::Ellipse => inside,
            BlobKind::Bean => {
                let bite = 0.55 * self.b;
                inside && u.powi(2) + (v - 1.15 * self.b).powi(2) > bite * bite
            }
        }
    }
}

fn draw_blob(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Blob {
    let side = spec.width.min(spec.height) as f64;
    let a = side * rng.random_range(spec.min_radius..=spec.max_radius);
    let (b, angle) = match spec.blob_kind {
        BlobKind::Disc => (a, 0.0),
        _ => (a * rng.random_range(0.6..=0.9), rng.random_range(0.0..std::f64::consts::PI)),
    };
    let margin = a + 2.0;
    let cx = rng.random_range(margin.min(spec.width as f64 / 2.0)..=(spec.width as f64 - 1.0 - margin).max(spec.width as f64 / 2.0));
    let cy = rng.random_range(margin.min(spec.height as f64 / 2.0)..=(spec.height as f64 - 1.0 - margin).max(spec.height as f64 / 2.0));
    Blob {
        kind: spec.blob_kind,
        cx,
        cy,
        a,
        b,
        angle,
    }
}

/// Separable Gaussian blur with clamped borders, truncated at 3σ.
pub fn gaussian_blur(f: &ScalarField2D, sigma: f64) -> ScalarField2D {
    if sigma <= 0.0 {
        return f.clone();
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = taps.iter().sum();
    let (w, h) = f.dims();
    let pass = |src: &ScalarField2D, horizontal: bool| {
        ScalarField2D::from_fn(w, h, |x, y| {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let d = k as i64 - r;
                let v = if horizontal {
                    src.get((x as i64 + d).clamp(0, w as i64 - 1) as usize, y)
                } else {
                    src.get(x, (y as i64 + d).clamp(0, h as i64 - 1) as usize)
                };
                acc += t * v;
            }
            acc / norm
        })
    };
    pass(&pass(f, true), false)
}

/// Round to the nearest `k/255` inside `[0, 1]`.
pub fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Generates `spec.count` labeled samples with ids `s0000`, `s0001`, ...
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<Sample>> {
    Ok(generate_with_blobs(spec)?.into_iter().map(|(s, _)| s).collect())
}

fn generate_with_blobs(spec: &SyntheticSpec) -> Result<Vec<(Sample, Blob)>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let fg = Normal::new(spec.fg_mean, spec.fg_std).map_err(|e| Error::config("fg_std", e.to_string()))?;
    let bg = Normal::new(spec.bg_mean, spec.bg_std).map_err(|e| Error::config("bg_std", e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::config("noise_std", e.to_string()))?;
    let mut out = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let blob = draw_blob(spec, &mut rng);
        let (f, b) = (fg.sample(&mut rng), bg.sample(&mut rng));
        let mask = ScalarField2D::from_fn(spec.width, spec.height, |x, y| blob.contains(x as f64, y as f64) as u8 as f64);
        let clean = mask.map(|m| if m > 0.5 { f } else { b });
        let mut image = gaussian_blur(&clean, spec.edge_blur_sigma);
        if spec.noise_std > 0.0 {
            image.values_mut().iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        let image = image.map(quantize);
        let sample = Sample {
            id: format!("s{i:04}"),
            image,
            label: Some(mask),
        };
        out.push((sample, blob));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub labeled_fraction_of_train: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            val_fraction: 0.25,
            test_fraction: 0.25,
            labeled_fraction_of_train: 0.3,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.train_fraction, self.val_fraction, self.test_fraction];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || (fr.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config("train_fraction", "split fractions must lie in [0, 1] and sum to 1"));
        }
        if !(self.labeled_fraction_of_train > 0.0 && self.labeled_fraction_of_train <= 1.0) {
            return Err(Error::config("labeled_fraction_of_train", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// `(train, val, test, labeled)` counts: validation and test take the
    /// floor of their share, training takes the rest, and the labeled count
    /// is the floor of its share of training.
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize, usize)> {
        self.validate()?;
        let val = (n as f64 * self.val_fraction + 1e-9).floor() as usize;
        let test = (n as f64 * self.test_fraction + 1e-9).floor() as usize;
        let train = n.saturating_sub(val + test);
        let labeled = ((train as f64 * self.labeled_fraction_of_train + 1e-9).floor() as usize).min(train);
        for (field, c) in [("train_fraction", train), ("val_fraction", val), ("test_fraction", test), ("labeled_fraction_of_train", labeled)] {
            if c == 0 {
                return Err(Error::config(field, format!("{n} samples leave this split empty")));
            }
        }
        Ok((train, val, test, labeled))
    }
}

/// The four disjoint pools of a split dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub train_labeled: Vec<Sample>,
    pub train_unlabeled: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train_labeled: Vec<String>,
    pub train_unlabeled: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Dataset {
    pub fn ids(&self) -> SplitIds {
        let ids = |v: &[Sample]| v.iter().map(|s| s.id.clone()).collect();
        SplitIds {
            train_labeled: ids(&self.train_labeled),
            train_unlabeled: ids(&self.train_unlabeled),
            val: ids(&self.val),
            test: ids(&self.test),
        }
    }

    pub fn len(&self) -> usize {
        self.train_labeled.len() + self.train_unlabeled.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded shuffle, then train/val/test partition, then the first part of
/// train keeps its labels and the rest has them removed. The partition does
/// not depend on the labeled fraction.
pub fn split(samples: Vec<Sample>, spec: &SplitSpec) -> Result<Dataset> {
    let (train, val, _test, labeled) = spec.counts(samples.len())?;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut slots: Vec<Option<Sample>> = samples.into_iter().map(Some).collect();
    let mut take = |r: std::ops::Range<usize>| -> Vec<Sample> { r.map(|i| slots[order[i]].take().expect("each index once")).collect() };
    let mut train_all = take(0..train);
    let val_set = take(train..train + val);
    let test_set = take(train + val..order.len());
    let mut unlabeled = train_all.split_off(labeled);
    unlabeled.iter_mut().for_each(|s| s.label = None);
    Ok(Dataset {
        train_labeled: train_all,
        train_unlabeled: unlabeled,
        val: val_set,
        test: test_set,
    })
}

// ---------------------------------------------------------------- PGM ----

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Encodes `field` (values in `[0, 1]`, clamped) as binary PGM.
pub fn encode_pgm(field: &ScalarField2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.width(), field.height()).into_bytes();
    out.extend(field.values().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

// Skips whitespace and comments, then reads one decimal header field.
fn pgm_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<(usize, usize)> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(format_err(start, format!("expected {what}")));
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .map(|v| (v, start))
        .ok_or_else(|| format_err(start, format!("{what} out of range")))
}

/// Decodes a binary PGM with maxval 255 into values `k/255`.
pub fn decode_pgm(bytes: &[u8]) -> Result<ScalarField2D> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(format_err(0, "missing P5 magic"));
    }
    let mut pos = 2;
    let (width, _) = pgm_number(bytes, &mut pos, "width")?;
    let (height, _) = pgm_number(bytes, &mut pos, "height")?;
    let (maxval, maxval_at) = pgm_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(format_err(maxval_at, format!("maxval {maxval} is not supported (only 255)")));
    }
    if !bytes.get(pos).is_some_and(|c| c.is_ascii_whitespace()) {
        return Err(format_err(pos, "expected a single whitespace byte after maxval"));
    }
    pos += 1;
    if width == 0 || height == 0 {
        return Err(format_err(0, "empty image"));
    }
    let n = width.checked_mul(height).ok_or_else(|| format_err(3, "image too large"))?;
    let raster = bytes.get(pos..pos + n).ok_or_else(|| format_err(bytes.len(), format!("raster needs {n} bytes")))?;
    if bytes.len() > pos + n {
        return Err(format_err(pos + n, "trailing bytes after the raster"));
    }
    ScalarField2D::from_vec(width, height, raster.iter().map(|&b| b as f64 / 255.0).collect())
}

pub fn save_pgm(field: &ScalarField2D, path: &Path) -> Result<()> {
    fs::write(path, encode_pgm(field)).map_err(|e| Error::io(path, e))
}

pub fn load_pgm(path: &Path) -> Result<ScalarField2D> {
    decode_pgm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

// ---------------------------------------------------------- raw f64 ----

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
    /// What the values are, e.g. `probability` or `phi`.
    pub kind: String,
}

/// Sidecar location for a raw field file: same path with a `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn save_f64(field: &ScalarField2D, kind: &str, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.len() * 8);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let meta = RawSidecar {
        width: field.width(),
        height: field.height(),
        kind: kind.to_string(),
    };
    fs::write(&side, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&side, e))
}

/// Returns the field and the `kind` recorded in its sidecar.
pub fn load_f64(path: &Path) -> Result<(ScalarField2D, String)> {
    let side = sidecar_path(path);
    let meta: RawSidecar = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let n = meta.width * meta.height;
    if bytes.len() != n * 8 {
        return Err(format_err(bytes.len().min(n * 8), format!("expected {} bytes for {}x{}", n * 8, meta.width, meta.height)));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((ScalarField2D::from_vec(meta.width, meta.height, values)?, meta.kind))
}

// ---------------------------------------------------------- padding ----

/// Original extents of a padded field; padding is added right and bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    /// Replicate the nearest edge pixel (images).
    Edge,
    /// Fill with zeros (masks).
    Zero,
}

/// Grows `field` to the next multiple of `factor` in each direction.
pub fn pad_to_multiple(field: &ScalarField2D, factor: usize, mode: PadMode) -> (ScalarField2D, Padding) {
    let (w, h) = field.dims();
    let f = factor.max(1);
    let (pw, ph) = (w.div_ceil(f) * f, h.div_ceil(f) * f);
    let padded = ScalarField2D::from_fn(pw, ph, |x, y| {
        if x < w && y < h {
            field.get(x, y)
        } else {
            match mode {
                PadMode::Edge => field.get(x.min(w - 1), y.min(h - 1)),
                PadMode::Zero => 0.0,
            }
        }
    });
    (padded, Padding { width: w, height: h })
}

pub fn crop(field: &ScalarField2D, pad: Padding) -> ScalarField2D {
    ScalarField2D::from_fn(pad.width, pad.height, |x, y| field.get(x, y))
}

// ---------------------------------------------------------- datasets ----

/// `manifest.json` of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub synthetic: Option<SyntheticSpec>,
    pub split: SplitSpec,
    pub splits: SplitIds,
}

/// Writes `images/<id>.pgm` for every sample, `masks/<id>.pgm` for every
/// sample that carries a label, and `manifest.json`.
pub fn save_dataset(dir: &Path, data: &Dataset, synthetic: Option<&SyntheticSpec>, split: &SplitSpec) -> Result<()> {
    let images = dir.join("images");
    let masks = dir.join("masks");
    for d in [&images, &masks] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in data.train_labeled.iter().chain(&data.train_unlabeled).chain(&data.val).chain(&data.test) {
        save_pgm(&s.image, &images.join(format!("{}.pgm", s.id)))?;
        if let Some(label) = &s.label {
            save_pgm(label, &masks.join(format!("{}.pgm", s.id)))?;
        }
    }
    let manifest = DatasetManifest {
        synthetic: synthetic.copied(),
        split: *split,
        splits: data.ids(),
    };
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n").map_err(|e| Error::io(&path, e))
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    Ok(serde_json::from_slice(&fs::read(&path).map_err(|e| Error::io(&path, e))?)?)
}

/// Reads a directory written by [`save_dataset`]. Unlabeled training
/// samples are loaded without touching the mask directory.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest = load_manifest(dir)?;
    let load = |ids: &[String], labeled: bool| -> Result<Vec<Sample>> {
        ids.iter()
            .map(|id| {
                let image = load_pgm(&dir.join("images").join(format!("{id}.pgm")))?;
                let label = if labeled {
                    let m = load_pgm(&dir.join("masks").join(format!("{id}.pgm")))?;
                    image.ensure_same_dims(&m)?;
                    Some(m)
                } else {
                    None
                };
                Ok(Sample { id: id.clone(), image, label })
            })
            .collect()
    };
    let s = &manifest.splits;
    let data = Dataset {
        train_labeled: load(&s.train_labeled, true)?,
        train_unlabeled: load(&s.train_unlabeled, false)?,
        val: load(&s.val, true)?,
        test: load(&s.test, true)?,
    };
    Ok((data, manifest))
}
