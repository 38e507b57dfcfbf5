//! Deterministic stand-in encoders for tests and the synthetic benchmark.
//!
//! Text: tokens (lowercased runs of alphanumerics) are hashed with FNV-1a
//! 64 into 4096 bins; the count vector is multiplied by a seeded Gaussian
//! matrix and L2-normalized. The result ignores token order.
//!
//! Images: the grayscale plane is rescaled to its own `[0, 1]` range. An
//! 8x8 template is sampled around the centroid of the bright mass, scaled by
//! its equivalent-disc radius, so it describes shape independent of position
//! and size. Five edge statistics (edge width, peak gradient, gradient
//! energy, Laplacian ratio, mid-tone fraction) describe sharpness, and eight
//! global statistics (gray mean and spread, R/G/B means, centroid, radius)
//! describe the rest. These 77 features plus a constant bias input are
//! projected to `dim` with a seeded Gaussian matrix and L2-normalized.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;

use super::{BackendKind, EncoderMetadata, ImageInput};
use crate::embedding::EmbeddingVector;
use crate::error::{DeclipError, Result};
use crate::rng::{derive_seed, SplitMix64};

pub const DEFAULT_DIM: usize = 64;
pub const TEXT_BINS: usize = 4096;
pub const TEMPLATE: usize = 8;
/// Half-width of the shape template in units of the equivalent-disc radius.
pub const TEMPLATE_SPAN: f64 = 1.4;
pub const N_SHARPNESS: usize = 5;
pub const N_GLOBAL: usize = 8;
/// Shape template, edge statistics, global statistics, and a constant bias input.
pub const IMAGE_FEATURES: usize = TEMPLATE * TEMPLATE + N_SHARPNESS + N_GLOBAL + 1;

const TEXT_STREAM: u64 = 0x7465_7874;
const IMAGE_STREAM: u64 = 0x696d_6167;
const VERSION: &str = "toy-v1";

/// Gains on the edge statistics. Each statistic ends up on the scale of a
/// fraction of one template cell, so shape and layout dominate the raw
/// geometry and blur is a minor direction in it.
const SHARPNESS_GAINS: [f64; N_SHARPNESS] = [0.03125, 0.25, 0.25, 0.125, 1.0];

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_bin(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % TEXT_BINS as u64) as usize
}

/// Sparse hashed token-count vector, keyed by bin.
pub fn token_counts(text: &str) -> BTreeMap<usize, u32> {
    let mut counts = BTreeMap::new();
    for tok in tokenize(text) {
        *counts.entry(token_bin(&tok)).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone)]
pub struct ToyEncoder {
    seed: u64,
    dim: usize,
    image_root: Option<PathBuf>,
    images: Option<Arc<HashMap<String, RgbImage>>>,
    /// `TEXT_BINS` rows of length `dim`.
    text_proj: Vec<f64>,
    /// `IMAGE_FEATURES` rows of length `dim`.
    image_proj: Vec<f64>,
}

fn gaussian_matrix(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(seed);
    (0..rows * cols).map(|_| rng.next_gaussian()).collect()
}

impl ToyEncoder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0, "toy encoder dimension must be positive");
        Self {
            seed,
            dim,
            image_root: None,
            images: None,
            text_proj: gaussian_matrix(derive_seed(seed, TEXT_STREAM), TEXT_BINS, dim),
            image_proj: gaussian_matrix(derive_seed(seed, IMAGE_STREAM), IMAGE_FEATURES, dim),
        }
    }

    /// Directory that image keys are resolved against.
    pub fn with_image_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.image_root = Some(root.into());
        self
    }

    /// In-memory images; keys found here are never read from disk.
    pub fn with_images(mut self, images: Arc<HashMap<String, RgbImage>>) -> Self {
        self.images = Some(images);
        self
    }

    pub fn image_root(&self) -> Option<&Path> {
        self.image_root.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metadata(&self) -> EncoderMetadata {
        EncoderMetadata {
            kind: BackendKind::ToyDeterministic,
            id: "toy-deterministic".into(),
            version: VERSION.into(),
            dim: self.dim,
            seed: Some(self.seed),
        }
    }

    pub fn encode_text(&self, text: &str) -> Result<EmbeddingVector> {
        let counts = token_counts(text);
        if counts.is_empty() {
            return Err(DeclipError::EmptyText);
        }
        let mut out = vec![0.0; self.dim];
        for (&bin, &count) in &counts {
            let row = &self.text_proj[bin * self.dim..(bin + 1) * self.dim];
            let c = f64::from(count);
            out.iter_mut().zip(row).for_each(|(o, r)| *o += c * r);
        }
        EmbeddingVector::normalized(out)
    }

    pub fn encode_image(&self, image: &ImageInput) -> Result<EmbeddingVector> {
        match image {
            ImageInput::Pixels(img) => self.encode_pixels(img),
            ImageInput::Key(key) => {
                if let Some(img) = self.images.as_ref().and_then(|m| m.get(key)) {
                    return self.encode_pixels(img);
                }
                let path = match &self.image_root {
                    Some(root) => root.join(key),
                    None => PathBuf::from(key),
                };
                let img = load_rgb(&path)?;
                self.encode_pixels(&img)
            }
        }
    }

    pub fn encode_pixels(&self, img: &RgbImage) -> Result<EmbeddingVector> {
        let features = image_features(img)?;
        let mut out = vec![0.0; self.dim];
        for (i, &f) in features.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let row = &self.image_proj[i * self.dim..(i + 1) * self.dim];
            out.iter_mut().zip(row).for_each(|(o, r)| *o += f * r);
        }
        EmbeddingVector::normalized(out)
    }
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| DeclipError::ImageUnreadable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

fn gray_plane(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| {
            (0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])) / 255.0
        })
        .collect()
}

/// Gray plane rescaled to `[0, 1]` by its own range; all zeros when flat.
pub fn normalized_plane(gray: &[f64]) -> Vec<f64> {
    let (lo, hi) = gray
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &g| (lo.min(g), hi.max(g)));
    if !(hi > lo) {
        return vec![0.0; gray.len()];
    }
    gray.iter().map(|g| (g - lo) / (hi - lo)).collect()
}

/// Centroid and equivalent-disc radius of the bright mass of a normalized plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

pub fn layout(plane: &[f64], width: usize, height: usize) -> Layout {
    let mass: f64 = plane.iter().sum();
    if mass <= 0.0 {
        return Layout {
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            radius: width.min(height) as f64 / 4.0,
        };
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, &v) in plane.iter().enumerate() {
        sx += v * ((i % width) as f64 + 0.5);
        sy += v * ((i / width) as f64 + 0.5);
    }
    Layout {
        cx: sx / mass,
        cy: sy / mass,
        radius: (mass / std::f64::consts::PI).sqrt().max(0.5),
    }
}

fn bilinear(plane: &[f64], width: usize, height: usize, x: f64, y: f64) -> f64 {
    let x = (x - 0.5).clamp(0.0, (width - 1) as f64);
    let y = (y - 0.5).clamp(0.0, (height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let at = |xx: usize, yy: usize| plane[yy * width + xx];
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1))
}

/// `TEMPLATE x TEMPLATE` samples of the normalized plane on a grid centred
/// on the layout centroid and spanning `TEMPLATE_SPAN` radii each way.
pub fn shape_template(plane: &[f64], width: usize, height: usize, lay: Layout) -> Vec<f64> {
    let step = |i: usize| -1.0 + 2.0 * i as f64 / (TEMPLATE - 1) as f64;
    let reach = TEMPLATE_SPAN * lay.radius;
    let mut out = Vec::with_capacity(TEMPLATE * TEMPLATE);
    for j in 0..TEMPLATE {
        for i in 0..TEMPLATE {
            out.push(bilinear(plane, width, height, lay.cx + step(i) * reach, lay.cy + step(j) * reach));
        }
    }
    out
}

/// Contrast-invariant edge statistics of a normalized plane:
/// `[edge width, peak gradient, gradient energy ratio, Laplacian ratio,
/// mid-tone fraction]`. Ratios are taken against total variation, which
/// tracks edge length and is nearly unchanged by blur.
pub fn sharpness_stats(plane: &[f64], width: usize, height: usize) -> [f64; N_SHARPNESS] {
    let mut tv = 0.0;
    let mut energy = 0.0;
    let mut peak: f64 = 0.0;
    for y in 0..height.saturating_sub(1) {
        for x in 0..width.saturating_sub(1) {
            let v = plane[y * width + x];
            let gx = plane[y * width + x + 1] - v;
            let gy = plane[(y + 1) * width + x] - v;
            let m = (gx * gx + gy * gy).sqrt();
            tv += m;
            energy += m * m;
            peak = peak.max(m);
        }
    }
    let mut lap = 0.0;
    for y in 1..height.saturating_sub(1) {
        for x in 1..width.saturating_sub(1) {
            let c = plane[y * width + x];
            lap += (plane[(y - 1) * width + x] + plane[(y + 1) * width + x] + plane[y * width + x - 1]
                + plane[y * width + x + 1]
                - 4.0 * c)
                .abs();
        }
    }
    let mid = plane.iter().filter(|&&v| v > 0.1 && v < 0.9).count() as f64;
    if tv < 1e-9 {
        return [0.0; N_SHARPNESS];
    }
    [mid / tv, peak, energy / tv, lap / tv, mid / plane.len() as f64]
}

/// Full feature vector fed to the image projection.
pub fn image_features(img: &RgbImage) -> Result<Vec<f64>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(DeclipError::UnsupportedInput {
            backend: "toy-deterministic",
            what: "empty image".into(),
        });
    }
    let gray = gray_plane(img);
    let plane = normalized_plane(&gray);
    let lay = layout(&plane, w, h);
    let mut features = shape_template(&plane, w, h, lay);
    let sharp = sharpness_stats(&plane, w, h);
    features.extend(sharp.iter().zip(SHARPNESS_GAINS).map(|(s, g)| s * g));
    features.extend(global_stats(img, &gray, lay));
    features.push(1.0);
    debug_assert_eq!(features.len(), IMAGE_FEATURES);
    Ok(features)
}

/// `[gray mean, gray std, R mean, G mean, B mean, centroid x, centroid y,
/// radius]`, intensities in `[0, 1]` and positions relative to image size.
pub fn global_stats(img: &RgbImage, gray: &[f64], lay: Layout) -> [f64; N_GLOBAL] {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let n = gray.len() as f64;
    let mean = gray.iter().sum::<f64>() / n;
    let std = (gray.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut rgb = [0.0f64; 3];
    for p in img.pixels() {
        for c in 0..3 {
            rgb[c] += f64::from(p[c]) / 255.0;
        }
    }
    [mean, std, rgb[0] / n, rgb[1] / n, rgb[2] / n, lay.cx / w, lay.cy / h, lay.radius / w.min(h)]
}
