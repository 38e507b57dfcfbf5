//! Synthetic disentanglement benchmark.
//!
//! Each item is a small image of one shape (the semantic factor) rendered at
//! one blur level (the perceptual factor). Perceptual texts only use
//! sharpness words and semantic texts only use shape names, so a model can
//! only solve both contrastive tasks by separating the two factors.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{I2TRecord, ImageType, Source};
use crate::error::{DeclipError, Result};
use crate::rng::{derive_seed, SplitMix64};

pub const IMAGE_SIZE: u32 = 64;
pub const MAX_BLUR_SIGMA: f64 = 3.0;

/// Perceptual descriptions, sharpest first. "sharp" counts fall and
/// "blurry" counts rise monotonically down the list.
pub const BLUR_TEXTS: [&str; 6] = [
    "very sharp crisp photo with sharp clean edges",
    "sharp photo with slightly soft edges",
    "soft photo with slightly hazy edges",
    "soft blurry photo with hazy edges",
    "very blurry photo with blurry smeared edges",
    "extremely blurry smeared photo with blurry hazy edges, blurry everywhere",
];

pub const SHAPES: [&str; 6] = ["circle", "square", "triangle", "cross", "ring", "diamond"];

/// Words that identify a blur level; semantic texts never contain them.
pub const PERCEPTUAL_FACTOR_WORDS: [&str; 10] = [
    "sharp", "crisp", "clean", "soft", "blur", "blurry", "hazy", "smeared", "edges", "visible",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorRow {
    pub perc: usize,
    pub sem: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub seed: u64,
    pub n_perc: usize,
    pub n_sem: usize,
    pub images: Vec<RgbImage>,
    pub records: Vec<I2TRecord>,
    pub factors: Vec<FactorRow>,
    pub perc_texts: Vec<String>,
    pub sem_names: Vec<String>,
}

fn blur_text_index(level: usize, n_perc: usize) -> usize {
    ((level * (BLUR_TEXTS.len() - 1)) as f64 / (n_perc - 1) as f64).round() as usize
}

pub fn blur_sigma(level: usize, n_perc: usize) -> f64 {
    MAX_BLUR_SIGMA * level as f64 / (n_perc - 1) as f64
}

pub fn semantic_text(shape: &str) -> String {
    format!("a {shape} on a plain backdrop")
}

/// Generates `n_items` items, balanced over the `n_perc x n_sem` factor cells.
pub fn make_synthetic_benchmark(
    seed: u64,
    n_items: usize,
    n_perc: usize,
    n_sem: usize,
) -> Result<SyntheticBenchmark> {
    if n_items < 2 || n_perc < 2 || n_sem < 2 {
        return Err(DeclipError::InvalidConfig(
            "benchmark counts must all be at least 2".into(),
        ));
    }
    if n_perc > BLUR_TEXTS.len() || n_sem > SHAPES.len() {
        return Err(DeclipError::InvalidConfig(format!(
            "at most {} blur levels and {} shapes are available",
            BLUR_TEXTS.len(),
            SHAPES.len()
        )));
    }
    let cells = n_perc * n_sem;
    let mut factors: Vec<FactorRow> = (0..n_items)
        .map(|i| FactorRow {
            perc: (i % cells) / n_sem,
            sem: (i % cells) % n_sem,
        })
        .collect();
    SplitMix64::new(derive_seed(seed, 0xfac7)).shuffle(&mut factors);

    let perc_texts: Vec<String> = (0..n_perc)
        .map(|l| BLUR_TEXTS[blur_text_index(l, n_perc)].to_string())
        .collect();
    let sem_names: Vec<String> = SHAPES[..n_sem].iter().map(|s| s.to_string()).collect();

    let mut images = Vec::with_capacity(n_items);
    let mut records = Vec::with_capacity(n_items);
    for (i, f) in factors.iter().enumerate() {
        let mut rng = SplitMix64::new(derive_seed(seed, i as u64));
        let img = render_shape(SHAPES[f.sem], &mut rng);
        images.push(gaussian_blur(&img, blur_sigma(f.perc, n_perc)));
        records.push(I2TRecord {
            image_ref: format!("item_{i:04}.png"),
            t_p: perc_texts[f.perc].clone(),
            t_s: semantic_text(SHAPES[f.sem]),
            source: Source::Synthetic,
            image_type: ImageType::Natural,
        });
    }
    Ok(SyntheticBenchmark {
        seed,
        n_perc,
        n_sem,
        images,
        records,
        factors,
        perc_texts,
        sem_names,
    })
}

impl SyntheticBenchmark {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Quality target per item: `n_perc - 1 - blur level`, so sharper is higher.
    pub fn sharpness_mos(&self) -> Vec<f64> {
        self.factors
            .iter()
            .map(|f| (self.n_perc - 1 - f.perc) as f64)
            .collect()
    }

    /// `(image_ref, pixels)` pairs for registering with an in-memory encoder.
    pub fn image_map(&self) -> Arc<HashMap<String, RgbImage>> {
        Arc::new(
            self.records
                .iter()
                .zip(&self.images)
                .map(|(r, img)| (r.image_ref.clone(), img.clone()))
                .collect(),
        )
    }

    /// Writes `images/*.png`, `dataset.jsonl`, `factors.csv` and `mos.csv`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images).map_err(|e| DeclipError::io(&images, e))?;
        for (r, img) in self.records.iter().zip(&self.images) {
            let path = images.join(&r.image_ref);
            img.save_with_format(&path, image::ImageFormat::Png)
                .map_err(|e| DeclipError::ImageUnreadable {
                    path: path.clone(),
                    reason: e.to_string(),
                })?;
        }
        super::save_dataset(&self.records, dir.join("dataset.jsonl"))?;

        let mut factors = String::from("image_ref,perc,sem,perc_text,sem_name\n");
        for (r, f) in self.records.iter().zip(&self.factors) {
            factors.push_str(&format!(
                "{},{},{},{},{}\n",
                r.image_ref, f.perc, f.sem, self.perc_texts[f.perc], self.sem_names[f.sem]
            ));
        }
        let path = dir.join("factors.csv");
        std::fs::write(&path, factors).map_err(|e| DeclipError::io(&path, e))?;

        let mut mos = String::from("image_ref,mos,attribute,attr_value\n");
        for (r, m) in self.records.iter().zip(self.sharpness_mos()) {
            mos.push_str(&format!("{},{m},sharpness,{m}\n", r.image_ref));
        }
        let path = dir.join("mos.csv");
        std::fs::write(&path, mos).map_err(|e| DeclipError::io(&path, e))
    }
}

fn inside(shape: &str, dx: f64, dy: f64, r: f64) -> bool {
    let dist = (dx * dx + dy * dy).sqrt();
    match shape {
        "circle" => dist <= r,
        "square" => dx.abs() <= 0.85 * r && dy.abs() <= 0.85 * r,
        "triangle" => dy >= -r && dy <= 0.8 * r && dx.abs() <= (dy + r) / 1.8,
        "cross" => {
            (dx.abs() <= r / 3.0 && dy.abs() <= r) || (dy.abs() <= r / 3.0 && dx.abs() <= r)
        }
        "ring" => dist <= r && dist >= 0.55 * r,
        "diamond" => dx.abs() + dy.abs() <= r,
        _ => false,
    }
}

fn render_shape(shape: &str, rng: &mut SplitMix64) -> RgbImage {
    let cx = rng.uniform(20.0, 44.0);
    let cy = rng.uniform(20.0, 44.0);
    let r = rng.uniform(10.0, 16.0);
    let fg = rng.uniform(150.0, 240.0);
    let bg = rng.uniform(10.0, 80.0);
    let tint: Vec<f64> = (0..3).map(|_| rng.uniform(-15.0, 15.0)).collect();
    RgbImage::from_fn(IMAGE_SIZE, IMAGE_SIZE, |x, y| {
        let (dx, dy) = (f64::from(x) + 0.5 - cx, f64::from(y) + 0.5 - cy);
        let base = if inside(shape, dx, dy, r) { fg } else { bg };
        let px = |c: usize| (base + tint[c]).round().clamp(0.0, 255.0) as u8;
        Rgb([px(0), px(1), px(2)])
    })
}

/// Separable Gaussian blur with clamp-to-edge borders; `sigma <= 0` copies.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h) = (img.width() as i64, img.height() as i64);
    let idx = |x: i64, y: i64| (y * w + x) as usize;
    let src: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| [f64::from(p[0]), f64::from(p[1]), f64::from(p[2])])
        .collect();
    let pass = |src: &[[f64; 3]], horizontal: bool| -> Vec<[f64; 3]> {
        let mut out = vec![[0.0; 3]; src.len()];
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for (k, weight) in (-radius..=radius).zip(&kernel) {
                    let (sx, sy) = if horizontal {
                        ((x + k).clamp(0, w - 1), y)
                    } else {
                        (x, (y + k).clamp(0, h - 1))
                    };
                    let p = src[idx(sx, sy)];
                    for c in 0..3 {
                        acc[c] += weight * p[c];
                    }
                }
                out[idx(x, y)] = acc;
            }
        }
        out
    };
    let blurred = pass(&pass(&src, true), false);
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let p = blurred[idx(i64::from(x), i64::from(y))];
        Rgb(p.map(|v| v.round().clamp(0.0, 255.0) as u8))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::toy::tokenize;

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = make_synthetic_benchmark(7, 40, 4, 4).unwrap();
        let b = make_synthetic_benchmark(7, 40, 4, 4).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.factors, b.factors);
        assert!(a.images.iter().zip(&b.images).all(|(x, y)| x == y));
        let c = make_synthetic_benchmark(8, 40, 4, 4).unwrap();
        assert!(a.images.iter().zip(&c.images).any(|(x, y)| x != y));
    }

    #[test]
    fn texts_never_mix_factor_words() {
        let b = make_synthetic_benchmark(7, 64, 4, 4).unwrap();
        for r in &b.records {
            let tp = tokenize(&r.t_p);
            let ts = tokenize(&r.t_s);
            assert!(SHAPES.iter().all(|s| !tp.iter().any(|t| t == s)), "{}", r.t_p);
            assert!(
                PERCEPTUAL_FACTOR_WORDS.iter().all(|w| !ts.iter().any(|t| t == w)),
                "{}",
                r.t_s
            );
        }
        // Every level text is built from factor words plus neutral filler only.
        for text in BLUR_TEXTS {
            assert!(tokenize(text).iter().any(|t| PERCEPTUAL_FACTOR_WORDS.contains(&t.as_str())));
        }
    }

    #[test]
    fn cells_are_balanced() {
        for (n, p, s) in [(512, 4, 4), (37, 3, 4), (10, 2, 2), (5, 2, 3)] {
            let b = make_synthetic_benchmark(1, n, p, s).unwrap();
            let mut counts = vec![0usize; p * s];
            for f in &b.factors {
                counts[f.perc * s + f.sem] += 1;
            }
            let lo = n / (p * s);
            assert!(counts.iter().all(|&c| c == lo || c == lo + 1), "{counts:?}");
            assert_eq!(counts.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn rejects_bad_counts() {
        assert!(make_synthetic_benchmark(1, 1, 4, 4).is_err());
        assert!(make_synthetic_benchmark(1, 10, 1, 4).is_err());
        assert!(make_synthetic_benchmark(1, 10, 4, 99).is_err());
    }

    #[test]
    fn blur_preserves_constant_images_and_mass() {
        let flat = RgbImage::from_pixel(9, 7, Rgb([40, 90, 200]));
        assert_eq!(gaussian_blur(&flat, 2.0), flat);
        let b = make_synthetic_benchmark(3, 8, 4, 2).unwrap();
        for (img, f) in b.images.iter().zip(&b.factors) {
            assert_eq!(img.dimensions(), (IMAGE_SIZE, IMAGE_SIZE));
            let _ = f;
        }
    }
}
