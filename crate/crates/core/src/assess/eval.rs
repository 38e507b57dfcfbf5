//! Dataset-level evaluation: score every item, correlate with MOS.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::coop::PromptVector;
use super::correlation::{logistic_remap, plcc, srcc};
use super::prompts::{AntonymPromptPair, AttributeTable};
use super::score::score_embedding;
use crate::disentangle::DeclipModel;
use crate::embedding::EmbeddingVector;
use crate::encoders::ImageInput;
use crate::error::{DeclipError, Result};

/// One row of a MOS file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosItem {
    pub image_ref: String,
    pub mos: f64,
    #[serde(default)]
    pub attributes: Vec<(String, f64)>,
}

impl MosItem {
    pub fn new(image_ref: impl Into<String>, mos: f64) -> Self {
        Self {
            image_ref: image_ref.into(),
            mos,
            attributes: Vec::new(),
        }
    }
}

/// Reads `image_ref,mos[,attribute,attr_value]*` with a header row.
pub fn load_mos_csv(path: impl AsRef<Path>) -> Result<Vec<MosItem>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| DeclipError::io(path, e))?;
    parse_mos_csv(file)
}

pub fn parse_mos_csv(reader: impl std::io::Read) -> Result<Vec<MosItem>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DeclipError::MalformedLine { line: 1, reason: e.to_string() })?
        .clone();
    if header.get(0) != Some("image_ref") || header.get(1) != Some("mos") {
        return Err(DeclipError::MalformedLine {
            line: 1,
            reason: "header must start with `image_ref,mos`".into(),
        });
    }
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, row) in rdr.records().enumerate() {
        let line = idx + 2;
        let bad = |reason: String| DeclipError::MalformedLine { line, reason };
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() < 2 || row.len() % 2 != 0 {
            return Err(bad(format!("expected image_ref, mos and attribute pairs, got {} fields", row.len())));
        }
        let parse_num = |s: &str, what: &str| -> Result<f64> {
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(bad(format!("{what} `{s}` is not a finite number"))),
            }
        };
        let image_ref = row[0].to_string();
        if image_ref.is_empty() {
            return Err(bad("empty image_ref".into()));
        }
        if !seen.insert(image_ref.clone()) {
            return Err(DeclipError::DuplicateImageRef(image_ref));
        }
        let mos = parse_num(&row[1], "mos")?;
        let mut attributes = Vec::new();
        for pair in row.iter().skip(2).collect::<Vec<_>>().chunks(2) {
            if pair[0].is_empty() {
                return Err(bad("empty attribute name".into()));
            }
            attributes.push((pair[0].to_string(), parse_num(pair[1], "attribute value")?));
        }
        items.push(MosItem { image_ref, mos, attributes });
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMode {
    /// Perceptual projection of the image embedding.
    #[default]
    Projected,
    /// Raw encoder embedding, projectors bypassed.
    Baseline,
}

#[derive(Debug, Clone)]
pub enum PromptSource {
    Antonym(AntonymPromptPair),
    Tuned(PromptVector),
}

impl PromptSource {
    fn describe(&self) -> String {
        match self {
            PromptSource::Antonym(p) => format!("antonym:{}|{}", p.positive, p.negative),
            PromptSource::Tuned(v) => format!("coop:m={}:{}", v.m(), v.digest()),
        }
    }

    fn text_features(&self, model: &DeclipModel) -> Result<(EmbeddingVector, EmbeddingVector)> {
        match self {
            PromptSource::Antonym(p) => {
                p.check_non_empty()?;
                Ok((model.encoder().encode_text(&p.positive)?, model.encoder().encode_text(&p.negative)?))
            }
            PromptSource::Tuned(v) => v.text_features(),
        }
    }
}

impl Default for PromptSource {
    fn default() -> Self {
        PromptSource::Antonym(AntonymPromptPair::quality())
    }
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub dataset: String,
    pub mode: ScoringMode,
    pub prompts: PromptSource,
    /// Used for per-attribute sub-reports; the default table when `None`.
    pub attributes: Option<AttributeTable>,
    /// Fit a 4-parameter logistic to the scores before PLCC.
    pub logistic_remap: bool,
    pub checkpoint_id: String,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub image_ref: String,
    pub score: f64,
    pub mos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub n_items: usize,
    /// Names of correlations that were undefined because an input was constant.
    pub undefined: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub checkpoint_id: String,
    pub prompt_set: String,
    pub seed: Option<u64>,
    pub mode: ScoringMode,
    pub logistic_remap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub srcc: Option<f64>,
    pub plcc: Option<f64>,
    pub undefined: Vec<String>,
    pub n_items: usize,
    pub n_missing: usize,
    pub missing: Vec<String>,
    pub per_attribute: BTreeMap<String, AttributeReport>,
    pub items: Vec<ItemScore>,
    pub metadata: RunMetadata,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json() + "\n").map_err(|e| DeclipError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| DeclipError::Corrupt(format!("{}: {e}", path.display())))
    }
}

fn correlate(scores: &[f64], targets: &[f64], remap: bool) -> Result<(Option<f64>, Option<f64>, Vec<String>)> {
    let s = srcc(scores, targets)?;
    let p = if remap {
        // A constant score column leaves nothing to fit.
        match plcc(scores, targets)? {
            None => None,
            Some(_) => plcc(&logistic_remap(scores, targets)?, targets)?,
        }
    } else {
        plcc(scores, targets)?
    };
    let mut undefined = Vec::new();
    if s.is_none() {
        undefined.push("srcc".to_string());
    }
    if p.is_none() {
        undefined.push("plcc".to_string());
    }
    Ok((s, p, undefined))
}

fn image_feature(model: &DeclipModel, mode: ScoringMode, image_ref: &str) -> Result<EmbeddingVector> {
    let input = ImageInput::Key(image_ref.to_string());
    match mode {
        ScoringMode::Projected => model.project_perceptual(&input),
        ScoringMode::Baseline => model.encoder().encode_image(&input),
    }
}

/// Scores every item with the chosen prompts and correlates against MOS.
///
/// Items whose image cannot be resolved are excluded and listed in
/// `missing`; every other error aborts the run.
pub fn evaluate_dataset(model: &DeclipModel, items: &[MosItem], options: &EvalOptions) -> Result<EvalReport> {
    let (pos, neg) = options.prompts.text_features(model)?;
    let features: Vec<Result<EmbeddingVector>> = items
        .par_iter()
        .map(|item| image_feature(model, options.mode, &item.image_ref))
        .collect();

    let mut missing = Vec::new();
    let mut kept: Vec<(&MosItem, EmbeddingVector)> = Vec::new();
    for (item, feature) in items.iter().zip(features) {
        match feature {
            Ok(f) => kept.push((item, f)),
            Err(e) if e.is_missing_input() => missing.push(item.image_ref.clone()),
            Err(e) => return Err(e),
        }
    }
    if kept.len() < 2 {
        return Err(DeclipError::InsufficientData(format!(
            "{} scorable items ({} missing); need at least 2",
            kept.len(),
            missing.len()
        )));
    }

    let scored: Vec<ItemScore> = kept
        .iter()
        .map(|(item, f)| ItemScore {
            image_ref: item.image_ref.clone(),
            score: score_embedding(f.values(), pos.values(), neg.values()),
            mos: item.mos,
        })
        .collect();
    let scores: Vec<f64> = scored.iter().map(|s| s.score).collect();
    let mos: Vec<f64> = scored.iter().map(|s| s.mos).collect();
    let (srcc, plcc, undefined) = correlate(&scores, &mos, options.logistic_remap)?;

    let default_table;
    let table = match &options.attributes {
        Some(t) => t,
        None => {
            default_table = AttributeTable::default();
            &default_table
        }
    };
    let mut per_attribute = BTreeMap::new();
    let mut names: Vec<&str> = kept
        .iter()
        .flat_map(|(item, _)| item.attributes.iter().map(|(a, _)| a.as_str()))
        .collect();
    names.sort_unstable();
    names.dedup();
    for name in names {
        let pair = table.get(name)?;
        let ap = model.encoder().encode_text(&pair.positive)?;
        let an = model.encoder().encode_text(&pair.negative)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (item, f) in &kept {
            for (a, v) in &item.attributes {
                if a == name {
                    xs.push(score_embedding(f.values(), ap.values(), an.values()));
                    ys.push(*v);
                }
            }
        }
        if xs.len() < 2 {
            return Err(DeclipError::InsufficientData(format!(
                "attribute `{name}` has {} scorable items",
                xs.len()
            )));
        }
        let (s, p, undef) = correlate(&xs, &ys, options.logistic_remap)?;
        per_attribute.insert(
            name.to_string(),
            AttributeReport { srcc: s, plcc: p, n_items: xs.len(), undefined: undef },
        );
    }

    Ok(EvalReport {
        dataset: options.dataset.clone(),
        srcc,
        plcc,
        undefined,
        n_items: scored.len(),
        n_missing: missing.len(),
        missing,
        per_attribute,
        items: scored,
        metadata: RunMetadata {
            checkpoint_id: options.checkpoint_id.clone(),
            prompt_set: options.prompts.describe(),
            seed: options.seed,
            mode: options.mode,
            logistic_remap: options.logistic_remap,
        },
    })
}
