//! I&2T records: one image paired with a perceptual and a semantic text.

pub mod io;
pub mod relabel;
pub mod synthetic;
pub mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{DeclipError, Result};

pub use io::{load_dataset, load_raw_captions, save_dataset, save_raw_captions};
pub use relabel::{build_relabel_prompt, parse_relabel_response, relabel_record, MllmClient};
pub use synthetic::{make_synthetic_benchmark, SyntheticBenchmark};
pub use vocab::{count_perceptual_terms, filter_records, PerceptualVocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    AesExpert,
    #[serde(rename = "Q-Instruct")]
    QInstruct,
    ShareGPT4v,
    #[serde(rename = "AVA-Comments")]
    AvaComments,
    #[serde(rename = "synthetic")]
    Synthetic,
    #[serde(rename = "other")]
    Other,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageType {
    #[default]
    Natural,
    Art,
    Aigc,
}

/// An image with its decoupled perceptual and semantic descriptions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct I2TRecord {
    pub image_ref: String,
    pub t_p: String,
    pub t_s: String,
    pub source: Source,
    pub image_type: ImageType,
}

impl I2TRecord {
    pub fn validate(&self) -> Result<()> {
        if self.image_ref.is_empty() {
            return Err(DeclipError::EmptyField("image_ref"));
        }
        if self.t_p.trim().is_empty() {
            return Err(DeclipError::EmptyField("t_p"));
        }
        if self.t_s.trim().is_empty() {
            return Err(DeclipError::EmptyField("t_s"));
        }
        Ok(())
    }
}

/// A human-written caption before relabeling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCaptionRecord {
    pub image_ref: String,
    pub human_description: String,
    pub source: Source,
    #[serde(default)]
    pub image_type: ImageType,
}

impl RawCaptionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.human_description.trim().is_empty() {
            return Err(DeclipError::EmptyField("human_description"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_names_match_wire_format() {
        let names: Vec<String> = [
            Source::AesExpert,
            Source::QInstruct,
            Source::ShareGPT4v,
            Source::AvaComments,
            Source::Synthetic,
            Source::Other,
        ]
        .iter()
        .map(|s| serde_json::to_string(s).unwrap())
        .collect();
        assert_eq!(
            names,
            [
                "\"AesExpert\"",
                "\"Q-Instruct\"",
                "\"ShareGPT4v\"",
                "\"AVA-Comments\"",
                "\"synthetic\"",
                "\"other\""
            ]
        );
        assert_eq!(serde_json::to_string(&ImageType::Aigc).unwrap(), "\"aigc\"");
    }

    #[test]
    fn empty_texts_fail_validation() {
        let mut r = I2TRecord {
            image_ref: "a.png".into(),
            t_p: "soft light".into(),
            t_s: " ".into(),
            source: Source::Other,
            image_type: ImageType::Natural,
        };
        assert!(matches!(r.validate(), Err(DeclipError::EmptyField("t_s"))));
        r.t_s = "a dog".into();
        assert!(r.validate().is_ok());
    }
}
