//! Perceptual-vocabulary counting and the caption quality filter.
//!
//! Text and vocabulary entries are normalized the same way: lowercase,
//! every non-alphanumeric character becomes a separator. A single-word entry
//! matches whole tokens; a multi-word entry matches contiguous token runs.
//! Every occurrence of every entry counts, overlapping matches included.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use super::RawCaptionRecord;
use crate::encoders::toy::tokenize;
use crate::error::{DeclipError, Result};

/// Default minimum number of vocabulary occurrences a description needs.
pub const DEFAULT_MIN_COUNT: usize = 7;

/// Starter vocabulary shipped with the crate.
pub const STARTER_VOCABULARY: &str = include_str!("../../data/perceptual_vocab.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerceptualVocabulary {
    terms: BTreeSet<Vec<String>>,
    by_first: HashMap<String, Vec<Vec<String>>>,
}

impl PerceptualVocabulary {
    /// Builds a vocabulary; entries that normalize to the same tokens collapse.
    pub fn new<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: BTreeSet<Vec<String>> = terms
            .into_iter()
            .map(|t| tokenize(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        if terms.is_empty() {
            return Err(DeclipError::InvalidConfig(
                "perceptual vocabulary is empty".into(),
            ));
        }
        let mut by_first: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        for t in &terms {
            by_first.entry(t[0].clone()).or_default().push(t.clone());
        }
        Ok(Self { terms, by_first })
    }

    /// One term per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| DeclipError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn starter() -> Self {
        Self::parse(STARTER_VOCABULARY).expect("shipped vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Normalized terms, multi-word entries joined by single spaces.
    pub fn terms(&self) -> impl Iterator<Item = String> + '_ {
        self.terms.iter().map(|t| t.join(" "))
    }

    pub fn count(&self, text: &str) -> usize {
        let tokens = tokenize(text);
        let mut total = 0;
        for start in 0..tokens.len() {
            if let Some(candidates) = self.by_first.get(&tokens[start]) {
                total += candidates
                    .iter()
                    .filter(|c| tokens[start..].starts_with(c))
                    .count();
            }
        }
        total
    }
}

pub fn count_perceptual_terms(text: &str, vocab: &PerceptualVocabulary) -> usize {
    vocab.count(text)
}

/// Records whose description has at least `min_count` vocabulary occurrences,
/// in input order.
pub fn filter_records(
    records: &[RawCaptionRecord],
    vocab: &PerceptualVocabulary,
    min_count: usize,
) -> Vec<RawCaptionRecord> {
    records
        .iter()
        .filter(|r| vocab.count(&r.human_description) >= min_count)
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ImageType, Source};
    use proptest::prelude::*;

    fn vocab(terms: &[&str]) -> PerceptualVocabulary {
        PerceptualVocabulary::new(terms.iter().copied()).unwrap()
    }

    fn raw(desc: &str) -> RawCaptionRecord {
        RawCaptionRecord {
            image_ref: desc.to_string(),
            human_description: desc.to_string(),
            source: Source::Other,
            image_type: ImageType::Natural,
        }
    }

    // Independent oracle: scan every token window of every length.
    fn brute_count(text: &str, terms: &[&str]) -> usize {
        let norm: String = text
            .chars()
            .map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap() } else { ' ' })
            .collect();
        let tokens: Vec<&str> = norm.split_whitespace().collect();
        let mut n = 0;
        for term in terms {
            let tt: Vec<&str> = term.split_whitespace().collect();
            if tt.len() > tokens.len() {
                continue;
            }
            for i in 0..=tokens.len() - tt.len() {
                if tokens[i..i + tt.len()] == tt[..] {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn empty_text_counts_zero() {
        assert_eq!(count_perceptual_terms("", &vocab(&["sharp"])), 0);
    }

    #[test]
    fn occurrences_not_distinct_terms() {
        let v = vocab(&["sharp", "blurry", "composition"]);
        let text = "A sharp photo with sharp edges and good composition.";
        assert_eq!(brute_count(text, &["sharp", "blurry", "composition"]), 3);
        assert_eq!(count_perceptual_terms(text, &v), 3);
    }

    #[test]
    fn multi_word_phrases() {
        let v = vocab(&["depth of field"]);
        assert_eq!(count_perceptual_terms("shallow depth of field", &v), 1);
        assert_eq!(count_perceptual_terms("depth of the field", &v), 0);
        assert_eq!(count_perceptual_terms("Depth-of-field, DEPTH OF FIELD", &v), 2);
    }

    #[test]
    fn whole_token_matching() {
        let v = vocab(&["sharp"]);
        assert_eq!(count_perceptual_terms("sharpness sharpened sharp", &v), 1);
    }

    #[test]
    fn duplicates_collapse_after_normalization() {
        let v = vocab(&["Sharp", "sharp", " SHARP. ", "depth-of-field", "depth of field"]);
        assert_eq!(v.len(), 2);
        assert!(PerceptualVocabulary::new(["", "  ", "!!"]).is_err());
    }

    #[test]
    fn starter_vocabulary_is_large_enough() {
        let v = PerceptualVocabulary::starter();
        assert!(v.len() >= 400, "only {} terms", v.len());
        assert!(v.count("soft light with strong contrast and shallow depth of field") >= 4);
    }

    #[test]
    fn threshold_boundary() {
        let v = vocab(&["sharp"]);
        let seven = raw(&"sharp ".repeat(7));
        let six = raw(&"sharp ".repeat(6));
        let kept = filter_records(&[seven.clone(), six.clone()], &v, DEFAULT_MIN_COUNT);
        assert_eq!(kept, vec![seven]);
        assert_eq!(filter_records(std::slice::from_ref(&six), &v, 0), vec![six]);
    }

    #[test]
    fn random_records_match_recount() {
        let words = ["sharp", "blurry", "soft", "light", "dog", "tree", "of", "field", "depth"];
        let terms = ["sharp", "blurry", "soft light", "depth of field"];
        let v = vocab(&terms);
        let mut rng = crate::rng::SplitMix64::new(3);
        let records: Vec<RawCaptionRecord> = (0..10)
            .map(|_| {
                let n = 5 + rng.below(30) as usize;
                let text: Vec<&str> =
                    (0..n).map(|_| words[rng.below(words.len() as u64) as usize]).collect();
                raw(&text.join(" "))
            })
            .collect();
        for min in [0, 2, 4, 7] {
            let expected: Vec<_> = records
                .iter()
                .filter(|r| brute_count(&r.human_description, &terms) >= min)
                .cloned()
                .collect();
            assert_eq!(filter_records(&records, &v, min), expected);
        }
    }

    proptest! {
        #[test]
        fn filter_is_idempotent_and_respects_threshold(
            texts in prop::collection::vec("(sharp|blurry|soft light|dog|depth of field| |\\.){0,40}", 0..20),
            min in 0usize..10,
        ) {
            let v = vocab(&["sharp", "blurry", "soft light", "depth of field"]);
            let records: Vec<_> = texts.iter().map(|t| raw(t)).collect();
            let once = filter_records(&records, &v, min);
            let twice = filter_records(&once, &v, min);
            prop_assert_eq!(&once, &twice);
            for r in &once {
                prop_assert!(v.count(&r.human_description) >= min);
            }
        }
    }
}
