//! Zero-shot quality scoring, correlation metrics, dataset evaluation,
//! prompt tuning, and linear probes.

pub mod coop;
pub mod correlation;
pub mod eval;
pub mod probe;
pub mod prompts;
pub mod score;

pub use coop::{coop_tune, CoopConfig, CoopOutcome, PromptVector};
pub use correlation::{average_ranks, logistic_remap, plcc, srcc};
pub use eval::{
    evaluate_dataset, load_mos_csv, parse_mos_csv, AttributeReport, EvalOptions, EvalReport, ItemScore, MosItem, PromptSource,
    RunMetadata, ScoringMode,
};
pub use probe::{linear_probe, ProbeConfig, ProbeResult};
pub use prompts::{AntonymPromptPair, AttributeTable};
pub use score::{attribute_score, score_from_cosines, zero_shot_score};
