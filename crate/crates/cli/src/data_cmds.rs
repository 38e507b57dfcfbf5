//! `filter`, `relabel` and `bench`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use declip::data::relabel::{relabel_all, HttpMllmClient, MllmConfig, RelabelOutcome};
use declip::data::{self, filter_records, load_raw_captions, make_synthetic_benchmark, PerceptualVocabulary};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{require, require_file, write_stamped_json, write_text, ConfigFile, Stamp};
use crate::Global;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterArgs {
    /// Raw caption JSONL (`image_ref`, `human_description`, `source`)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Perceptual vocabulary, one term per line (default: shipped starter list)
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Keep records with at least this many vocabulary occurrences
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Output JSONL of kept records
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stats report path (default: `<out>.stats.json`)
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

pub fn filter(global: &Global, flags: &FilterArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("filter", flags)?;
    let input = require(&args.input, "input")?;
    let out = require(&args.out, "out")?;
    require_file(&input, "input file")?;
    if let Some(v) = &args.vocab {
        require_file(v, "vocabulary file")?;
    }
    let min_count = *args.min_count.get_or_insert(data::vocab::DEFAULT_MIN_COUNT);
    let stats_path = args
        .stats
        .get_or_insert_with(|| PathBuf::from(format!("{}.stats.json", out.display())))
        .clone();

    let vocab = match &args.vocab {
        Some(path) => PerceptualVocabulary::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => PerceptualVocabulary::starter(),
    };
    let records = load_raw_captions(&input).with_context(|| format!("loading {}", input.display()))?;
    let kept = filter_records(&records, &vocab, min_count);
    data::save_raw_captions(&kept, &out).with_context(|| format!("writing {}", out.display()))?;

    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &records {
        *histogram.entry(vocab.count(&r.human_description)).or_default() += 1;
    }
    let stamp = Stamp::new("filter", 0, json!({ "filter": args }));
    let stats = json!({
        "input_count": records.len(),
        "kept": kept.len(),
        "dropped": records.len() - kept.len(),
        "min_count": min_count,
        "vocab_terms": vocab.len(),
        "count_histogram": histogram,
    });
    write_stamped_json(&stats_path, &stats, &stamp)?;
    println!("kept {} of {} records (min_count {min_count})", kept.len(), records.len());
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelabelArgs {
    /// Filtered caption JSONL
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output I&2T dataset JSONL
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rejected records JSONL (default: `<out>.rejects.jsonl`)
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    /// Base URL of the MLLM service
    #[arg(long)]
    pub url: Option<String>,
    /// Model name sent with each request
    #[arg(long)]
    pub model: Option<String>,
    /// Attach image bytes resolved against this directory
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub requests_per_minute: Option<u32>,
}

pub fn relabel(global: &Global, flags: &RelabelArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("relabel", flags)?;
    let input = require(&args.input, "input")?;
    let out = require(&args.out, "out")?;
    let url = require(&args.url, "url")?;
    require_file(&input, "input file")?;
    let model = args.model.get_or_insert_with(|| "default".into()).clone();
    let rejects_path = args
        .rejects
        .get_or_insert_with(|| PathBuf::from(format!("{}.rejects.jsonl", out.display())))
        .clone();
    let config = MllmConfig {
        base_url: url,
        model,
        api_key_env: declip::data::relabel::API_KEY_ENV.to_string(),
        max_retries: *args.max_retries.get_or_insert(3),
        requests_per_minute: *args.requests_per_minute.get_or_insert(60),
        image_root: args.image_root.clone(),
    };
    let client = HttpMllmClient::new(config)?;
    let records = load_raw_captions(&input).with_context(|| format!("loading {}", input.display()))?;
    let RelabelOutcome { accepted, rejects } = relabel_all(&client, &records, global.workers.unwrap_or(4));
    data::save_dataset(&accepted, &out).with_context(|| format!("writing {}", out.display()))?;
    write_text(&rejects_path, &data::io::to_jsonl(&rejects))?;
    let stamp = Stamp::new("relabel", 0, json!({ "relabel": args }));
    let stats = json!({ "input_count": records.len(), "accepted": accepted.len(), "rejected": rejects.len() });
    write_stamped_json(&PathBuf::from(format!("{}.stats.json", out.display())), &stats, &stamp)?;
    println!("accepted {} of {} records, {} rejected", accepted.len(), records.len(), rejects.len());
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub items: Option<usize>,
    /// Number of blur levels (perceptual factor)
    #[arg(long)]
    pub levels: Option<usize>,
    /// Number of shape classes (semantic factor)
    #[arg(long)]
    pub shapes: Option<usize>,
}

pub fn bench(global: &Global, flags: &BenchArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("bench", flags)?;
    let out_dir = require(&args.out_dir, "out_dir")?;
    let seed = *args.seed.get_or_insert(7);
    let items = *args.items.get_or_insert(512);
    let levels = *args.levels.get_or_insert(4);
    let shapes = *args.shapes.get_or_insert(4);
    let bench = make_synthetic_benchmark(seed, items, levels, shapes)?;
    bench.write_to_dir(&out_dir)?;

    let dataset = out_dir.join("dataset.jsonl");
    let train_toml = format!(
        "# Training config for this benchmark. Paths are relative to the working directory.\n\
         [encoder]\nbackend = \"toy\"\ndim = {dim}\nseed = {seed}\nimage_root = {root:?}\n\n\
         [train]\ndataset = {dataset:?}\nout_dir = {run:?}\nseed = {seed}\n",
        dim = crate::model::DEFAULT_DIM,
        root = out_dir.join("images").display().to_string(),
        dataset = dataset.display().to_string(),
        run = out_dir.join("run").display().to_string(),
    );
    write_text(&out_dir.join("train.toml"), &train_toml)?;
    let stamp = Stamp::new("bench", seed, json!({ "bench": args }));
    write_stamped_json(&out_dir.join("run.json"), &json!({ "items": items, "levels": levels, "shapes": shapes }), &stamp)?;
    println!("wrote {items} items to {}", out_dir.display());
    Ok(())
}
