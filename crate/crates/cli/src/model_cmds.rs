//! `train`, `eval`, `score`, `attr`, `coop`, `cond` and `plot`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use declip::assess::{
    coop_tune, evaluate_dataset, load_mos_csv, zero_shot_score, AntonymPromptPair, AttributeTable, CoopConfig,
    EvalOptions, EvalReport, MosItem, PromptSource, PromptVector, ScoringMode,
};
use declip::condgen::{assemble_condition, export_condition, ConditionMode};
use declip::data::load_dataset;
use declip::disentangle::{save_checkpoint, train as train_model, write_train_log, EpochLog, ModelOptions, TrainConfig};
use declip::encoders::ImageInput;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{require, require_file, usage, write_stamped_json, write_text, ConfigFile, Stamp};
use crate::model::{default_image_root, load_model, EncoderArgs};
use crate::plot::{lines_svg, scatter_svg};
use crate::Global;

fn file_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn layered_encoder(file: &ConfigFile, flags: &EncoderArgs) -> Result<EncoderArgs> {
    file.layer("encoder", flags)
}

/// Prompt pair from `--positive/--negative`, `--attribute`, or the stock pair.
/// Identical texts are allowed and build the degenerate pair.
fn prompt_pair(positive: &Option<String>, negative: &Option<String>, attribute: &Option<String>, table: &Option<PathBuf>) -> Result<AntonymPromptPair> {
    match (positive, negative, attribute) {
        (Some(p), Some(n), _) if p == n => {
            let pair = AntonymPromptPair::degenerate(p.clone());
            pair.check_non_empty()?;
            Ok(pair)
        }
        (Some(p), Some(n), _) => Ok(AntonymPromptPair::new(p.clone(), n.clone())?),
        (Some(_), None, _) | (None, Some(_), _) => Err(usage("--positive and --negative must be given together")),
        (None, None, Some(a)) => Ok(load_table(table)?.get(a)?.clone()),
        (None, None, None) => Ok(AntonymPromptPair::quality()),
    }
}

fn load_table(path: &Option<PathBuf>) -> Result<AttributeTable> {
    match path {
        Some(p) => {
            require_file(p, "attribute table")?;
            Ok(AttributeTable::load(p)?)
        }
        None => Ok(AttributeTable::default()),
    }
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainArgs {
    /// I&2T dataset JSONL
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Output directory for the checkpoint, log and plots
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Projector hidden width
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Average the image- and text-anchored losses
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub symmetric: Option<bool>,
    /// Also write a checkpoint after every epoch
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub save_every_epoch: Option<bool>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn train(global: &Global, flags: &TrainArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("train", flags)?;
    let dataset_path = require(&args.dataset, "dataset")?;
    let out_dir = require(&args.out_dir, "out_dir")?;
    require_file(&dataset_path, "dataset")?;
    let defaults = TrainConfig::default();
    let seed = *args.seed.get_or_insert(defaults.seed);
    let config = TrainConfig {
        batch_size: *args.batch_size.get_or_insert(defaults.batch_size),
        epochs: *args.epochs.get_or_insert(defaults.epochs),
        learning_rate: *args.learning_rate.get_or_insert(defaults.learning_rate),
        weight_decay: *args.weight_decay.get_or_insert(defaults.weight_decay),
        tau: *args.tau.get_or_insert(defaults.tau),
        seed,
        checkpoint_dir: args.save_every_epoch.get_or_insert(false).then(|| out_dir.join("epochs")),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let options = ModelOptions {
        symmetric: *args.symmetric.get_or_insert(false),
        ..ModelOptions::default()
    };
    let hidden = *args.hidden.get_or_insert(declip::disentangle::DEFAULT_HIDDEN);
    let encoder_flags = layered_encoder(&file, &flags.encoder)?;
    let root = default_image_root(&dataset_path);
    let encoder = encoder_flags.resolve(None, Some(&root), seed);
    let records = load_dataset(&dataset_path).with_context(|| format!("loading {}", dataset_path.display()))?;
    encoder.check_images(records.iter().map(|r| r.image_ref.as_str()))?;

    let loaded = load_model(None, &encoder, Some(&root), Some(hidden), seed)?;
    let model = loaded.model.with_options(options);
    let stamp = Stamp::new("train", seed, json!({ "encoder": encoder, "train": args }));
    eprintln!("training on {} records ({})", records.len(), stamp.short());
    let outcome = train_model(&model, &records, &config)?;

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let ckpt = out_dir.join("model.ckpt");
    save_checkpoint(&outcome.model, &ckpt)?;
    let log_path = out_dir.join("train_log.jsonl");
    write_train_log(&outcome.log, &log_path)?;
    write_text(&out_dir.join("loss.svg"), &loss_svg(&outcome.log, &stamp.short()))?;
    let last = outcome.log.last().map_or(f64::NAN, |e| e.mean_loss);
    let summary = json!({
        "checkpoint": ckpt,
        "checkpoint_sha256": file_sha256(&ckpt)?,
        "param_checksum": outcome.model.param_checksum(),
        "initial_loss": outcome.initial_loss,
        "final_loss": last,
        "epochs": outcome.log.len(),
    });
    write_stamped_json(&out_dir.join("run.json"), &summary, &stamp)?;
    println!("initial loss {:.4}, final epoch loss {last:.4}; wrote {}", outcome.initial_loss, ckpt.display());
    Ok(())
}

fn loss_svg(log: &[EpochLog], note: &str) -> String {
    let series = |f: fn(&EpochLog) -> f64| log.iter().map(|e| (e.epoch as f64, f(e))).collect::<Vec<_>>();
    lines_svg(
        &[("total", series(|e| e.mean_loss)), ("perceptual", series(|e| e.loss_p)), ("semantic", series(|e| e.loss_s))],
        "Training loss",
        "epoch",
        "mean loss",
        note,
    )
}

fn scatter_report_svg(report: &EvalReport, note: &str) -> String {
    let pts: Vec<(f64, f64)> = report.items.iter().map(|i| (i.score, i.mos)).collect();
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.3}"));
    scatter_svg(
        &pts,
        &format!("{}: SRCC {} PLCC {}", report.dataset, fmt(report.srcc), fmt(report.plcc)),
        "predicted score",
        "MOS",
        note,
    )
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Trained checkpoint (omit to evaluate a freshly initialized model)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// MOS CSV: image_ref,mos[,attribute,attr_value]*
    #[arg(long)]
    pub mos: Option<PathBuf>,
    /// Report JSON output
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Scatter plot SVG output
    #[arg(long)]
    pub scatter: Option<PathBuf>,
    /// Dataset name recorded in the report
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long)]
    pub negative: Option<String>,
    /// Use a named attribute's prompts from the attribute table
    #[arg(long)]
    pub attribute: Option<String>,
    /// Attribute prompt table (TSV)
    #[arg(long)]
    pub attribute_table: Option<PathBuf>,
    /// Tuned prompt vector JSON (overrides prompt texts)
    #[arg(long)]
    pub prompt_vector: Option<PathBuf>,
    /// Score raw encoder embeddings, bypassing the projectors
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub baseline: Option<bool>,
    /// Fit a 4-parameter logistic before PLCC
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub logistic_remap: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn eval(global: &Global, flags: &EvalArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("eval", flags)?;
    let mos_path = require(&args.mos, "mos")?;
    let out = require(&args.out, "out")?;
    require_file(&mos_path, "MOS file")?;
    if let Some(p) = &args.prompt_vector {
        require_file(p, "prompt vector")?;
    }
    let seed = *args.seed.get_or_insert(0);
    let root = default_image_root(&mos_path);
    let loaded = load_model(args.checkpoint.as_deref(), &layered_encoder(&file, &flags.encoder)?, Some(&root), args.hidden, seed)?;
    let prompts = match &args.prompt_vector {
        Some(p) => PromptSource::Tuned(PromptVector::load(p)?),
        None => PromptSource::Antonym(prompt_pair(&args.positive, &args.negative, &args.attribute, &args.attribute_table)?),
    };
    let mode = if *args.baseline.get_or_insert(false) { ScoringMode::Baseline } else { ScoringMode::Projected };
    let name = args
        .name
        .get_or_insert_with(|| mos_path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()))
        .clone();
    let items = load_mos_csv(&mos_path).with_context(|| format!("loading {}", mos_path.display()))?;
    let options = EvalOptions {
        dataset: name,
        mode,
        prompts,
        attributes: Some(load_table(&args.attribute_table)?),
        logistic_remap: *args.logistic_remap.get_or_insert(false),
        checkpoint_id: loaded.checkpoint_id.clone(),
        seed: Some(seed),
    };
    let report = evaluate_dataset(&loaded.model, &items, &options)?;
    let stamp = Stamp::new("eval", seed, json!({ "encoder": loaded.encoder, "eval": args }));
    write_stamped_json(&out, &report, &stamp)?;
    if let Some(svg) = &args.scatter {
        write_text(svg, &scatter_report_svg(&report, &stamp.short()))?;
    }
    let fmt = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.4}"));
    println!(
        "srcc {} plcc {} n_items {} n_missing {}",
        fmt(report.srcc),
        fmt(report.plcc),
        report.n_items,
        report.n_missing
    );
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Image path or store key
    #[arg(long)]
    pub image: Option<String>,
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long)]
    pub negative: Option<String>,
    #[arg(long)]
    pub prompt_vector: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn score(global: &Global, flags: &ScoreArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("score", flags)?;
    let image = require(&args.image, "image")?;
    let seed = *args.seed.get_or_insert(0);
    let loaded = load_model(args.checkpoint.as_deref(), &layered_encoder(&file, &flags.encoder)?, None, args.hidden, seed)?;
    loaded.encoder.check_images(std::iter::once(image.as_str()))?;
    let input = ImageInput::Key(image);
    let value = match &args.prompt_vector {
        Some(p) => {
            require_file(p, "prompt vector")?;
            PromptVector::load(p)?.score(&loaded.model, &input)?
        }
        None => zero_shot_score(&loaded.model, &input, &prompt_pair(&args.positive, &args.negative, &None, &None)?)?,
    };
    let stamp = Stamp::new("score", seed, json!({ "encoder": loaded.encoder, "score": args }));
    println!("{value}");
    eprintln!("# {} checkpoint={}", stamp.short(), loaded.checkpoint_id);
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttrArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<String>,
    /// Attribute name; all table attributes when omitted
    #[arg(long)]
    pub attribute: Option<String>,
    #[arg(long)]
    pub table: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn attr(global: &Global, flags: &AttrArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("attr", flags)?;
    let image = require(&args.image, "image")?;
    let seed = *args.seed.get_or_insert(0);
    let table = load_table(&args.table)?;
    let loaded = load_model(args.checkpoint.as_deref(), &layered_encoder(&file, &flags.encoder)?, None, args.hidden, seed)?;
    loaded.encoder.check_images(std::iter::once(image.as_str()))?;
    let names: Vec<String> = match &args.attribute {
        Some(a) => vec![a.clone()],
        None => table.attributes().map(str::to_string).collect(),
    };
    let input = ImageInput::Key(image);
    for name in names {
        let s = declip::assess::attribute_score(&loaded.model, &input, &table, &name)?;
        println!("{name}\t{s}");
    }
    let stamp = Stamp::new("attr", seed, json!({ "encoder": loaded.encoder, "attr": args }));
    eprintln!("# {} checkpoint={}", stamp.short(), loaded.checkpoint_id);
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoopArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// MOS CSV used for tuning
    #[arg(long)]
    pub train_mos: Option<PathBuf>,
    /// Optional held-out MOS CSV; reports SRCC before and after tuning
    #[arg(long)]
    pub eval_mos: Option<PathBuf>,
    /// Prompt vector JSON output
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long)]
    pub negative: Option<String>,
    #[arg(long)]
    pub context_len: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// One context per class instead of a shared one
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub per_class: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn coop(global: &Global, flags: &CoopArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("coop", flags)?;
    let checkpoint = require(&args.checkpoint, "checkpoint")?;
    let train_mos = require(&args.train_mos, "train_mos")?;
    let out = require(&args.out, "out")?;
    require_file(&train_mos, "training MOS file")?;
    if let Some(p) = &args.eval_mos {
        require_file(p, "evaluation MOS file")?;
    }
    let d = CoopConfig::default();
    let seed = *args.seed.get_or_insert(d.seed);
    let config = CoopConfig {
        context_len: *args.context_len.get_or_insert(d.context_len),
        epochs: *args.epochs.get_or_insert(d.epochs),
        batch_size: *args.batch_size.get_or_insert(d.batch_size),
        learning_rate: *args.learning_rate.get_or_insert(d.learning_rate),
        weight_decay: *args.weight_decay.get_or_insert(d.weight_decay),
        seed,
        shared_context: !*args.per_class.get_or_insert(false),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let root = default_image_root(&train_mos);
    let loaded = load_model(Some(&checkpoint), &layered_encoder(&file, &flags.encoder)?, Some(&root), None, seed)?;
    let items = load_mos_csv(&train_mos)?;
    loaded.encoder.check_images(items.iter().map(|i| i.image_ref.as_str()))?;
    let pair = prompt_pair(&args.positive, &args.negative, &None, &None)?;
    let outcome = coop_tune(&loaded.model, &items, &pair, &config)?;
    let stamp = Stamp::new("coop", seed, json!({ "encoder": loaded.encoder, "coop": args }));
    write_stamped_json(&out, &outcome.prompt, &stamp)?;
    println!(
        "tuned {} context rows; loss {:.5} -> {:.5}",
        outcome.prompt.m(),
        outcome.epoch_losses.first().copied().unwrap_or(f64::NAN),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(eval_path) = &args.eval_mos {
        let held: Vec<MosItem> = load_mos_csv(eval_path)?;
        let run = |prompts: PromptSource| -> Result<Option<f64>> {
            let opts = EvalOptions { prompts, checkpoint_id: loaded.checkpoint_id.clone(), seed: Some(seed), ..EvalOptions::default() };
            Ok(evaluate_dataset(&loaded.model, &held, &opts)?.srcc)
        };
        let before = run(PromptSource::Antonym(pair.clone()))?;
        let after = run(PromptSource::Tuned(outcome.prompt.clone()))?;
        println!("held-out srcc: hand prompts {before:?}, tuned {after:?}");
    }
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CondArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// perceptual_image_semantic_text or semantic_image_perceptual_text
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub image: Option<String>,
    #[arg(long)]
    pub text: Option<String>,
    /// Condition file output
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    pub encoder: EncoderArgs,
}

pub fn cond(global: &Global, flags: &CondArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let mut args = file.layer("cond", flags)?;
    let mode: ConditionMode = require(&args.mode, "mode")?.parse().map_err(|e: declip::DeclipError| usage(e.to_string()))?;
    let image = require(&args.image, "image")?;
    let text = require(&args.text, "text")?;
    let out = require(&args.out, "out")?;
    let seed = *args.seed.get_or_insert(0);
    let loaded = load_model(args.checkpoint.as_deref(), &layered_encoder(&file, &flags.encoder)?, None, args.hidden, seed)?;
    loaded.encoder.check_images(std::iter::once(image.as_str()))?;
    let bundle = assemble_condition(&loaded.model, mode, &ImageInput::Key(image), &text)?;
    export_condition(&bundle, &out)?;
    let stamp = Stamp::new("cond", seed, json!({ "encoder": loaded.encoder, "cond": args }));
    write_stamped_json(&PathBuf::from(format!("{}.stamp.json", out.display())), &json!({ "condition_file": out }), &stamp)?;
    println!("wrote {} ({mode})", out.display());
    Ok(())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotArgs {
    /// Training log JSONL; draws the loss curves
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Evaluation report JSON; draws score vs MOS
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// SVG output
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn plot(global: &Global, flags: &PlotArgs) -> Result<()> {
    let file = ConfigFile::load(global.config.as_deref())?;
    let args = file.layer("plot", flags)?;
    let out = require(&args.out, "out")?;
    let stamp = Stamp::new("plot", 0, json!({ "plot": args }));
    let svg = match (&args.log, &args.report) {
        (Some(log), None) => {
            require_file(log, "training log")?;
            let text = std::fs::read_to_string(log)?;
            let entries = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .enumerate()
                .map(|(i, l)| serde_json::from_str::<EpochLog>(l).with_context(|| format!("{} line {}", log.display(), i + 1)))
                .collect::<Result<Vec<_>>>()?;
            loss_svg(&entries, &stamp.short())
        }
        (None, Some(report)) => {
            require_file(report, "report")?;
            scatter_report_svg(&EvalReport::load(report)?, &stamp.short())
        }
        _ => bail!(usage("give exactly one of --log or --report")),
    };
    write_text(&out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}
