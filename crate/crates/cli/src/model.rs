//! Encoder and model construction shared by the subcommands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use declip::disentangle::{load_checkpoint, read_checkpoint_metadata, DeclipModel, DEFAULT_HIDDEN};
use declip::encoders::{BackendKind, EmbeddingStore, EncoderBackend, EncoderMetadata, RemoteEncoder, ToyEncoder};
use serde::{Deserialize, Serialize};

use crate::config::{require_file, usage};

pub const DEFAULT_DIM: usize = declip::encoders::toy::DEFAULT_DIM;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderArgs {
    /// Encoder backend: toy, store or remote
    #[arg(id = "encoder_backend", long = "encoder")]
    pub backend: Option<String>,
    /// Embedding dimension
    #[arg(id = "encoder_dim", long = "encoder-dim")]
    pub dim: Option<usize>,
    /// Seed of the toy encoder's projections (defaults to the run seed)
    #[arg(id = "encoder_seed", long = "encoder-seed")]
    pub seed: Option<u64>,
    /// Directory image refs are resolved against (toy backend)
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    /// Precomputed embedding store file (store backend)
    #[arg(long = "embedding-store")]
    pub store: Option<PathBuf>,
    /// Base URL of the encoder service (remote backend)
    #[arg(id = "encoder_url", long = "encoder-url")]
    pub url: Option<String>,
}

fn backend_name(kind: BackendKind) -> &'static str {
    match kind {
        BackendKind::ToyDeterministic => "toy",
        BackendKind::PrecomputedStore => "store",
        BackendKind::RemoteService => "remote",
    }
}

impl EncoderArgs {
    /// Fills every unset field, preferring what a checkpoint recorded, then
    /// `default_root` for images, then the run seed.
    pub fn resolve(&self, recorded: Option<&EncoderMetadata>, default_root: Option<&Path>, run_seed: u64) -> Self {
        let backend = self
            .backend
            .clone()
            .or_else(|| recorded.map(|m| backend_name(m.kind).to_string()))
            .unwrap_or_else(|| "toy".into());
        let is_toy = backend == "toy";
        Self {
            dim: Some(self.dim.or(recorded.map(|m| m.dim)).unwrap_or(DEFAULT_DIM)),
            seed: is_toy.then(|| self.seed.or(recorded.and_then(|m| m.seed)).unwrap_or(run_seed)),
            image_root: self.image_root.clone().or_else(|| default_root.map(Path::to_path_buf)),
            store: self.store.clone(),
            url: self.url.clone(),
            backend: Some(backend),
        }
    }

    /// Builds the backend from resolved settings.
    pub fn build(&self) -> Result<EncoderBackend> {
        let dim = self.dim.unwrap_or(DEFAULT_DIM);
        match self.backend.as_deref().unwrap_or("toy") {
            "toy" => {
                let mut enc = ToyEncoder::new(self.seed.unwrap_or(0), dim);
                if let Some(root) = &self.image_root {
                    enc = enc.with_image_root(root);
                }
                Ok(EncoderBackend::Toy(enc))
            }
            "store" => {
                let path = self.store.as_ref().ok_or_else(|| usage("the store backend needs --embedding-store"))?;
                require_file(path, "embedding store")?;
                let store = EmbeddingStore::load(path).with_context(|| format!("loading {}", path.display()))?;
                if self.dim.is_some_and(|d| d != store.dim()) {
                    return Err(usage(format!("--encoder-dim {dim} does not match store dim {}", store.dim())));
                }
                Ok(EncoderBackend::Store(store))
            }
            "remote" => {
                let url = self.url.as_ref().ok_or_else(|| usage("the remote backend needs --encoder-url"))?;
                Ok(EncoderBackend::Remote(RemoteEncoder::new(url.clone(), dim)))
            }
            other => Err(usage(format!("unknown encoder backend `{other}` (toy, store, remote)"))),
        }
    }

    /// For file-backed toy encoding, the path an image ref will be read from.
    pub fn image_path(&self, image_ref: &str) -> Option<PathBuf> {
        if self.backend.as_deref() != Some("toy") {
            return None;
        }
        Some(match &self.image_root {
            Some(root) => root.join(image_ref),
            None => PathBuf::from(image_ref),
        })
    }

    /// Usage error naming the first few refs whose image files are absent.
    pub fn check_images<'a>(&self, refs: impl Iterator<Item = &'a str>) -> Result<()> {
        let missing: Vec<String> = refs
            .filter_map(|r| self.image_path(r).filter(|p| !p.is_file()))
            .map(|p| p.display().to_string())
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let shown = missing.iter().take(3).cloned().collect::<Vec<_>>().join(", ");
        Err(usage(format!("{} image file(s) not found, e.g. {shown}", missing.len())))
    }
}

/// `dir/images` when it exists, else `dir` itself.
pub fn default_image_root(data_file: &Path) -> PathBuf {
    let dir = data_file.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let images = dir.join("images");
    if images.is_dir() {
        images
    } else {
        dir.to_path_buf()
    }
}

/// Loaded or freshly initialized model plus the encoder settings used.
pub struct LoadedModel {
    pub model: DeclipModel,
    pub encoder: EncoderArgs,
    pub checkpoint_id: String,
}

pub fn load_model(
    checkpoint: Option<&Path>,
    encoder: &EncoderArgs,
    default_root: Option<&Path>,
    hidden: Option<usize>,
    seed: u64,
) -> Result<LoadedModel> {
    match checkpoint {
        Some(path) => {
            require_file(path, "checkpoint")?;
            let meta = read_checkpoint_metadata(path).with_context(|| format!("reading {}", path.display()))?;
            let encoder = encoder.resolve(Some(&meta.encoder), default_root, meta.seed);
            let backend = Arc::new(encoder.build()?);
            let model = load_checkpoint(path, backend).with_context(|| format!("loading {}", path.display()))?;
            Ok(LoadedModel { checkpoint_id: model.param_checksum(), model, encoder })
        }
        None => {
            let encoder = encoder.resolve(None, default_root, seed);
            let model = DeclipModel::new(Arc::new(encoder.build()?), hidden.unwrap_or(DEFAULT_HIDDEN), seed);
            Ok(LoadedModel { checkpoint_id: format!("init:{}", model.param_checksum()), model, encoder })
        }
    }
}
