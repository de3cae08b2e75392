//! Run directories: everything needed to reload a trained model.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gdvae::checkpoint::load_checkpoint;
use gdvae::corpus::{load_admissions, Corpus, Split, SplitIds};
use gdvae::graph::training_graph;
use gdvae::model::{GdVae, ModelViews};
use gdvae::trainer::{model_dims, TrainConfig, TrainOutcome};
use gdvae::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG: &str = "config.cfg";
pub const CORPUS: &str = "admissions.jsonl";
pub const SPLIT: &str = "split.json";
pub const CHECKPOINT: &str = "model.ckpt";
pub const EPOCHS: &str = "epochs.jsonl";
pub const METRICS: &str = "metrics.jsonl";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub corpus_digest: String,
    pub split_digest: String,
    pub seed: u64,
    pub tasks: String,
    pub best_epoch: usize,
    pub artifacts: Vec<String>,
    pub created_unix: u64,
}

/// Directory name keyed by config digest and seed.
pub fn run_name(config: &TrainConfig) -> String {
    format!("{}-{}-s{}", config.tasks.label(), &config.digest()[..12], config.seed)
}

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && fs::read_dir(dir)?.next().is_some() {
        if !force {
            return Err(Error::InvalidArgument(format!(
                "{} already exists; pass --force to overwrite",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Writes config, corpus, split, checkpoint, epoch log and manifest.
pub fn write_run(
    dir: &Path,
    config: &TrainConfig,
    corpus: &Corpus,
    split: &Split,
    outcome: &TrainOutcome,
) -> Result<RunManifest> {
    fs::write(dir.join(CONFIG), config.to_text())?;
    corpus.save(&dir.join(CORPUS))?;
    fs::write(dir.join(SPLIT), serde_json::to_string_pretty(&split.ids(corpus))? + "\n")?;
    fs::write(dir.join(CHECKPOINT), outcome.checkpoint().to_bytes())?;
    fs::write(dir.join(EPOCHS), outcome.log_jsonl())?;
    let manifest = RunManifest {
        config_digest: config.digest(),
        corpus_digest: corpus.digest(),
        split_digest: split.digest(corpus),
        seed: config.seed,
        tasks: config.tasks.label(),
        best_epoch: outcome.best_epoch,
        artifacts: [CONFIG, CORPUS, SPLIT, CHECKPOINT, EPOCHS].iter().map(|s| s.to_string()).collect(),
        created_unix: now_unix(),
    };
    fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}

/// A reloaded run.
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: TrainConfig,
    pub corpus: Corpus,
    pub split: Split,
    pub views: ModelViews,
    pub model: GdVae,
}

impl LoadedRun {
    pub fn admission(&self, id: &str) -> Result<usize> {
        self.corpus
            .position(id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown admission id `{id}`")))
    }
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| {
        Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
    })
}

pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let manifest: RunManifest = serde_json::from_str(&read(dir, MANIFEST)?)?;
    let config = TrainConfig::parse(&read(dir, CONFIG)?)?;
    if config.digest() != manifest.config_digest {
        return Err(Error::Checkpoint("config.cfg does not match the run manifest".into()));
    }
    let corpus = load_admissions(&dir.join(CORPUS))?;
    if corpus.digest() != manifest.corpus_digest {
        return Err(Error::Checkpoint("admissions.jsonl does not match the run manifest".into()));
    }
    let ids: SplitIds = serde_json::from_str(&read(dir, SPLIT)?)?;
    let split = Split::from_ids(&ids, &corpus)?;
    let graph = training_graph(&corpus, &split, config.graph_variant)?;
    let views = ModelViews::new(&graph);
    let mut model = GdVae::new(config.model_config(), model_dims(&corpus), config.seed)?;
    load_checkpoint(&dir.join(CHECKPOINT), &mut model, &manifest.config_digest)?;
    Ok(LoadedRun {
        dir: dir.to_path_buf(),
        config,
        corpus,
        split,
        views,
        model,
    })
}
