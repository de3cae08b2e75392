//! Joint training: biterm documents, batching, early stopping and the task
//! ablation matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint::Checkpoint;
use crate::corpus::{hex_digest, Corpus, Split, SplitRatios};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, MetricReport};
use crate::graph::{training_graph, AdmissionGraph, GraphVariant, Task};
use crate::model::{ClsBatch, GdVae, LossReport, ModelConfig, ModelDims, ModelViews, Noise, RecBatch, TaskBatch, TopicBatch};
use crate::neural::{Adam, Biterms, DenseMatrix};

/// Non-empty set of active tasks, kept in T, R, P order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskSet(BTreeSet<Task>);

impl TaskSet {
    pub fn new(tasks: impl IntoIterator<Item = Task>) -> Result<Self> {
        let set: BTreeSet<Task> = tasks.into_iter().collect();
        if set.is_empty() {
            return Err(Error::Config("at least one task must be active".into()));
        }
        Ok(Self(set))
    }

    pub fn all() -> Self {
        Self(Task::ALL.into_iter().collect())
    }

    /// The seven non-empty subsets in the order T, R, P, TR, TP, RP, TRP.
    pub fn subsets() -> Vec<TaskSet> {
        let [t, r, p] = Task::ALL;
        [vec![t], vec![r], vec![p], vec![t, r], vec![t, p], vec![r, p], vec![t, r, p]]
            .into_iter()
            .map(|v| Self(v.into_iter().collect()))
            .collect()
    }

    pub fn contains(&self, task: Task) -> bool {
        self.0.contains(&task)
    }

    pub fn iter(&self) -> impl Iterator<Item = Task> + '_ {
        self.0.iter().copied()
    }

    /// Bit mask with T = 1, R = 2, P = 4.
    pub fn mask(&self) -> u64 {
        self.iter()
            .map(|t| match t {
                Task::Topic => 1,
                Task::Recommend => 2,
                Task::Predict => 4,
            })
            .sum()
    }

    pub fn label(&self) -> String {
        self.iter().map(|t| t.letter()).collect()
    }

    /// Parses `T,R,P`, `TRP` or any mix of the two.
    pub fn parse(text: &str) -> Result<Self> {
        let tasks = text
            .chars()
            .filter(|c| !matches!(c, ',' | ' '))
            .map(Task::from_letter)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Config(format!("invalid task list `{text}`: {e}")))?;
        Self::new(tasks)
    }
}

impl std::fmt::Display for TaskSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let letters: Vec<String> = self.iter().map(|t| t.letter().to_string()).collect();
        f.write_str(&letters.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tasks: TaskSet,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub topics: usize,
    pub merge_count: usize,
    pub num_biterm_docs: usize,
    pub embedding_dim: usize,
    pub latent_dim: usize,
    pub rec_hidden: usize,
    pub residual: bool,
    pub alpha: f64,
    pub graph_variant: GraphVariant,
    pub patience: usize,
    pub min_count: usize,
    pub split: SplitRatios,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tasks: TaskSet::all(),
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            topics: 50,
            merge_count: 10,
            num_biterm_docs: 5000,
            embedding_dim: 200,
            latent_dim: 200,
            rec_hidden: 200,
            residual: true,
            alpha: 0.02,
            graph_variant: GraphVariant::PmiTfidf,
            patience: 10,
            min_count: 0,
            split: SplitRatios::default(),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("bad value `{value}` for `{key}`: {e}")))
}

impl TrainConfig {
    /// Parses flat `key = value` lines on top of the defaults. `#` starts a
    /// comment; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip_config(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "tasks" => self.tasks = TaskSet::parse(value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "topics" => self.topics = parse_value(key, value)?,
            "merge_count" => self.merge_count = parse_value(key, value)?,
            "num_biterm_docs" => self.num_biterm_docs = parse_value(key, value)?,
            "embedding_dim" => self.embedding_dim = parse_value(key, value)?,
            "latent_dim" => self.latent_dim = parse_value(key, value)?,
            "rec_hidden" => self.rec_hidden = parse_value(key, value)?,
            "residual" => self.residual = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "graph_variant" => self.graph_variant = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "min_count" => self.min_count = parse_value(key, value)?,
            "train_ratio" => self.split.train = parse_value(key, value)?,
            "val_ratio" => self.split.val = parse_value(key, value)?,
            "test_ratio" => self.split.test = parse_value(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.tasks.contains(Task::Topic) && self.topics < 2 {
            return fail("topics must be at least 2 when task T is active");
        }
        if self.topics == 0 || self.embedding_dim == 0 || self.latent_dim == 0 || self.rec_hidden == 0 {
            return fail("dimensions must be positive");
        }
        if self.merge_count == 0 || self.num_biterm_docs == 0 {
            return fail("merge_count and num_biterm_docs must be positive");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; parses back to the same config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("tasks", self.tasks.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("learning_rate", format!("{:?}", self.learning_rate));
        kv("seed", self.seed.to_string());
        kv("topics", self.topics.to_string());
        kv("merge_count", self.merge_count.to_string());
        kv("num_biterm_docs", self.num_biterm_docs.to_string());
        kv("embedding_dim", self.embedding_dim.to_string());
        kv("latent_dim", self.latent_dim.to_string());
        kv("rec_hidden", self.rec_hidden.to_string());
        kv("residual", self.residual.to_string());
        kv("alpha", format!("{:?}", self.alpha));
        kv("graph_variant", self.graph_variant.to_string());
        kv("patience", self.patience.to_string());
        kv("min_count", self.min_count.to_string());
        kv("train_ratio", format!("{:?}", self.split.train));
        kv("val_ratio", format!("{:?}", self.split.val));
        kv("test_ratio", format!("{:?}", self.split.test));
        s
    }

    /// SHA-256 of the canonical rendering.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.to_text().as_bytes());
        hex_digest(h)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.embedding_dim,
            hidden_dim: self.embedding_dim,
            topics: self.topics,
            latent_dim: self.latent_dim,
            rec_hidden: self.rec_hidden,
            residual: self.residual,
            alpha: self.alpha,
        }
    }

    pub fn with_tasks(&self, tasks: TaskSet) -> Self {
        Self { tasks, ..self.clone() }
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Independent random stream `id` of a seed.
pub fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_TRAIN_DOCS: u64 = 1;
const STREAM_VAL_DOCS: u64 = 2;
const STREAM_SHUFFLE: u64 = 16;
const STREAM_NOISE: u64 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitermDocument {
    /// Unordered code pairs `(i, j)` with `i < j`, global code indices.
    pub biterms: Biterms,
    /// Contributing admission positions.
    pub admissions: Vec<usize>,
    /// Union of the contributing admissions' codes, sorted.
    pub codes: Vec<usize>,
}

/// Merges `merge_count` admissions drawn without replacement per document and
/// pools the unordered code pairs of each contributing admission.
pub fn make_biterm_documents<R: rand::Rng>(
    corpus: &Corpus,
    admissions: &[usize],
    merge_count: usize,
    num_docs: usize,
    rng: &mut R,
) -> Result<Vec<BitermDocument>> {
    if merge_count == 0 || merge_count > admissions.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot merge {merge_count} admissions out of {}",
            admissions.len()
        )));
    }
    let mut docs = Vec::with_capacity(num_docs);
    for _ in 0..num_docs {
        let mut picked: Vec<usize> = index::sample(rng, admissions.len(), merge_count)
            .into_iter()
            .map(|i| admissions[i])
            .collect();
        picked.sort_unstable();
        let mut biterms = Vec::new();
        let mut union = BTreeSet::new();
        for &a in &picked {
            let codes = corpus.global_codes(a);
            for (x, &i) in codes.iter().enumerate() {
                for &j in &codes[x + 1..] {
                    biterms.push((i, j));
                }
            }
            union.extend(codes);
        }
        docs.push(BitermDocument {
            biterms,
            admissions: picked,
            codes: union.into_iter().collect(),
        });
    }
    Ok(docs)
}

fn topic_batch(docs: &[&BitermDocument]) -> TopicBatch {
    TopicBatch {
        docs: Arc::new(docs.iter().map(|d| d.biterms.clone()).collect()),
        codes: docs.iter().map(|d| d.codes.clone()).collect(),
    }
}

/// Procedure-count targets for admissions of the recommendation task.
pub fn rec_batch(corpus: &Corpus, admissions: &[usize]) -> RecBatch {
    let mut targets = DenseMatrix::zeros(admissions.len(), corpus.procedure_vocab().len());
    for (row, &a) in admissions.iter().enumerate() {
        for &p in &corpus.encoded(a).procedures {
            targets.set(row, p, 1.0);
        }
    }
    RecBatch {
        admissions: admissions.to_vec(),
        targets: Arc::new(targets),
    }
}

pub fn cls_batch(corpus: &Corpus, admissions: &[usize]) -> ClsBatch {
    ClsBatch {
        admissions: admissions.to_vec(),
        labels: admissions.iter().map(|&a| corpus.encoded(a).label).collect(),
    }
}

/// Admissions usable for a task: non-empty pooled codes in the task's view,
/// and at least one procedure target for recommendation.
pub fn eligible_admissions(corpus: &Corpus, views: &ModelViews, task: Task, admissions: &[usize]) -> Vec<usize> {
    let view = views.for_task(task);
    let (kept, dropped): (Vec<usize>, Vec<usize>) = admissions.iter().partition(|&&a| {
        view.has_pooled_codes(a) && (task != Task::Recommend || !corpus.encoded(a).procedures.is_empty())
    });
    if !dropped.is_empty() {
        log::warn!("task {task}: {} admissions excluded (empty codes or targets)", dropped.len());
    }
    kept
}

/// Everything fixed for the duration of a run.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub train_docs: Vec<BitermDocument>,
    pub val_docs: Vec<BitermDocument>,
    pub train: BTreeMap<Task, Vec<usize>>,
    pub val: BTreeMap<Task, Vec<usize>>,
}

impl TrainingData {
    pub fn new(config: &TrainConfig, corpus: &Corpus, split: &Split, views: &ModelViews) -> Result<Self> {
        let mut train = BTreeMap::new();
        let mut val = BTreeMap::new();
        let (mut train_docs, mut val_docs) = (Vec::new(), Vec::new());
        for task in config.tasks.iter() {
            if task == Task::Topic {
                let mut rng = rng_stream(config.seed, STREAM_TRAIN_DOCS);
                train_docs =
                    make_biterm_documents(corpus, &split.train, config.merge_count, config.num_biterm_docs, &mut rng)?;
                let n_val = (config.num_biterm_docs * split.val.len()).div_ceil(split.train.len().max(1));
                let merge = config.merge_count.min(split.val.len());
                let mut rng = rng_stream(config.seed, STREAM_VAL_DOCS);
                val_docs = make_biterm_documents(corpus, &split.val, merge, n_val.max(1), &mut rng)?;
                continue;
            }
            let t = eligible_admissions(corpus, views, task, &split.train);
            let v = eligible_admissions(corpus, views, task, &split.val);
            if t.is_empty() {
                return Err(Error::InvalidArgument(format!("no training admissions usable for task {task}")));
            }
            train.insert(task, t);
            val.insert(task, v);
        }
        Ok(Self {
            train_docs,
            val_docs,
            train,
            val,
        })
    }

    fn validation_batch(&self, corpus: &Corpus, tasks: &TaskSet) -> TaskBatch {
        let mut batch = TaskBatch::default();
        if tasks.contains(Task::Topic) && !self.val_docs.is_empty() {
            batch.topic = Some(topic_batch(&self.val_docs.iter().collect::<Vec<_>>()));
        }
        if let Some(v) = self.val.get(&Task::Recommend).filter(|v| !v.is_empty()) {
            batch.recommend = Some(rec_batch(corpus, v));
        }
        if let Some(v) = self.val.get(&Task::Predict).filter(|v| !v.is_empty()) {
            batch.predict = Some(cls_batch(corpus, v));
        }
        batch
    }
}

/// One record of the epoch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's steps.
    pub train_loss: f64,
    pub train_tasks: BTreeMap<Task, f64>,
    pub val_loss: f64,
    pub val: LossReport,
    pub best: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: GdVae,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub config_digest: String,
}

impl TrainOutcome {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.model, &self.config_digest)
    }

    pub fn log_jsonl(&self) -> String {
        self.log
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect()
    }
}

pub fn model_dims(corpus: &Corpus) -> ModelDims {
    ModelDims {
        diseases: corpus.disease_vocab().len(),
        procedures: corpus.procedure_vocab().len(),
        labels: corpus.labels().len(),
    }
}

/// Splits `items` into `parts` contiguous chunks whose sizes differ by at most one.
fn chunk(items: &[usize], parts: usize, k: usize) -> &[usize] {
    let n = items.len();
    let start = k * n / parts;
    let end = (k + 1) * n / parts;
    &items[start..end]
}

/// Trains on `graph` (built for the split) and keeps the best validation
/// epoch. Deterministic in `(config, corpus, split)`.
pub fn train(config: &TrainConfig, corpus: &Corpus, split: &Split, graph: &AdmissionGraph) -> Result<TrainOutcome> {
    config.validate()?;
    let views = ModelViews::new(graph);
    let data = TrainingData::new(config, corpus, split, &views)?;
    let mut model = GdVae::new(config.model_config(), model_dims(corpus), config.seed)?;
    let adam = Adam::with_lr(config.learning_rate);
    let mask = config.tasks.mask();
    let mut shuffle_rng = rng_stream(config.seed, STREAM_SHUFFLE + mask);
    let mut noise = Noise::Gaussian(rng_stream(config.seed, STREAM_NOISE + mask));
    let steps = split.train.len().div_ceil(config.batch_size).max(1);
    let val_batch = data.validation_batch(corpus, &config.tasks);

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<DenseMatrix>)> = None;
    let mut since_best = 0;
    for epoch in 1..=config.epochs {
        let mut order_docs: Vec<usize> = (0..data.train_docs.len()).collect();
        order_docs.shuffle(&mut shuffle_rng);
        let orders: BTreeMap<Task, Vec<usize>> = data
            .train
            .iter()
            .map(|(&t, v)| {
                let mut v = v.clone();
                v.shuffle(&mut shuffle_rng);
                (t, v)
            })
            .collect();

        let mut sum = 0.0;
        let mut task_sums: BTreeMap<Task, (f64, usize)> = BTreeMap::new();
        let mut taken = 0;
        for step in 0..steps {
            let mut batch = TaskBatch::default();
            if config.tasks.contains(Task::Topic) {
                let idx = chunk(&order_docs, steps, step);
                if !idx.is_empty() {
                    let docs: Vec<&BitermDocument> = idx.iter().map(|&i| &data.train_docs[i]).collect();
                    batch.topic = Some(topic_batch(&docs));
                }
            }
            if let Some(o) = orders.get(&Task::Recommend) {
                let idx = chunk(o, steps, step);
                if !idx.is_empty() {
                    batch.recommend = Some(rec_batch(corpus, idx));
                }
            }
            if let Some(o) = orders.get(&Task::Predict) {
                let idx = chunk(o, steps, step);
                if !idx.is_empty() {
                    batch.predict = Some(cls_batch(corpus, idx));
                }
            }
            if batch.is_empty() {
                continue;
            }
            let report = model.elbo_joint(&views, &batch, &mut noise).map_err(|e| Error::Diverged {
                epoch,
                step,
                reason: e.to_string(),
            })?;
            adam.step(&mut model.params).map_err(|e| Error::Diverged {
                epoch,
                step,
                reason: e.to_string(),
            })?;
            sum += report.total;
            taken += 1;
            for (t, l) in &report.tasks {
                let e = task_sums.entry(*t).or_default();
                e.0 += l.loss();
                e.1 += 1;
            }
        }
        let train_loss = sum / taken.max(1) as f64;

        let val = if val_batch.is_empty() {
            LossReport::default()
        } else {
            model.evaluate_loss(&views, &val_batch, &mut Noise::Zero)?
        };
        let val_loss = if val_batch.is_empty() { train_loss } else { val.total };
        if !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: steps,
                reason: "non-finite validation loss".into(),
            });
        }
        let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, epoch, model.params.iter().map(|p| p.value.clone()).collect()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            train_tasks: task_sums.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect(),
            val_loss,
            val,
            best: improved,
        };
        log::info!(
            "epoch {epoch}: train {:.5} val {:.5}{}",
            record.train_loss,
            record.val_loss,
            if improved { " *" } else { "" }
        );
        log.push(record);
        if config.patience > 0 && since_best >= config.patience {
            log::info!("early stop after epoch {epoch}");
            break;
        }
    }

    let (_, best_epoch, values) = best.expect("at least one epoch");
    for (p, v) in model.params.params_mut().iter_mut().zip(values) {
        p.value = v;
    }
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        config_digest: config.digest(),
    })
}

/// One row of the ablation table.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub tasks: TaskSet,
    pub split_digest: String,
    pub outcome: TrainOutcome,
    pub metrics: Vec<MetricReport>,
}

/// Worker count from `GDVAE_THREADS`, defaulting to rayon's choice.
pub fn worker_threads() -> Option<usize> {
    std::env::var("GDVAE_THREADS").ok()?.parse().ok().filter(|&n: &usize| n > 0)
}

/// Trains all seven task subsets on the same split and graph. Rows come back
/// in the fixed subset order whatever the worker count.
pub fn ablation_matrix(
    base: &TrainConfig,
    corpus: &Corpus,
    split: &Split,
    graph: &AdmissionGraph,
    options: &EvalOptions,
) -> Result<Vec<AblationRow>> {
    base.validate()?;
    let digest = split.digest(corpus);
    let run = |tasks: TaskSet| -> Result<AblationRow> {
        let cfg = base.with_tasks(tasks.clone());
        let outcome = train(&cfg, corpus, split, graph)?;
        let views = ModelViews::new(graph);
        let metrics = evaluate(&outcome.model, &views, corpus, split, &tasks, options)?;
        Ok(AblationRow {
            tasks,
            split_digest: digest.clone(),
            outcome,
            metrics,
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = worker_threads() {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| TaskSet::subsets().into_par_iter().map(run).collect())
}

/// Fixed-width comparison table, one row per subset.
pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut columns: BTreeSet<String> = BTreeSet::new();
    for r in rows {
        for m in &r.metrics {
            columns.extend(m.values.keys().map(|k| format!("{}.{k}", m.task)));
        }
    }
    let mut out = String::new();
    let _ = write!(out, "{:<5} {:>6} {:>12}", "tasks", "best", "val_loss");
    for c in &columns {
        let _ = write!(out, " {c:>14}");
    }
    out.push('\n');
    for r in rows {
        let best = &r.outcome.log[r.outcome.best_epoch - 1];
        let _ = write!(out, "{:<5} {:>6} {:>12.5}", r.tasks.label(), r.outcome.best_epoch, best.val_loss);
        for c in &columns {
            let (task, key) = c.split_once('.').expect("task.metric");
            let v = r
                .metrics
                .iter()
                .find(|m| m.task.to_string() == task)
                .and_then(|m| m.values.get(key));
            match v {
                Some(v) => {
                    let _ = write!(out, " {v:>14.5}");
                }
                None => {
                    let _ = write!(out, " {:>14}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

/// Applies the config's frequency threshold; `min_count = 0` keeps every code.
pub fn preprocess(config: &TrainConfig, corpus: &Corpus) -> Result<Corpus> {
    if config.min_count == 0 {
        Ok(corpus.clone())
    } else {
        crate::corpus::apply_frequency_threshold(corpus, config.min_count)
    }
}

/// Split and training graph for a config.
pub fn prepare(config: &TrainConfig, corpus: &Corpus) -> Result<(Split, AdmissionGraph)> {
    let split = crate::corpus::split(corpus, config.split, config.seed)?;
    let graph = training_graph(corpus, &split, config.graph_variant)?;
    Ok((split, graph))
}
