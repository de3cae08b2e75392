//! Topic extraction, coherence, recommendation and classification metrics,
//! embedding export.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Split};
use crate::error::{Error, Result};
use crate::graph::Task;
use crate::model::{GdVae, ModelViews, PosteriorInput};
use crate::neural::tape::row_softmax;
use crate::neural::DenseMatrix;
use crate::trainer::{eligible_admissions, TaskSet};

/// Ranks `scores` descending, ties by index.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    /// Per topic, `(code, probability)` in rank order.
    pub topics: Vec<Vec<(usize, f64)>>,
}

impl TopicSummary {
    pub fn words(&self, topic: usize, n: usize) -> Vec<usize> {
        self.topics[topic].iter().take(n).map(|&(c, _)| c).collect()
    }
}

/// Top `n` codes of every row of the topic-code matrix.
pub fn topic_top_words(beta: &DenseMatrix, n: usize) -> Result<TopicSummary> {
    if n == 0 || n > beta.cols() {
        return Err(Error::InvalidArgument(format!(
            "top-{n} words requested from a vocabulary of {}",
            beta.cols()
        )));
    }
    let topics = (0..beta.rows())
        .map(|l| {
            let row = beta.row(l);
            ranked(row).into_iter().take(n).map(|c| (c, row[c])).collect()
        })
        .collect();
    Ok(TopicSummary { topics })
}

/// Document and co-document frequencies of codes over reference admissions.
#[derive(Debug, Clone)]
pub struct Cooccurrence {
    docs: usize,
    single: Vec<usize>,
    pairs: HashMap<(usize, usize), usize>,
}

impl Cooccurrence {
    pub fn new(corpus: &Corpus, admissions: &[usize]) -> Self {
        Self::from_sets(corpus.code_count(), admissions.iter().map(|&a| corpus.global_codes(a)))
    }

    /// From explicit code sets over a vocabulary of `vocab` codes.
    pub fn from_sets(vocab: usize, sets: impl IntoIterator<Item = Vec<usize>>) -> Self {
        let mut single = vec![0; vocab];
        let mut pairs = HashMap::new();
        let mut docs = 0;
        for mut codes in sets {
            codes.sort_unstable();
            codes.dedup();
            docs += 1;
            for (x, &i) in codes.iter().enumerate() {
                single[i] += 1;
                for &j in &codes[x + 1..] {
                    *pairs.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
        Self { docs, single, pairs }
    }

    /// NPMI: −1 without co-occurrence, 1 when the pair occurs in every document.
    pub fn npmi(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        let joint = self.pairs.get(&key).copied().unwrap_or(0);
        if joint == 0 || self.docs == 0 {
            return -1.0;
        }
        let n = self.docs as f64;
        let p_ij = joint as f64 / n;
        if joint == self.docs {
            return 1.0;
        }
        let p_i = self.single[i] as f64 / n;
        let p_j = self.single[j] as f64 / n;
        let pmi = p_ij.ln() - (p_i * p_j).ln();
        (pmi / -p_ij.ln()).clamp(-1.0, 1.0)
    }
}

pub const DEFAULT_TOP_NS: [usize; 4] = [5, 10, 15, 20];

/// Mean NPMI over all pairs of each topic's top-n words, averaged over topics
/// and over `top_ns`. Each n is capped at the topic's list length.
pub fn npmi_coherence(topics: &TopicSummary, reference: &Cooccurrence, top_ns: &[usize]) -> Result<f64> {
    if topics.topics.is_empty() || top_ns.is_empty() {
        return Err(Error::InvalidArgument("no topics or top-n values".into()));
    }
    let mut total = 0.0;
    for &n in top_ns {
        let mut per_n = 0.0;
        for (l, t) in topics.topics.iter().enumerate() {
            let words = topics.words(l, n.min(t.len()));
            if words.len() < 2 {
                return Err(Error::InvalidArgument(format!("topic {l} has fewer than two words")));
            }
            let mut s = 0.0;
            let mut count = 0;
            for (x, &i) in words.iter().enumerate() {
                for &j in &words[x + 1..] {
                    s += reference.npmi(i, j);
                    count += 1;
                }
            }
            per_n += s / count as f64;
        }
        total += per_n / topics.topics.len() as f64;
    }
    Ok(total / top_ns.len() as f64)
}

/// `topics` random topics of `n` distinct codes each, as a baseline.
pub fn random_topics<R: Rng>(vocab: usize, topics: usize, n: usize, rng: &mut R) -> TopicSummary {
    TopicSummary {
        topics: (0..topics)
            .map(|_| index::sample(rng, vocab, n.min(vocab)).into_iter().map(|c| (c, 0.0)).collect())
            .collect(),
    }
}

/// Greedy one-to-one matching by cosine similarity: repeatedly takes the most
/// similar unmatched pair. Returns `(learned, planted, cosine)`.
pub fn match_topics(learned: &[Vec<f64>], planted: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let cos = |a: &[f64], b: &[f64]| {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    };
    let mut candidates: Vec<(f64, usize, usize)> = learned
        .iter()
        .enumerate()
        .flat_map(|(i, a)| planted.iter().enumerate().map(move |(j, b)| (cos(a, b), i, j)))
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let (mut used_l, mut used_p) = (BTreeSet::new(), BTreeSet::new());
    let mut out = Vec::new();
    for (c, i, j) in candidates {
        if !used_l.contains(&i) && !used_p.contains(&j) {
            used_l.insert(i);
            used_p.insert(j);
            out.push((i, j, c));
        }
    }
    out.sort_by_key(|&(_, j, _)| j);
    out
}

fn require_diseases(views: &ModelViews, admission: usize) -> Result<()> {
    if admission >= views.recommend.admissions {
        return Err(Error::InvalidArgument(format!("admission {admission} outside the graph")));
    }
    if !views.recommend.has_pooled_codes(admission) {
        return Err(Error::InvalidArgument(format!("admission {admission} has no disease codes")));
    }
    Ok(())
}

/// Top-M procedures with probabilities from `π_R` at `z_R = μ_R`, ties by index.
pub fn recommend(model: &GdVae, views: &ModelViews, admission: usize, m: usize) -> Result<Vec<(usize, f64)>> {
    Ok(recommend_many(model, views, &[admission], m)?.remove(0))
}

pub fn recommend_many(model: &GdVae, views: &ModelViews, admissions: &[usize], m: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    for &a in admissions {
        require_diseases(views, a)?;
    }
    let probs = model.recommend_probs(views, admissions)?;
    Ok((0..admissions.len())
        .map(|r| {
            let row = probs.row(r);
            ranked(row).into_iter().take(m).map(|p| (p, row[p])).collect()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopMReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub evaluated: usize,
    /// Admissions skipped for an empty ground truth.
    pub skipped: usize,
}

/// Per-admission set precision, recall and F1, averaged over admissions with
/// non-empty ground truth.
pub fn topm_metrics(lists: &[Vec<usize>], truths: &[BTreeSet<usize>]) -> Result<TopMReport> {
    if lists.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} recommendation lists for {} ground truths",
            lists.len(),
            truths.len()
        )));
    }
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    let (mut evaluated, mut skipped) = (0, 0);
    for (w, y) in lists.iter().zip(truths) {
        if y.is_empty() {
            skipped += 1;
            continue;
        }
        let w: BTreeSet<usize> = w.iter().copied().collect();
        let hit = w.intersection(y).count() as f64;
        let pn = if w.is_empty() { 0.0 } else { hit / w.len() as f64 };
        let rn = hit / y.len() as f64;
        p += pn;
        r += rn;
        f += if pn + rn == 0.0 { 0.0 } else { 2.0 * pn * rn / (pn + rn) };
        evaluated += 1;
    }
    let n = evaluated.max(1) as f64;
    Ok(TopMReport {
        precision: p / n,
        recall: r / n,
        f1: f / n,
        evaluated,
        skipped,
    })
}

/// Argmax label (ties by index) and `π_P` at `z_P = μ_P`.
pub fn predict_type(model: &GdVae, views: &ModelViews, admission: usize) -> Result<(usize, Vec<f64>)> {
    Ok(predict_many(model, views, &[admission])?.remove(0))
}

pub fn predict_many(model: &GdVae, views: &ModelViews, admissions: &[usize]) -> Result<Vec<(usize, Vec<f64>)>> {
    for &a in admissions {
        if a >= views.full.admissions || !views.full.has_pooled_codes(a) {
            return Err(Error::InvalidArgument(format!("admission {a} has no codes in the prediction view")));
        }
    }
    let probs = model.predict_probs(views, admissions)?;
    Ok((0..admissions.len())
        .map(|r| {
            let row = probs.row(r).to_vec();
            (ranked(&row)[0], row)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub count: usize,
}

/// Macro-averaged precision, recall and F1 over `labels` classes; zero
/// denominators count as 0.
pub fn classification_metrics(predictions: &[usize], truths: &[usize], labels: usize) -> Result<ClassReport> {
    if predictions.is_empty() || predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if let Some(&c) = predictions.iter().chain(truths).find(|&&c| c >= labels) {
        return Err(Error::InvalidArgument(format!("label {c} not among the {labels} known labels")));
    }
    let mut tp = vec![0usize; labels];
    let mut pred = vec![0usize; labels];
    let mut truth = vec![0usize; labels];
    for (&p, &t) in predictions.iter().zip(truths) {
        pred[p] += 1;
        truth[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
    for c in 0..labels {
        let pc = ratio(tp[c], pred[c]);
        let rc = ratio(tp[c], truth[c]);
        p += pc;
        r += rc;
        f += if pc + rc == 0.0 { 0.0 } else { 2.0 * pc * rc / (pc + rc) };
    }
    let l = labels as f64;
    Ok(ClassReport {
        precision: p / l,
        recall: r / l,
        f1: f / l,
        accuracy: ratio(tp.iter().sum(), predictions.len()),
        count: predictions.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Codes,
    Admissions,
}

impl std::str::FromStr for EmbeddingKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codes" => Ok(Self::Codes),
            "admissions" => Ok(Self::Admissions),
            _ => Err(Error::InvalidArgument(format!("expected `codes` or `admissions`, got `{s}`"))),
        }
    }
}

/// Embedding rows with ids. Codes: GCN outputs of the task's view.
/// Admissions: posterior-mean latents, through the softmax for topics.
pub fn embedding_matrix(
    model: &GdVae,
    views: &ModelViews,
    corpus: &Corpus,
    which: EmbeddingKind,
    task: Task,
) -> Result<(Vec<String>, DenseMatrix)> {
    let view = views.for_task(task);
    match which {
        EmbeddingKind::Codes => {
            let h = model.encode(view)?;
            let ids = view.code_nodes.iter().map(|&c| corpus.code_name(c).to_string()).collect();
            let rows: Vec<Vec<f64>> = (0..view.code_nodes.len()).map(|r| h.row(r).to_vec()).collect();
            Ok((ids, DenseMatrix::from_rows(&rows)))
        }
        EmbeddingKind::Admissions => {
            let ids = corpus.admissions().iter().map(|a| a.id.clone()).collect();
            let input = match task {
                Task::Topic => PosteriorInput::CodePools(view.pooled_codes.clone()),
                _ => PosteriorInput::Admissions((0..view.admissions).collect()),
            };
            let (mu, _) = model.posterior(view, task, &input)?;
            let m = if task == Task::Topic { row_softmax(&mu) } else { mu };
            Ok((ids, m))
        }
    }
}

/// Header row then tab-separated values.
pub fn export_embeddings<W: Write>(
    model: &GdVae,
    views: &ModelViews,
    corpus: &Corpus,
    which: EmbeddingKind,
    task: Task,
    mut out: W,
) -> Result<()> {
    let (ids, m) = embedding_matrix(model, views, corpus, which, task)?;
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..m.cols()).map(|c| format!("dim{c}")))
        .collect();
    writeln!(out, "{}", header.join("\t"))?;
    for (r, id) in ids.iter().enumerate() {
        let vals: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{id}\t{}", vals.join("\t"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: Task,
    pub split: String,
    pub values: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
}

impl MetricReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("serializable")
    }
}

pub fn reports_jsonl(reports: &[MetricReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub top_ms: Vec<usize>,
    pub top_ns: Vec<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            top_ms: vec![1, 3, 5, 10],
            top_ns: DEFAULT_TOP_NS.to_vec(),
        }
    }
}

/// Test-split metrics for the active tasks. Topic coherence is measured
/// against the training admissions.
pub fn evaluate(
    model: &GdVae,
    views: &ModelViews,
    corpus: &Corpus,
    split: &Split,
    tasks: &TaskSet,
    options: &EvalOptions,
) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    for task in tasks.iter() {
        let mut values = BTreeMap::new();
        let mut counts = BTreeMap::new();
        match task {
            Task::Topic => {
                let beta = model.topic_matrix();
                let max_n = options.top_ns.iter().copied().max().unwrap_or(5).min(beta.cols());
                let summary = topic_top_words(&beta, max_n)?;
                let reference = Cooccurrence::new(corpus, &split.train);
                values.insert("npmi".into(), npmi_coherence(&summary, &reference, &options.top_ns)?);
                for &n in &options.top_ns {
                    values.insert(format!("npmi@{n}"), npmi_coherence(&summary, &reference, &[n])?);
                }
                counts.insert("topics".into(), beta.rows());
                counts.insert("reference_admissions".into(), split.train.len());
            }
            Task::Recommend => {
                let adm = eligible_admissions(corpus, views, task, &split.test);
                counts.insert("admissions".into(), adm.len());
                if adm.is_empty() {
                    return Err(Error::InvalidArgument("no test admissions usable for recommendation".into()));
                }
                let max_m = options.top_ms.iter().copied().max().unwrap_or(1);
                let lists = recommend_many(model, views, &adm, max_m)?;
                let truths: Vec<BTreeSet<usize>> = adm
                    .iter()
                    .map(|&a| corpus.encoded(a).procedures.iter().copied().collect())
                    .collect();
                for &m in &options.top_ms {
                    let w: Vec<Vec<usize>> = lists.iter().map(|l| l.iter().take(m).map(|x| x.0).collect()).collect();
                    let r = topm_metrics(&w, &truths)?;
                    values.insert(format!("precision@{m}"), r.precision);
                    values.insert(format!("recall@{m}"), r.recall);
                    values.insert(format!("f1@{m}"), r.f1);
                    counts.insert("skipped".into(), r.skipped);
                }
            }
            Task::Predict => {
                let adm = eligible_admissions(corpus, views, task, &split.test);
                counts.insert("admissions".into(), adm.len());
                if adm.is_empty() {
                    return Err(Error::InvalidArgument("no test admissions usable for prediction".into()));
                }
                let preds: Vec<usize> = predict_many(model, views, &adm)?.into_iter().map(|p| p.0).collect();
                let truths: Vec<usize> = adm.iter().map(|&a| corpus.encoded(a).label).collect();
                let r = classification_metrics(&preds, &truths, corpus.labels().len())?;
                values.insert("precision".into(), r.precision);
                values.insert("recall".into(), r.recall);
                values.insert("f1".into(), r.f1);
                values.insert("accuracy".into(), r.accuracy);
            }
        }
        reports.push(MetricReport {
            task,
            split: "test".into(),
            values,
            counts,
        });
    }
    Ok(reports)
}
