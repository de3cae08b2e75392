//! Admission corpora: ingestion, frequency thresholding, splitting and a
//! planted-topic synthetic generator.
//!
//! An admission is a set of disease codes, a set of procedure codes and a
//! type label. Codes are kept with set semantics throughout: a code either
//! occurs in an admission or it does not.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdmissionRecord {
    pub id: String,
    pub diseases: BTreeSet<String>,
    pub procedures: BTreeSet<String>,
    #[serde(rename = "type")]
    pub type_label: String,
}

impl AdmissionRecord {
    pub fn code_count(&self) -> usize {
        self.diseases.len() + self.procedures.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    Disease,
    Procedure,
}

/// Lexicographically ordered code list with its inverse index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    kind: CodeKind,
    codes: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new<I, S>(kind: CodeKind, codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let codes: Vec<String> = codes
            .into_iter()
            .map(Into::into)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index = codes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Self { kind, codes, index }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn get(&self, code: &str) -> Option<usize> {
        self.index.get(code).copied()
    }

    pub fn code(&self, index: usize) -> &str {
        &self.codes[index]
    }
}

/// Integer view of one admission. Disease indices are disease-vocabulary
/// positions, procedure indices are procedure-vocabulary positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedAdmission {
    pub diseases: Vec<usize>,
    pub procedures: Vec<usize>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    admissions: Vec<AdmissionRecord>,
    encoded: Vec<EncodedAdmission>,
    disease_vocab: Vocabulary,
    procedure_vocab: Vocabulary,
    labels: Vec<String>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus whose vocabularies and label set are exactly the
    /// observed codes and labels.
    pub fn new(admissions: Vec<AdmissionRecord>) -> Result<Self> {
        let labels: BTreeSet<String> = admissions.iter().map(|a| a.type_label.clone()).collect();
        Self::with_labels(admissions, labels.into_iter().collect())
    }

    /// Like [`Corpus::new`] but with an explicit label set, which must cover
    /// every admission's label.
    pub fn with_labels(admissions: Vec<AdmissionRecord>, labels: Vec<String>) -> Result<Self> {
        if admissions.is_empty() {
            return Err(Error::EmptyCorpus("no admissions".into()));
        }
        let mut id_index = HashMap::with_capacity(admissions.len());
        for (i, a) in admissions.iter().enumerate() {
            if a.code_count() == 0 {
                return Err(Error::EmptyAdmission(a.id.clone()));
            }
            if id_index.insert(a.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(a.id.clone()));
            }
        }
        let disease_vocab = Vocabulary::new(
            CodeKind::Disease,
            admissions.iter().flat_map(|a| a.diseases.iter().cloned()),
        );
        let procedure_vocab = Vocabulary::new(
            CodeKind::Procedure,
            admissions.iter().flat_map(|a| a.procedures.iter().cloned()),
        );
        let label_index: HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        if label_index.len() != labels.len() {
            return Err(Error::InvalidArgument("duplicate label in label set".into()));
        }
        let mut encoded = Vec::with_capacity(admissions.len());
        for a in &admissions {
            let label = *label_index.get(a.type_label.as_str()).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "admission `{}` has label `{}` outside the label set",
                    a.id, a.type_label
                ))
            })?;
            encoded.push(EncodedAdmission {
                diseases: a
                    .diseases
                    .iter()
                    .map(|c| disease_vocab.get(c).expect("observed code"))
                    .collect(),
                procedures: a
                    .procedures
                    .iter()
                    .map(|c| procedure_vocab.get(c).expect("observed code"))
                    .collect(),
                label,
            });
        }
        Ok(Self {
            admissions,
            encoded,
            disease_vocab,
            procedure_vocab,
            labels,
            id_index,
        })
    }

    pub fn len(&self) -> usize {
        self.admissions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.admissions.is_empty()
    }

    pub fn admissions(&self) -> &[AdmissionRecord] {
        &self.admissions
    }

    pub fn admission(&self, index: usize) -> &AdmissionRecord {
        &self.admissions[index]
    }

    pub fn encoded(&self, index: usize) -> &EncodedAdmission {
        &self.encoded[index]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.id_index.get(id).copied()
    }

    pub fn disease_vocab(&self) -> &Vocabulary {
        &self.disease_vocab
    }

    pub fn procedure_vocab(&self) -> &Vocabulary {
        &self.procedure_vocab
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Total number of codes; global code indices put diseases first.
    pub fn code_count(&self) -> usize {
        self.disease_vocab.len() + self.procedure_vocab.len()
    }

    /// Global code indices of one admission (diseases then offset procedures).
    pub fn global_codes(&self, index: usize) -> Vec<usize> {
        let e = &self.encoded[index];
        let nd = self.disease_vocab.len();
        e.diseases
            .iter()
            .copied()
            .chain(e.procedures.iter().map(|p| p + nd))
            .collect()
    }

    /// Code string for a global code index.
    pub fn code_name(&self, global: usize) -> &str {
        let nd = self.disease_vocab.len();
        if global < nd {
            self.disease_vocab.code(global)
        } else {
            self.procedure_vocab.code(global - nd)
        }
    }

    /// SHA-256 over the canonical line-delimited encoding.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for a in &self.admissions {
            hasher.update(serde_json::to_vec(a).expect("record serializes"));
            hasher.update(b"\n");
        }
        hex_digest(hasher)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for a in &self.admissions {
            out.push_str(&serde_json::to_string(a).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl())?;
        Ok(())
    }
}

pub(crate) fn hex_digest(hasher: Sha256) -> String {
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    diseases: Vec<String>,
    procedures: Vec<String>,
    #[serde(rename = "type")]
    type_label: String,
}

/// Parses line-delimited admission records. Blank lines are skipped.
pub fn parse_admissions(text: &str, source: &str) -> Result<Corpus> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if !seen.insert(raw.id.clone()) {
            return Err(Error::DuplicateId(raw.id));
        }
        let record = AdmissionRecord {
            id: raw.id,
            diseases: raw.diseases.into_iter().collect(),
            procedures: raw.procedures.into_iter().collect(),
            type_label: raw.type_label,
        };
        if record.code_count() == 0 {
            return Err(Error::EmptyAdmission(record.id));
        }
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus(format!("{source} contains no records")));
    }
    Corpus::new(records)
}

pub fn load_admissions(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    parse_admissions(&text, &path.display().to_string())
}

/// Keeps codes present in at least `min_count` admissions and drops admissions
/// left without codes.
pub fn apply_frequency_threshold(corpus: &Corpus, min_count: usize) -> Result<Corpus> {
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for a in corpus.admissions() {
        for c in a.diseases.iter().chain(&a.procedures) {
            *df.entry(c.as_str()).or_default() += 1;
        }
    }
    let keep = |c: &String| df.get(c.as_str()).copied().unwrap_or(0) >= min_count;
    let admissions: Vec<AdmissionRecord> = corpus
        .admissions()
        .iter()
        .map(|a| AdmissionRecord {
            id: a.id.clone(),
            diseases: a.diseases.iter().filter(|c| keep(c)).cloned().collect(),
            procedures: a.procedures.iter().filter(|c| keep(c)).cloned().collect(),
            type_label: a.type_label.clone(),
        })
        .filter(|a| a.code_count() > 0)
        .collect();
    if admissions.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no code appears in {min_count} or more admissions"
        )));
    }
    Corpus::new(admissions)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Partition of corpus positions. Each part is sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIds {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Split {
    pub fn ids(&self, corpus: &Corpus) -> SplitIds {
        let ids = |v: &[usize]| v.iter().map(|&i| corpus.admission(i).id.clone()).collect();
        SplitIds {
            train: ids(&self.train),
            val: ids(&self.val),
            test: ids(&self.test),
        }
    }

    pub fn from_ids(ids: &SplitIds, corpus: &Corpus) -> Result<Self> {
        let pos = |v: &[String]| -> Result<Vec<usize>> {
            let mut out = v
                .iter()
                .map(|id| {
                    corpus
                        .position(id)
                        .ok_or_else(|| Error::InvalidArgument(format!("unknown admission id `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        Ok(Self {
            train: pos(&ids.train)?,
            val: pos(&ids.val)?,
            test: pos(&ids.test)?,
        })
    }

    pub fn held_out(&self) -> impl Iterator<Item = usize> + '_ {
        self.val.iter().chain(&self.test).copied()
    }

    /// SHA-256 over the three id lists, used to check that runs share splits.
    pub fn digest(&self, corpus: &Corpus) -> String {
        let ids = self.ids(corpus);
        let mut hasher = Sha256::new();
        for (tag, part) in [("train", &ids.train), ("val", &ids.val), ("test", &ids.test)] {
            hasher.update(tag.as_bytes());
            for id in part {
                hasher.update(b"\0");
                hasher.update(id.as_bytes());
            }
            hasher.update(b"\n");
        }
        hex_digest(hasher)
    }
}

/// Seeded shuffle, then floor-sized validation and test parts; the remainder
/// goes to train.
pub fn split(corpus: &Corpus, ratios: SplitRatios, seed: u64) -> Result<Split> {
    let SplitRatios { train, val, test } = ratios;
    if !(train > 0.0 && val > 0.0 && test > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "split ratios must be positive, got {train}/{val}/{test}"
        )));
    }
    if ((train + val + test) - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split ratios must sum to 1, got {}",
            train + val + test
        )));
    }
    let n = corpus.len();
    let n_val = (n as f64 * val + 1e-9).floor() as usize;
    let n_test = (n as f64 * test + 1e-9).floor() as usize;
    let n_train = n - n_val - n_test;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::InvalidArgument(format!(
            "split of {n} admissions leaves an empty part ({n_train}/{n_val}/{n_test})"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut val_part = order[..n_val].to_vec();
    let mut test_part = order[n_val..n_val + n_test].to_vec();
    let mut train_part = order[n_val + n_test..].to_vec();
    val_part.sort_unstable();
    test_part.sort_unstable();
    train_part.sort_unstable();
    Ok(Split {
        train: train_part,
        val: val_part,
        test: test_part,
    })
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTopic {
    /// Mixing weight of the topic among admissions.
    pub weight: f64,
    pub label: String,
    /// Disease sampling weights.
    pub diseases: BTreeMap<String, f64>,
}

/// Generator description: planted topics over diseases, a disease to
/// procedure conditional table and a topic to label mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub admissions: usize,
    pub min_diseases: usize,
    pub max_diseases: usize,
    /// Probability that an admission's label is replaced by a uniformly drawn one.
    pub label_noise: f64,
    pub labels: Vec<String>,
    pub topics: Vec<PlantedTopic>,
    pub procedure_table: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SpecLine {
    Settings {
        admissions: usize,
        min_diseases: usize,
        max_diseases: usize,
        label_noise: f64,
        labels: Vec<String>,
    },
    Topic {
        weight: f64,
        label: String,
        diseases: BTreeMap<String, f64>,
    },
    Procedures {
        disease: String,
        procedures: BTreeMap<String, f64>,
    },
}

impl SyntheticSpec {
    /// A block-structured spec: `topics` topics with disjoint disease blocks,
    /// each disease tied to a primary procedure of its topic's block.
    /// `procedure_spread` is the probability mass moved off the primary
    /// procedure onto the topic's other procedures (0 gives a deterministic map).
    pub fn planted(
        topics: usize,
        diseases_per_topic: usize,
        procedures_per_topic: usize,
        labels: usize,
        admissions: usize,
        label_noise: f64,
        procedure_spread: f64,
    ) -> Self {
        let label_names: Vec<String> = (0..labels).map(|c| format!("type{c}")).collect();
        let mut topic_list = Vec::with_capacity(topics);
        let mut table = BTreeMap::new();
        let total: f64 = (0..topics).map(|t| 1.0 / (1.0 + 0.25 * t as f64)).sum();
        for t in 0..topics {
            let mut diseases = BTreeMap::new();
            for k in 0..diseases_per_topic {
                let code = format!("d{t:02}{k:02}");
                diseases.insert(code.clone(), 1.0 / (1.0 + k as f64).sqrt());
                let primary = k % procedures_per_topic;
                let mut row = BTreeMap::new();
                for q in 0..procedures_per_topic {
                    let w = if q == primary {
                        1.0 - procedure_spread
                    } else if procedures_per_topic > 1 {
                        procedure_spread / (procedures_per_topic - 1) as f64
                    } else {
                        0.0
                    };
                    if w > 0.0 {
                        row.insert(format!("p{t:02}{q:02}"), w);
                    }
                }
                table.insert(code, row);
            }
            topic_list.push(PlantedTopic {
                weight: 1.0 / (1.0 + 0.25 * t as f64) / total,
                label: label_names[t % labels].clone(),
                diseases,
            });
        }
        Self {
            admissions,
            min_diseases: 2,
            max_diseases: 4,
            label_noise,
            labels: label_names,
            topics: topic_list,
            procedure_table: table,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.admissions == 0 {
            return bad("synthetic spec needs at least one admission".into());
        }
        if self.topics.is_empty() {
            return bad("synthetic spec has no topics".into());
        }
        if self.min_diseases == 0 || self.min_diseases > self.max_diseases {
            return bad(format!(
                "invalid diseases-per-admission range [{}, {}]",
                self.min_diseases, self.max_diseases
            ));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad(format!("label noise {} outside [0, 1]", self.label_noise));
        }
        let labels: HashSet<&str> = self.labels.iter().map(String::as_str).collect();
        for (t, topic) in self.topics.iter().enumerate() {
            if !(topic.weight.is_finite() && topic.weight > 0.0) {
                return bad(format!("topic {t} has non-positive weight"));
            }
            if topic.diseases.values().all(|&w| w <= 0.0) || topic.diseases.is_empty() {
                return bad(format!("topic {t} is empty"));
            }
            if topic.diseases.values().any(|&w| !(w.is_finite() && w >= 0.0)) {
                return bad(format!("topic {t} has an invalid disease weight"));
            }
            if !labels.contains(topic.label.as_str()) {
                return bad(format!("topic {t} maps to unknown label `{}`", topic.label));
            }
            for d in topic.diseases.keys() {
                match self.procedure_table.get(d) {
                    Some(row)
                        if row.values().all(|w| w.is_finite() && *w >= 0.0)
                            && row.values().sum::<f64>() > 0.0 => {}
                    _ => return bad(format!("disease `{d}` has an empty procedure row")),
                }
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = None;
        let mut topics = Vec::new();
        let mut table = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: SpecLine = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: "synthetic spec".into(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                SpecLine::Settings {
                    admissions,
                    min_diseases,
                    max_diseases,
                    label_noise,
                    labels,
                } => settings = Some((admissions, min_diseases, max_diseases, label_noise, labels)),
                SpecLine::Topic {
                    weight,
                    label,
                    diseases,
                } => topics.push(PlantedTopic {
                    weight,
                    label,
                    diseases,
                }),
                SpecLine::Procedures {
                    disease,
                    procedures,
                } => {
                    table.insert(disease, procedures);
                }
            }
        }
        let (admissions, min_diseases, max_diseases, label_noise, labels) = settings
            .ok_or_else(|| Error::InvalidArgument("synthetic spec has no settings line".into()))?;
        let spec = Self {
            admissions,
            min_diseases,
            max_diseases,
            label_noise,
            labels,
            topics,
            procedure_table: table,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![SpecLine::Settings {
            admissions: self.admissions,
            min_diseases: self.min_diseases,
            max_diseases: self.max_diseases,
            label_noise: self.label_noise,
            labels: self.labels.clone(),
        }];
        lines.extend(self.topics.iter().map(|t| SpecLine::Topic {
            weight: t.weight,
            label: t.label.clone(),
            diseases: t.diseases.clone(),
        }));
        lines.extend(self.procedure_table.iter().map(|(d, row)| SpecLine::Procedures {
            disease: d.clone(),
            procedures: row.clone(),
        }));
        lines
            .iter()
            .map(|l| serde_json::to_string(l).expect("spec serializes") + "\n")
            .collect()
    }

    /// Marginal label distribution implied by the mixing weights and noise.
    pub fn expected_label_distribution(&self) -> Vec<f64> {
        let total: f64 = self.topics.iter().map(|t| t.weight).sum();
        let n_labels = self.labels.len() as f64;
        self.labels
            .iter()
            .map(|l| {
                let clean: f64 = self
                    .topics
                    .iter()
                    .filter(|t| &t.label == l)
                    .map(|t| t.weight / total)
                    .sum();
                (1.0 - self.label_noise) * clean + self.label_noise / n_labels
            })
            .collect()
    }
}

/// Ground truth kept alongside a generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub spec: SyntheticSpec,
    /// Planted topic of each admission, in corpus order.
    pub topic_of: Vec<usize>,
}

impl PlantedTruth {
    /// Expected code-occurrence distribution of each planted topic over the
    /// corpus' global code index (diseases then procedures), normalized.
    pub fn topic_code_rows(&self, corpus: &Corpus) -> Vec<Vec<f64>> {
        let nd = corpus.disease_vocab().len();
        let n = corpus.code_count();
        self.spec
            .topics
            .iter()
            .map(|topic| {
                let mut row = vec![0.0; n];
                let tw: f64 = topic.diseases.values().sum();
                for (d, &w) in &topic.diseases {
                    let pd = w / tw;
                    if let Some(i) = corpus.disease_vocab().get(d) {
                        row[i] += pd;
                    }
                    let proc_row = &self.spec.procedure_table[d];
                    let pw: f64 = proc_row.values().sum();
                    for (p, &q) in proc_row {
                        if let Some(j) = corpus.procedure_vocab().get(p) {
                            row[nd + j] += pd * q / pw;
                        }
                    }
                }
                let s: f64 = row.iter().sum();
                if s > 0.0 {
                    row.iter_mut().for_each(|x| *x /= s);
                }
                row
            })
            .collect()
    }
}

fn draw_weighted<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Rounding can leave u marginally above the last bucket.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec, seed: u64) -> Result<(Corpus, PlantedTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let topic_weights: Vec<f64> = spec.topics.iter().map(|t| t.weight).collect();
    let width = spec.admissions.to_string().len().max(5);
    let mut admissions = Vec::with_capacity(spec.admissions);
    let mut topic_of = Vec::with_capacity(spec.admissions);
    for n in 0..spec.admissions {
        let t = draw_weighted(&mut rng, &topic_weights);
        let topic = &spec.topics[t];
        let names: Vec<&String> = topic.diseases.keys().collect();
        let mut weights: Vec<f64> = topic.diseases.values().copied().collect();
        let available = weights.iter().filter(|&&w| w > 0.0).count();
        let k = rng
            .random_range(spec.min_diseases..=spec.max_diseases)
            .min(available);
        let mut diseases = BTreeSet::new();
        for _ in 0..k {
            let i = draw_weighted(&mut rng, &weights);
            weights[i] = 0.0;
            diseases.insert(names[i].clone());
        }
        let mut procedures = BTreeSet::new();
        for d in &diseases {
            let row = &spec.procedure_table[d];
            let pnames: Vec<&String> = row.keys().collect();
            let pw: Vec<f64> = row.values().copied().collect();
            procedures.insert(pnames[draw_weighted(&mut rng, &pw)].clone());
        }
        let type_label = if spec.label_noise > 0.0 && rng.random::<f64>() < spec.label_noise {
            spec.labels[rng.random_range(0..spec.labels.len())].clone()
        } else {
            topic.label.clone()
        };
        admissions.push(AdmissionRecord {
            id: format!("A{:0width$}", n + 1),
            diseases,
            procedures,
            type_label,
        });
        topic_of.push(t);
    }
    let corpus = Corpus::with_labels(admissions, spec.labels.clone())?;
    Ok((
        corpus,
        PlantedTruth {
            spec: spec.clone(),
            topic_of,
        },
    ))
}
