//! The heterogeneous admission graph.
//!
//! Nodes are laid out as `[disease codes | procedure codes | admissions]`.
//! Code–code edges carry positive PMI, admission–code edges carry TF-IDF,
//! every node has a unit self loop. Co-occurrence statistics come from the
//! training admissions only; held-out admissions are still nodes.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with unique, sorted entries per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(rows: usize, cols: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, w) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::Graph(format!(
                    "entry ({r}, {c}) outside shape {rows}x{cols}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("sparse entry ({r}, {c})")));
            }
            if last == Some((r, c)) {
                return Err(Error::Graph(format!("duplicate entry ({r}, {c})")));
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(w);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect()).expect("valid identity")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &w)| (r, c, w))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).1.iter().sum()).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && self.iter().all(|(r, c, w)| (self.get(c, r) - w).abs() <= tol)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.cols]; self.rows];
        for (r, c, w) in self.iter() {
            out[r][c] = w;
        }
        out
    }

    /// `A(nodes, nodes)`, with rows and columns renumbered by position in `nodes`.
    pub fn select(&self, nodes: &[usize]) -> Self {
        let mut local = vec![usize::MAX; self.cols];
        for (i, &n) in nodes.iter().enumerate() {
            local[n] = i;
        }
        let mut entries = Vec::new();
        for (i, &n) in nodes.iter().enumerate() {
            let (cols, vals) = self.row(n);
            for (&c, &w) in cols.iter().zip(vals) {
                if local[c] != usize::MAX {
                    entries.push((i, local[c], w));
                }
            }
        }
        Self::from_triplets(nodes.len(), nodes.len(), entries).expect("selection preserves validity")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub diseases: usize,
    pub procedures: usize,
    pub admissions: usize,
}

impl NodeLayout {
    pub fn codes(&self) -> usize {
        self.diseases + self.procedures
    }

    pub fn total(&self) -> usize {
        self.codes() + self.admissions
    }

    pub fn procedure_offset(&self) -> usize {
        self.diseases
    }

    pub fn admission_offset(&self) -> usize {
        self.codes()
    }

    pub fn admission_node(&self, admission: usize) -> usize {
        self.admission_offset() + admission
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphVariant {
    Binary,
    Tfidf,
    PmiBinary,
    PmiTfidf,
}

impl GraphVariant {
    pub const ALL: [GraphVariant; 4] = [
        GraphVariant::Binary,
        GraphVariant::Tfidf,
        GraphVariant::PmiBinary,
        GraphVariant::PmiTfidf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            GraphVariant::Binary => "binary",
            GraphVariant::Tfidf => "tfidf",
            GraphVariant::PmiBinary => "pmi_binary",
            GraphVariant::PmiTfidf => "pmi_tfidf",
        }
    }

    fn uses_pmi(&self) -> bool {
        matches!(self, GraphVariant::PmiBinary | GraphVariant::PmiTfidf)
    }

    fn uses_tfidf(&self) -> bool {
        matches!(self, GraphVariant::Tfidf | GraphVariant::PmiTfidf)
    }
}

impl fmt::Display for GraphVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GraphVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown graph variant `{s}`")))
    }
}

/// Code sets per admission (global code indices) as visible to the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeSets {
    pub diseases: Vec<Vec<usize>>,
    pub procedures: Vec<Vec<usize>>,
}

impl CodeSets {
    pub fn full(corpus: &Corpus) -> Self {
        let nd = corpus.disease_vocab().len();
        let mut diseases = Vec::with_capacity(corpus.len());
        let mut procedures = Vec::with_capacity(corpus.len());
        for i in 0..corpus.len() {
            let e = corpus.encoded(i);
            diseases.push(e.diseases.clone());
            procedures.push(e.procedures.iter().map(|p| p + nd).collect());
        }
        Self {
            diseases,
            procedures,
        }
    }

    /// Full code sets, except that the procedures of `hidden` admissions are
    /// removed (they are recommendation targets).
    pub fn masked(corpus: &Corpus, hidden: impl IntoIterator<Item = usize>) -> Self {
        let mut sets = Self::full(corpus);
        for i in hidden {
            sets.procedures[i].clear();
        }
        sets
    }

    pub fn all_codes(&self, admission: usize) -> impl Iterator<Item = usize> + '_ {
        self.diseases[admission]
            .iter()
            .chain(&self.procedures[admission])
            .copied()
    }

    pub fn len(&self, admission: usize) -> usize {
        self.diseases[admission].len() + self.procedures[admission].len()
    }
}

/// PMI over code pairs, keyed by global code index, both orders stored.
pub type PmiTable = BTreeMap<(usize, usize), f64>;
/// TF-IDF keyed by (admission position, global code index).
pub type TfIdfTable = BTreeMap<(usize, usize), f64>;

/// `PMI(i, j) = log p_ij - log(p_i p_j)` with admission-fraction
/// probabilities over the training admissions. Pairs that never co-occur are
/// absent.
pub fn compute_pmi(corpus: &Corpus, train: &[usize]) -> PmiTable {
    let n_codes = corpus.code_count();
    let n = train.len() as f64;
    let mut df = vec![0usize; n_codes];
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for &a in train {
        let codes = corpus.global_codes(a);
        for (x, &i) in codes.iter().enumerate() {
            df[i] += 1;
            for &j in &codes[x + 1..] {
                *joint.entry((i.min(j), i.max(j))).or_default() += 1;
            }
        }
    }
    let mut table = PmiTable::new();
    for ((i, j), c) in joint {
        let p_ij = c as f64 / n;
        let p_i = df[i] as f64 / n;
        let p_j = df[j] as f64 / n;
        let pmi = p_ij.ln() - (p_i * p_j).ln();
        table.insert((i, j), pmi);
        table.insert((j, i), pmi);
    }
    table
}

/// Document frequencies over training admissions (full code sets).
pub fn document_frequencies(corpus: &Corpus, train: &[usize]) -> Vec<usize> {
    let mut df = vec![0usize; corpus.code_count()];
    for &a in train {
        for c in corpus.global_codes(a) {
            df[c] += 1;
        }
    }
    df
}

/// `TF(code, adm) = 1/|codes of adm|`, `IDF(code) = log(N_train / df_train)`.
/// Codes never seen in training get weight 0 and are not stored.
pub fn compute_tfidf(corpus: &Corpus, train: &[usize], codes: &CodeSets) -> TfIdfTable {
    let df = document_frequencies(corpus, train);
    let n = train.len() as f64;
    let mut table = TfIdfTable::new();
    for a in 0..corpus.len() {
        let size = codes.len(a);
        if size == 0 {
            continue;
        }
        let tf = 1.0 / size as f64;
        for c in codes.all_codes(a) {
            if df[c] > 0 {
                table.insert((a, c), tf * (n / df[c] as f64).ln());
            }
        }
    }
    table
}

#[derive(Debug, Clone)]
pub struct AdmissionGraph {
    pub layout: NodeLayout,
    pub variant: GraphVariant,
    /// Raw adjacency `A`.
    pub adjacency: SparseMatrix,
    /// `D^{-1/2} A D^{-1/2}`.
    pub normalized: SparseMatrix,
    /// Codes each admission exposes to the graph.
    pub codes: CodeSets,
}

fn layout_of(corpus: &Corpus) -> NodeLayout {
    NodeLayout {
        diseases: corpus.disease_vocab().len(),
        procedures: corpus.procedure_vocab().len(),
        admissions: corpus.len(),
    }
}

fn build(
    layout: NodeLayout,
    variant: GraphVariant,
    codes: CodeSets,
    pmi: Option<&PmiTable>,
    admission_edges: Vec<(usize, usize, f64)>,
) -> Result<AdmissionGraph> {
    let n = layout.total();
    let mut entries: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 1.0)).collect();
    if let Some(pmi) = pmi {
        entries.extend(
            pmi.iter()
                .filter(|(&(i, j), &v)| i != j && v > 0.0)
                .map(|(&(i, j), &v)| (i, j, v)),
        );
    }
    for (a, c, w) in admission_edges {
        let node = layout.admission_node(a);
        entries.push((node, c, w));
        entries.push((c, node, w));
    }
    let adjacency = SparseMatrix::from_triplets(n, n, entries)?;
    if !adjacency.is_symmetric(0.0) {
        return Err(Error::Graph("adjacency is not symmetric".into()));
    }
    let normalized = normalize_adjacency(&adjacency)?;
    Ok(AdmissionGraph {
        layout,
        variant,
        adjacency,
        normalized,
        codes,
    })
}

/// The piecewise adjacency with PMI code–code and TF-IDF admission–code edges.
pub fn assemble_adjacency(
    corpus: &Corpus,
    codes: CodeSets,
    pmi: &PmiTable,
    tfidf: &TfIdfTable,
) -> Result<AdmissionGraph> {
    let edges = tfidf
        .iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|(&(a, c), &w)| (a, c, w))
        .collect();
    build(layout_of(corpus), GraphVariant::PmiTfidf, codes, Some(pmi), edges)
}

/// Builds one of the four edge-weighting variants.
pub fn graph_variant(
    corpus: &Corpus,
    train: &[usize],
    codes: CodeSets,
    variant: GraphVariant,
) -> Result<AdmissionGraph> {
    let pmi = variant.uses_pmi().then(|| compute_pmi(corpus, train));
    let edges = if variant.uses_tfidf() {
        compute_tfidf(corpus, train, &codes)
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|((a, c), w)| (a, c, w))
            .collect()
    } else {
        (0..corpus.len())
            .flat_map(|a| codes.all_codes(a).map(move |c| (a, c, 1.0)).collect::<Vec<_>>())
            .collect()
    };
    build(layout_of(corpus), variant, codes, pmi.as_ref(), edges)
}

/// Training graph for a split: statistics from `train`, procedures of
/// held-out admissions hidden.
pub fn training_graph(
    corpus: &Corpus,
    split: &crate::corpus::Split,
    variant: GraphVariant,
) -> Result<AdmissionGraph> {
    graph_variant(corpus, &split.train, CodeSets::masked(corpus, split.held_out()), variant)
}

/// `Ã_ij = a_ij / sqrt(d_i d_j)` with `d_i = Σ_j a_ij`.
pub fn normalize_adjacency(adjacency: &SparseMatrix) -> Result<SparseMatrix> {
    let degree = adjacency.row_sums();
    if let Some(i) = degree.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::Graph(format!("node {i} has non-positive degree")));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let entries = adjacency
        .iter()
        .map(|(r, c, w)| (r, c, w * inv_sqrt[r] * inv_sqrt[c]))
        .collect();
    SparseMatrix::from_triplets(adjacency.rows, adjacency.cols, entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "T")]
    Topic,
    #[serde(rename = "R")]
    Recommend,
    #[serde(rename = "P")]
    Predict,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Topic, Task::Recommend, Task::Predict];

    pub fn letter(&self) -> char {
        match self {
            Task::Topic => 'T',
            Task::Recommend => 'R',
            Task::Predict => 'P',
        }
    }

    pub fn from_letter(c: char) -> Result<Self> {
        match c.to_ascii_uppercase() {
            'T' => Ok(Task::Topic),
            'R' => Ok(Task::Recommend),
            'P' => Ok(Task::Predict),
            _ => Err(Error::InvalidArgument(format!("unknown task `{c}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t" | "topic" => Ok(Task::Topic),
            "r" | "recommend" => Ok(Task::Recommend),
            "p" | "predict" => Ok(Task::Predict),
            _ => Err(Error::InvalidArgument(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolingRule {
    /// Max-pool over diseases and procedures.
    AllCodes,
    /// Max-pool over diseases only.
    DiseasesOnly,
}

/// Sub-graph seen by one task: node subset, its normalized sub-adjacency and
/// the codes pooled into each admission's input feature.
#[derive(Debug, Clone)]
pub struct TaskView {
    pub task: Task,
    /// Global node indices, code nodes first, then every admission.
    pub nodes: Vec<usize>,
    /// Global code indices of the leading code rows.
    pub code_nodes: Vec<usize>,
    pub admissions: usize,
    pub pooling: PoolingRule,
    /// Per admission, global code indices to max-pool (may be empty).
    pub pooled_codes: Vec<Vec<usize>>,
    pub normalized: Arc<SparseMatrix>,
}

impl TaskView {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Local row of an admission in this view's node order.
    pub fn admission_row(&self, admission: usize) -> usize {
        self.code_nodes.len() + admission
    }

    /// Local row of a global code index, if the view contains it.
    pub fn code_row(&self, code: usize) -> Option<usize> {
        self.code_nodes.binary_search(&code).ok()
    }

    pub fn has_pooled_codes(&self, admission: usize) -> bool {
        !self.pooled_codes[admission].is_empty()
    }
}

pub fn task_view(graph: &AdmissionGraph, task: Task) -> TaskView {
    let layout = graph.layout;
    let (code_nodes, pooling): (Vec<usize>, PoolingRule) = match task {
        Task::Topic | Task::Predict => ((0..layout.codes()).collect(), PoolingRule::AllCodes),
        Task::Recommend => ((0..layout.diseases).collect(), PoolingRule::DiseasesOnly),
    };
    let nodes: Vec<usize> = code_nodes
        .iter()
        .copied()
        .chain(layout.admission_offset()..layout.total())
        .collect();
    let pooled_codes = (0..layout.admissions)
        .map(|a| match pooling {
            PoolingRule::AllCodes => graph.codes.all_codes(a).collect(),
            PoolingRule::DiseasesOnly => graph.codes.diseases[a].clone(),
        })
        .collect();
    let normalized = if nodes.len() == layout.total() {
        graph.normalized.clone()
    } else {
        normalize_adjacency(&graph.adjacency.select(&nodes)).expect("unit diagonal keeps degrees positive")
    };
    TaskView {
        task,
        nodes,
        code_nodes,
        admissions: layout.admissions,
        pooling,
        pooled_codes,
        normalized: Arc::new(normalized),
    }
}

/// Writes `row col weight` triples of the raw adjacency with a layout header.
pub fn export_graph<W: Write>(graph: &AdmissionGraph, corpus: &Corpus, mut out: W) -> Result<()> {
    let l = graph.layout;
    writeln!(out, "# variant {}", graph.variant)?;
    writeln!(
        out,
        "# layout disease 0..{} procedure {}..{} admission {}..{}",
        l.diseases,
        l.procedure_offset(),
        l.admission_offset(),
        l.admission_offset(),
        l.total()
    )?;
    let names: Vec<&str> = (0..l.codes())
        .map(|c| corpus.code_name(c))
        .chain(corpus.admissions().iter().map(|a| a.id.as_str()))
        .collect();
    writeln!(out, "# nodes {}", names.join(" "))?;
    for (r, c, w) in graph.adjacency.iter() {
        writeln!(out, "{r} {c} {w}")?;
    }
    Ok(())
}

/// Distinct code nodes directly connected by a code–code edge.
pub fn code_edge_count(graph: &AdmissionGraph) -> usize {
    let codes = graph.layout.codes();
    let mut seen = HashSet::new();
    for (r, c, _) in graph.adjacency.iter() {
        if r < codes && c < codes && r != c {
            seen.insert((r.min(c), r.max(c)));
        }
    }
    seen.len()
}
