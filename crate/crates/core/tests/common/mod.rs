//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use std::collections::BTreeSet;

use gdvae::corpus::{AdmissionRecord, Corpus};
use gdvae::graph::GraphVariant;
use gdvae::trainer::{TaskSet, TrainConfig};

pub fn record(id: &str, diseases: &[&str], procedures: &[&str], label: &str) -> AdmissionRecord {
    AdmissionRecord {
        id: id.into(),
        diseases: diseases.iter().map(|s| s.to_string()).collect(),
        procedures: procedures.iter().map(|s| s.to_string()).collect(),
        type_label: label.into(),
    }
}

/// A1={d1,d2,p1}, A2={d1,d2}, A3={d1,p1}, A4={d3}.
pub fn four_admissions() -> Corpus {
    Corpus::new(vec![
        record("A1", &["d1", "d2"], &["p1"], "emergency"),
        record("A2", &["d1", "d2"], &[], "elective"),
        record("A3", &["d1"], &["p1"], "emergency"),
        record("A4", &["d3"], &[], "elective"),
    ])
    .unwrap()
}

/// Six admissions over d1..d4 and p1..p4.
pub fn six_admissions() -> Corpus {
    Corpus::new(vec![
        record("A1", &["d1", "d2"], &["p1"], "emergency"),
        record("A2", &["d1", "d3"], &["p2"], "elective"),
        record("A3", &["d2", "d3"], &["p1", "p2"], "emergency"),
        record("A4", &["d1"], &["p3"], "urgent"),
        record("A5", &["d3", "d4"], &["p3", "p4"], "elective"),
        record("A6", &["d2", "d4"], &["p1"], "emergency"),
    ])
    .unwrap()
}

/// Code names visible to the graph for admission `a`.
fn visible(corpus: &Corpus, a: usize, hidden: &BTreeSet<usize>) -> BTreeSet<String> {
    let r = corpus.admission(a);
    let mut s: BTreeSet<String> = r.diseases.iter().cloned().collect();
    if !hidden.contains(&a) {
        s.extend(r.procedures.iter().cloned());
    }
    s
}

/// Dense adjacency recomputed by nested loops over node pairs, using code
/// names rather than the library's encoded indices.
pub fn brute_force_adjacency(
    corpus: &Corpus,
    train: &[usize],
    hidden: &BTreeSet<usize>,
    variant: GraphVariant,
) -> Vec<Vec<f64>> {
    let nc = corpus.code_count();
    let n = nc + corpus.len();
    let names: Vec<String> = (0..nc).map(|c| corpus.code_name(c).to_string()).collect();
    let full: Vec<BTreeSet<String>> = (0..corpus.len()).map(|a| visible(corpus, a, &BTreeSet::new())).collect();
    let shown: Vec<BTreeSet<String>> = (0..corpus.len()).map(|a| visible(corpus, a, hidden)).collect();
    let nt = train.len() as f64;
    let pmi = matches!(variant, GraphVariant::PmiBinary | GraphVariant::PmiTfidf);
    let tfidf = matches!(variant, GraphVariant::Tfidf | GraphVariant::PmiTfidf);
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let value = if i == j {
                1.0
            } else if i < nc && j < nc {
                if !pmi {
                    0.0
                } else {
                    let ci = train.iter().filter(|&&a| full[a].contains(&names[i])).count() as f64;
                    let cj = train.iter().filter(|&&a| full[a].contains(&names[j])).count() as f64;
                    let cij = train
                        .iter()
                        .filter(|&&a| full[a].contains(&names[i]) && full[a].contains(&names[j]))
                        .count() as f64;
                    if cij == 0.0 {
                        0.0
                    } else {
                        let v = (cij / nt).ln() - ((ci / nt) * (cj / nt)).ln();
                        v.max(0.0)
                    }
                }
            } else if i >= nc && j >= nc {
                0.0
            } else {
                let (a, c) = if i >= nc { (i - nc, j) } else { (j - nc, i) };
                if !shown[a].contains(&names[c]) {
                    0.0
                } else if !tfidf {
                    1.0
                } else {
                    let df = train.iter().filter(|&&t| full[t].contains(&names[c])).count() as f64;
                    if df == 0.0 {
                        0.0
                    } else {
                        (1.0 / shown[a].len() as f64) * (nt / df).ln()
                    }
                }
            };
            m[i][j] = value;
        }
    }
    m
}

/// Planted-topic configuration used by the recovery experiments.
pub fn recovery_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        tasks: TaskSet::all(),
        epochs,
        seed,
        topics: 5,
        embedding_dim: 32,
        latent_dim: 32,
        rec_hidden: 32,
        learning_rate: 0.01,
        num_biterm_docs: 1000,
        patience: epochs,
        ..TrainConfig::default()
    }
}

/// Small, fast configuration for plumbing tests.
pub fn tiny_config(seed: u64, epochs: usize) -> TrainConfig {
    let mut c = recovery_config(seed, epochs);
    c.embedding_dim = 8;
    c.latent_dim = 8;
    c.rec_hidden = 8;
    c.num_biterm_docs = 100;
    c
}
