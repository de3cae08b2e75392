//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its output value. `backward`
//! walks the nodes in reverse insertion order, so gradients for a given
//! forward pass are always accumulated in the same order.

use std::sync::Arc;

use super::matrix::{spmm, spmm_tn, DenseMatrix};
use super::optim::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Bag of unordered code pairs for one document.
pub type Biterms = Vec<(usize, usize)>;

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    /// Source row per output cell, `usize::MAX` where the group is empty.
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Gather {
        input: Var,
        rows: Vec<usize>,
    },
    ConcatRows(Vec<Var>),
    SliceCols {
        input: Var,
        start: usize,
    },
    ClampMin(Var, f64),
    WeightedSum(Var, Arc<DenseMatrix>),
    Sum(Var),
    BitermLogLik {
        mixture: Var,
        topics: Var,
        docs: Arc<Vec<Biterms>>,
    },
    KlDiag {
        mean: Var,
        log_std: Var,
        prior_mean: Arc<Vec<f64>>,
        prior_var: Arc<Vec<f64>>,
    },
}

struct Node {
    value: DenseMatrix,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn mismatch(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Error {
    Error::ShapeMismatch { op, left, right }
}

fn softmax_row(src: &[f64], dst: &mut [f64]) {
    let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = (s - max).exp();
        total += *d;
    }
    dst.iter_mut().for_each(|d| *d /= total);
}

/// Row-wise softmax of a plain matrix.
pub fn row_softmax(m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        softmax_row(m.row(r), out.row_mut(r));
    }
    out
}

/// Row-wise log-softmax of a plain matrix.
pub fn row_log_softmax(m: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let row = m.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        for (o, &x) in out.row_mut(r).iter_mut().zip(row) {
            *o = x - lse;
        }
    }
    out
}

/// Column-wise maxima over `rows` of `m`, ties to the lowest row index.
/// Returns the pooled row and the winning row per column.
pub fn max_pool_rows(m: &DenseMatrix, rows: &[usize]) -> (Vec<f64>, Vec<usize>) {
    let mut best = vec![f64::NEG_INFINITY; m.cols()];
    let mut arg = vec![usize::MAX; m.cols()];
    let mut sorted = rows.to_vec();
    sorted.sort_unstable();
    for &r in &sorted {
        for (c, &v) in m.row(r).iter().enumerate() {
            if v > best[c] {
                best[c] = v;
                arg[c] = r;
            }
        }
    }
    if rows.is_empty() {
        best.fill(0.0);
    }
    (best, arg)
}

fn biterm_probability(mix: &[f64], topics: &DenseMatrix, i: usize, j: usize) -> f64 {
    mix.iter()
        .enumerate()
        .map(|(l, &z)| z * topics.get(l, i) * topics.get(l, j))
        .sum()
}

/// `Σ_biterms log Σ_l z_l β_l(i) β_l(j)` summed over documents.
pub fn biterm_log_likelihood(mixture: &DenseMatrix, topics: &DenseMatrix, docs: &[Biterms]) -> f64 {
    docs.iter()
        .enumerate()
        .map(|(d, bag)| {
            bag.iter()
                .map(|&(i, j)| biterm_probability(mixture.row(d), topics, i, j).max(PROB_FLOOR).ln())
                .sum::<f64>()
        })
        .sum()
}

/// `Σ ½((σ² + (μ − m)²)/v − 1 + ln v − 2 ln σ)` over all rows, evaluated via
/// `t = 2 ln σ − ln v` so that a posterior equal to the prior gives exactly 0.
pub fn kl_diag(mean: &DenseMatrix, log_std: &DenseMatrix, prior_mean: &[f64], prior_var: &[f64]) -> f64 {
    let log_var: Vec<f64> = prior_var.iter().map(|v| v.ln()).collect();
    let mut total = 0.0;
    for r in 0..mean.rows() {
        for (k, (&mu, &s)) in mean.row(r).iter().zip(log_std.row(r)).enumerate() {
            let t = 2.0 * s - log_var[k];
            let d = mu - prior_mean[k];
            total += 0.5 * (t.exp() + d * d / prior_var[k] - 1.0 - t);
        }
    }
    total
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn spmm(&mut self, s: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let value = spmm(&s, self.value(x))?;
        Ok(self.push(value, Op::SpMM(s, x)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("add", sa, sb));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb != (1, sa.1) {
            return Err(mismatch("add_row", sa, sb));
        }
        let mut value = self.value(a).clone();
        let b = self.value(bias).row(0).to_vec();
        for r in 0..sa.0 {
            value.row_mut(r).iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        }
        Ok(self.push(value, Op::AddRow(a, bias)))
    }

    /// `x W + b`
    pub fn affine(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let xw = self.matmul(x, weight)?;
        self.add_row(xw, bias)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch("mul", sa, sb));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let value = DenseMatrix::from_vec(sa.0, sa.1, data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let value = row_softmax(self.value(a));
        self.push(value, Op::RowSoftmax(a))
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Var {
        let value = row_log_softmax(self.value(a));
        self.push(value, Op::RowLogSoftmax(a))
    }

    /// One output row per group: column-wise max over the group's rows.
    /// Empty groups yield a zero row with no gradient.
    pub fn max_pool(&mut self, a: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let src = self.value(a);
        let (rows, cols) = src.shape();
        if let Some(&bad) = groups.iter().flatten().find(|&&r| r >= rows) {
            return Err(mismatch("max_pool", (rows, cols), (bad, 0)));
        }
        let mut value = DenseMatrix::zeros(groups.len(), cols);
        let mut argmax = Vec::with_capacity(groups.len() * cols);
        for (g, group) in groups.iter().enumerate() {
            let (best, arg) = max_pool_rows(src, group);
            value.row_mut(g).copy_from_slice(&best);
            argmax.extend(arg);
        }
        Ok(self.push(value, Op::MaxPool { input: a, argmax }))
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let src = self.value(a);
        let (n, cols) = src.shape();
        let mut value = DenseMatrix::zeros(rows.len(), cols);
        for (i, &r) in rows.iter().enumerate() {
            if r >= n {
                return Err(mismatch("gather_rows", (n, cols), (r, 0)));
            }
            value.row_mut(i).copy_from_slice(src.row(r));
        }
        Ok(self.push(
            value,
            Op::Gather {
                input: a,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != cols {
                return Err(mismatch("concat_rows", (rows, cols), v.shape()));
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let value = DenseMatrix::from_vec(rows, cols, data)?;
        Ok(self.push(value, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(a);
        if start + len > src.cols() {
            return Err(mismatch("slice_cols", src.shape(), (start, len)));
        }
        let mut value = DenseMatrix::zeros(src.rows(), len);
        for r in 0..src.rows() {
            value.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        Ok(self.push(value, Op::SliceCols { input: a, start }))
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|x| x.max(floor));
        self.push(value, Op::ClampMin(a, floor))
    }

    /// `Σ a ⊙ w` as a 1x1 result.
    pub fn weighted_sum(&mut self, a: Var, weights: Arc<DenseMatrix>) -> Result<Var> {
        let sa = self.shape(a);
        if sa != weights.shape() {
            return Err(mismatch("weighted_sum", sa, weights.shape()));
        }
        let total = self
            .value(a)
            .data()
            .iter()
            .zip(weights.data())
            .map(|(x, w)| x * w)
            .sum();
        Ok(self.push(DenseMatrix::scalar(total), Op::WeightedSum(a, weights)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).sum();
        self.push(DenseMatrix::scalar(total), Op::Sum(a))
    }

    /// Biterm log-likelihood summed over documents; row `d` of `mixture`
    /// holds document `d`'s topic proportions, `topics` is `L x V`.
    pub fn biterm_log_likelihood(&mut self, mixture: Var, topics: Var, docs: Arc<Vec<Biterms>>) -> Result<Var> {
        let (sm, st) = (self.shape(mixture), self.shape(topics));
        if sm.0 != docs.len() || sm.1 != st.0 {
            return Err(mismatch("biterm_log_likelihood", sm, st));
        }
        if let Some(&(i, j)) = docs.iter().flatten().find(|&&(i, j)| i >= st.1 || j >= st.1) {
            return Err(mismatch("biterm_log_likelihood", st, (i, j)));
        }
        let value = biterm_log_likelihood(self.value(mixture), self.value(topics), &docs);
        Ok(self.push(
            DenseMatrix::scalar(value),
            Op::BitermLogLik {
                mixture,
                topics,
                docs,
            },
        ))
    }

    /// KL from diagonal Gaussians `N(mean, exp(log_std)²)` (one per row) to a
    /// diagonal Gaussian prior, summed over rows.
    pub fn kl_diag(
        &mut self,
        mean: Var,
        log_std: Var,
        prior_mean: Arc<Vec<f64>>,
        prior_var: Arc<Vec<f64>>,
    ) -> Result<Var> {
        let (sm, ss) = (self.shape(mean), self.shape(log_std));
        if sm != ss || prior_mean.len() != sm.1 || prior_var.len() != sm.1 {
            return Err(mismatch("kl_diag", sm, ss));
        }
        let value = kl_diag(self.value(mean), self.value(log_std), &prior_mean, &prior_var);
        Ok(self.push(
            DenseMatrix::scalar(value),
            Op::KlDiag {
                mean,
                log_std,
                prior_mean,
                prior_var,
            },
        ))
    }

    /// Reverse pass from a 1x1 output.
    pub fn backward(&self, output: Var) -> Gradients {
        let mut grads: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(DenseMatrix::filled(1, 1, 1.0));
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, idx: usize, g: &DenseMatrix, grads: &mut [Option<DenseMatrix>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, delta: DenseMatrix| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        };
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, g.matmul_nt(bv).expect("shapes fixed at forward"));
                acc(*b, av.matmul_tn(g).expect("shapes fixed at forward"));
            }
            Op::SpMM(s, x) => acc(*x, spmm_tn(s, g).expect("shapes fixed at forward")),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, bias) => {
                let mut col = DenseMatrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    col.row_mut(0).iter_mut().zip(g.row(r)).for_each(|(c, x)| *c += x);
                }
                acc(*a, g.clone());
                acc(*bias, col);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, zip_map(g, bv, |x, y| x * y));
                acc(*b, zip_map(g, av, |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a) => acc(*a, zip_map(g, self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Tanh(a) => acc(*a, zip_map(g, &node.value, |x, y| x * (1.0 - y * y))),
            Op::Exp(a) => acc(*a, zip_map(g, &node.value, |x, y| x * y)),
            Op::RowSoftmax(a) => {
                let y = &node.value;
                let mut out = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, &gy), &yy) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yy * (gy - dot);
                    }
                }
                acc(*a, out);
            }
            Op::RowLogSoftmax(a) => {
                let y = &node.value;
                let mut out = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for ((o, &gy), &ly) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = gy - ly.exp() * total;
                    }
                }
                acc(*a, out);
            }
            Op::MaxPool { input, argmax } => {
                let (rows, cols) = self.shape(*input);
                let mut out = DenseMatrix::zeros(rows, cols);
                for gr in 0..g.rows() {
                    for c in 0..cols {
                        let src = argmax[gr * cols + c];
                        if src != usize::MAX {
                            let cur = out.get(src, c);
                            out.set(src, c, cur + g.get(gr, c));
                        }
                    }
                }
                acc(*input, out);
            }
            Op::Gather { input, rows } => {
                let (n, cols) = self.shape(*input);
                let mut out = DenseMatrix::zeros(n, cols);
                for (i, &r) in rows.iter().enumerate() {
                    out.row_mut(r).iter_mut().zip(g.row(i)).for_each(|(o, x)| *o += x);
                }
                acc(*input, out);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    let slice = g.data()[offset * c..(offset + r) * c].to_vec();
                    acc(p, DenseMatrix::from_vec(r, c, slice).expect("sized"));
                    offset += r;
                }
            }
            Op::SliceCols { input, start } => {
                let (rows, cols) = self.shape(*input);
                let mut out = DenseMatrix::zeros(rows, cols);
                for r in 0..rows {
                    out.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                }
                acc(*input, out);
            }
            Op::ClampMin(a, floor) => {
                acc(*a, zip_map(g, self.value(*a), |x, y| if y > *floor { x } else { 0.0 }))
            }
            Op::WeightedSum(a, w) => {
                let s = g.item();
                acc(*a, w.map(|x| x * s));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, DenseMatrix::filled(r, c, g.item()));
            }
            Op::BitermLogLik {
                mixture,
                topics,
                docs,
            } => {
                let s = g.item();
                let (z, beta) = (self.value(*mixture), self.value(*topics));
                let mut dz = DenseMatrix::zeros(z.rows(), z.cols());
                let mut dbeta = DenseMatrix::zeros(beta.rows(), beta.cols());
                for (d, bag) in docs.iter().enumerate() {
                    for &(i, j) in bag {
                        let p = biterm_probability(z.row(d), beta, i, j);
                        if p <= PROB_FLOOR {
                            continue;
                        }
                        let w = s / p;
                        for l in 0..z.cols() {
                            let (bi, bj, zl) = (beta.get(l, i), beta.get(l, j), z.get(d, l));
                            dz.set(d, l, dz.get(d, l) + w * bi * bj);
                            dbeta.set(l, i, dbeta.get(l, i) + w * zl * bj);
                            dbeta.set(l, j, dbeta.get(l, j) + w * zl * bi);
                        }
                    }
                }
                acc(*mixture, dz);
                acc(*topics, dbeta);
            }
            Op::KlDiag {
                mean,
                log_std,
                prior_mean,
                prior_var,
            } => {
                let s = g.item();
                let (mu, ls) = (self.value(*mean), self.value(*log_std));
                let mut dmu = DenseMatrix::zeros(mu.rows(), mu.cols());
                let mut dls = DenseMatrix::zeros(mu.rows(), mu.cols());
                for r in 0..mu.rows() {
                    for k in 0..mu.cols() {
                        let v = prior_var[k];
                        dmu.set(r, k, s * (mu.get(r, k) - prior_mean[k]) / v);
                        dls.set(r, k, s * ((2.0 * ls.get(r, k)).exp() / v - 1.0));
                    }
                }
                acc(*mean, dmu);
                acc(*log_std, dls);
            }
        }
    }
}

fn zip_map(a: &DenseMatrix, b: &DenseMatrix, f: impl Fn(f64, f64) -> f64) -> DenseMatrix {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    DenseMatrix::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&DenseMatrix> {
        self.grads[v.0].as_ref()
    }

    /// Adds the gradient of every parameter leaf into the store.
    pub fn accumulate(&self, tape: &Tape, store: &mut ParamStore) {
        for (node, grad) in tape.nodes.iter().zip(&self.grads) {
            if let (Op::Param(id), Some(g)) = (&node.op, grad) {
                store.get_mut(*id).grad.add_assign(g);
            }
        }
    }
}
