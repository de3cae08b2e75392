//! The graph-driven VAE: a shared two-layer GCN encoder, one stochastic head
//! per task and three decoders (biterm topics, procedure multinomial,
//! admission-type classifier).

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{task_view, AdmissionGraph, Task, TaskView};
use crate::neural::tape::{kl_diag, row_log_softmax, row_softmax};
use crate::neural::{Biterms, DenseMatrix, ParamId, ParamStore, Tape, Var, PROB_FLOOR};

/// Initial `log σ` of every head, so early samples stay near the means.
const INIT_LOG_STD: f64 = -2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub topics: usize,
    pub latent_dim: usize,
    pub rec_hidden: usize,
    pub residual: bool,
    pub alpha: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 200,
            hidden_dim: 200,
            topics: 50,
            latent_dim: 200,
            rec_hidden: 200,
            residual: true,
            alpha: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub diseases: usize,
    pub procedures: usize,
    pub labels: usize,
}

impl ModelDims {
    pub fn codes(&self) -> usize {
        self.diseases + self.procedures
    }
}

/// Logistic-normal surrogate of a Dirichlet prior in logit space.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacePrior {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    pub var: Vec<f64>,
}

/// `μ_i = log α_i − mean_j log α_j`,
/// `Σ_ii = (1/α_i)(1 − 2/L) + (1/L²) Σ_j 1/α_j`.
pub fn laplace_prior(alpha: &[f64]) -> Result<LaplacePrior> {
    if alpha.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "the logistic-normal prior needs at least 2 topics, got {}",
            alpha.len()
        )));
    }
    if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::InvalidArgument(format!("alpha entries must be positive, got {a}")));
    }
    let l = alpha.len() as f64;
    let mean_log = alpha.iter().map(|a| a.ln()).sum::<f64>() / l;
    let inv_sum: f64 = alpha.iter().map(|a| 1.0 / a).sum();
    Ok(LaplacePrior {
        mean: alpha.iter().map(|a| a.ln() - mean_log).collect(),
        var: alpha
            .iter()
            .map(|a| (1.0 / a) * (1.0 - 2.0 / l) + inv_sum / (l * l))
            .collect(),
    })
}

/// `Σ_i ½(μ_i² + σ_i² − 1 − 2 log σ_i)` summed over rows.
pub fn kl_standard_normal(mean: &DenseMatrix, log_std: &DenseMatrix) -> f64 {
    let k = mean.cols();
    kl_diag(mean, log_std, &vec![0.0; k], &vec![1.0; k])
}

/// KL from the logit-space posterior to the Laplace prior, summed over rows.
pub fn kl_logistic_normal(mean: &DenseMatrix, log_std: &DenseMatrix, prior: &LaplacePrior) -> f64 {
    kl_diag(mean, log_std, &prior.mean, &prior.var)
}

/// Biterm log-likelihood of one document under topic proportions `mixture`
/// (length L) and topic-code matrix `topics` (L x V).
pub fn topic_log_likelihood(doc: &[(usize, usize)], mixture: &[f64], topics: &DenseMatrix) -> f64 {
    let z = DenseMatrix::from_vec(1, mixture.len(), mixture.to_vec()).expect("sized");
    crate::neural::tape::biterm_log_likelihood(&z, topics, &[doc.to_vec()])
}

/// `Σ_v y_v log π(v)` with `π = softmax(logits)`.
pub fn rec_log_likelihood(targets: &[f64], logits: &[f64]) -> Result<f64> {
    if targets.len() != logits.len() {
        return Err(Error::ShapeMismatch {
            op: "rec_log_likelihood",
            left: (1, targets.len()),
            right: (1, logits.len()),
        });
    }
    if !targets.iter().any(|&y| y > 0.0) || targets.iter().any(|&y| y < 0.0) {
        return Err(Error::InvalidArgument("recommendation target must be non-negative and non-empty".into()));
    }
    let lp = row_log_softmax(&DenseMatrix::from_vec(1, logits.len(), logits.to_vec())?);
    Ok(targets
        .iter()
        .zip(lp.data())
        .map(|(y, l)| y * l.max(PROB_FLOOR.ln()))
        .sum())
}

/// `log π(label)` with `π = softmax(logits)`.
pub fn cls_log_likelihood(label: usize, logits: &[f64]) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let lp = row_log_softmax(&DenseMatrix::from_vec(1, logits.len(), logits.to_vec())?);
    Ok(lp.get(0, label).max(PROB_FLOOR.ln()))
}

/// Source of reparameterization noise.
#[derive(Debug, Clone)]
pub enum Noise {
    /// ε = 0: posterior means.
    Zero,
    Gaussian(ChaCha8Rng),
}

impl Noise {
    pub fn seeded(seed: u64) -> Self {
        Noise::Gaussian(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn draw(&mut self, rows: usize, cols: usize) -> DenseMatrix {
        match self {
            Noise::Zero => DenseMatrix::zeros(rows, cols),
            Noise::Gaussian(rng) => {
                let data = (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect();
                DenseMatrix::from_vec(rows, cols, data).expect("sized")
            }
        }
    }
}

/// The two sub-graphs the encoder runs on: topic modeling and type
/// prediction share the full node set and pooling rule.
#[derive(Debug, Clone)]
pub struct ModelViews {
    pub full: TaskView,
    pub recommend: TaskView,
}

impl ModelViews {
    pub fn new(graph: &AdmissionGraph) -> Self {
        Self {
            full: task_view(graph, Task::Topic),
            recommend: task_view(graph, Task::Recommend),
        }
    }

    pub fn for_task(&self, task: Task) -> &TaskView {
        match task {
            Task::Recommend => &self.recommend,
            Task::Topic | Task::Predict => &self.full,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TopicBatch {
    pub docs: Arc<Vec<Biterms>>,
    /// Codes pooled into each document's encoder input.
    pub codes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct RecBatch {
    pub admissions: Vec<usize>,
    /// `batch x |V^p|` procedure counts.
    pub targets: Arc<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct ClsBatch {
    pub admissions: Vec<usize>,
    pub labels: Vec<usize>,
}

/// Inputs and targets for the active tasks of one step.
#[derive(Debug, Clone, Default)]
pub struct TaskBatch {
    pub topic: Option<TopicBatch>,
    pub recommend: Option<RecBatch>,
    pub predict: Option<ClsBatch>,
}

impl TaskBatch {
    pub fn is_empty(&self) -> bool {
        self.topic.is_none() && self.recommend.is_none() && self.predict.is_none()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLoss {
    /// Mean reconstruction log-likelihood.
    pub reconstruction: f64,
    /// Mean KL divergence.
    pub kl: f64,
    pub items: usize,
}

impl TaskLoss {
    /// Negated ELBO contribution.
    pub fn loss(&self) -> f64 {
        self.kl - self.reconstruction
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub tasks: BTreeMap<Task, TaskLoss>,
}

#[derive(Debug, Clone, Copy)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ParamIds {
    embeddings: ParamId,
    gcn1: ParamId,
    gcn2: ParamId,
    topic_head: Affine,
    rec_head: Affine,
    cls_head: Affine,
    topic_logits: ParamId,
    rec_hidden: Affine,
    rec_out: Affine,
    cls_out: Affine,
}

/// Tape handles for every parameter, bound once per forward pass.
struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    fn get(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }
}

/// Per-task head outputs on a tape.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub mean: Var,
    pub log_std: Var,
}

#[derive(Debug, Clone)]
pub struct GdVae {
    pub config: ModelConfig,
    pub dims: ModelDims,
    pub params: ParamStore,
    ids: ParamIds,
    param_count: usize,
    prior: LaplacePrior,
}

impl GdVae {
    pub fn new(config: ModelConfig, dims: ModelDims, seed: u64) -> Result<Self> {
        if config.topics < 1 || config.embedding_dim == 0 || config.hidden_dim == 0 || config.latent_dim == 0 {
            return Err(Error::InvalidArgument("model dimensions must be positive".into()));
        }
        if dims.codes() == 0 || dims.labels == 0 {
            return Err(Error::InvalidArgument("model needs codes and labels".into()));
        }
        let prior = laplace_prior(&vec![config.alpha; config.topics])?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let (d, h, l, z) = (config.embedding_dim, config.hidden_dim, config.topics, config.latent_dim);
        let affine = |p: &mut ParamStore, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng| Affine {
            weight: p.add_glorot(format!("{name}.weight"), rows, cols, rng),
            bias: p.add(format!("{name}.bias"), DenseMatrix::zeros(1, cols)),
        };
        let embeddings = p.add_glorot("code_embeddings", dims.codes(), d, &mut rng);
        let gcn1 = p.add_glorot("gcn.layer1", d, h, &mut rng);
        let gcn2 = p.add_glorot("gcn.layer2", h, h, &mut rng);
        let topic_head = affine(&mut p, "head.topic", h, 2 * l, &mut rng);
        let rec_head = affine(&mut p, "head.recommend", h, 2 * z, &mut rng);
        let cls_head = affine(&mut p, "head.predict", h, 2 * z, &mut rng);
        for (head, k) in [(topic_head, l), (rec_head, z), (cls_head, z)] {
            let bias = &mut p.get_mut(head.bias).value;
            bias.row_mut(0)[k..].fill(INIT_LOG_STD);
        }
        let topic_logits = p.add_glorot("decoder.topic", l, dims.codes(), &mut rng);
        let rec_hidden = affine(&mut p, "decoder.recommend.hidden", z, config.rec_hidden, &mut rng);
        let rec_out = affine(&mut p, "decoder.recommend.out", config.rec_hidden, dims.procedures.max(1), &mut rng);
        let cls_out = affine(&mut p, "decoder.predict", z, dims.labels, &mut rng);
        Ok(Self {
            config,
            dims,
            param_count: p.len(),
            params: p,
            ids: ParamIds {
                embeddings,
                gcn1,
                gcn2,
                topic_head,
                rec_head,
                cls_head,
                topic_logits,
                rec_hidden,
                rec_out,
                cls_out,
            },
            prior,
        })
    }

    pub fn prior(&self) -> &LaplacePrior {
        &self.prior
    }

    pub fn latent_dim(&self, task: Task) -> usize {
        match task {
            Task::Topic => self.config.topics,
            Task::Recommend | Task::Predict => self.config.latent_dim,
        }
    }

    /// Names of the parameters each task's loss depends on beyond the
    /// shared encoder.
    pub fn task_parameter_names(&self, task: Task) -> Vec<String> {
        let prefix = match task {
            Task::Topic => ["head.topic", "decoder.topic"],
            Task::Recommend => ["head.recommend", "decoder.recommend"],
            Task::Predict => ["head.predict", "decoder.predict"],
        };
        self.params
            .iter()
            .filter(|p| prefix.iter().any(|pre| p.name.starts_with(pre)))
            .map(|p| p.name.clone())
            .collect()
    }

    pub fn code_embeddings(&self) -> &DenseMatrix {
        self.params.value(self.ids.embeddings)
    }

    /// Topic-code distributions `β = softmax(B)` (L x V).
    pub fn topic_matrix(&self) -> DenseMatrix {
        row_softmax(self.params.value(self.ids.topic_logits))
    }

    fn bind(&self, tape: &mut Tape) -> Bound {
        Self::bind_store(&self.params, tape)
    }

    fn bind_store(params: &ParamStore, tape: &mut Tape) -> Bound {
        let vars = (0..params.len()).map(|i| tape.param(params, ParamId(i))).collect();
        Bound { vars }
    }

    fn check_view(&self, view: &TaskView) -> Result<()> {
        let expected_codes = match view.task {
            Task::Recommend => self.dims.diseases,
            _ => self.dims.codes(),
        };
        if view.code_nodes.len() != expected_codes || view.normalized.shape().0 != view.node_count() {
            return Err(Error::ShapeMismatch {
                op: "encode",
                left: (view.code_nodes.len(), view.node_count()),
                right: (expected_codes, self.config.embedding_dim),
            });
        }
        Ok(())
    }

    /// Input features of a view: code embedding rows then max-pooled
    /// admission rows.
    fn view_input(&self, tape: &mut Tape, b: &Bound, view: &TaskView) -> Result<Var> {
        let x = b.get(self.ids.embeddings);
        let identity_order = view.code_nodes.len() == self.dims.codes()
            && view.code_nodes.iter().enumerate().all(|(i, &c)| i == c);
        let codes = if identity_order {
            x
        } else {
            tape.gather_rows(x, &view.code_nodes)?
        };
        let pooled = tape.max_pool(x, &view.pooled_codes)?;
        tape.concat_rows(&[codes, pooled])
    }

    /// Both GCN layer outputs `(H¹, H²)`; `H²` includes the shortcut when enabled.
    fn encode_layers(&self, tape: &mut Tape, b: &Bound, view: &TaskView) -> Result<(Var, Var)> {
        self.check_view(view)?;
        let input = self.view_input(tape, b, view)?;
        let xw = tape.matmul(input, b.get(self.ids.gcn1))?;
        let prop = tape.spmm(view.normalized.clone(), xw)?;
        let h1 = tape.relu(prop);
        let hw = tape.matmul(h1, b.get(self.ids.gcn2))?;
        let prop2 = tape.spmm(view.normalized.clone(), hw)?;
        let h2 = tape.relu(prop2);
        let out = if self.config.residual { tape.add(h2, h1)? } else { h2 };
        Ok((h1, out))
    }

    fn head(&self, tape: &mut Tape, b: &Bound, rows: Var, task: Task) -> Result<HeadOutput> {
        let affine = match task {
            Task::Topic => self.ids.topic_head,
            Task::Recommend => self.ids.rec_head,
            Task::Predict => self.ids.cls_head,
        };
        let k = self.latent_dim(task);
        let out = tape.affine(rows, b.get(affine.weight), b.get(affine.bias))?;
        Ok(HeadOutput {
            mean: tape.slice_cols(out, 0, k)?,
            log_std: tape.slice_cols(out, k, k)?,
        })
    }

    /// `z = μ + σ ε`, passed through a softmax for the topic task.
    fn sample(&self, tape: &mut Tape, head: HeadOutput, task: Task, noise: &mut Noise) -> Result<Var> {
        let (rows, cols) = tape.shape(head.mean);
        let eps = tape.constant(noise.draw(rows, cols));
        let std = tape.exp(head.log_std);
        let scaled = tape.mul(std, eps)?;
        let z = tape.add(head.mean, scaled)?;
        Ok(match task {
            Task::Topic => tape.row_softmax(z),
            _ => z,
        })
    }

    fn kl(&self, tape: &mut Tape, head: HeadOutput, task: Task) -> Result<Var> {
        let k = self.latent_dim(task);
        let (mean, var) = match task {
            Task::Topic => (self.prior.mean.clone(), self.prior.var.clone()),
            _ => (vec![0.0; k], vec![1.0; k]),
        };
        tape.kl_diag(head.mean, head.log_std, Arc::new(mean), Arc::new(var))
    }

    fn rec_logits(&self, tape: &mut Tape, b: &Bound, z: Var) -> Result<Var> {
        let a = self.ids.rec_hidden;
        let pre = tape.affine(z, b.get(a.weight), b.get(a.bias))?;
        let hidden = tape.tanh(pre);
        let o = self.ids.rec_out;
        tape.affine(hidden, b.get(o.weight), b.get(o.bias))
    }

    fn cls_logits(&self, tape: &mut Tape, b: &Bound, z: Var) -> Result<Var> {
        let o = self.ids.cls_out;
        tape.affine(z, b.get(o.weight), b.get(o.bias))
    }

    fn check_rows(view: &TaskView, admissions: &[usize]) -> Result<Vec<usize>> {
        admissions
            .iter()
            .map(|&a| {
                if a >= view.admissions {
                    Err(Error::InvalidArgument(format!("admission {a} outside the graph")))
                } else {
                    Ok(view.admission_row(a))
                }
            })
            .collect()
    }

    /// Records the joint negated ELBO on `tape`. Returns the scalar loss
    /// variable and the per-task breakdown.
    pub fn record_loss(
        &self,
        tape: &mut Tape,
        views: &ModelViews,
        batch: &TaskBatch,
        noise: &mut Noise,
    ) -> Result<(Var, LossReport)> {
        self.record_loss_with(&self.params, tape, views, batch, noise)
    }

    /// As [`GdVae::record_loss`] with parameter values taken from `params`,
    /// which must share this model's layout.
    pub fn record_loss_with(
        &self,
        params: &ParamStore,
        tape: &mut Tape,
        views: &ModelViews,
        batch: &TaskBatch,
        noise: &mut Noise,
    ) -> Result<(Var, LossReport)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("no active task in batch".into()));
        }
        if params.len() != self.param_count {
            return Err(Error::InvalidArgument("parameter store does not match the model".into()));
        }
        let b = Self::bind_store(params, tape);
        let shared = if batch.topic.is_some() || batch.predict.is_some() {
            Some(self.encode_layers(tape, &b, &views.full)?.1)
        } else {
            None
        };
        let mut terms = Vec::new();
        let mut report = LossReport::default();

        if let Some(tb) = &batch.topic {
            let h = shared.expect("shared view encoded");
            let n = tb.docs.len();
            let pooled = tape.max_pool(h, &tb.codes)?;
            let head = self.head(tape, &b, pooled, Task::Topic)?;
            let z = self.sample(tape, head, Task::Topic, noise)?;
            let beta = tape.row_softmax(b.get(self.ids.topic_logits));
            let ll = tape.biterm_log_likelihood(z, beta, tb.docs.clone())?;
            let kl = self.kl(tape, head, Task::Topic)?;
            terms.push(self.task_term(tape, Task::Topic, ll, kl, n, &mut report)?);
        }
        if let Some(rb) = &batch.recommend {
            let (_, h) = self.encode_layers(tape, &b, &views.recommend)?;
            let rows_idx = Self::check_rows(&views.recommend, &rb.admissions)?;
            let rows = tape.gather_rows(h, &rows_idx)?;
            let head = self.head(tape, &b, rows, Task::Recommend)?;
            let z = self.sample(tape, head, Task::Recommend, noise)?;
            let logits = self.rec_logits(tape, &b, z)?;
            let lp = tape.row_log_softmax(logits);
            let lp = tape.clamp_min(lp, PROB_FLOOR.ln());
            let ll = tape.weighted_sum(lp, rb.targets.clone())?;
            let kl = self.kl(tape, head, Task::Recommend)?;
            terms.push(self.task_term(tape, Task::Recommend, ll, kl, rb.admissions.len(), &mut report)?);
        }
        if let Some(cb) = &batch.predict {
            let h = shared.expect("shared view encoded");
            let rows_idx = Self::check_rows(&views.full, &cb.admissions)?;
            let rows = tape.gather_rows(h, &rows_idx)?;
            let head = self.head(tape, &b, rows, Task::Predict)?;
            let z = self.sample(tape, head, Task::Predict, noise)?;
            let logits = self.cls_logits(tape, &b, z)?;
            let lp = tape.row_log_softmax(logits);
            let lp = tape.clamp_min(lp, PROB_FLOOR.ln());
            let mut onehot = DenseMatrix::zeros(cb.labels.len(), self.dims.labels);
            for (i, &c) in cb.labels.iter().enumerate() {
                if c >= self.dims.labels {
                    return Err(Error::InvalidArgument(format!("label {c} out of range")));
                }
                onehot.set(i, c, 1.0);
            }
            let ll = tape.weighted_sum(lp, Arc::new(onehot))?;
            let kl = self.kl(tape, head, Task::Predict)?;
            terms.push(self.task_term(tape, Task::Predict, ll, kl, cb.admissions.len(), &mut report)?);
        }

        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        report.total = tape.value(total).item();
        Ok((total, report))
    }

    fn task_term(
        &self,
        tape: &mut Tape,
        task: Task,
        ll: Var,
        kl: Var,
        n: usize,
        report: &mut LossReport,
    ) -> Result<Var> {
        if n == 0 {
            return Err(Error::InvalidArgument(format!("empty batch for task {task}")));
        }
        let inv = 1.0 / n as f64;
        let recon = tape.scale(ll, -inv);
        let kl_mean = tape.scale(kl, inv);
        let term = tape.add(recon, kl_mean)?;
        let loss = TaskLoss {
            reconstruction: tape.value(ll).item() * inv,
            kl: tape.value(kl).item() * inv,
            items: n,
        };
        if !loss.loss().is_finite() {
            return Err(Error::NonFinite(format!("loss of task {task}")));
        }
        report.tasks.insert(task, loss);
        Ok(term)
    }

    /// Joint negated ELBO over the batch's active tasks. Zeroes and then
    /// fills every parameter gradient.
    pub fn elbo_joint(&mut self, views: &ModelViews, batch: &TaskBatch, noise: &mut Noise) -> Result<LossReport> {
        let mut params = std::mem::take(&mut self.params);
        let out = self.elbo_joint_with(&mut params, views, batch, noise);
        self.params = params;
        out
    }

    /// Joint loss and gradients for an external parameter store.
    pub fn elbo_joint_with(
        &self,
        params: &mut ParamStore,
        views: &ModelViews,
        batch: &TaskBatch,
        noise: &mut Noise,
    ) -> Result<LossReport> {
        let mut tape = Tape::new();
        let (loss, report) = self.record_loss_with(params, &mut tape, views, batch, noise)?;
        let grads = tape.backward(loss);
        params.zero_grad();
        grads.accumulate(&tape, params);
        Ok(report)
    }

    /// Loss only, no gradients.
    pub fn evaluate_loss(&self, views: &ModelViews, batch: &TaskBatch, noise: &mut Noise) -> Result<LossReport> {
        let mut tape = Tape::new();
        Ok(self.record_loss(&mut tape, views, batch, noise)?.1)
    }

    /// GCN node representations of a view.
    pub fn encode(&self, view: &TaskView) -> Result<DenseMatrix> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let (_, h) = self.encode_layers(&mut tape, &b, view)?;
        Ok(tape.value(h).clone())
    }

    /// Posterior `(μ, log σ)` for admissions of a view (task R or P), or for
    /// code pools (task T, where each group lists pooled code rows).
    pub fn posterior(&self, view: &TaskView, task: Task, inputs: &PosteriorInput) -> Result<(DenseMatrix, DenseMatrix)> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let (_, h) = self.encode_layers(&mut tape, &b, view)?;
        let rows = match inputs {
            PosteriorInput::Admissions(adm) => {
                let idx = Self::check_rows(view, adm)?;
                tape.gather_rows(h, &idx)?
            }
            PosteriorInput::CodePools(groups) => tape.max_pool(h, groups)?,
        };
        let head = self.head(&mut tape, &b, rows, task)?;
        Ok((tape.value(head.mean).clone(), tape.value(head.log_std).clone()))
    }

    /// Procedure distributions `π_R` at the posterior mean.
    pub fn recommend_probs(&self, views: &ModelViews, admissions: &[usize]) -> Result<DenseMatrix> {
        Ok(row_softmax(&self.recommend_logits(views, admissions)?))
    }

    /// Decoder logits `g(μ_R)`.
    pub fn recommend_logits(&self, views: &ModelViews, admissions: &[usize]) -> Result<DenseMatrix> {
        let (mu, _) = self.posterior(&views.recommend, Task::Recommend, &PosteriorInput::Admissions(admissions.to_vec()))?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let z = tape.constant(mu);
        let logits = self.rec_logits(&mut tape, &b, z)?;
        Ok(tape.value(logits).clone())
    }

    /// Admission-type distributions `π_P` at the posterior mean.
    pub fn predict_probs(&self, views: &ModelViews, admissions: &[usize]) -> Result<DenseMatrix> {
        let (mu, _) = self.posterior(&views.full, Task::Predict, &PosteriorInput::Admissions(admissions.to_vec()))?;
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let z = tape.constant(mu);
        let logits = self.cls_logits(&mut tape, &b, z)?;
        Ok(row_softmax(tape.value(logits)))
    }

    /// Direct access for checkpoint loading and tests.
    pub fn param_id(&self, name: &str) -> Option<ParamId> {
        self.params.find(name)
    }
}

#[derive(Debug, Clone)]
pub enum PosteriorInput {
    Admissions(Vec<usize>),
    CodePools(Vec<Vec<usize>>),
}

/// Column-wise max over the embedding rows of `codes`.
pub fn pooled_admission_feature(codes: &[usize], embeddings: &DenseMatrix) -> Result<Vec<f64>> {
    if codes.is_empty() {
        return Err(Error::InvalidArgument("empty code set under the view's pooling rule".into()));
    }
    if let Some(&c) = codes.iter().find(|&&c| c >= embeddings.rows()) {
        return Err(Error::InvalidArgument(format!("code {c} outside the embedding table")));
    }
    Ok(crate::neural::tape::max_pool_rows(embeddings, codes).0)
}
