use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::DenseMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

/// A trainable tensor with its gradient and Adam moment estimates.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
    first_moment: DenseMatrix,
    second_moment: DenseMatrix,
    step: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: DenseMatrix) -> Self {
        let (r, c) = value.shape();
        Self {
            name: name.into(),
            grad: DenseMatrix::zeros(r, c),
            first_moment: DenseMatrix::zeros(r, c),
            second_moment: DenseMatrix::zeros(r, c),
            value,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Ordered collection of parameters; order is the checkpoint order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    /// Glorot-uniform initialized parameter.
    pub fn add_glorot<R: Rng>(&mut self, name: impl Into<String>, rows: usize, cols: usize, rng: &mut R) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
        self.add(name, DenseMatrix::from_vec(rows, cols, data).expect("sized"))
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }

    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        adam_step(store.params_mut(), self)
    }
}

/// Bias-corrected Adam update. Every gradient is checked before any
/// parameter is touched, so a non-finite gradient leaves all state intact.
pub fn adam_step(params: &mut [Parameter], cfg: &Adam) -> Result<()> {
    if let Some(p) = params.iter().find(|p| !p.grad.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of `{}`", p.name)));
    }
    for p in params.iter_mut() {
        p.step += 1;
        let t = p.step as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let g = p.grad.data();
        let m = p.first_moment.data_mut();
        for (m, &g) in m.iter_mut().zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = p.second_moment.data_mut();
        for (v, &g) in v.iter_mut().zip(p.grad.data()) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        let (m, v) = (p.first_moment.data(), p.second_moment.data());
        for ((w, &m), &v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            *w -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> Parameter {
        let mut p = Parameter::new("w", DenseMatrix::scalar(value));
        p.grad = DenseMatrix::scalar(grad);
        p
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut ps = vec![single(1.5, 0.0)];
        adam_step(&mut ps, &Adam::default()).unwrap();
        assert_eq!(ps[0].value.item(), 1.5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut ps = vec![single(0.0, 1.0)];
        adam_step(&mut ps, &Adam::with_lr(0.1)).unwrap();
        // m̂ = 1, v̂ = 1, so the update is lr / (1 + eps)
        assert!((ps[0].value.item() + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(ps[0].steps(), 1);
    }

    #[test]
    fn identical_states_update_identically() {
        let mut ps = vec![single(0.3, -2.0), single(0.3, -2.0)];
        for _ in 0..3 {
            adam_step(&mut ps, &Adam::default()).unwrap();
        }
        assert_eq!(ps[0].value, ps[1].value);
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut ps = vec![single(1.0, 1.0), single(2.0, f64::NAN)];
        ps[1].name = "bad".into();
        let err = adam_step(&mut ps, &Adam::default()).unwrap_err();
        assert!(err.to_string().contains("bad"));
        assert_eq!(ps[0].value.item(), 1.0);
        assert_eq!(ps[0].steps(), 0);
    }
}
