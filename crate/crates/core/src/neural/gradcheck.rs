//! Central-difference gradient checking against the tape's analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::matrix::DenseMatrix;
use super::optim::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates sampled per parameter; `None` checks every coordinate.
    pub coords_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            coords_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// `loss_fn` must be deterministic, zero the store's gradients and fill them
/// with the analytic gradient of the returned loss.
pub fn gradient_check<F>(store: &mut ParamStore, mut loss_fn: F, cfg: GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> Result<f64>,
{
    loss_fn(store)?;
    let analytic: Vec<DenseMatrix> = store.iter().map(|p| p.grad.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        let n = grad.len();
        let coords: Vec<usize> = match cfg.coords_per_param {
            Some(k) if k < n => {
                let mut v = sample(&mut rng, n, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let original = store.params_mut()[pi].value.data()[k];
            store.params_mut()[pi].value.data_mut()[k] = original + cfg.epsilon;
            let plus = loss_fn(store)?;
            store.params_mut()[pi].value.data_mut()[k] = original - cfg.epsilon;
            let minus = loss_fn(store)?;
            store.params_mut()[pi].value.data_mut()[k] = original;
            if !(plus.is_finite() && minus.is_finite()) {
                let name = store.params_mut()[pi].name.clone();
                return Err(Error::NonFinite(format!("loss at perturbed `{name}`[{k}]")));
            }
            let numeric = (plus - minus) / (2.0 * cfg.epsilon);
            let err = relative_error(grad.data()[k], numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                if err >= report.max_relative_error {
                    report.worst = Some((store.params_mut()[pi].name.clone(), k));
                }
            }
        }
    }
    // leave the store with the analytic gradients at the unperturbed point
    loss_fn(store)?;
    Ok(report)
}
