//! Central-difference checks of the tape operations.

use std::sync::Arc;

use gdvae::graph::SparseMatrix;
use gdvae::neural::{gradient_check, DenseMatrix, GradCheckConfig, ParamStore, Tape, Var};
use gdvae::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PRIMITIVE_TOL: f64 = 1e-6;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values at least `gap` away from zero, for ops with a kink at 0.
fn away_from_zero(rows: usize, cols: usize, gap: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    random(rows, cols, rng).map(|v| if v >= 0.0 { v + gap } else { v - gap })
}

/// Max relative error of `Σ W ⊙ op(inputs)` for a random `W`.
pub fn check<F>(inputs: Vec<DenseMatrix>, op: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs.into_iter().enumerate().map(|(i, m)| store.add(format!("x{i}"), m)).collect();
    let shape = {
        let mut t = Tape::new();
        let vars: Vec<Var> = ids.iter().map(|&id| t.param(&store, id)).collect();
        let out = op(&mut t, &vars).unwrap();
        t.shape(out)
    };
    let weights = Arc::new(random(shape.0, shape.1, &mut rng));
    let report = gradient_check(
        &mut store,
        |s| {
            s.zero_grad();
            let mut t = Tape::new();
            let vars: Vec<Var> = ids.iter().map(|&id| t.param(s, id)).collect();
            let out = op(&mut t, &vars)?;
            let loss = t.weighted_sum(out, weights.clone())?;
            let g = t.backward(loss);
            g.accumulate(&t, s);
            Ok(t.value(loss).item())
        },
        GradCheckConfig::default(),
    )
    .unwrap();
    report.max_relative_error
}

/// Max relative error for every differentiable primitive, by name.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut out = Vec::new();
    let a = random(3, 4, &mut r);
    let b = random(3, 4, &mut r);
    out.push(("matmul", check(vec![a.clone(), random(4, 2, &mut r)], |t, v| t.matmul(v[0], v[1]))));
    let s = Arc::new(
        SparseMatrix::from_triplets(3, 3, vec![(0, 0, 0.5), (0, 2, 0.3), (1, 1, 1.2), (2, 0, 0.3), (2, 2, -0.7)])
            .unwrap(),
    );
    out.push(("spmm", check(vec![a.clone()], move |t, v| t.spmm(s.clone(), v[0]))));
    out.push(("add", check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]))));
    out.push(("mul", check(vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]))));
    out.push(("add_row", check(vec![a.clone(), random(1, 4, &mut r)], |t, v| t.add_row(v[0], v[1]))));
    let ins = vec![a.clone(), random(4, 2, &mut r), random(1, 2, &mut r)];
    out.push(("affine", check(ins, |t, v| t.affine(v[0], v[1], v[2]))));
    out.push(("scale", check(vec![a.clone()], |t, v| Ok(t.scale(v[0], -1.7)))));
    out.push(("tanh", check(vec![a.clone()], |t, v| Ok(t.tanh(v[0])))));
    out.push(("exp", check(vec![a.clone()], |t, v| Ok(t.exp(v[0])))));
    let kinked = away_from_zero(3, 4, 0.05, &mut r);
    out.push(("relu", check(vec![kinked.clone()], |t, v| Ok(t.relu(v[0])))));
    out.push(("clamp_min", check(vec![kinked], |t, v| Ok(t.clamp_min(v[0], 0.0)))));
    let logits = random(3, 5, &mut r).map(|v| 3.0 * v);
    out.push(("row_softmax", check(vec![logits.clone()], |t, v| Ok(t.row_softmax(v[0])))));
    out.push(("row_log_softmax", check(vec![logits], |t, v| Ok(t.row_log_softmax(v[0])))));
    // distinct entries keep every argmax unique under perturbation
    let x = DenseMatrix::from_vec(4, 3, (0..12).map(|i| ((i * 7) % 12) as f64 * 0.1 - 0.5).collect()).unwrap();
    let groups = vec![vec![0, 1], vec![1, 2, 3], vec![3], vec![]];
    out.push(("max_pool", check(vec![x], move |t, v| t.max_pool(v[0], &groups))));
    let tall = random(4, 3, &mut r);
    out.push(("gather_rows", check(vec![tall.clone()], |t, v| t.gather_rows(v[0], &[2, 0, 2]))));
    let ins = vec![tall.clone(), random(2, 3, &mut r)];
    out.push(("concat_rows", check(ins, |t, v| t.concat_rows(&[v[0], v[1]]))));
    out.push(("slice_cols", check(vec![tall.clone()], |t, v| t.slice_cols(v[0], 1, 2))));
    out.push(("sum", check(vec![tall], |t, v| Ok(t.sum(v[0])))));
    let mixture = random(2, 3, &mut r).map(|v| v.abs() + 0.1);
    let topics = random(3, 5, &mut r).map(|v| v.abs() + 0.1);
    let docs = Arc::new(vec![vec![(0, 1), (1, 4), (0, 4)], vec![(2, 3), (3, 3)]]);
    out.push((
        "biterm_log_likelihood",
        check(vec![mixture, topics], move |t, v| t.biterm_log_likelihood(v[0], v[1], docs.clone())),
    ));
    let log_std = random(3, 4, &mut r).map(|v| 0.5 * v);
    let prior_mean = Arc::new(vec![0.1, -0.2, 0.0, 0.3]);
    let prior_var = Arc::new(vec![0.5, 2.0, 1.0, 49.0]);
    out.push((
        "kl_diag",
        check(vec![a, log_std], move |t, v| t.kl_diag(v[0], v[1], prior_mean.clone(), prior_var.clone())),
    ));
    out
}
