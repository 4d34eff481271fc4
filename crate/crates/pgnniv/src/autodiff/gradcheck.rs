//! Central finite-difference gradients for verifying the reverse pass.
//!
//! The checker never touches [`Tape::backward`]: it re-evaluates the loss
//! closure at perturbed parameter values, so it stays an independent oracle
//! for the adjoint arithmetic.

use super::{Gradients, Matrix, Param, ParamStore};
use std::collections::BTreeMap;

/// Default central-difference step.
pub const DEFAULT_STEP: f64 = 1e-6;

/// Central finite-difference gradient of `f` with respect to every entry of
/// every parameter in `store`.
pub fn central_diff<F>(store: &ParamStore, step: f64, mut f: F) -> Gradients
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut by_id = BTreeMap::new();
    for param in store.iter() {
        let (rows, cols) = param.shape();
        let mut grad = Matrix::zeros((rows, cols));
        for r in 0..rows {
            for c in 0..cols {
                let base = param.value()[(r, c)];
                let plus = eval_with(store, &mut f, param.id(), (r, c), base + step);
                let minus = eval_with(store, &mut f, param.id(), (r, c), base - step);
                grad[(r, c)] = (plus - minus) / (2.0 * step);
            }
        }
        by_id.insert(param.id().to_string(), grad);
    }
    Gradients { by_id }
}

fn eval_with<F>(store: &ParamStore, f: &mut F, id: &str, entry: (usize, usize), value: f64) -> f64
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut perturbed = store.clone();
    let param = perturbed.get_mut(id).expect("param present");
    let mut v = param.value().clone();
    v[entry] = value;
    param.set_value(v);
    f(&perturbed)
}

/// Worst relative disagreement between two gradient sets over all entries.
///
/// Each entry is scored as `|a - b| / max(|a|, |b|, floor)`; the floor keeps
/// exact zeros (e.g. disconnected params) from dividing by zero.
pub fn max_relative_error(a: &Gradients, b: &Gradients, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (id, ga) in a.iter() {
        let gb = b
            .get(id)
            .unwrap_or_else(|| panic!("gradient sets disagree on param {id}"));
        for (x, y) in ga.iter().zip(gb.iter()) {
            let denom = x.abs().max(y.abs()).max(floor);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// Asserts reverse-mode agreement with central differences.
///
/// `f` must evaluate the same scalar the reverse pass was seeded on.
pub fn assert_matches_fd<F>(store: &ParamStore, reverse: &Gradients, tolerance: f64, f: F)
where
    F: FnMut(&ParamStore) -> f64,
{
    let fd = central_diff(store, DEFAULT_STEP, f);
    let err = max_relative_error(reverse, &fd, 1e-4);
    assert!(
        err <= tolerance,
        "reverse-mode gradient disagrees with finite differences: max relative error {err:.3e} > {tolerance:.1e}"
    );
}

/// Uniform sample in `[-a, a]`, the initialization used across the crate's
/// tests for random matrices.
pub fn random_matrix(rng: &mut impl rand::Rng, rows: usize, cols: usize, a: f64) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| rng.random_range(-a..=a))
}

/// Like [`random_matrix`] but resamples entries with `|x| < margin`, for
/// testing ReLU away from its kink.
pub fn random_matrix_away_from_zero(
    rng: &mut impl rand::Rng,
    rows: usize,
    cols: usize,
    a: f64,
    margin: f64,
) -> Matrix {
    Matrix::from_shape_fn((rows, cols), |_| loop {
        let x: f64 = rng.random_range(-a..=a);
        if x.abs() >= margin {
            break x;
        }
    })
}

/// Builds a [`ParamStore`] from named matrices, a convenience for tests.
pub fn store_from(entries: Vec<(&str, Matrix)>) -> ParamStore {
    let mut store = ParamStore::new();
    for (id, value) in entries {
        store.insert(Param::new(id, value));
    }
    store
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_gradient_agrees_with_fd_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let store = store_from(vec![
            ("a", random_matrix(&mut rng, 3, 4, 1.0)),
            ("b", random_matrix(&mut rng, 4, 2, 1.0)),
        ]);
        let eval = |s: &ParamStore| {
            let mut t = Tape::new();
            let a = t.param(s.get("a").unwrap());
            let b = t.param(s.get("b").unwrap());
            let prod = t.matmul(a, b).unwrap();
            let out = t.sum(prod);
            (t, out)
        };
        let (mut tape, out) = eval(&store);
        let reverse = tape.backward(out).unwrap();
        assert_matches_fd(&store, &reverse, 1e-5, |s| {
            let (t, out) = eval(s);
            t.scalar(out)
        });
    }

    #[test]
    fn relu_gradient_agrees_with_fd_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let store = store_from(vec![(
            "x",
            random_matrix_away_from_zero(&mut rng, 4, 3, 1.0, 1e-3),
        )]);
        let eval = |s: &ParamStore| {
            let mut t = Tape::new();
            let x = t.param(s.get("x").unwrap());
            let r = t.relu(x);
            let out = t.sum(r);
            (t, out)
        };
        let (mut tape, out) = eval(&store);
        let reverse = tape.backward(out).unwrap();
        assert_matches_fd(&store, &reverse, 1e-5, |s| {
            let (t, out) = eval(s);
            t.scalar(out)
        });
    }

    #[test]
    fn linear_regression_loss_agrees_with_fd() {
        // f = mean((x.w + b - t)^2) for a small linear model.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 5, 3, 2.0);
        let target = random_matrix(&mut rng, 5, 1, 2.0);
        let store = store_from(vec![
            ("w", random_matrix(&mut rng, 3, 1, 1.0)),
            ("b", random_matrix(&mut rng, 1, 1, 1.0)),
        ]);
        let eval = |s: &ParamStore| {
            let mut t = Tape::new();
            let xs = t.constant(x.clone());
            let ts = t.constant(target.clone());
            let w = t.param(s.get("w").unwrap());
            let b = t.param(s.get("b").unwrap());
            let xw = t.matmul(xs, w).unwrap();
            let y = t.add_bias(xw, b).unwrap();
            let d = t.sub(y, ts).unwrap();
            let sq = t.square(d);
            let out = t.mean(sq);
            (t, out)
        };
        let (mut tape, out) = eval(&store);
        let reverse = tape.backward(out).unwrap();
        assert_matches_fd(&store, &reverse, 1e-5, |s| {
            let (t, out) = eval(s);
            t.scalar(out)
        });
    }
}
