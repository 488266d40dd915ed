//! Central finite-difference gradients for verifying the analytic backprop.

use alloc::vec::Vec;

use crate::nn::ParamAccess;

/// Numeric gradient of `loss` w.r.t. every parameter coordinate, by central
/// differences with step `h`. `loss` must be deterministic (fixed rng seeds,
/// no buffer updates) or the comparison is meaningless.
pub fn finite_diff_grads<M, F>(model: &mut M, mut loss: F, h: f64) -> Vec<Vec<f64>>
where
    M: ParamAccess,
    F: FnMut(&mut M) -> f64,
{
    let mut grads = Vec::with_capacity(model.n_tensors());
    for i in 0..model.n_tensors() {
        let len = model.tensor_len(i);
        let mut g = Vec::with_capacity(len);
        for j in 0..len {
            let x0 = model.get(i, j);
            model.set(i, j, x0 + h);
            let up = loss(model);
            model.set(i, j, x0 - h);
            let down = loss(model);
            model.set(i, j, x0);
            g.push((up - down) / (2.0 * h));
        }
        grads.push(g);
    }
    grads
}

/// Largest relative error between analytic and numeric gradients, with an
/// absolute floor to keep near-zero coordinates from exploding the ratio.
pub fn max_rel_error(analytic: &[Vec<f64>], numeric: &[Vec<f64>], floor: f64) -> f64 {
    let mut worst = 0.0f64;
    for (a_t, n_t) in analytic.iter().zip(numeric.iter()) {
        for (&a, &n) in a_t.iter().zip(n_t.iter()) {
            let denom = a.abs().max(n.abs()).max(floor);
            let rel = (a - n).abs() / denom;
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
