//! Linear probes: how much of a label can an affine read-out recover from
//! frozen features?

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{backward, evaluate, Bindings, Graph};
use crate::error::{Error, Result};
use crate::net::{embed_uc, ParamSet};
use crate::seqgen::{Dataset, Split};
use crate::tensor::Tensor;
use crate::trainer::feature_matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { epochs: 200, lr: 0.1 }
    }
}

/// Column means and standard deviations of `x` (constant columns get 1).
fn moments(x: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for r in 0..n {
        mean.iter_mut().zip(x.row(r)).for_each(|(m, v)| *m += v / n as f64);
    }
    for r in 0..n {
        sd.iter_mut().zip(x.row(r)).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m) / n as f64);
    }
    for s in &mut sd {
        *s = libm::sqrt(*s);
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, sd)
}

fn standardize(x: &Tensor, mean: &[f64], sd: &[f64]) -> Tensor {
    let mut out = x.clone();
    let d = x.cols();
    for (k, v) in out.data_mut().iter_mut().enumerate() {
        *v = (*v - mean[k % d]) / sd[k % d];
    }
    out
}

/// Fits an affine + softmax classifier on `(train_x, train_y)` with
/// full-batch gradient descent on standardized features and returns its
/// accuracy on `(test_x, test_y)`.
pub fn probe_accuracy(
    train_x: &Tensor,
    train_y: &[usize],
    test_x: &Tensor,
    test_y: &[usize],
    config: &ProbeConfig,
    seed: u64,
) -> Result<f64> {
    if train_x.rows() != train_y.len() {
        return Err(Error::LengthMismatch { left: train_x.rows(), right: train_y.len() });
    }
    if test_x.rows() != test_y.len() {
        return Err(Error::LengthMismatch { left: test_x.rows(), right: test_y.len() });
    }
    if train_x.cols() != test_x.cols() {
        return Err(Error::LengthMismatch { left: train_x.cols(), right: test_x.cols() });
    }
    let k = train_y.iter().chain(test_y).copied().max().map_or(0, |m| m + 1);
    let mut seen = train_y.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() < 2 {
        return Err(Error::SingleClass);
    }
    let (n, d) = (train_x.rows(), train_x.cols());
    let (mean, sd) = moments(train_x);
    let xs = standardize(train_x, &mean, &sd);
    let mut y = vec![0.0; n * k];
    for (r, &c) in train_y.iter().enumerate() {
        y[r * k + c] = -1.0 / n as f64;
    }
    let y = Tensor::matrix(n, k, y)?;

    let mut g = Graph::new();
    let (xi, yi) = (g.input(), g.input());
    let (w, b) = (g.param(), g.param());
    let logits = g.affine(xi, w, b);
    let p = g.softmax(logits);
    let lp = g.log(p);
    let m = g.mul(lp, yi);
    let loss = g.sum(m);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wt = Tensor::new(vec![d, k], (0..d * k).map(|_| rng.random_range(-0.01..0.01)).collect())?;
    let mut bt = Tensor::zeros(&[k]);
    for _ in 0..config.epochs {
        let grads = {
            let mut bind = Bindings::new();
            bind.bind_ref(xi, &xs);
            bind.bind_ref(yi, &y);
            bind.bind_ref(w, &wt);
            bind.bind_ref(b, &bt);
            let values = evaluate(&g, &bind)?;
            backward(&g, &values, loss, &[w, b])?
        };
        for (t, id) in [(&mut wt, w), (&mut bt, b)] {
            let gr = grads.get(id).expect("requested");
            t.data_mut().iter_mut().zip(gr.data()).for_each(|(p, g)| *p -= config.lr * g);
        }
    }

    if test_y.is_empty() {
        return Ok(0.0);
    }
    let xt = standardize(test_x, &mean, &sd);
    let mut correct = 0;
    for (r, &c) in test_y.iter().enumerate() {
        let row = xt.row(r);
        let scores: Vec<f64> =
            (0..k).map(|j| bt.data()[j] + row.iter().enumerate().map(|(i, v)| v * wt.data()[i * k + j]).sum::<f64>()).collect();
        let best = (0..k).fold(0, |a, j| if scores[j] > scores[a] { j } else { a });
        correct += (best == c) as usize;
    }
    Ok(correct as f64 / test_y.len() as f64)
}

/// Location probe on `z_u`: fitted on train-split records, scored on the
/// test split. `params` is only read.
pub fn probe_disentanglement(params: &ParamSet, dataset: &Dataset, config: &ProbeConfig, seed: u64) -> Result<f64> {
    let side = |split: Split| -> Result<(Tensor, Vec<usize>)> {
        let rows = dataset.records_in(split);
        let z = embed_uc(params, &feature_matrix(dataset, &rows))?;
        Ok((z, rows.iter().map(|&i| dataset.records[i].location as usize).collect()))
    };
    let (train_x, train_y) = side(Split::Train)?;
    let (test_x, test_y) = side(Split::Test)?;
    probe_accuracy(&train_x, &train_y, &test_x, &test_y, config, seed)
}
