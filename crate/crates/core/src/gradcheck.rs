//! Central finite differences as an independent check of [`crate::autodiff`].

use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{evaluate, gradients, Bindings, Graph, NodeId, Op, PROB_CEIL, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::net::{Group, NetworkConfig, ParamSet};
use crate::objectives::{AdversarialForm, Batch, LossGraph, LossSpec, LossWeights, Terms};
use crate::tensor::Tensor;

/// Outcome of comparing analytic and numeric gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub entries_checked: usize,
}

/// Relative error with the denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-8);
    (analytic - numeric).abs() / denom
}

/// Compares reverse-mode gradients of `loss` w.r.t. every leaf in `wrt`
/// against `(L(θ + h) − L(θ − h)) / 2h`, entry by entry.
///
/// Each perturbation re-evaluates the whole graph from scratch, so this is
/// only meant for small graphs.
pub fn finite_difference_check(
    graph: &Graph,
    loss: NodeId,
    bindings: &Bindings<'_>,
    wrt: &[NodeId],
    h: f64,
) -> Result<FdReport> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidStep);
    }
    let analytic = gradients(graph, loss, bindings, wrt)?;
    let mut report = FdReport { max_rel_error: 0.0, entries_checked: 0 };
    for &leaf in wrt {
        let base = bindings.get(leaf).ok_or(Error::Unbound { node: leaf.index() })?;
        let grad = analytic.get(leaf).expect("every requested leaf has an entry");
        for k in 0..base.len() {
            let plus = perturbed_loss(graph, loss, bindings, leaf, k, h)?;
            let minus = perturbed_loss(graph, loss, bindings, leaf, k, -h)?;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grad.data()[k], numeric);
            report.max_rel_error = report.max_rel_error.max(err);
            report.entries_checked += 1;
        }
    }
    Ok(report)
}

fn perturbed_loss(
    graph: &Graph,
    loss: NodeId,
    bindings: &Bindings<'_>,
    leaf: NodeId,
    entry: usize,
    delta: f64,
) -> Result<f64> {
    let mut shifted = bindings.clone();
    let mut t = bindings.get(leaf).expect("checked by caller").clone();
    t.data_mut()[entry] += delta;
    shifted.bind(leaf, t);
    let values = evaluate(graph, &shifted)?;
    values.scalar(loss).ok_or(Error::NonScalarLoss { shape: values.get(loss).shape().to_vec() })
}

/// Summary of [`randomized_suite`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub configs: usize,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    /// Configurations that included the adversarial term with frozen
    /// discriminators.
    pub with_adversarial: usize,
    /// Configurations with at least one ordinal triple.
    pub with_order: usize,
    /// Discriminator-only configurations.
    pub discriminator_steps: usize,
    /// Draws discarded because an activation sat too close to a kink.
    pub resampled: usize,
}

/// Distance from a non-differentiable point below which a draw is redrawn.
const KINK_TOL: f64 = 1e-3;

fn near_kink(graph: &Graph, values: &crate::autodiff::Values<'_>) -> bool {
    (0..graph.len()).any(|i| {
        let id = NodeId(i);
        match graph.op(id) {
            Some(Op::Relu(a)) | Some(Op::Hinge(a)) => values.get(*a).data().iter().any(|v| v.abs() < KINK_TOL),
            Some(Op::Log(a)) => values
                .get(*a)
                .data()
                .iter()
                .any(|v| (v - PROB_FLOOR).abs() < 1e-9 || (v - PROB_CEIL).abs() < 1e-6),
            _ => false,
        }
    })
}

fn random_config<R: Rng>(rng: &mut R) -> NetworkConfig {
    let widths = |rng: &mut R| -> Vec<usize> { (0..rng.random_range(0..=1)).map(|_| rng.random_range(2..=5)).collect() };
    NetworkConfig {
        input_dim: rng.random_range(2..=5),
        encoder_widths: widths(rng),
        branch_widths: widths(rng),
        z_dim: rng.random_range(2..=4),
        uc_classes: 2,
        loc_classes: rng.random_range(2..=3),
    }
}

fn random_batch<R: Rng>(rng: &mut R, config: &NetworkConfig, rows: usize) -> Batch {
    let x = (0..rows * config.input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut location: Vec<Option<usize>> =
        (0..rows).map(|_| rng.random_bool(0.9).then(|| rng.random_range(0..config.loc_classes))).collect();
    location[0] = Some(rng.random_range(0..config.loc_classes));
    let uc: Vec<Option<usize>> = (0..rows).map(|_| rng.random_bool(0.5).then(|| rng.random_range(0..2))).collect();
    let extra = uc.iter().map(|u| (u.is_none() && rng.random_bool(0.4)).then(|| rng.random_range(0..2))).collect();
    let cut = rng.random_range(0..=rows);
    Batch {
        x: Tensor::matrix(rows, config.input_dim, x).expect("sized above"),
        location,
        uc,
        fragments: vec![0..cut, cut..rows],
        extra,
    }
}

/// Checks loss-graph gradients of `n` random small networks against central
/// differences with step `h`.
///
/// Draws cycle through three routings: discriminator step (`L_d` with
/// respect to `D_u`, `D_loc`), main step (classification, adversarial and
/// ordinal terms with respect to `E`, `B_*`, `C_*`, discriminators frozen),
/// and every term with respect to every group.
pub fn randomized_suite(n: usize, seed: u64, h: f64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::default();
    while report.configs < n {
        let config = random_config(&mut rng);
        let params = ParamSet::init(&config, rng.random())?;
        let rows = rng.random_range(1..=9);
        let batch = random_batch(&mut rng, &config, rows);
        let weights = LossWeights {
            adversarial: rng.random_range(0.05..1.0),
            order: rng.random_range(0.05..2.0),
            margin: rng.random_range(0.0..1.0),
        };
        let routing = report.configs % 3;
        let (terms, groups): (Terms, &[Group]) = match routing {
            0 => (Terms { discriminative: true, ..Terms::NONE }, &Group::DISCRIMINATORS),
            1 => (
                Terms { uc_class: rng.random_bool(0.5), loc_class: rng.random_bool(0.5), adversarial: true, order: true, ..Terms::NONE },
                &Group::MAIN,
            ),
            _ => (Terms::ALL, &Group::ALL),
        };
        let mut spec = LossSpec::new(terms, weights);
        if rng.random_bool(0.2) {
            spec.adversarial_form = AdversarialForm::LiteralSum;
        }
        let lg = LossGraph::build(&config, &batch, &spec)?;
        let Some(objective) = lg.objective else {
            report.resampled += 1;
            continue;
        };
        let bindings = lg.bindings(&params, &batch);
        let values = evaluate(&lg.graph, &bindings)?;
        if near_kink(&lg.graph, &values) {
            report.resampled += 1;
            continue;
        }
        let wrt = lg.leaves.leaves_for(groups);
        let r = finite_difference_check(&lg.graph, objective, &bindings, &wrt, h)?;
        let bundle = lg.bundle(&values);
        report.configs += 1;
        report.entries_checked += r.entries_checked;
        report.max_rel_error = report.max_rel_error.max(r.max_rel_error);
        report.with_adversarial += (routing != 0 && bundle.adv_loc.count > 0) as usize;
        report.with_order += (routing != 0 && bundle.seq.count > 0) as usize;
        report.discriminator_steps += (routing == 0) as usize;
    }
    Ok(report)
}
