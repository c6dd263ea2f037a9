//! Training loops.
//!
//! Every method walks the same fragment stream: the train sequences are cut
//! into contiguous fragments, the fragments are shuffled, and groups of
//! `batch_fragments` fragments form one step. Methods differ in which rows of
//! a step they use and which losses they minimise.
//!
//! The proposed family performs two routed updates per step:
//!
//! 1. `L_d_u + L_d_loc` with respect to `D_u`, `D_loc` only;
//! 2. `L_c_u + L_c_loc + λ_adv (L_adv_u + L_adv_loc) + λ_seq L_seq` with
//!    respect to `E`, `B_*`, `C_*` only.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{backward, evaluate, PROB_CEIL};
use crate::error::{Error, Result};
use crate::metrics::{metrics, ConfusionCounts, MetricsReport};
use crate::net::{embed_uc, predict_uc, Group, NetworkConfig, ParamSet};
use crate::objectives::{AdversarialForm, Batch, LossAccumulator, LossBundle, LossGraph, LossSpec, LossWeights, Terms};
use crate::seqgen::{Dataset, Split};
use crate::tensor::Tensor;

const STREAM_SALT: u64 = 0x7472_6169_6e00_0003;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Supervised,
    PseudoLabel,
    FixmatchLite,
    Proposed,
    ProposedNoOrder,
    LocationMultitask,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Supervised,
        Method::PseudoLabel,
        Method::FixmatchLite,
        Method::Proposed,
        Method::ProposedNoOrder,
        Method::LocationMultitask,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::PseudoLabel => "pseudo_label",
            Method::FixmatchLite => "fixmatch_lite",
            Method::Proposed => "proposed",
            Method::ProposedNoOrder => "proposed_no_order",
            Method::LocationMultitask => "location_multitask",
        }
    }

    pub fn parse(name: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method `{name}`")))
    }

    /// Methods that use location labels and the routed two-step update.
    pub fn is_routed(self) -> bool {
        matches!(self, Method::Proposed | Method::ProposedNoOrder | Method::LocationMultitask)
    }
}

impl core::fmt::Display for Method {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub method: Method,
    pub epochs: usize,
    /// Fragments per step.
    pub batch_fragments: usize,
    pub fragment_len: usize,
    pub lr: f64,
    /// 0 gives plain SGD.
    pub momentum: f64,
    pub weights: LossWeights,
    pub adversarial_form: AdversarialForm,
    /// Weight of the pseudo-label / consistency term once fully ramped.
    pub unlabeled_weight: f64,
    pub pl_threshold: f64,
    pub pl_warmup: usize,
    /// Ramp length as a fraction of `epochs`.
    pub pl_ramp: f64,
    pub fm_threshold: f64,
    pub fm_weak_noise: f64,
    pub fm_strong_noise: f64,
    pub fm_dropout: f64,
    /// Fraction of epochs over which the ordinal weight ramps up linearly.
    pub order_ramp: f64,
    pub seed: u64,
    /// Snapshot parameters around every routed update and count group
    /// changes that break the routing rule.
    pub audit_routing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: Method::Proposed,
            epochs: 100,
            batch_fragments: 16,
            fragment_len: 8,
            lr: 0.05,
            momentum: 0.0,
            weights: LossWeights::default(),
            adversarial_form: AdversarialForm::default(),
            unlabeled_weight: 1.0,
            pl_threshold: 0.9,
            pl_warmup: 10,
            pl_ramp: 0.3,
            fm_threshold: 0.95,
            fm_weak_noise: 0.1,
            fm_strong_noise: 0.5,
            fm_dropout: 0.1,
            order_ramp: 0.0,
            seed: 0,
            audit_routing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.batch_fragments == 0 || self.fragment_len == 0 {
            return bad("batch_fragments and fragment_len must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        for t in [self.pl_threshold, self.fm_threshold] {
            if !(t > 0.0 && t <= 1.0) {
                return bad("thresholds must lie in (0, 1]");
            }
        }
        if !(self.pl_ramp >= 0.0 && self.unlabeled_weight >= 0.0) {
            return bad("pl_ramp and unlabeled_weight must be >= 0");
        }
        if !(self.fm_weak_noise >= 0.0 && self.fm_strong_noise >= 0.0 && (0.0..1.0).contains(&self.fm_dropout)) {
            return bad("augmentation strengths must be >= 0 and dropout in [0, 1)");
        }
        self.weights.validate()
    }

    /// Loss weights after applying the method's ablation.
    pub fn effective_weights(&self) -> LossWeights {
        self.weights_at(usize::MAX)
    }

    /// Loss weights for a 0-based epoch, including the ordinal warm-up.
    pub fn weights_at(&self, epoch: usize) -> LossWeights {
        let mut w = self.weights;
        let ramp = libm::ceil(self.order_ramp * self.epochs as f64);
        if ramp > 0.0 && (epoch as f64) < ramp {
            w.order *= (epoch + 1) as f64 / ramp;
        }
        match self.method {
            Method::ProposedNoOrder => w.order = 0.0,
            Method::LocationMultitask => {
                w.adversarial = 0.0;
                w.order = 0.0;
            }
            _ => {}
        }
        w
    }

    /// Pseudo-label weight for a 0-based epoch: zero during warm-up, then a
    /// linear ramp to 1.
    pub fn pseudo_label_ramp(&self, epoch: usize) -> f64 {
        if epoch < self.pl_warmup {
            return 0.0;
        }
        let len = libm::ceil(self.pl_ramp * self.epochs as f64);
        if len <= 0.0 {
            return 1.0;
        }
        (((epoch - self.pl_warmup + 1) as f64) / len).min(1.0)
    }
}

/// Cuts every sequence range into contiguous pieces of at most `len` rows
/// with a random phase, then shuffles the pieces.
pub fn make_fragments<R: Rng>(sequences: &[Range<usize>], len: usize, rng: &mut R) -> Vec<Range<usize>> {
    let len = len.max(1);
    let mut out = Vec::new();
    for seq in sequences {
        let n = seq.end - seq.start;
        if n == 0 {
            continue;
        }
        let phase = rng.random_range(0..len.min(n));
        let mut start = seq.start;
        if phase > 0 {
            out.push(start..start + phase);
            start += phase;
        }
        while start < seq.end {
            let end = (start + len).min(seq.end);
            out.push(start..end);
            start = end;
        }
    }
    out.shuffle(rng);
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub losses: LossBundle,
    pub validation: MetricsReport,
    pub val_confusion: ConfusionCounts,
    /// Mean `‖z_u(t) − z_u(t+1)‖²` over validation sequences.
    pub adjacent_distance: f64,
    /// Unlabeled train records carrying a pseudo-label during the epoch.
    pub pseudo_labels: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    /// Parameters of the selected epoch (the initial ones if no epoch ran).
    pub params: ParamSet,
    pub history: Vec<EpochRecord>,
    /// First epoch with the highest validation accuracy.
    pub selected_epoch: Option<usize>,
    pub initial_distance: f64,
    pub routing_violations: usize,
}

/// Feature rows of the given records as a `[n, D]` matrix.
pub fn feature_matrix(dataset: &Dataset, rows: &[usize]) -> Tensor {
    let d = dataset.records.first().map_or(0, |r| r.features.len());
    let mut data = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        data.extend_from_slice(&dataset.records[i].features);
    }
    Tensor::matrix(rows.len(), d, data).expect("rows share one width")
}

/// Arg-max UC predictions for the given records.
pub fn predict_labels(params: &ParamSet, dataset: &Dataset, rows: &[usize]) -> Result<Vec<u8>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let p = predict_uc(params, &feature_matrix(dataset, rows))?;
    Ok((0..p.rows()).map(|r| argmax(p.row(r)).0 as u8).collect())
}

/// Confusion counts of UC predictions over a split.
pub fn evaluate_split(params: &ParamSet, dataset: &Dataset, split: Split) -> Result<ConfusionCounts> {
    let rows = dataset.records_in(split);
    let pred = predict_labels(params, dataset, &rows)?;
    let mut c = ConfusionCounts::default();
    for (&i, p) in rows.iter().zip(pred) {
        if let Some(u) = dataset.records[i].uc {
            c.record(p == 1, u == 1);
        }
    }
    Ok(c)
}

fn argmax(row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, &v) in row.iter().enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best
}

/// Keeps only `rows` of a batch, dropping fragments.
fn select_rows(batch: &Batch, rows: &[usize], x: Option<Tensor>) -> Batch {
    Batch {
        x: x.unwrap_or_else(|| {
            let d = batch.x.cols();
            let mut data = Vec::with_capacity(rows.len() * d);
            for &r in rows {
                data.extend_from_slice(batch.x.row(r));
            }
            Tensor::matrix(rows.len(), d, data).expect("sized above")
        }),
        location: rows.iter().map(|&r| batch.location[r]).collect(),
        uc: rows.iter().map(|&r| batch.uc[r]).collect(),
        fragments: Vec::new(),
        extra: rows.iter().map(|&r| batch.extra[r]).collect(),
    }
}

/// One training run in progress. Public so that individual routed steps can
/// be driven and inspected.
pub struct Trainer<'d> {
    dataset: &'d Dataset,
    config: TrainConfig,
    params: ParamSet,
    velocity: Option<ParamSet>,
    visible: Vec<bool>,
    pseudo: Vec<Option<usize>>,
    train_ranges: Vec<Range<usize>>,
    val_x: Tensor,
    val_rows: Vec<usize>,
    val_pairs: Vec<(usize, usize)>,
    rng: ChaCha8Rng,
    epoch: usize,
    routing_violations: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(dataset: &'d Dataset, net: &NetworkConfig, config: &TrainConfig) -> Result<Trainer<'d>> {
        config.validate()?;
        if net.input_dim != dataset.records.first().map_or(net.input_dim, |r| r.features.len()) {
            return Err(Error::InvalidConfig("network input_dim differs from the dataset".into()));
        }
        if dataset.manifest.labeled.is_empty() {
            return Err(Error::EmptyLabeledSet);
        }
        let ranges = dataset.sequence_ranges();
        let mut visible = vec![false; dataset.records.len()];
        for &(s, t) in &dataset.manifest.labeled {
            let range = ranges.get(s as usize).ok_or(Error::UnknownSequence(s))?;
            visible[range.start + t as usize] = true;
        }
        let train_ranges: Vec<_> = dataset.sequences_in(Split::Train).into_iter().map(|s| ranges[s as usize].clone()).collect();

        let mut val_rows = Vec::new();
        let mut val_pairs = Vec::new();
        for s in dataset.sequences_in(Split::Val) {
            let base = val_rows.len();
            let r = ranges[s as usize].clone();
            val_pairs.extend((base..base + r.len().saturating_sub(1)).map(|i| (i, i + 1)));
            val_rows.extend(r);
        }
        let params = ParamSet::init(net, config.seed)?;
        let velocity = (config.momentum > 0.0).then(|| zeros_like(&params));
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ STREAM_SALT);
        rng.set_stream(1);
        Ok(Trainer {
            dataset,
            config: config.clone(),
            val_x: feature_matrix(dataset, &val_rows),
            params,
            velocity,
            pseudo: vec![None; visible.len()],
            visible,
            train_ranges,
            val_rows,
            val_pairs,
            rng,
            epoch: 0,
            routing_violations: 0,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn routing_violations(&self) -> usize {
        self.routing_violations
    }

    /// Shuffled fragment batches of the next epoch, with visible labels.
    pub fn epoch_batches(&mut self) -> Vec<Batch> {
        let frags = make_fragments(&self.train_ranges, self.config.fragment_len, &mut self.rng);
        frags.chunks(self.config.batch_fragments).map(|chunk| self.assemble(chunk)).collect()
    }

    fn assemble(&self, frags: &[Range<usize>]) -> Batch {
        let d = self.val_x.cols().max(self.params.config().input_dim);
        let n: usize = frags.iter().map(|f| f.len()).sum();
        let mut batch = Batch {
            x: Tensor::zeros(&[0, d]),
            location: Vec::with_capacity(n),
            uc: Vec::with_capacity(n),
            fragments: Vec::with_capacity(frags.len()),
            extra: Vec::with_capacity(n),
        };
        let mut data = Vec::with_capacity(n * d);
        for f in frags {
            let start = batch.location.len();
            for i in f.clone() {
                let r = &self.dataset.records[i];
                data.extend_from_slice(&r.features);
                batch.location.push(Some(r.location as usize));
                batch.uc.push(if self.visible[i] { r.uc.map(usize::from) } else { None });
                batch.extra.push(if self.visible[i] { None } else { self.pseudo[i] });
            }
            batch.fragments.push(start..batch.location.len());
        }
        batch.x = Tensor::matrix(n, d, data).expect("sized above");
        batch
    }

    fn spec(&self, terms: Terms) -> LossSpec {
        let mut spec = LossSpec::new(terms, self.config.weights_at(self.epoch));
        spec.adversarial_form = self.config.adversarial_form;
        spec
    }

    fn numeric(&self, e: Error) -> Error {
        match e {
            Error::NonFinite { .. } => Error::NumericFailure { epoch: self.epoch },
            other => other,
        }
    }

    /// Evaluates `batch` under `spec` and takes one SGD step on `groups`.
    fn update(&mut self, batch: &Batch, spec: &LossSpec, groups: &[Group]) -> Result<LossBundle> {
        let lg = LossGraph::build(self.params.config(), batch, spec)?;
        let (bundle, grads) = {
            let bindings = lg.bindings(&self.params, batch);
            let values = evaluate(&lg.graph, &bindings).map_err(|e| self.numeric(e))?;
            let bundle = lg.bundle(&values);
            let Some(objective) = lg.objective else { return Ok(bundle) };
            let wrt = lg.leaves.leaves_for(groups);
            (bundle, backward(&lg.graph, &values, objective, &wrt)?)
        };
        let (lr, mu) = (self.config.lr, self.config.momentum);
        for (r, node) in lg.leaves.iter() {
            let Some(g) = grads.get(node) else { continue };
            if !g.is_finite() {
                return Err(Error::NumericFailure { epoch: self.epoch });
            }
            match self.velocity.as_mut() {
                Some(v) => {
                    let v = v.get_mut(r).data_mut();
                    let p = self.params.get_mut(r).data_mut();
                    for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g.data()) {
                        *v = mu * *v + g;
                        *p -= lr * *v;
                    }
                }
                None => {
                    let p = self.params.get_mut(r).data_mut();
                    for (p, g) in p.iter_mut().zip(g.data()) {
                        *p -= lr * g;
                    }
                }
            }
        }
        Ok(bundle)
    }

    /// Step (1): discriminators learn to read the nuisance factor.
    pub fn d_step(&mut self, batch: &Batch) -> Result<LossBundle> {
        let spec = self.spec(Terms { discriminative: true, ..Terms::NONE });
        let before = self.config.audit_routing.then(|| self.params.clone());
        let bundle = self.update(batch, &spec, &Group::DISCRIMINATORS)?;
        if let Some(before) = before {
            self.audit(&before, &Group::MAIN);
        }
        Ok(bundle)
    }

    /// Step (2): classifiers, adversarial and ordinal terms, with the
    /// discriminators frozen.
    pub fn main_step(&mut self, batch: &Batch) -> Result<LossBundle> {
        let spec = self.spec(Terms { uc_class: true, loc_class: true, adversarial: true, order: true, ..Terms::NONE });
        let before = self.config.audit_routing.then(|| self.params.clone());
        let bundle = self.update(batch, &spec, &Group::MAIN)?;
        if let Some(before) = before {
            self.audit(&before, &Group::DISCRIMINATORS);
        }
        Ok(bundle)
    }

    fn audit(&mut self, before: &ParamSet, frozen: &[Group]) {
        if frozen.iter().any(|&g| !before.group_bit_eq(&self.params, g)) {
            self.routing_violations += 1;
        }
    }

    /// One step of the configured method on a fragment batch.
    pub fn step(&mut self, batch: &Batch) -> Result<LossBundle> {
        match self.config.method {
            m if m.is_routed() => {
                let d = self.d_step(batch)?;
                let mut main = self.main_step(batch)?;
                main.d_u = d.d_u;
                main.d_loc = d.d_loc;
                Ok(main)
            }
            Method::Supervised | Method::PseudoLabel => {
                let rows: Vec<usize> = (0..batch.len()).filter(|&r| batch.uc[r].is_some() || batch.extra[r].is_some()).collect();
                if rows.is_empty() {
                    return Ok(LossBundle::default());
                }
                let sub = select_rows(batch, &rows, None);
                let mut spec = self.spec(Terms { uc_class: true, extra: true, ..Terms::NONE });
                spec.extra_weight = self.config.unlabeled_weight * self.config.pseudo_label_ramp(self.epoch);
                self.update(&sub, &spec, &Group::MAIN)
            }
            _ => self.fixmatch_step(batch),
        }
    }

    fn fixmatch_step(&mut self, batch: &Batch) -> Result<LossBundle> {
        let cfg = &self.config;
        let labeled: Vec<usize> = (0..batch.len()).filter(|&r| batch.uc[r].is_some()).collect();
        let unlabeled: Vec<usize> = (0..batch.len()).filter(|&r| batch.uc[r].is_none()).collect();
        let d = batch.x.cols();
        let weak_noise = Normal::new(0.0, cfg.fm_weak_noise).expect("validated");
        let strong_noise = Normal::new(0.0, cfg.fm_strong_noise).expect("validated");
        let (mut weak, mut strong) = (Vec::with_capacity(unlabeled.len() * d), Vec::with_capacity(unlabeled.len() * d));
        for &r in &unlabeled {
            for &v in batch.x.row(r) {
                weak.push(v + weak_noise.sample(&mut self.rng));
            }
            for &v in batch.x.row(r) {
                let noisy = v + strong_noise.sample(&mut self.rng);
                let keep = cfg.fm_dropout == 0.0 || !self.rng.random_bool(cfg.fm_dropout);
                strong.push(if keep { noisy } else { 0.0 });
            }
        }
        let mut rows = labeled.clone();
        let mut x = Vec::with_capacity((labeled.len() + unlabeled.len()) * d);
        for &r in &labeled {
            x.extend_from_slice(batch.x.row(r));
        }
        let mut extra = vec![None; labeled.len()];
        if !unlabeled.is_empty() {
            let p = predict_uc(&self.params, &Tensor::matrix(unlabeled.len(), d, weak)?).map_err(|e| self.numeric(e))?;
            for (k, &r) in unlabeled.iter().enumerate() {
                let (class, conf) = argmax(p.row(k));
                if conf.min(PROB_CEIL) >= cfg.fm_threshold {
                    rows.push(r);
                    extra.push(Some(class));
                    x.extend_from_slice(&strong[k * d..(k + 1) * d]);
                }
            }
        }
        if rows.is_empty() {
            return Ok(LossBundle::default());
        }
        let mut sub = select_rows(batch, &rows, Some(Tensor::matrix(rows.len(), d, x)?));
        sub.extra = extra;
        let mut spec = self.spec(Terms { uc_class: true, extra: true, ..Terms::NONE });
        spec.extra_weight = cfg.unlabeled_weight;
        spec.extra_denominator = Some(unlabeled.len());
        self.update(&sub, &spec, &Group::MAIN)
    }

    /// Re-labels unlabeled train records whose confidence reaches the
    /// threshold. Returns the number of pseudo-labels.
    fn refresh_pseudo_labels(&mut self) -> Result<usize> {
        self.pseudo.iter_mut().for_each(|p| *p = None);
        if self.config.method != Method::PseudoLabel || self.config.pseudo_label_ramp(self.epoch) == 0.0 {
            return Ok(0);
        }
        let rows: Vec<usize> = self.train_ranges.iter().flat_map(|r| r.clone()).filter(|&i| !self.visible[i]).collect();
        if rows.is_empty() {
            return Ok(0);
        }
        let p = predict_uc(&self.params, &feature_matrix(self.dataset, &rows)).map_err(|e| self.numeric(e))?;
        let mut count = 0;
        for (k, &i) in rows.iter().enumerate() {
            let (class, conf) = argmax(p.row(k));
            if conf.min(PROB_CEIL) >= self.config.pl_threshold {
                self.pseudo[i] = Some(class);
                count += 1;
            }
        }
        Ok(count)
    }

    /// Runs one epoch and returns the count-weighted mean losses together
    /// with the number of pseudo-labels used.
    pub fn run_epoch(&mut self) -> Result<(LossBundle, usize)> {
        let pseudo = self.refresh_pseudo_labels()?;
        let mut acc = LossAccumulator::default();
        for batch in self.epoch_batches() {
            let bundle = self.step(&batch)?;
            acc.add(&bundle);
        }
        self.epoch += 1;
        Ok((acc.mean(), pseudo))
    }

    /// Validation confusion counts and mean adjacent `z_u` distance.
    pub fn validate(&self) -> Result<(ConfusionCounts, f64)> {
        let c = evaluate_split(&self.params, self.dataset, Split::Val)?;
        Ok((c, self.adjacent_distance()?))
    }

    fn adjacent_distance(&self) -> Result<f64> {
        if self.val_pairs.is_empty() {
            return Ok(0.0);
        }
        let z = embed_uc(&self.params, &self.val_x)?;
        let total: f64 = self
            .val_pairs
            .iter()
            .map(|&(a, b)| z.row(a).iter().zip(z.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum();
        Ok(total / self.val_pairs.len() as f64)
    }

    pub fn validation_rows(&self) -> &[usize] {
        &self.val_rows
    }
}

fn zeros_like(params: &ParamSet) -> ParamSet {
    let mut v = params.clone();
    for r in params.all_params() {
        v.get_mut(r).data_mut().iter_mut().for_each(|x| *x = 0.0);
    }
    v
}

/// Trains with the configured method and keeps the parameters of the first
/// epoch reaching the best validation accuracy.
pub fn train(dataset: &Dataset, net: &NetworkConfig, config: &TrainConfig) -> Result<TrainResult> {
    let mut trainer = Trainer::new(dataset, net, config)?;
    let initial_distance = trainer.adjacent_distance()?;
    let mut best = trainer.params.clone();
    let mut best_correct: Option<u64> = None;
    let mut selected_epoch = None;
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (losses, pseudo_labels) = trainer.run_epoch()?;
        let (c, adjacent_distance) = trainer.validate()?;
        let correct = c.tp + c.tn;
        if best_correct.is_none_or(|b| correct > b) {
            best_correct = Some(correct);
            best = trainer.params.clone();
            selected_epoch = Some(epoch);
        }
        history.push(EpochRecord {
            losses,
            validation: metrics(&c),
            val_confusion: c,
            adjacent_distance,
            pseudo_labels,
        });
    }
    Ok(TrainResult {
        params: best,
        history,
        selected_epoch,
        initial_distance,
        routing_violations: trainer.routing_violations,
    })
}
