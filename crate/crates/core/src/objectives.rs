//! Losses and the per-batch loss graph.
//!
//! Scalar helpers ([`classification_loss`], [`discriminative_loss`],
//! [`adversarial_loss`], [`ordinal_loss`]) evaluate one term on plain slices.
//! [`LossGraph`] expresses the same terms over a whole batch inside an
//! autodiff graph so they can be differentiated. Which parameter groups a
//! term may move is decided by the caller through the `wrt` set:
//!
//! | term              | updates                     |
//! |-------------------|-----------------------------|
//! | `L_d_u`, `L_d_loc`| `D_u`, `D_loc` only         |
//! | everything else   | `E`, `B_*`, `C_*` (D frozen)|

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::autodiff::{evaluate, Bindings, Graph, NodeId, Values, PROB_CEIL, PROB_FLOOR};
use crate::error::{Error, Result};
use crate::net::{build_forward, Heads, NetworkConfig, ParamLeaves, ParamSet};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Weight of `L_adv_u + L_adv_loc` in the main step.
    pub adversarial: f64,
    /// Weight of the ordinal loss.
    pub order: f64,
    /// Hinge margin of the ordinal loss.
    pub margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { adversarial: 1.0, order: 0.03, margin: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !(ok(self.adversarial) && ok(self.order) && ok(self.margin)) {
            return Err(Error::InvalidConfig(format!("loss weights must be >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// How the adversarial term is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum AdversarialForm {
    /// Cross-entropy against the uniform distribution,
    /// `-(1/K) Σ_j log d_j`; minimal exactly when `d` is uniform.
    #[default]
    UniformTarget,
    /// `Σ_j log d_j` taken literally. Its minimiser is a one-hot `d` and its
    /// value is negative; kept only for comparison runs.
    LiteralSum,
}

fn clamped_ln(p: f64) -> f64 {
    libm::log(p.clamp(PROB_FLOOR, PROB_CEIL))
}

fn check_probabilities(p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    let valid = !p.is_empty()
        && p.iter().all(|v| v.is_finite() && (-1e-12..=1.0 + 1e-12).contains(v))
        && (total - 1.0).abs() <= 1e-6;
    if valid {
        Ok(())
    } else {
        Err(Error::InvalidProbability)
    }
}

/// Cross-entropy `-log p[y]` of a posterior against a class index.
pub fn classification_loss(p: &[f64], y: usize) -> Result<f64> {
    check_probabilities(p)?;
    if y >= p.len() {
        return Err(Error::ClassOutOfRange { class: y, classes: p.len() });
    }
    Ok(-clamped_ln(p[y]))
}

/// Cross-entropy of an adversary head's prediction against the nuisance
/// label. Numerically identical to [`classification_loss`]; only the
/// parameters it is allowed to update differ.
pub fn discriminative_loss(d: &[f64], y: usize) -> Result<f64> {
    classification_loss(d, y)
}

pub fn adversarial_loss(d: &[f64], form: AdversarialForm) -> Result<f64> {
    check_probabilities(d)?;
    let log_sum: f64 = d.iter().map(|&v| clamped_ln(v)).sum();
    Ok(match form {
        AdversarialForm::UniformTarget => -log_sum / d.len() as f64,
        AdversarialForm::LiteralSum => log_sum,
    })
}

/// `[‖z_t − z_{t+1}‖² − ‖z_t − z_{t+2}‖² + ε]_+`.
pub fn ordinal_loss(z_t: &[f64], z_t1: &[f64], z_t2: &[f64], margin: f64) -> Result<f64> {
    if z_t.len() != z_t1.len() || z_t.len() != z_t2.len() {
        return Err(Error::Shape {
            op: "ordinal_loss",
            detail: format!("{} / {} / {}", z_t.len(), z_t1.len(), z_t2.len()),
        });
    }
    let sq = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum() };
    let v = sq(z_t, z_t1) - sq(z_t, z_t2) + margin;
    Ok(if v > 0.0 { v } else { 0.0 })
}

/// Rows of one training step.
#[derive(Clone, Debug, Default)]
pub struct Batch {
    /// `[n, input_dim]`.
    pub x: Tensor,
    pub location: Vec<Option<usize>>,
    /// UC labels visible to the learner; `None` for unlabeled rows.
    pub uc: Vec<Option<usize>>,
    /// Time-ordered row ranges, each from a single sequence.
    pub fragments: Vec<Range<usize>>,
    /// Targets for the unlabeled-data term of the baselines.
    pub extra: Vec<Option<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.location.len()
    }

    pub fn is_empty(&self) -> bool {
        self.location.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        for len in [self.location.len(), self.uc.len(), self.extra.len()] {
            if len != n {
                return Err(Error::LengthMismatch { left: n, right: len });
            }
        }
        if self.fragments.iter().any(|f| f.end > n || f.start > f.end) {
            return Err(Error::InvalidConfig("fragment outside batch".into()));
        }
        Ok(())
    }

    /// Consecutive `(t, t+1, t+2)` row triples inside every fragment.
    pub fn triples(&self) -> Vec<[usize; 3]> {
        self.fragments
            .iter()
            .flat_map(|f| (f.start..f.end.saturating_sub(2)).map(|t| [t, t + 1, t + 2]))
            .collect()
    }
}

/// Which terms enter a loss graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Terms {
    pub uc_class: bool,
    pub loc_class: bool,
    pub discriminative: bool,
    pub adversarial: bool,
    pub order: bool,
    pub extra: bool,
}

impl Terms {
    pub const NONE: Terms = Terms {
        uc_class: false,
        loc_class: false,
        discriminative: false,
        adversarial: false,
        order: false,
        extra: false,
    };
    pub const ALL: Terms = Terms {
        uc_class: true,
        loc_class: true,
        discriminative: true,
        adversarial: true,
        order: true,
        extra: true,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub terms: Terms,
    pub weights: LossWeights,
    pub adversarial_form: AdversarialForm,
    /// Weight of the unlabeled-data term.
    pub extra_weight: f64,
    /// Denominator of the unlabeled-data mean; defaults to the number of
    /// rows carrying an extra target.
    pub extra_denominator: Option<usize>,
}

impl LossSpec {
    pub fn new(terms: Terms, weights: LossWeights) -> Self {
        LossSpec {
            terms,
            weights,
            adversarial_form: AdversarialForm::default(),
            extra_weight: 1.0,
            extra_denominator: None,
        }
    }
}

/// One loss term and the number of samples (or triples) it averages over.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Term {
    pub value: f64,
    pub count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBundle {
    pub c_u: Term,
    pub c_loc: Term,
    pub d_u: Term,
    pub d_loc: Term,
    pub adv_u: Term,
    pub adv_loc: Term,
    pub seq: Term,
    /// Pseudo-label / consistency term of the baselines.
    pub unlabeled: Term,
}

impl LossBundle {
    pub fn terms(&self) -> [(&'static str, Term); 8] {
        [
            ("c_u", self.c_u),
            ("c_loc", self.c_loc),
            ("d_u", self.d_u),
            ("d_loc", self.d_loc),
            ("adv_u", self.adv_u),
            ("adv_loc", self.adv_loc),
            ("seq", self.seq),
            ("unlabeled", self.unlabeled),
        ]
    }

    fn terms_mut(&mut self) -> [&mut Term; 8] {
        [
            &mut self.c_u,
            &mut self.c_loc,
            &mut self.d_u,
            &mut self.d_loc,
            &mut self.adv_u,
            &mut self.adv_loc,
            &mut self.seq,
            &mut self.unlabeled,
        ]
    }
}

/// Count-weighted running mean of [`LossBundle`]s, accumulated in call
/// order.
#[derive(Clone, Debug, Default)]
pub struct LossAccumulator {
    sums: [f64; 8],
    counts: [usize; 8],
}

impl LossAccumulator {
    pub fn add(&mut self, bundle: &LossBundle) {
        for (k, (_, term)) in bundle.terms().into_iter().enumerate() {
            self.sums[k] += term.value * term.count as f64;
            self.counts[k] += term.count;
        }
    }

    pub fn mean(&self) -> LossBundle {
        let mut out = LossBundle::default();
        for (k, term) in out.terms_mut().into_iter().enumerate() {
            if self.counts[k] > 0 {
                *term = Term { value: self.sums[k] / self.counts[k] as f64, count: self.counts[k] };
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct TermNode {
    node: Option<NodeId>,
    count: usize,
}

/// A batch's losses as a differentiable graph.
#[derive(Clone, Debug)]
pub struct LossGraph {
    pub graph: Graph,
    pub leaves: ParamLeaves,
    x: NodeId,
    constants: Vec<(NodeId, Tensor)>,
    nodes: [TermNode; 8],
    /// Weighted sum of every enabled term that has contributors.
    pub objective: Option<NodeId>,
}

struct Builder<'c> {
    g: Graph,
    constants: Vec<(NodeId, Tensor)>,
    n: usize,
    config: &'c NetworkConfig,
}

impl Builder<'_> {
    fn constant(&mut self, t: Tensor) -> NodeId {
        let id = self.g.input();
        self.constants.push((id, t));
        id
    }

    /// `scale * Σ_r Σ_j weight[r][j] · log probs[r][j]` over selected rows.
    fn weighted_log_sum(&mut self, probs: NodeId, weights: Tensor, scale: f64) -> NodeId {
        let w = self.constant(weights);
        let lp = self.g.log(probs);
        let m = self.g.mul(lp, w);
        let s = self.g.sum(m);
        self.g.scale(s, scale)
    }

    /// Mean cross-entropy over rows that carry a target.
    fn masked_ce(&mut self, probs: NodeId, targets: &[Option<usize>], k: usize, denom: Option<usize>) -> Result<TermNode> {
        let count = targets.iter().filter(|t| t.is_some()).count();
        if count == 0 {
            return Ok(TermNode::default());
        }
        let mut y = vec![0.0; self.n * k];
        for (r, t) in targets.iter().enumerate() {
            if let Some(c) = *t {
                if c >= k {
                    return Err(Error::ClassOutOfRange { class: c, classes: k });
                }
                y[r * k + c] = 1.0;
            }
        }
        let denom = denom.unwrap_or(count).max(1);
        let y = Tensor::matrix(self.n, k, y)?;
        Ok(TermNode { node: Some(self.weighted_log_sum(probs, y, -1.0 / denom as f64)), count })
    }

    fn masked_adversarial(&mut self, probs: NodeId, mask: &[bool], k: usize, form: AdversarialForm) -> Result<TermNode> {
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Ok(TermNode::default());
        }
        let (fill, scale) = match form {
            AdversarialForm::UniformTarget => (1.0 / k as f64, -1.0 / count as f64),
            AdversarialForm::LiteralSum => (1.0, 1.0 / count as f64),
        };
        let mut w = vec![0.0; self.n * k];
        for (r, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            w[r * k..(r + 1) * k].iter_mut().for_each(|v| *v = fill);
        }
        let w = Tensor::matrix(self.n, k, w)?;
        Ok(TermNode { node: Some(self.weighted_log_sum(probs, w, scale)), count })
    }

    fn ordinal(&mut self, z: NodeId, triples: &[[usize; 3]], margin: f64) -> Result<TermNode> {
        if triples.is_empty() {
            return Ok(TermNode::default());
        }
        let m = triples.len();
        let mut pick = |slot: usize| -> Result<NodeId> {
            let mut s = vec![0.0; m * self.n];
            for (i, tr) in triples.iter().enumerate() {
                s[i * self.n + tr[slot]] = 1.0;
            }
            let sel = self.constant(Tensor::matrix(m, self.n, s)?);
            Ok(self.g.matmul(sel, z))
        };
        let anchor = pick(0)?;
        let near = pick(1)?;
        let far = pick(2)?;
        let d_near = self.g.sq_dist(anchor, near);
        let d_far = self.g.sq_dist(anchor, far);
        let diff = self.g.sub(d_near, d_far);
        let eps = self.constant(Tensor::filled(&[m], margin));
        let shifted = self.g.add(diff, eps);
        let h = self.g.hinge(shifted);
        Ok(TermNode { node: Some(self.g.mean(h)), count: m })
    }
}

const C_U: usize = 0;
const C_LOC: usize = 1;
const D_U: usize = 2;
const D_LOC: usize = 3;
const ADV_U: usize = 4;
const ADV_LOC: usize = 5;
const SEQ: usize = 6;
const EXTRA: usize = 7;

impl LossGraph {
    pub fn build(config: &NetworkConfig, batch: &Batch, spec: &LossSpec) -> Result<LossGraph> {
        batch.validate()?;
        spec.weights.validate()?;
        if batch.x.cols() != config.input_dim {
            return Err(Error::Shape {
                op: "loss_graph",
                detail: format!("batch width {} for input_dim {}", batch.x.cols(), config.input_dim),
            });
        }
        let t = spec.terms;
        let needs_loc_labels = t.loc_class || t.discriminative || t.adversarial;
        if needs_loc_labels && batch.location.iter().all(Option::is_none) {
            return Err(Error::NoLocationLabels);
        }

        let heads = Heads {
            uc: t.uc_class || t.extra || t.order,
            loc: t.loc_class,
            disc: t.discriminative || t.adversarial,
        };
        let mut b = Builder { g: Graph::new(), constants: Vec::new(), n: batch.len(), config };
        let x = b.g.input();
        let (leaves, out) = build_forward(&mut b.g, config, x, heads);
        let mut nodes = [TermNode::default(); 8];
        let (k_u, k_loc) = (b.config.uc_classes, b.config.loc_classes);
        let uc_mask: Vec<bool> = batch.uc.iter().map(Option::is_some).collect();
        let loc_mask: Vec<bool> = batch.location.iter().map(Option::is_some).collect();

        if t.uc_class {
            nodes[C_U] = b.masked_ce(out.p_u.unwrap(), &batch.uc, k_u, None)?;
        }
        if t.loc_class {
            nodes[C_LOC] = b.masked_ce(out.p_loc.unwrap(), &batch.location, k_loc, None)?;
        }
        if t.discriminative {
            nodes[D_U] = b.masked_ce(out.d_u.unwrap(), &batch.uc, k_u, None)?;
            nodes[D_LOC] = b.masked_ce(out.d_loc.unwrap(), &batch.location, k_loc, None)?;
        }
        if t.adversarial {
            let form = spec.adversarial_form;
            nodes[ADV_U] = b.masked_adversarial(out.d_u.unwrap(), &uc_mask, k_u, form)?;
            nodes[ADV_LOC] = b.masked_adversarial(out.d_loc.unwrap(), &loc_mask, k_loc, form)?;
        }
        if t.order {
            let z = out.z_u.expect("order term builds the UC branch");
            nodes[SEQ] = b.ordinal(z, &batch.triples(), spec.weights.margin)?;
        }
        if t.extra {
            nodes[EXTRA] = b.masked_ce(out.p_u.unwrap(), &batch.extra, k_u, spec.extra_denominator)?;
        }

        let weights = [
            1.0,
            1.0,
            1.0,
            1.0,
            spec.weights.adversarial,
            spec.weights.adversarial,
            spec.weights.order,
            spec.extra_weight,
        ];
        let mut objective: Option<NodeId> = None;
        for (term, w) in nodes.iter().zip(weights) {
            let Some(node) = term.node else { continue };
            if w == 0.0 {
                continue;
            }
            let scaled = if w == 1.0 { node } else { b.g.scale(node, w) };
            objective = Some(match objective {
                Some(acc) => b.g.add(acc, scaled),
                None => scaled,
            });
        }

        Ok(LossGraph { graph: b.g, leaves, x, constants: b.constants, nodes, objective })
    }

    pub fn bindings<'a>(&'a self, params: &'a ParamSet, batch: &'a Batch) -> Bindings<'a> {
        let mut b = Bindings::new();
        b.bind_ref(self.x, &batch.x);
        for (id, t) in &self.constants {
            b.bind_ref(*id, t);
        }
        self.leaves.bind(params, &mut b);
        b
    }

    pub fn bundle(&self, values: &Values<'_>) -> LossBundle {
        let read = |k: usize| {
            let t = self.nodes[k];
            match t.node {
                Some(n) => Term { value: values.scalar(n).unwrap_or(0.0), count: t.count },
                None => Term::default(),
            }
        };
        LossBundle {
            c_u: read(C_U),
            c_loc: read(C_LOC),
            d_u: read(D_U),
            d_loc: read(D_LOC),
            adv_u: read(ADV_U),
            adv_loc: read(ADV_LOC),
            seq: read(SEQ),
            unlabeled: read(EXTRA),
        }
    }
}

/// Every loss term of a batch under `params`.
pub fn batch_losses(params: &ParamSet, batch: &Batch, weights: &LossWeights) -> Result<LossBundle> {
    let spec = LossSpec::new(Terms { extra: false, ..Terms::ALL }, *weights);
    let lg = LossGraph::build(params.config(), batch, &spec)?;
    let b = lg.bindings(params, batch);
    let v = evaluate(&lg.graph, &b)?;
    Ok(lg.bundle(&v))
}
