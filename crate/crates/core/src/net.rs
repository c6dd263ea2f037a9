//! The disentangling network: a shared encoder feeding a UC branch and a
//! location branch, each with a classification head, plus two adversary
//! heads wired across the branches (`D_loc` reads `z_u`, `D_u` reads
//! `z_loc`).
//!
//! ```text
//!            ┌── B_u ──► z_u ──┬── C_u   ──► p_u
//!  x ── E ───┤                 └── D_loc ──► d_loc
//!            └── B_loc ► z_loc ┬── C_loc ──► p_loc
//!                              └── D_u   ──► d_u
//! ```

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{evaluate, Bindings, Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// The seven disjoint parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Group {
    Encoder,
    UcBranch,
    LocBranch,
    UcHead,
    LocHead,
    UcDisc,
    LocDisc,
}

impl Group {
    pub const ALL: [Group; 7] = [
        Group::Encoder,
        Group::UcBranch,
        Group::LocBranch,
        Group::UcHead,
        Group::LocHead,
        Group::UcDisc,
        Group::LocDisc,
    ];

    /// Groups updated by the adversary step.
    pub const DISCRIMINATORS: [Group; 2] = [Group::UcDisc, Group::LocDisc];

    /// Groups updated by the main step.
    pub const MAIN: [Group; 5] = [
        Group::Encoder,
        Group::UcBranch,
        Group::LocBranch,
        Group::UcHead,
        Group::LocHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Group::Encoder => "E",
            Group::UcBranch => "B_u",
            Group::LocBranch => "B_loc",
            Group::UcHead => "C_u",
            Group::LocHead => "C_loc",
            Group::UcDisc => "D_u",
            Group::LocDisc => "D_loc",
        }
    }

    pub fn parse(name: &str) -> Result<Group> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == name)
            .ok_or_else(|| Error::UnknownGroup(name.to_string()))
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub branch_widths: Vec<usize>,
    pub z_dim: usize,
    pub uc_classes: usize,
    pub loc_classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            input_dim: 32,
            encoder_widths: vec![64],
            branch_widths: vec![32],
            z_dim: 16,
            uc_classes: 2,
            loc_classes: 3,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        let widths = [self.input_dim, self.z_dim, self.uc_classes, self.loc_classes];
        if widths.iter().chain(&self.encoder_widths).chain(&self.branch_widths).any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }

    fn encoder_out(&self) -> usize {
        self.encoder_widths.last().copied().unwrap_or(self.input_dim)
    }

    /// `(fan_in, fan_out)` for each affine layer of a group.
    pub fn layer_dims(&self, group: Group) -> Vec<(usize, usize)> {
        let chain = |start: usize, widths: &[usize]| {
            let mut dims = Vec::new();
            let mut prev = start;
            for &w in widths {
                dims.push((prev, w));
                prev = w;
            }
            dims
        };
        match group {
            Group::Encoder => chain(self.input_dim, &self.encoder_widths),
            Group::UcBranch | Group::LocBranch => {
                let mut widths = self.branch_widths.clone();
                widths.push(self.z_dim);
                chain(self.encoder_out(), &widths)
            }
            Group::UcHead | Group::UcDisc => vec![(self.z_dim, self.uc_classes)],
            Group::LocHead | Group::LocDisc => vec![(self.z_dim, self.loc_classes)],
        }
    }
}

/// Identifies one tensor in a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamRef {
    pub group: Group,
    pub index: usize,
}

/// All trainable tensors, grouped. Each group stores `[W0, b0, W1, b1, ..]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    config: NetworkConfig,
    groups: [Vec<Tensor>; 7],
}

impl ParamSet {
    /// Fan-in scaled uniform weights (`U(-a, a)`, `a = sqrt(6 / fan_in)`),
    /// zero biases.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<ParamSet> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups = Group::ALL.map(|group| {
            let mut tensors = Vec::new();
            for (fan_in, fan_out) in config.layer_dims(group) {
                let limit = libm::sqrt(6.0 / fan_in as f64);
                let w = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                tensors.push(Tensor::new(vec![fan_in, fan_out], w).expect("sized above"));
                tensors.push(Tensor::zeros(&[fan_out]));
            }
            tensors
        });
        Ok(ParamSet { config: config.clone(), groups })
    }

    /// Rebuilds a parameter set from stored tensors, checking every shape.
    pub fn from_groups(config: NetworkConfig, groups: [Vec<Tensor>; 7]) -> Result<ParamSet> {
        config.validate()?;
        for group in Group::ALL {
            let tensors = &groups[group.slot()];
            let dims = config.layer_dims(group);
            if tensors.len() != 2 * dims.len() {
                return Err(Error::InvalidConfig(format!(
                    "group {group} has {} tensors, expected {}",
                    tensors.len(),
                    2 * dims.len()
                )));
            }
            for (l, (i, o)) in dims.into_iter().enumerate() {
                if tensors[2 * l].shape() != [i, o] || tensors[2 * l + 1].shape() != [o] {
                    return Err(Error::InvalidConfig(format!("group {group} layer {l} shape")));
                }
            }
        }
        Ok(ParamSet { config, groups })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn group(&self, group: Group) -> &[Tensor] {
        &self.groups[group.slot()]
    }

    pub fn group_mut(&mut self, group: Group) -> &mut [Tensor] {
        &mut self.groups[group.slot()]
    }

    pub fn get(&self, r: ParamRef) -> &Tensor {
        &self.groups[r.group.slot()][r.index]
    }

    pub fn get_mut(&mut self, r: ParamRef) -> &mut Tensor {
        &mut self.groups[r.group.slot()][r.index]
    }

    /// Every tensor reference belonging to the named groups, without
    /// duplicates, in group order.
    pub fn group_params(&self, names: &[&str]) -> Result<Vec<ParamRef>> {
        let mut groups = names.iter().map(|n| Group::parse(n)).collect::<Result<Vec<_>>>()?;
        groups.sort();
        groups.dedup();
        Ok(groups
            .into_iter()
            .flat_map(|group| (0..self.group(group).len()).map(move |index| ParamRef { group, index }))
            .collect())
    }

    pub fn all_params(&self) -> Vec<ParamRef> {
        Group::ALL
            .into_iter()
            .flat_map(|group| (0..self.group(group).len()).map(move |index| ParamRef { group, index }))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.groups.iter().flatten().map(Tensor::len).sum()
    }

    /// Bitwise equality of one group between two snapshots.
    pub fn group_bit_eq(&self, other: &ParamSet, group: Group) -> bool {
        let (a, b) = (self.group(group), other.group(group));
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.bit_eq(y))
    }
}

/// Which parts of the network a graph needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heads {
    pub uc: bool,
    pub loc: bool,
    pub disc: bool,
}

impl Heads {
    pub const ALL: Heads = Heads { uc: true, loc: true, disc: true };
    pub const UC_ONLY: Heads = Heads { uc: true, loc: false, disc: false };
}

/// Graph leaves created for each parameter tensor.
#[derive(Clone, Debug, Default)]
pub struct ParamLeaves {
    by_ref: BTreeMap<ParamRef, NodeId>,
}

impl ParamLeaves {
    pub fn leaf(&self, r: ParamRef) -> Option<NodeId> {
        self.by_ref.get(&r).copied()
    }

    pub fn lookup(&self, node: NodeId) -> Option<ParamRef> {
        self.by_ref.iter().find(|(_, &n)| n == node).map(|(r, _)| *r)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamRef, NodeId)> + '_ {
        self.by_ref.iter().map(|(r, n)| (*r, *n))
    }

    /// Leaves of the requested groups that exist in this graph.
    pub fn leaves_for(&self, groups: &[Group]) -> Vec<NodeId> {
        self.by_ref
            .iter()
            .filter(|(r, _)| groups.contains(&r.group))
            .map(|(_, n)| *n)
            .collect()
    }

    pub fn bind<'a>(&self, params: &'a ParamSet, bindings: &mut Bindings<'a>) {
        for (r, node) in &self.by_ref {
            bindings.bind_ref(*node, params.get(*r));
        }
    }
}

/// Node ids of the network outputs inside a graph.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardNodes {
    pub z_u: Option<NodeId>,
    pub z_loc: Option<NodeId>,
    pub p_u: Option<NodeId>,
    pub p_loc: Option<NodeId>,
    pub d_u: Option<NodeId>,
    pub d_loc: Option<NodeId>,
}

fn mlp(
    g: &mut Graph,
    leaves: &mut ParamLeaves,
    config: &NetworkConfig,
    group: Group,
    input: NodeId,
    relu_last: bool,
) -> NodeId {
    let layers = config.layer_dims(group).len();
    let mut h = input;
    for l in 0..layers {
        let w = g.param();
        let b = g.param();
        leaves.by_ref.insert(ParamRef { group, index: 2 * l }, w);
        leaves.by_ref.insert(ParamRef { group, index: 2 * l + 1 }, b);
        h = g.affine(h, w, b);
        if l + 1 < layers || relu_last {
            h = g.relu(h);
        }
    }
    h
}

/// Appends the network to `g`, reading input rows from `x`.
pub fn build_forward(
    g: &mut Graph,
    config: &NetworkConfig,
    x: NodeId,
    heads: Heads,
) -> (ParamLeaves, ForwardNodes) {
    let mut leaves = ParamLeaves::default();
    let mut out = ForwardNodes::default();
    let h = mlp(g, &mut leaves, config, Group::Encoder, x, true);
    let need_u = heads.uc || heads.disc;
    let need_loc = heads.loc || heads.disc;
    if need_u {
        out.z_u = Some(mlp(g, &mut leaves, config, Group::UcBranch, h, true));
    }
    if need_loc {
        out.z_loc = Some(mlp(g, &mut leaves, config, Group::LocBranch, h, true));
    }
    let mut head = |g: &mut Graph, group: Group, z: Option<NodeId>| {
        let logits = mlp(g, &mut leaves, config, group, z.expect("branch built"), false);
        Some(g.softmax(logits))
    };
    if heads.uc {
        out.p_u = head(g, Group::UcHead, out.z_u);
    }
    if heads.loc {
        out.p_loc = head(g, Group::LocHead, out.z_loc);
    }
    if heads.disc {
        out.d_loc = head(g, Group::LocDisc, out.z_u);
        out.d_u = head(g, Group::UcDisc, out.z_loc);
    }
    (leaves, out)
}

/// Network outputs for one input vector or a `[n, input_dim]` batch.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutputs {
    pub z_u: Tensor,
    pub z_loc: Tensor,
    pub p_u: Tensor,
    pub p_loc: Tensor,
    pub d_u: Tensor,
    pub d_loc: Tensor,
}

fn check_input(params: &ParamSet, x: &Tensor) -> Result<()> {
    let d = params.config.input_dim;
    let ok = match x.shape() {
        [n] => *n == d,
        [_, n] => *n == d,
        _ => false,
    };
    if !ok {
        return Err(Error::Shape {
            op: "forward",
            detail: format!("input {:?} for input_dim {d}", x.shape()),
        });
    }
    Ok(())
}

pub fn forward(params: &ParamSet, x: &Tensor) -> Result<ForwardOutputs> {
    check_input(params, x)?;
    let mut g = Graph::new();
    let xi = g.input();
    let (leaves, nodes) = build_forward(&mut g, &params.config, xi, Heads::ALL);
    let mut b = Bindings::new();
    b.bind_ref(xi, x);
    leaves.bind(params, &mut b);
    let v = evaluate(&g, &b)?;
    let take = |n: Option<NodeId>| v.get(n.expect("all heads built")).clone();
    Ok(ForwardOutputs {
        z_u: take(nodes.z_u),
        z_loc: take(nodes.z_loc),
        p_u: take(nodes.p_u),
        p_loc: take(nodes.p_loc),
        d_u: take(nodes.d_u),
        d_loc: take(nodes.d_loc),
    })
}

/// UC posteriors `[n, K_u]` for a batch, skipping every unused branch.
pub fn predict_uc(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    check_input(params, x)?;
    let mut g = Graph::new();
    let xi = g.input();
    let (leaves, nodes) = build_forward(&mut g, &params.config, xi, Heads::UC_ONLY);
    let mut b = Bindings::new();
    b.bind_ref(xi, x);
    leaves.bind(params, &mut b);
    let v = evaluate(&g, &b)?;
    Ok(v.get(nodes.p_u.expect("uc head built")).clone())
}

/// The UC feature `z_u` for a batch.
pub fn embed_uc(params: &ParamSet, x: &Tensor) -> Result<Tensor> {
    check_input(params, x)?;
    let mut g = Graph::new();
    let xi = g.input();
    let mut leaves = ParamLeaves::default();
    let h = mlp(&mut g, &mut leaves, &params.config, Group::Encoder, xi, true);
    let z = mlp(&mut g, &mut leaves, &params.config, Group::UcBranch, h, true);
    let mut b = Bindings::new();
    b.bind_ref(xi, x);
    leaves.bind(params, &mut b);
    let v = evaluate(&g, &b)?;
    Ok(v.get(z).clone())
}
