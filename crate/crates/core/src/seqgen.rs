//! Synthetic sequence benchmark.
//!
//! Each sequence walks through three locations in order (right colon, left
//! colon, rectum). The location dominates appearance: feature vectors sit
//! around one of three well separated means. The UC state follows a two-state
//! Markov chain, so it comes in contiguous runs, and adds a weaker "texture"
//! offset along a direction orthogonal to the location axis. The texture
//! polarity depends on the location, so a single linear read-out of the raw
//! features cannot recover UC well while a location-aware model can.
//!
//! Features are rounded to [`FEATURE_DECIMALS`] decimals at generation time,
//! which makes the decimal text format lossless.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::ops::Range;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Decimal places kept for every feature value.
pub const FEATURE_DECIMALS: i32 = 6;
const FRAME_SEED: u64 = 0x6f72_6469_735f_6672;
const SPLIT_SALT: u64 = 0x5350_4c49_5400_0001;
const MASK_SALT: u64 = 0x4d41_534b_0000_0002;

pub const LOCATION_NAMES: [&str; 3] = ["right colon", "left colon", "rectum"];

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub n_sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub input_dim: usize,
    /// Distance between neighbouring location means.
    pub loc_separation: f64,
    /// Magnitude of the UC texture offset.
    pub uc_signal: f64,
    /// Standard deviation of the isotropic observation noise.
    pub noise: f64,
    /// Peak-to-peak amplitude of the within-segment drift.
    pub drift: f64,
    /// Sets the mean UC run length to `1 / (1 - uc_persistence)`.
    pub uc_persistence: f64,
    /// Stationary probability of the UC-positive state.
    pub uc_prior: f64,
    /// Sign (and scale) of the texture offset in each location.
    pub texture_polarity: [f64; 3],
    /// Record fractions for train / validation / test.
    pub split: [f64; 3],
    pub labeled_ratio: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n_sequences: 120,
            min_len: 20,
            max_len: 40,
            input_dim: 32,
            loc_separation: 4.0,
            uc_signal: 4.0,
            noise: 1.0,
            drift: 1.0,
            uc_persistence: 0.9,
            uc_prior: 0.65,
            texture_polarity: [1.0, -1.0, 1.0],
            split: [0.7, 0.2, 0.1],
            labeled_ratio: 0.1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_sequences == 0 {
            return bad("n_sequences must be >= 1".into());
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!("invalid length bounds {}..={}", self.min_len, self.max_len));
        }
        if self.input_dim < 3 {
            return bad("input_dim must be >= 3".into());
        }
        if !(self.loc_separation > 0.0 && self.noise > 0.0) {
            return bad("loc_separation and noise must be > 0".into());
        }
        if !(self.uc_signal >= 0.0 && self.drift >= 0.0) {
            return bad("uc_signal and drift must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.uc_persistence) || !(0.0..=1.0).contains(&self.uc_prior) {
            return bad("uc_persistence and uc_prior must lie in [0, 1]".into());
        }
        let (leave_pos, leave_neg) = self.transition_probs();
        if leave_pos > 1.0 || leave_neg > 1.0 {
            return bad(format!(
                "uc_persistence {} is too low for uc_prior {}",
                self.uc_persistence, self.uc_prior
            ));
        }
        if self.texture_polarity.iter().any(|v| !v.is_finite()) {
            return bad("texture_polarity must be finite".into());
        }
        check_ratios(&self.split)?;
        check_labeled_ratio(self.labeled_ratio)?;
        Ok(())
    }

    /// `(P(1 → 0), P(0 → 1))` of the UC chain.
    ///
    /// With `c = (1 − ρ) / (2π(1 − π))` the chain leaves the positive state
    /// with probability `c(1 − π)` and the negative one with `cπ`. Its
    /// stationary positive share is `π`, and since positive and negative
    /// runs alternate the mean run length is `1 / (2cπ(1 − π)) = 1 / (1 − ρ)`.
    pub fn transition_probs(&self) -> (f64, f64) {
        let (rho, pi) = (self.uc_persistence, self.uc_prior);
        if pi <= 0.0 || pi >= 1.0 {
            return (0.0, 0.0);
        }
        let c = (1.0 - rho) / (2.0 * pi * (1.0 - pi));
        (c * (1.0 - pi), c * pi)
    }

    /// Stable textual form used for hashing and echoing.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "n_sequences={};min_len={};max_len={};input_dim={};loc_separation={:?};uc_signal={:?};\
             noise={:?};drift={:?};uc_persistence={:?};uc_prior={:?};texture_polarity={:?};\
             split={:?};labeled_ratio={:?}",
            self.n_sequences,
            self.min_len,
            self.max_len,
            self.input_dim,
            self.loc_separation,
            self.uc_signal,
            self.noise,
            self.drift,
            self.uc_persistence,
            self.uc_prior,
            self.texture_polarity,
            self.split,
            self.labeled_ratio
        );
        s
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes())[..8])
    }
}

fn check_ratios(ratios: &[f64; 3]) -> Result<()> {
    let total: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(*r >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!("split ratios {ratios:?} must be >= 0 and sum to 1")));
    }
    Ok(())
}

fn check_labeled_ratio(r: f64) -> Result<()> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::InvalidConfig(format!("labeled ratio {r} outside (0, 1]")));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// One observation `x_i^t`.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRecord {
    pub sequence_id: u32,
    pub t: u32,
    /// 0 = right colon, 1 = left colon, 2 = rectum.
    pub location: u8,
    /// Ground-truth UC state; visibility during training is decided by the
    /// manifest's labeled set.
    pub uc: Option<u8>,
    pub features: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|v| v.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub lengths: Vec<usize>,
    /// Split of each sequence, indexed by sequence id.
    pub splits: Vec<Split>,
    /// `(sequence_id, t)` pairs whose UC label is visible, sorted.
    pub labeled: Vec<(u32, u32)>,
    pub labeled_ratio: f64,
    pub seed: u64,
    pub config_hash: String,
    pub records_hash: String,
}

impl DatasetManifest {
    pub fn n_sequences(&self) -> usize {
        self.lengths.len()
    }

    pub fn record_count(&self) -> usize {
        self.lengths.iter().sum()
    }

    pub fn split_record_count(&self, split: Split) -> usize {
        self.lengths.iter().zip(&self.splits).filter(|(_, s)| **s == split).map(|(l, _)| l).sum()
    }

    fn train_records(&self) -> Vec<(u32, u32)> {
        self.lengths
            .iter()
            .zip(&self.splits)
            .enumerate()
            .filter(|(_, (_, s))| **s == Split::Train)
            .flat_map(|(i, (&len, _))| (0..len as u32).map(move |t| (i as u32, t)))
            .collect()
    }
}

/// Records (sorted by sequence then time) together with their manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub records: Vec<SequenceRecord>,
    pub manifest: DatasetManifest,
}

/// Digest of the record stream, covering ids, labels and exact feature bits.
pub fn records_hash(records: &[SequenceRecord]) -> String {
    let mut h = Sha256::new();
    for r in records {
        h.update(r.sequence_id.to_le_bytes());
        h.update(r.t.to_le_bytes());
        h.update([r.location, r.uc.unwrap_or(u8::MAX)]);
        h.update((r.features.len() as u32).to_le_bytes());
        for v in &r.features {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Three fixed orthonormal directions: location axis, texture, drift.
fn frame(dim: usize) -> [Vec<f64>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(FRAME_SEED ^ dim as u64);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(3);
    while basis.len() < 3 {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut it = basis.into_iter();
    [it.next().unwrap(), it.next().unwrap(), it.next().unwrap()]
}

fn quantize(v: f64) -> f64 {
    let scale = libm::pow(10.0, FEATURE_DECIMALS as f64);
    libm::round(v * scale) / scale
}

/// Location labels for a sequence: three contiguous, non-empty segments.
fn location_track(len: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    if len < 3 {
        return (0..len as u8).collect();
    }
    let mut cuts = index::sample(rng, len - 1, 2).into_vec();
    cuts.sort_unstable();
    let (a, b) = (cuts[0] + 1, cuts[1] + 1);
    (0..len).map(|t| if t < a { 0 } else if t < b { 1 } else { 2 }).collect()
}

fn uc_track(len: usize, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let (leave_pos, leave_neg) = config.transition_probs();
    let mut state = rng.random_bool(config.uc_prior);
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            let leave = if state { leave_pos } else { leave_neg };
            if rng.random_bool(leave) {
                state = !state;
            }
        }
        out.push(state as u8);
    }
    out
}

fn generate_sequence(
    id: u32,
    config: &GeneratorConfig,
    axes: &[Vec<f64>; 3],
    seed: u64,
) -> Vec<SequenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64 + 1);
    let len = rng.random_range(config.min_len..=config.max_len);
    let locations = location_track(len, &mut rng);
    let uc = uc_track(len, config, &mut rng);
    let [loc_axis, texture, drift_axis] = axes;

    let mut records = Vec::with_capacity(len);
    for t in 0..len {
        let noise: Vec<f64> = (0..config.input_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let l = locations[t];
        let seg_start = locations.iter().position(|&v| v == l).unwrap();
        let seg_len = locations.iter().filter(|&&v| v == l).count();
        let pos = if seg_len > 1 { (t - seg_start) as f64 / (seg_len - 1) as f64 - 0.5 } else { 0.0 };
        let offset = (l as f64 - 1.0) * config.loc_separation;
        let tex = uc[t] as f64 * config.uc_signal * config.texture_polarity[l as usize];
        let features = (0..config.input_dim)
            .map(|k| {
                quantize(
                    offset * loc_axis[k]
                        + config.drift * pos * drift_axis[k]
                        + tex * texture[k]
                        + config.noise * noise[k],
                )
            })
            .collect();
        records.push(SequenceRecord {
            sequence_id: id,
            t: t as u32,
            location: l,
            uc: Some(uc[t]),
            features,
        });
    }
    records
}

/// Generates records, splits sequences and masks UC labels, all from `seed`.
pub fn generate(config: &GeneratorConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let axes = frame(config.input_dim);
    let records: Vec<SequenceRecord> = (0..config.n_sequences as u32)
        .flat_map(|id| generate_sequence(id, config, &axes, seed))
        .collect();
    let mut lengths = vec![0; config.n_sequences];
    for r in &records {
        lengths[r.sequence_id as usize] += 1;
    }
    let manifest = DatasetManifest {
        splits: vec![Split::Train; lengths.len()],
        lengths,
        labeled: Vec::new(),
        labeled_ratio: config.labeled_ratio,
        seed,
        config_hash: config.hash(),
        records_hash: records_hash(&records),
    };
    let manifest = split_by_sequence(&manifest, config.split, seed ^ SPLIT_SALT)?;
    let manifest = mask_labels(&manifest, config.labeled_ratio, seed ^ MASK_SALT)?;
    Ok(Dataset { records, manifest })
}

/// Assigns whole sequences to train / validation / test so that record
/// counts approximate `ratios`.
pub fn split_by_sequence(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<DatasetManifest> {
    check_ratios(&ratios)?;
    let n = manifest.n_sequences();
    let wanted = ratios.iter().filter(|&&r| r > 0.0).count();
    if n < wanted {
        return Err(Error::InvalidConfig(format!("{n} sequences cannot fill {wanted} splits")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = manifest.record_count() as f64;
    let cut_train = ratios[0] * total;
    let cut_val = (ratios[0] + ratios[1]) * total;
    let mut splits = vec![Split::Train; n];
    let mut acc = 0.0;
    for &seq in &order {
        splits[seq] = if acc < cut_train && ratios[0] > 0.0 {
            Split::Train
        } else if acc < cut_val && ratios[1] > 0.0 {
            Split::Val
        } else if ratios[2] > 0.0 {
            Split::Test
        } else if ratios[1] > 0.0 {
            Split::Val
        } else {
            Split::Train
        };
        acc += manifest.lengths[seq] as f64;
    }
    // Every split with a positive ratio gets at least one sequence, taken
    // from the back of the shuffled order of a split that can spare one.
    for (k, split) in Split::ALL.into_iter().enumerate() {
        if ratios[k] > 0.0 && !splits.contains(&split) {
            let donor = order.iter().rev().copied().find(|&s| {
                let from = splits[s];
                splits.iter().filter(|&&v| v == from).count() > 1
            });
            if let Some(s) = donor {
                splits[s] = split;
            }
        }
    }
    Ok(DatasetManifest { splits, labeled: Vec::new(), ..manifest.clone() })
}

/// Uniformly picks `floor(R · |train|)` train records whose UC label stays
/// visible.
pub fn mask_labels(manifest: &DatasetManifest, ratio: f64, seed: u64) -> Result<DatasetManifest> {
    check_labeled_ratio(ratio)?;
    let train = manifest.train_records();
    let k = libm::floor(ratio * train.len() as f64 + 1e-9) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labeled: Vec<(u32, u32)> = index::sample(&mut rng, train.len(), k.min(train.len()))
        .into_iter()
        .map(|i| train[i])
        .collect();
    labeled.sort_unstable();
    Ok(DatasetManifest { labeled, labeled_ratio: ratio, ..manifest.clone() })
}

impl Dataset {
    /// Checks the record stream against the manifest's hash and layout.
    pub fn verify(&self) -> Result<()> {
        let hash = records_hash(&self.records);
        if hash != self.manifest.records_hash {
            return Err(Error::Integrity(format!(
                "records hash {hash} does not match manifest {}",
                self.manifest.records_hash
            )));
        }
        let mut expected = Vec::new();
        for (i, &len) in self.manifest.lengths.iter().enumerate() {
            expected.extend((0..len as u32).map(|t| (i as u32, t)));
        }
        let actual = self.records.iter().map(|r| (r.sequence_id, r.t));
        if self.manifest.splits.len() != self.manifest.lengths.len() || !actual.eq(expected) {
            return Err(Error::Integrity("records do not match manifest layout".into()));
        }
        Ok(())
    }

    /// Row range of every sequence inside `records`.
    pub fn sequence_ranges(&self) -> Vec<Range<usize>> {
        let mut start = 0;
        self.manifest
            .lengths
            .iter()
            .map(|&len| {
                let r = start..start + len;
                start += len;
                r
            })
            .collect()
    }

    pub fn sequences_in(&self, split: Split) -> Vec<u32> {
        (0..self.manifest.n_sequences() as u32)
            .filter(|&i| self.manifest.splits[i as usize] == split)
            .collect()
    }

    /// Record indices belonging to a split, in stream order.
    pub fn records_in(&self, split: Split) -> Vec<usize> {
        let ranges = self.sequence_ranges();
        self.sequences_in(split).into_iter().flat_map(|s| ranges[s as usize].clone()).collect()
    }

    pub fn labeled_set(&self) -> BTreeSet<(u32, u32)> {
        self.manifest.labeled.iter().copied().collect()
    }

    /// A copy with a freshly drawn labeled set.
    pub fn with_labeled_ratio(&self, ratio: f64, seed: u64) -> Result<Dataset> {
        Ok(Dataset {
            records: self.records.clone(),
            manifest: mask_labels(&self.manifest, ratio, seed ^ MASK_SALT)?,
        })
    }
}
