//! Comparison and ablation tables, plus per-sequence prediction strips.
//!
//! A table is a list of [`Variant`]s evaluated over a list of seeds. Every
//! (variant, seed) cell is independent: it redraws the labeled set from the
//! seed, trains, and scores the selected parameters on the test split. The
//! std crate runs cells in parallel and feeds them back through
//! [`aggregate`], which sorts before reducing so the output does not depend
//! on completion order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{format_percent, metrics, ConfusionCounts, MetricsReport};
use crate::net::{NetworkConfig, ParamSet};
use crate::probe::{probe_disentanglement, ProbeConfig};
use crate::seqgen::{Dataset, Split};
use crate::trainer::{evaluate_split, predict_labels, train, Method, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub labeled_ratio: f64,
    pub train: TrainConfig,
}

impl Variant {
    pub fn new(name: &str, labeled_ratio: f64, method: Method, base: &TrainConfig) -> Variant {
        Variant { name: name.into(), labeled_ratio, train: TrainConfig { method, ..base.clone() } }
    }

    /// Identifies the work a cell does; equal keys give equal results.
    pub fn cell_key(&self, seed: u64) -> String {
        let mut cfg = self.train.clone();
        cfg.seed = seed;
        format!("{:?}|{:?}", self.labeled_ratio, cfg)
    }
}

/// Supervised at R = 1 and R = `ratio`, then the three semi-supervised
/// methods at `ratio`.
pub fn comparison_variants(base: &TrainConfig, ratio: f64) -> Vec<Variant> {
    alloc::vec![
        Variant::new("supervised", 1.0, Method::Supervised, base),
        Variant::new("supervised", ratio, Method::Supervised, base),
        Variant::new("pseudo_label", ratio, Method::PseudoLabel, base),
        Variant::new("fixmatch_lite", ratio, Method::FixmatchLite, base),
        Variant::new("proposed", ratio, Method::Proposed, base),
    ]
}

/// Baseline, +location, +location+disentangle, +location+disentangle+order.
pub fn ablation_variants(base: &TrainConfig, ratio: f64) -> Vec<Variant> {
    alloc::vec![
        Variant::new("supervised", ratio, Method::Supervised, base),
        Variant::new("location_multitask", ratio, Method::LocationMultitask, base),
        Variant::new("proposed_no_order", ratio, Method::ProposedNoOrder, base),
        Variant::new("proposed", ratio, Method::Proposed, base),
    ]
}

/// The proposed method with the adversarial weight zeroed.
pub fn no_adversarial_control(base: &TrainConfig, ratio: f64) -> Variant {
    let mut v = Variant::new("proposed_no_adversarial", ratio, Method::Proposed, base);
    v.train.weights.adversarial = 0.0;
    v
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub test: ConfusionCounts,
    pub report: MetricsReport,
    /// Validation accuracy at the selected epoch.
    pub val_accuracy: Option<f64>,
    pub selected_epoch: Option<usize>,
    /// Location probe accuracy on `z_u` of the selected parameters.
    pub probe: f64,
    pub routing_violations: usize,
}

pub fn run_cell(dataset: &Dataset, net: &NetworkConfig, variant: &Variant, seed: u64) -> Result<CellResult> {
    let data = dataset.with_labeled_ratio(variant.labeled_ratio, seed)?;
    let config = TrainConfig { seed, ..variant.train.clone() };
    let result = train(&data, net, &config)?;
    let test = evaluate_split(&result.params, &data, Split::Test)?;
    let probe = probe_disentanglement(&result.params, &data, &ProbeConfig::default(), seed)?;
    Ok(CellResult {
        test,
        report: metrics(&test),
        val_accuracy: result.selected_epoch.and_then(|e| result.history[e].validation.accuracy),
        selected_epoch: result.selected_epoch,
        probe,
        routing_violations: result.routing_violations,
    })
}

/// Mean and population standard deviation over the seeds where the value is
/// defined.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Aggregate {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl Aggregate {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Aggregate {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return Aggregate::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Aggregate { mean: Some(mean), std: Some(libm::sqrt(var)) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub labeled_ratio: f64,
    pub seeds: Vec<u64>,
    pub metrics: [Aggregate; 5],
    pub val_accuracy: Aggregate,
    pub probe: Aggregate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub rows: Vec<TableRow>,
}

/// Reduces `(variant index, seed, result)` cells into one row per variant.
pub fn aggregate(variants: &[Variant], cells: &[(usize, u64, CellResult)]) -> Result<Table> {
    let mut sorted: Vec<&(usize, u64, CellResult)> = cells.iter().collect();
    sorted.sort_by_key(|(v, s, _)| (*v, *s));
    if let Some((v, _, _)) = sorted.iter().find(|(v, _, _)| *v >= variants.len()) {
        return Err(Error::InvalidConfig(format!("cell refers to variant {v} of {}", variants.len())));
    }
    let rows = variants
        .iter()
        .enumerate()
        .map(|(i, variant)| {
            let mine: Vec<&CellResult> = sorted.iter().filter(|c| c.0 == i).map(|c| &c.2).collect();
            let metrics = core::array::from_fn(|k| Aggregate::of(mine.iter().map(|c| c.report.values()[k])));
            TableRow {
                name: variant.name.clone(),
                labeled_ratio: variant.labeled_ratio,
                seeds: sorted.iter().filter(|c| c.0 == i).map(|c| c.1).collect(),
                metrics,
                val_accuracy: Aggregate::of(mine.iter().map(|c| c.val_accuracy)),
                probe: Aggregate::of(mine.iter().map(|c| Some(c.probe))),
            }
        })
        .collect();
    Ok(Table { rows })
}

/// Runs every cell in sequence.
pub fn run_table(dataset: &Dataset, net: &NetworkConfig, variants: &[Variant], seeds: &[u64]) -> Result<Table> {
    let mut cells = Vec::with_capacity(variants.len() * seeds.len());
    for (i, v) in variants.iter().enumerate() {
        for &s in seeds {
            cells.push((i, s, run_cell(dataset, net, v, s)?));
        }
    }
    aggregate(variants, &cells)
}

fn csv_value(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl Table {
    pub fn row(&self, name: &str, labeled_ratio: f64) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.name == name && r.labeled_ratio == labeled_ratio)
    }

    /// One line per row: method, R, the five means, then the five standard
    /// deviations. Undefined values are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,R");
        for c in MetricsReport::COLUMNS {
            let _ = write!(s, ",{c}");
        }
        for c in MetricsReport::COLUMNS {
            let _ = write!(s, ",{c}_std");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{},{}", row.name, row.labeled_ratio);
            for a in &row.metrics {
                let _ = write!(s, ",{}", csv_value(a.mean));
            }
            for a in &row.metrics {
                let _ = write!(s, ",{}", csv_value(a.std));
            }
            s.push('\n');
        }
        s
    }

    /// Fixed-width text rendering with `mean ± std` cells.
    pub fn render(&self) -> String {
        let cell = |a: &Aggregate| match (a.mean, a.std) {
            (Some(_), Some(_)) => format!("{} ± {}", format_percent(a.mean), format_percent(a.std)),
            _ => String::from("—"),
        };
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(6).max(6);
        let mut s = format!("{:<name_w$}  {:>4}", "method", "R");
        for c in ["Precision", "Recall", "F1", "Specificity", "Accuracy"] {
            let _ = write!(s, "  {c:>15}");
        }
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:<name_w$}  {:>4}", row.name, format!("{:.1}", row.labeled_ratio));
            for a in &row.metrics {
                let _ = write!(s, "  {:>15}", cell(a));
            }
            s.push('\n');
        }
        s
    }
}

/// Strip colour classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    Uc,
    Normal,
    Unlabeled,
}

impl Mark {
    fn from_label(label: Option<u8>) -> Mark {
        match label {
            Some(1) => Mark::Uc,
            Some(_) => Mark::Normal,
            None => Mark::Unlabeled,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mark::Uc => "uc",
            Mark::Normal => "normal",
            Mark::Unlabeled => "unlabeled",
        }
    }

    pub fn color(self) -> &'static str {
        match self {
            Mark::Uc => "#d62728",
            Mark::Normal => "#1f77b4",
            Mark::Unlabeled => "#9e9e9e",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Strip {
    pub sequence_id: u32,
    pub truth: Vec<Mark>,
    /// Labels visible during training.
    pub given: Vec<Mark>,
    pub with_order: Vec<Mark>,
    pub without_order: Vec<Mark>,
}

impl Strip {
    pub const TRACKS: [&'static str; 4] = ["ground_truth", "training_labels", "with_order", "without_order"];

    pub fn tracks(&self) -> [&[Mark]; 4] {
        [&self.truth, &self.given, &self.with_order, &self.without_order]
    }
}

/// Four aligned tracks per requested sequence.
pub fn sequence_strips(
    dataset: &Dataset,
    with_order: &ParamSet,
    without_order: &ParamSet,
    ids: &[u32],
) -> Result<Vec<Strip>> {
    let ranges = dataset.sequence_ranges();
    let labeled = dataset.labeled_set();
    ids.iter()
        .map(|&id| {
            let range = ranges.get(id as usize).ok_or(Error::UnknownSequence(id))?.clone();
            let rows: Vec<usize> = range.collect();
            let records = rows.iter().map(|&i| &dataset.records[i]);
            let predict = |p: &ParamSet| -> Result<Vec<Mark>> {
                Ok(predict_labels(p, dataset, &rows)?.into_iter().map(|v| Mark::from_label(Some(v))).collect())
            };
            Ok(Strip {
                sequence_id: id,
                truth: records.clone().map(|r| Mark::from_label(r.uc)).collect(),
                given: records
                    .map(|r| {
                        let visible = labeled.contains(&(r.sequence_id, r.t));
                        Mark::from_label(r.uc.filter(|_| visible))
                    })
                    .collect(),
                with_order: predict(with_order)?,
                without_order: predict(without_order)?,
            })
        })
        .collect()
}

pub fn strips_csv(strips: &[Strip]) -> String {
    let mut s = String::from("sequence_id,t");
    for name in Strip::TRACKS {
        let _ = write!(s, ",{name}");
    }
    s.push('\n');
    for strip in strips {
        let tracks = strip.tracks();
        for t in 0..strip.truth.len() {
            let _ = write!(s, "{},{t}", strip.sequence_id);
            for track in &tracks {
                let _ = write!(s, ",{}", track[t].name());
            }
            s.push('\n');
        }
    }
    s
}

const CELL_W: usize = 8;
const CELL_H: usize = 12;
const LABEL_W: usize = 120;

pub fn strips_svg(strips: &[Strip]) -> String {
    let longest = strips.iter().map(|s| s.truth.len()).max().unwrap_or(0);
    let block_h = CELL_H * (Strip::TRACKS.len() + 1) + 16;
    let width = LABEL_W + longest * CELL_W + 10;
    let height = block_h * strips.len() + 10;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"10\">\n"
    );
    for (k, strip) in strips.iter().enumerate() {
        let top = 10 + k * block_h;
        let _ = writeln!(s, "<text x=\"0\" y=\"{}\">sequence {}</text>", top + 9, strip.sequence_id);
        for (j, (name, track)) in Strip::TRACKS.iter().zip(strip.tracks()).enumerate() {
            let y = top + (j + 1) * CELL_H;
            let _ = writeln!(s, "<text x=\"0\" y=\"{}\">{name}</text>", y + 9);
            for (t, mark) in track.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{}\" fill=\"{}\" data-label=\"{}\"/>",
                    LABEL_W + t * CELL_W,
                    CELL_H - 2,
                    mark.color(),
                    mark.name()
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(acc: Option<f64>, probe: f64) -> CellResult {
        CellResult {
            test: ConfusionCounts::default(),
            report: MetricsReport { accuracy: acc, ..MetricsReport::default() },
            val_accuracy: acc,
            selected_epoch: Some(0),
            probe,
            routing_violations: 0,
        }
    }

    #[test]
    fn aggregate_is_order_free_and_skips_absent() {
        let base = TrainConfig::default();
        let vs = ablation_variants(&base, 0.1);
        let cells = [(1, 3, cell(Some(80.0), 0.5)), (0, 1, cell(Some(70.0), 0.9)), (1, 2, cell(Some(90.0), 0.7)), (0, 2, cell(None, 0.8))];
        let a = aggregate(&vs, &cells).unwrap();
        let mut rev = cells.clone();
        rev.reverse();
        assert_eq!(a, aggregate(&vs, &rev).unwrap());
        assert_eq!(a.rows[0].metrics[4], Aggregate { mean: Some(70.0), std: Some(0.0) });
        assert_eq!(a.rows[1].metrics[4], Aggregate { mean: Some(85.0), std: Some(5.0) });
        assert_eq!(a.rows[1].seeds, [2, 3]);
        assert_eq!(a.rows[0].metrics[0], Aggregate::default());
        assert!(aggregate(&vs, &[(9, 0, cell(None, 0.0))]).is_err());
    }

    #[test]
    fn absent_means_render_as_dash_and_empty_csv() {
        let vs = comparison_variants(&TrainConfig::default(), 0.1);
        let t = aggregate(&vs, &[(0, 0, cell(Some(50.0), 0.3))]).unwrap();
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "supervised,1,,,,,50.0000,,,,,0.0000");
        assert_eq!(lines[2], "supervised,0.1,,,,,,,,,,");
        assert!(t.render().contains("—"));
        assert!(t.render().contains("50.00 ± 0.00"));
    }

    #[test]
    fn variant_rows_differ_only_in_method() {
        let base = TrainConfig { epochs: 7, lr: 0.01, ..TrainConfig::default() };
        let vs = ablation_variants(&base, 0.1);
        let methods: Vec<Method> = vs.iter().map(|v| v.train.method).collect();
        assert_eq!(
            methods,
            [Method::Supervised, Method::LocationMultitask, Method::ProposedNoOrder, Method::Proposed]
        );
        for v in &vs {
            assert_eq!(TrainConfig { method: base.method, ..v.train.clone() }, base);
        }
        let cmp = comparison_variants(&base, 0.1);
        assert_eq!(cmp[4].cell_key(3), vs[3].cell_key(3));
        assert_ne!(cmp[0].cell_key(3), vs[0].cell_key(3));
        assert_eq!(no_adversarial_control(&base, 0.1).train.weights.adversarial, 0.0);
    }

    #[test]
    fn strips_encode_one_source() {
        use crate::seqgen::{generate, GeneratorConfig};
        let cfg = GeneratorConfig { n_sequences: 10, min_len: 6, max_len: 9, labeled_ratio: 0.5, ..GeneratorConfig::default() };
        let d = generate(&cfg, 3).unwrap();
        let net = NetworkConfig::default();
        let (a, b) = (ParamSet::init(&net, 1).unwrap(), ParamSet::init(&net, 2).unwrap());
        let ids: Vec<u32> = (0..10).collect();
        let strips = sequence_strips(&d, &a, &b, &ids).unwrap();
        for s in &strips {
            let len = d.manifest.lengths[s.sequence_id as usize];
            assert!(s.tracks().iter().all(|t| t.len() == len));
            assert!(!s.truth.contains(&Mark::Unlabeled));
        }
        let given: usize = strips.iter().map(|s| s.given.iter().filter(|m| **m != Mark::Unlabeled).count()).sum();
        assert_eq!(given, d.manifest.labeled.len());
        let csv = strips_csv(&strips);
        let svg = strips_svg(&strips);
        let from_csv: Vec<&str> = csv.lines().skip(1).flat_map(|l| l.split(',').skip(2)).collect();
        // The svg lists tracks row by row; regroup the csv the same way.
        let mut expected = Vec::new();
        for s in &strips {
            for track in s.tracks() {
                expected.extend(track.iter().map(|m| m.name()));
            }
        }
        let from_svg: Vec<&str> =
            svg.split("data-label=\"").skip(1).map(|p| p.split('"').next().unwrap()).collect();
        assert_eq!(from_svg, expected);
        let mut sorted_csv = from_csv.clone();
        let mut sorted_svg = from_svg.clone();
        sorted_csv.sort_unstable();
        sorted_svg.sort_unstable();
        assert_eq!(sorted_csv, sorted_svg);
        assert_eq!(sequence_strips(&d, &a, &b, &[10]), Err(Error::UnknownSequence(10)));
    }
}
