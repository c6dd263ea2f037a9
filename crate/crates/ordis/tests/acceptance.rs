//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Outcomes are reported, not
//! asserted; the process fails only when a criterion cannot be evaluated at
//! all (an error inside the library or the CLI).

use std::process::Command;
use std::time::{Duration, Instant};

use ordis_core::experiments::{ablation_variants, comparison_variants, no_adversarial_control, Table, Variant};
use ordis_core::gradcheck::randomized_suite;
use ordis_core::metrics::{confusion, f1_score, metrics, ConfusionCounts, MetricsReport};
use ordis_core::net::{Group, NetworkConfig, ParamSet};
use ordis_core::objectives::ordinal_loss;
use ordis_core::seqgen::{generate, GeneratorConfig};
use ordis_core::trainer::{Method, TrainConfig, Trainer};
use ordis::config::RunConfig;
use ordis::grid::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;

struct Report {
    passed: usize,
    failed: usize,
    errored: usize,
}

impl Report {
    fn record(&mut self, id: &str, title: &str, outcome: Outcome) {
        match outcome {
            Ok((true, detail)) => {
                self.passed += 1;
                println!("PASS {id} {title}: {detail}");
            }
            Ok((false, detail)) => {
                self.failed += 1;
                println!("FAIL {id} {title}: {detail}");
            }
            Err(e) => {
                self.errored += 1;
                println!("FAIL {id} {title}: error: {e}");
            }
        }
    }
}

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let r = randomized_suite(120, 2024, 1e-5)?;
    let elapsed = start.elapsed();
    let ok = r.configs >= 100
        && r.with_adversarial > 0
        && r.with_order > 0
        && r.max_rel_error < 1e-4
        && elapsed < Duration::from_secs(60);
    Ok((
        ok,
        format!(
            "{} configs ({} adversarial, {} ordinal), max rel error {:.2e}, {:.1}s",
            r.configs,
            r.with_adversarial,
            r.with_order,
            r.max_rel_error,
            elapsed.as_secs_f64()
        ),
    ))
}

fn routing_exactness() -> Outcome {
    let data = generate(&GeneratorConfig::default(), 0)?;
    let net = NetworkConfig::default();
    let mut trainer = Trainer::new(&data, &net, &TrainConfig { method: Method::Proposed, ..TrainConfig::default() })?;
    let untouched = |a: &ParamSet, b: &ParamSet, groups: &[Group]| groups.iter().all(|&g| a.group_bit_eq(b, g));
    let (mut batches, mut violations) = (0, 0);
    while batches < 50 {
        for batch in trainer.epoch_batches() {
            let before = trainer.params().clone();
            trainer.d_step(&batch)?;
            let mid = trainer.params().clone();
            trainer.main_step(&batch)?;
            let after = trainer.params().clone();
            violations += !untouched(&before, &mid, &Group::MAIN) as usize;
            violations += !untouched(&mid, &after, &Group::DISCRIMINATORS) as usize;
            batches += 1;
            if batches == 50 {
                break;
            }
        }
    }
    Ok((violations == 0, format!("{batches} batches, {violations} violations")))
}

fn brute_force(pred: &[u8], truth: &[u8]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p, t) {
            (1, 1) => c.tp += 1,
            (1, 0) => c.fp += 1,
            (0, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
    }
    c
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn metrics_oracle() -> Outcome {
    // (precision, recall, reported F1)
    let rows = [
        (80.52, 84.89, 82.64),
        (69.16, 67.07, 68.10),
        (75.19, 61.33, 67.55),
        (75.24, 46.82, 57.73),
        (77.56, 73.11, 75.27),
    ];
    let worst = rows
        .iter()
        .map(|&(p, r, f)| f1_score(p, r).map_or(f64::INFINITY, |v| (v - f).abs()))
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..200);
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let truth: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let c = confusion(&pred, &truth)?;
        let b = brute_force(&pred, &truth);
        let m = metrics(&c);
        let expected = [
            pct(b.tp, b.tp + b.fp),
            pct(b.tp, b.tp + b.fn_),
            None,
            pct(b.tn, b.tn + b.fp),
            pct(b.tp + b.tn, n as u64),
        ];
        let f1 = match (expected[0], expected[1]) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        let expected = [expected[0], expected[1], f1, expected[3], expected[4]];
        if c != b || m.values() != expected {
            mismatches += 1;
        }
    }
    Ok((
        worst <= 0.02 && mismatches == 0,
        format!("max F1 deviation {worst:.4} over 5 rows; {mismatches}/1000 recount mismatches"),
    ))
}

struct Benchmark {
    ablation: Table,
    comparison: Table,
    elapsed: Duration,
}

fn benchmark() -> Result<Benchmark, Box<dyn std::error::Error>> {
    let cfg = RunConfig::default();
    let data = generate(&cfg.generator(), cfg.data_seed)?;
    let net = cfg.network();
    let base = cfg.train()?;
    let ratio = cfg.labeled_ratio;
    let grid = Grid::new(cfg.workers)?;
    let start = Instant::now();
    let mut ablation: Vec<Variant> = ablation_variants(&base, ratio);
    ablation.push(no_adversarial_control(&base, ratio));
    let ablation = grid.run(&data, &net, &ablation, &cfg.seeds)?;
    let comparison = grid.run(&data, &net, &comparison_variants(&base, ratio), &cfg.seeds)?;
    Ok(Benchmark { ablation, comparison, elapsed: start.elapsed() })
}

const ACC: usize = 4;
const F1: usize = 2;
const RECALL: usize = 1;

fn mean(t: &Table, name: &str, ratio: f64, metric: usize) -> Result<f64, String> {
    t.row(name, ratio)
        .and_then(|r| r.metrics[metric].mean)
        .ok_or_else(|| format!("no {} for {name} at R={ratio}", MetricsReport::COLUMNS[metric]))
}

fn semi_supervised_gain(b: &Benchmark) -> Outcome {
    let sup = mean(&b.comparison, "supervised", 0.1, ACC)?;
    let prop = mean(&b.comparison, "proposed", 0.1, ACC)?;
    let fast = b.elapsed <= Duration::from_secs(600);
    Ok((
        prop >= sup + 2.0 && fast,
        format!(
            "proposed {prop:.2} vs supervised {sup:.2} (gain {:+.2}, need +2.00); grid {:.0}s",
            prop - sup,
            b.elapsed.as_secs_f64()
        ),
    ))
}

fn ablation_recall(b: &Benchmark) -> Outcome {
    let with = mean(&b.ablation, "proposed", 0.1, RECALL)?;
    let without = mean(&b.ablation, "proposed_no_order", 0.1, RECALL)?;
    Ok((with >= without, format!("recall {with:.2} with order vs {without:.2} without")))
}

fn ablation_best_f1(b: &Benchmark) -> Outcome {
    let names = ["supervised", "location_multitask", "proposed_no_order", "proposed"];
    let f1s = names.iter().map(|n| mean(&b.ablation, n, 0.1, F1)).collect::<Result<Vec<_>, _>>()?;
    let best = (0..4).fold(0, |a, i| if f1s[i] > f1s[a] { i } else { a });
    let listing: Vec<String> = names.iter().zip(&f1s).map(|(n, f)| format!("{n} {f:.2}")).collect();
    Ok((f1s[3] >= f1s[best], format!("F1 {}", listing.join(", "))))
}

fn disentanglement(b: &Benchmark) -> Outcome {
    let row = |name: &str| b.ablation.row(name, 0.1).ok_or_else(|| format!("missing row {name}"));
    let (prop, ctrl) = (row("proposed")?, row("proposed_no_adversarial")?);
    let probe = |r: &ordis_core::experiments::TableRow| r.probe.mean.ok_or("probe undefined");
    let val = |r: &ordis_core::experiments::TableRow| r.val_accuracy.mean.ok_or("validation undefined");
    let gap = probe(ctrl)? - probe(prop)?;
    let drop = val(ctrl)? - val(prop)?;
    Ok((
        gap >= 0.15 && drop <= 2.0,
        format!(
            "probe {:.3} vs {:.3} without adversary (gap {gap:.3}); val accuracy drop {drop:.2}",
            probe(prop)?,
            probe(ctrl)?
        ),
    ))
}

fn ordinal_suite() -> Outcome {
    let cases: [(&[f64], &[f64], &[f64], f64, f64); 4] = [
        (&[0.0, 0.0], &[1.0, 0.0], &[3.0, 0.0], 1.0, 0.0),
        (&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.0], 0.5, 3.5),
        (&[0.3, -1.0], &[1.5, 2.0], &[1.5, 2.0], 0.7, 0.7),
        (&[0.0, 0.0], &[1.0, 0.0], &[0.0, 2.0], 3.0, 0.0),
    ];
    let mut exact = 0;
    for (a, b, c, eps, want) in cases {
        exact += (ordinal_loss(a, b, c, eps)? == want) as usize;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let v: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]).collect();
        let eps = rng.random_range(0.0..2.0);
        let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let rot = |p: [f64; 2]| [th.cos() * p[0] - th.sin() * p[1], th.sin() * p[0] + th.cos() * p[1]];
        let base = ordinal_loss(&v[0], &v[1], &v[2], eps)?;
        let turned = ordinal_loss(&rot(v[0]), &rot(v[1]), &rot(v[2]), eps)?;
        worst = worst.max((base - turned).abs());
    }
    Ok((
        exact == cases.len() && worst <= 1e-9,
        format!("{exact}/{} exact cases; max rotation deviation {worst:.1e}", cases.len()),
    ))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let config = dir.path().join("small.toml");
    std::fs::write(&config, "n_sequences = 40\nepochs = 15\nseeds = [0, 1]\n")?;
    let bin = env!("CARGO_BIN_EXE_ordis");
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "2"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let status = Command::new(bin)
            .args(["compare", "--config"])
            .arg(&config)
            .args(["--workers", workers, "--out"])
            .arg(&out)
            .output()?;
        if !status.status.success() {
            return Err(format!("compare exited with {}", status.status).into());
        }
        outputs.push(std::fs::read(out.join("compare.csv"))?);
    }
    Ok((outputs[0] == outputs[1], format!("compare.csv {} bytes, identical: {}", outputs[0].len(), outputs[0] == outputs[1])))
}

fn main() {
    let mut report = Report { passed: 0, failed: 0, errored: 0 };
    report.record("1", "gradient fidelity", gradient_fidelity());
    report.record("2", "routing exactness", routing_exactness());
    report.record("3", "metrics oracle", metrics_oracle());
    match benchmark() {
        Ok(b) => {
            report.record("4", "semi-supervised gain", semi_supervised_gain(&b));
            report.record("5a", "order keeps recall", ablation_recall(&b));
            report.record("5b", "full method best F1", ablation_best_f1(&b));
            report.record("6", "location removed from z_u", disentanglement(&b));
            println!("\n{}\n{}", b.comparison.render(), b.ablation.render());
        }
        Err(e) => {
            for (id, title) in [
                ("4", "semi-supervised gain"),
                ("5a", "order keeps recall"),
                ("5b", "full method best F1"),
                ("6", "location removed from z_u"),
            ] {
                report.record(id, title, Err(e.to_string().into()));
            }
        }
    }
    report.record("7", "ordinal loss suite", ordinal_suite());
    report.record("8", "compare determinism", determinism());
    println!("acceptance: {} passed, {} failed, {} errored", report.passed, report.failed, report.errored);
    if report.errored > 0 {
        std::process::exit(1);
    }
}
