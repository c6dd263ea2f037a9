use ordis_core::net::{Group, NetworkConfig, ParamSet};
use ordis_core::objectives::LossWeights;
use ordis_core::seqgen::{generate, Dataset, GeneratorConfig, Split};
use ordis_core::trainer::{evaluate_split, train, Method, TrainConfig, Trainer};

fn small_data() -> Dataset {
    let cfg = GeneratorConfig { n_sequences: 30, labeled_ratio: 0.2, ..GeneratorConfig::default() };
    generate(&cfg, 17).unwrap()
}

fn quick(method: Method, epochs: usize) -> TrainConfig {
    TrainConfig { method, epochs, seed: 4, ..TrainConfig::default() }
}

fn frozen_untouched(before: &ParamSet, after: &ParamSet, frozen: &[Group]) -> bool {
    frozen.iter().all(|&g| before.group_bit_eq(after, g))
}

#[test]
fn routed_steps_touch_only_their_groups() {
    let data = small_data();
    let net = NetworkConfig::default();
    let mut t = Trainer::new(&data, &net, &quick(Method::Proposed, 1)).unwrap();
    let mut recorded = 0;
    let mut violations = 0;
    while recorded < 50 {
        for batch in t.epoch_batches() {
            let before = t.params().clone();
            t.d_step(&batch).unwrap();
            let mid = t.params().clone();
            t.main_step(&batch).unwrap();
            let after = t.params().clone();
            violations += !frozen_untouched(&before, &mid, &Group::MAIN) as usize;
            violations += !frozen_untouched(&mid, &after, &Group::DISCRIMINATORS) as usize;
            // Both steps must actually move their own groups.
            assert!(!Group::DISCRIMINATORS.iter().all(|&g| before.group_bit_eq(&mid, g)));
            assert!(!Group::MAIN.iter().all(|&g| mid.group_bit_eq(&after, g)));
            recorded += 1;
            if recorded == 50 {
                break;
            }
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn audited_runs_report_no_violations() {
    let data = small_data();
    let cfg = TrainConfig { audit_routing: true, ..quick(Method::Proposed, 4) };
    let r = train(&data, &NetworkConfig::default(), &cfg).unwrap();
    assert_eq!(r.routing_violations, 0);
}

#[test]
fn identical_inputs_give_identical_histories() {
    let data = small_data();
    let net = NetworkConfig::default();
    for m in Method::ALL {
        let a = train(&data, &net, &quick(m, 3)).unwrap();
        let b = train(&data, &net, &quick(m, 3)).unwrap();
        assert_eq!(a, b, "{m}");
    }
}

#[test]
fn unreachable_pseudo_label_threshold_matches_supervised() {
    let data = small_data();
    let net = NetworkConfig::default();
    let base = TrainConfig { pl_warmup: 1, ..quick(Method::Supervised, 6) };
    let sup = train(&data, &net, &base).unwrap();
    let pl = train(&data, &net, &TrainConfig { method: Method::PseudoLabel, pl_threshold: 1.0, ..base.clone() }).unwrap();
    assert!(pl.history.iter().all(|h| h.pseudo_labels == 0));
    assert_eq!(sup.params, pl.params);
    assert_eq!(sup.selected_epoch, pl.selected_epoch);
    for (a, b) in sup.history.iter().zip(&pl.history) {
        assert_eq!(a.validation, b.validation);
        assert_eq!(a.losses.c_u, b.losses.c_u);
    }
}

#[test]
fn pseudo_labels_wait_for_warmup() {
    let data = small_data();
    let net = NetworkConfig::default();
    let cfg = TrainConfig { pl_warmup: 3, pl_threshold: 0.6, ..quick(Method::PseudoLabel, 5) };
    let r = train(&data, &net, &cfg).unwrap();
    assert!(r.history[..3].iter().all(|h| h.pseudo_labels == 0));
    let sup = train(&data, &net, &TrainConfig { method: Method::Supervised, ..cfg.clone() }).unwrap();
    assert_eq!(r.history[..3], sup.history[..3]);
}

#[test]
fn silent_consistency_term_is_zero() {
    let data = small_data();
    let cfg = TrainConfig { fm_threshold: 1.0, ..quick(Method::FixmatchLite, 3) };
    let r = train(&data, &NetworkConfig::default(), &cfg).unwrap();
    for h in &r.history {
        assert_eq!(h.losses.unlabeled.value, 0.0);
        assert_eq!(h.losses.unlabeled.count, 0);
    }
}

#[test]
fn multitask_is_proposed_with_zero_weights() {
    let data = small_data();
    let net = NetworkConfig::default();
    let weights = LossWeights { adversarial: 0.0, order: 0.0, ..LossWeights::default() };
    let a = train(&data, &net, &quick(Method::LocationMultitask, 3)).unwrap();
    let b = train(&data, &net, &TrainConfig { weights, ..quick(Method::Proposed, 3) }).unwrap();
    assert_eq!(a, b);
}

#[test]
fn order_loss_pulls_neighbours_together() {
    let data = generate(&GeneratorConfig::default(), 0).unwrap();
    let net = NetworkConfig::default();
    for seed in 0..3 {
        let r = train(&data, &net, &TrainConfig { epochs: 30, seed, ..TrainConfig::default() }).unwrap();
        let sel = r.selected_epoch.unwrap();
        assert!(r.history[sel].adjacent_distance <= r.initial_distance, "seed {seed}");
    }
}

#[test]
fn pseudo_label_count_grows_on_benchmark() {
    let data = generate(&GeneratorConfig::default(), 0).unwrap();
    let net = NetworkConfig::default();
    let epochs = 40;
    let mut mean = vec![0.0; epochs];
    for seed in 0..5 {
        let d = data.with_labeled_ratio(0.1, seed).unwrap();
        let r = train(&d, &net, &TrainConfig { method: Method::PseudoLabel, epochs, seed, ..TrainConfig::default() }).unwrap();
        for (m, h) in mean.iter_mut().zip(&r.history) {
            *m += h.pseudo_labels as f64 / 5.0;
        }
    }
    assert!(mean.windows(2).all(|w| w[1] >= w[0]), "{mean:?}");
    assert!(mean[epochs - 1] > 0.0);
}

#[test]
fn full_labels_reach_high_validation_accuracy() {
    let data = generate(&GeneratorConfig::default(), 0).unwrap();
    let net = NetworkConfig::default();
    let d = data.with_labeled_ratio(1.0, 0).unwrap();
    let r = train(&d, &net, &TrainConfig { method: Method::Supervised, epochs: 50, seed: 0, ..TrainConfig::default() }).unwrap();
    let best = r.history.iter().filter_map(|h| h.validation.accuracy).fold(0.0, f64::max);
    assert!(best >= 95.0, "{best}");
}

#[test]
fn fewer_labels_cost_accuracy() {
    let data = generate(&GeneratorConfig::default(), 0).unwrap();
    let net = NetworkConfig::default();
    let mut acc = [0.0; 2];
    for seed in 0..5 {
        for (k, ratio) in [1.0, 0.1].into_iter().enumerate() {
            let d = data.with_labeled_ratio(ratio, seed).unwrap();
            let r = train(&d, &net, &TrainConfig { method: Method::Supervised, seed, ..TrainConfig::default() }).unwrap();
            let c = evaluate_split(&r.params, &d, Split::Test).unwrap();
            acc[k] += (c.tp + c.tn) as f64 / c.total() as f64 / 5.0;
        }
    }
    assert!(acc[1] < acc[0], "{acc:?}");
}

#[test]
fn without_texture_signal_nothing_is_learned() {
    let cfg = GeneratorConfig { uc_signal: 0.0, ..GeneratorConfig::default() };
    let data = generate(&cfg, 0).unwrap().with_labeled_ratio(1.0, 0).unwrap();
    let r = train(&data, &NetworkConfig::default(), &TrainConfig { method: Method::Supervised, epochs: 30, ..TrainConfig::default() }).unwrap();
    let c = evaluate_split(&r.params, &data, Split::Test).unwrap();
    let acc = (c.tp + c.tn) as f64 / c.total() as f64;
    let pos = (c.tp + c.fn_) as f64 / c.total() as f64;
    assert!(acc <= pos.max(1.0 - pos) + 0.05, "{acc} vs majority {pos}");
}
