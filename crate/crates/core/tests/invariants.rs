use ordis_core::autodiff::{evaluate, gradients, Bindings, Graph, NodeId};
use ordis_core::gradcheck::finite_difference_check;
use ordis_core::metrics::{confusion, metrics, ConfusionCounts};
use ordis_core::net::{NetworkConfig, ParamSet};
use ordis_core::objectives::{adversarial_loss, discriminative_loss, ordinal_loss, AdversarialForm};
use ordis_core::probe::{probe_disentanglement, ProbeConfig};
use ordis_core::seqgen::{generate, GeneratorConfig};
use ordis_core::Tensor;
use proptest::prelude::*;

fn mat(rows: usize, cols: usize, v: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, v[..rows * cols].to_vec()).unwrap()
}

/// Contracts `out` with a constant weight tensor so every output entry
/// reaches the loss with its own coefficient.
fn weighted_sum(g: &mut Graph, out: NodeId) -> (NodeId, NodeId) {
    let c = g.input();
    let m = g.mul(out, c);
    (g.sum(m), c)
}

#[derive(Clone, Copy, Debug)]
enum Prim {
    Affine,
    MatMul,
    Relu,
    Hinge,
    Softmax,
    LogSoftmax,
    Sum,
    Mean,
    Add,
    Sub,
    Mul,
    Scale,
    SqDist,
    Concat,
}

const PRIMS: [Prim; 14] = [
    Prim::Affine,
    Prim::MatMul,
    Prim::Relu,
    Prim::Hinge,
    Prim::Softmax,
    Prim::LogSoftmax,
    Prim::Sum,
    Prim::Mean,
    Prim::Add,
    Prim::Sub,
    Prim::Mul,
    Prim::Scale,
    Prim::SqDist,
    Prim::Concat,
];

fn primitive_error(prim: Prim, v: &[f64]) -> f64 {
    let mut g = Graph::new();
    let (a, b, bias) = (g.param(), g.param(), g.param());
    let (out, a_t, b_t, out_shape): (NodeId, Tensor, Tensor, Vec<usize>) = match prim {
        Prim::Affine => (g.affine(a, b, bias), mat(3, 4, v), mat(4, 2, &v[12..]), vec![3, 2]),
        Prim::MatMul => (g.matmul(a, b), mat(3, 4, v), mat(4, 2, &v[12..]), vec![3, 2]),
        Prim::Relu => (g.relu(a), mat(3, 4, v), mat(1, 1, v), vec![3, 4]),
        Prim::Hinge => (g.hinge(a), mat(3, 4, v), mat(1, 1, v), vec![3, 4]),
        Prim::Softmax => (g.softmax(a), mat(3, 4, v), mat(1, 1, v), vec![3, 4]),
        Prim::LogSoftmax => {
            let s = g.softmax(a);
            (g.log(s), mat(3, 4, v), mat(1, 1, v), vec![3, 4])
        }
        Prim::Sum => {
            let r = g.relu(a);
            let s = g.mul(r, a);
            (g.sum(s), mat(3, 4, v), mat(1, 1, v), vec![])
        }
        Prim::Mean => {
            let s = g.mul(a, a);
            (g.mean(s), mat(3, 4, v), mat(1, 1, v), vec![])
        }
        Prim::Add => (g.add(a, b), mat(3, 4, v), mat(3, 4, &v[12..]), vec![3, 4]),
        Prim::Sub => (g.sub(a, b), mat(3, 4, v), mat(3, 4, &v[12..]), vec![3, 4]),
        Prim::Mul => (g.mul(a, b), mat(3, 4, v), mat(3, 4, &v[12..]), vec![3, 4]),
        Prim::Scale => (g.scale(a, -1.7), mat(3, 4, v), mat(1, 1, v), vec![3, 4]),
        Prim::SqDist => (g.sq_dist(a, b), mat(3, 4, v), mat(3, 4, &v[12..]), vec![3]),
        Prim::Concat => (g.concat(a, b), mat(3, 4, v), mat(3, 2, &v[12..]), vec![3, 6]),
    };
    let (loss, c) = weighted_sum(&mut g, out);
    let n: usize = out_shape.iter().product();
    let weights = Tensor::new(out_shape, v[24..24 + n].iter().map(|x| x + 0.5).collect()).unwrap();
    let mut bind = Bindings::new();
    bind.bind(a, a_t);
    bind.bind(b, b_t);
    bind.bind(bias, Tensor::vector(v[44..46].to_vec()));
    bind.bind(c, weights);
    let wrt: Vec<NodeId> = match prim {
        Prim::Affine => vec![a, b, bias],
        Prim::MatMul | Prim::Add | Prim::Sub | Prim::Mul | Prim::SqDist | Prim::Concat => vec![a, b],
        _ => vec![a],
    };
    finite_difference_check(&g, loss, &bind, &wrt, 1e-5).unwrap().max_rel_error
}

fn rotate(v: &[f64], i: usize, j: usize, angle: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    let (c, s) = (angle.cos(), angle.sin());
    out[i] = c * v[i] - s * v[j];
    out[j] = s * v[i] + c * v[j];
    out
}

fn brute_force(pred: &[u8], truth: &[u8]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for i in 0..pred.len() {
        let idx = match (pred[i], truth[i]) {
            (1, 1) => 0,
            (1, 0) => 1,
            (0, 1) => 2,
            _ => 3,
        };
        c[idx] += 1;
    }
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn primitives_match_central_differences(
        k in 0usize..PRIMS.len(),
        v in proptest::collection::vec(-2.0f64..2.0, 48),
    ) {
        let prim = PRIMS[k];
        if matches!(prim, Prim::Relu | Prim::Hinge | Prim::Sum) {
            prop_assume!(v[..12].iter().all(|x| x.abs() > 1e-3));
        }
        let err = primitive_error(prim, &v);
        prop_assert!(err < 1e-4, "{prim:?}: {err}");
    }

    #[test]
    fn gradient_is_linear_in_the_loss(
        v in proptest::collection::vec(-1.5f64..1.5, 40),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let mut g = Graph::new();
        let (x, w, b) = (g.input(), g.param(), g.param());
        let h = g.affine(x, w, b);
        let r = g.relu(h);
        let p = g.softmax(h);
        let lp = g.log(p);
        let l1 = g.sum(r);
        let l2 = g.mean(lp);
        let s1 = g.scale(l1, alpha);
        let s2 = g.scale(l2, beta);
        let combo = g.add(s1, s2);
        let mut bind = Bindings::new();
        bind.bind(x, mat(4, 4, &v));
        bind.bind(w, mat(4, 3, &v[16..]));
        bind.bind(b, Tensor::vector(v[28..31].to_vec()));
        let gc = gradients(&g, combo, &bind, &[w, b]).unwrap();
        let g1 = gradients(&g, l1, &bind, &[w, b]).unwrap();
        let g2 = gradients(&g, l2, &bind, &[w, b]).unwrap();
        for leaf in [w, b] {
            let (c, a1, a2) = (gc.get(leaf).unwrap(), g1.get(leaf).unwrap(), g2.get(leaf).unwrap());
            for i in 0..c.len() {
                let expect = alpha * a1.data()[i] + beta * a2.data()[i];
                prop_assert!((c.data()[i] - expect).abs() <= 1e-10, "{} vs {}", c.data()[i], expect);
            }
        }
        let again = evaluate(&g, &bind).unwrap();
        let once = evaluate(&g, &bind).unwrap();
        prop_assert!(again.get(combo).bit_eq(once.get(combo)));
    }

    #[test]
    fn ordinal_loss_ignores_rigid_motions(
        z in proptest::collection::vec(-3.0f64..3.0, 15),
        shift in proptest::collection::vec(-3.0f64..3.0, 5),
        planes in proptest::collection::vec((0usize..5, 0usize..5, -3.2f64..3.2), 1..6),
        margin in 0.0f64..2.0,
    ) {
        let (mut a, mut b, mut c) = (z[..5].to_vec(), z[5..10].to_vec(), z[10..].to_vec());
        let base = ordinal_loss(&a, &b, &c, margin).unwrap();
        for &(i, j, angle) in &planes {
            if i == j {
                continue;
            }
            a = rotate(&a, i, j, angle);
            b = rotate(&b, i, j, angle);
            c = rotate(&c, i, j, angle);
        }
        for k in 0..5 {
            a[k] += shift[k];
            b[k] += shift[k];
            c[k] += shift[k];
        }
        let moved = ordinal_loss(&a, &b, &c, margin).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9, "{base} vs {moved}");
    }

    #[test]
    fn ordinal_loss_zero_exactly_when_margin_is_met(
        z in proptest::collection::vec(-3.0f64..3.0, 9),
        margin in 0.0f64..2.0,
    ) {
        let (a, b, c) = (&z[..3], &z[3..6], &z[6..]);
        let d = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        let l = ordinal_loss(a, b, c, margin).unwrap();
        if d(a, b) + margin <= d(a, c) {
            prop_assert_eq!(l, 0.0);
        } else {
            prop_assert!(l > 0.0);
        }
        prop_assert!((ordinal_loss(a, c, c, margin).unwrap() - margin).abs() < 1e-12);
    }

    #[test]
    fn adversarial_loss_is_bounded_below_by_ln_k(
        raw in proptest::collection::vec(0.0f64..1.0, 2..6),
        rot in 0usize..6,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let d: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let k = d.len() as f64;
        let l = adversarial_loss(&d, AdversarialForm::UniformTarget).unwrap();
        prop_assert!(l >= k.ln() - 1e-12);
        let mut rotated = d.clone();
        rotated.rotate_left(rot % d.len());
        let lr = adversarial_loss(&rotated, AdversarialForm::UniformTarget).unwrap();
        prop_assert!((l - lr).abs() < 1e-12);
        let y = rot % d.len();
        let mut target = d.clone();
        target.swap(0, y);
        prop_assert_eq!(discriminative_loss(&d, y).unwrap(), discriminative_loss(&target, 0).unwrap());
        let uniform = vec![1.0 / k; d.len()];
        prop_assert!((adversarial_loss(&uniform, AdversarialForm::UniformTarget).unwrap() - k.ln()).abs() < 1e-6);
    }

    #[test]
    fn metrics_agree_with_a_recount(
        pairs in proptest::collection::vec((0u8..2, 0u8..2), 0..1000),
    ) {
        let pred: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let truth: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let c = confusion(&pred, &truth).unwrap();
        let [tp, fp, fn_, tn] = brute_force(&pred, &truth);
        prop_assert_eq!(c, ConfusionCounts { tp, fp, fn_, tn });
        prop_assert_eq!(c.total(), pred.len() as u64);
        let m = metrics(&c);
        let pct = |a: u64, b: u64| (b > 0).then(|| 100.0 * a as f64 / b as f64);
        prop_assert_eq!(m.precision, pct(tp, tp + fp));
        prop_assert_eq!(m.recall, pct(tp, tp + fn_));
        prop_assert_eq!(m.specificity, pct(tn, tn + fp));
        prop_assert_eq!(m.accuracy, pct(tp + tn, tp + fp + fn_ + tn));
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            prop_assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
        for v in m.values().into_iter().flatten() {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }
}

#[test]
fn probe_leaves_parameters_untouched() {
    let cfg = GeneratorConfig { n_sequences: 20, ..GeneratorConfig::default() };
    let data = generate(&cfg, 1).unwrap();
    let params = ParamSet::init(&NetworkConfig::default(), 3).unwrap();
    let before = params.clone();
    probe_disentanglement(&params, &data, &ProbeConfig { epochs: 20, ..ProbeConfig::default() }, 0).unwrap();
    for r in params.all_params() {
        assert!(params.get(r).bit_eq(before.get(r)));
    }
}
