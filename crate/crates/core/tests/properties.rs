//! Property tests for the documented invariants.

mod common;

use std::path::Path;

use common::*;
use proptest::prelude::*;
use travmetric::encoder::{featurize, EncoderModel, EncoderShape};
use travmetric::eval::{miou, tpe, Confusion, Prediction, TpeVariant};
use travmetric::losses::{proxy_seg_loss, unsup_loss, LossHyper};
use travmetric::pointcloud::{
    format_scene, generate_synthetic_scene, knn, parse_scene, sample_episode, Label, Point, Scene,
    SceneKind, SyntheticSpec,
};
use travmetric::proxybank::{Class, ProxyBank, ProxyId};
use travmetric::trainer::TrainConfig;

fn point() -> impl Strategy<Value = Point> {
    [-50.0..50.0f64, -50.0..50.0f64, -5.0..5.0f64]
}

fn unit_vec(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, d)
        .prop_filter("non-degenerate", |v| dot(v, v) > 1e-4)
        .prop_map(|v| {
            let n = dot(&v, &v).sqrt();
            v.into_iter().map(|x| x / n).collect()
        })
}

fn bank(k: usize, d: usize) -> impl Strategy<Value = ProxyBank> {
    (
        prop::collection::vec(unit_vec(d), k),
        prop::collection::vec(unit_vec(d), k),
        prop_oneof![Just(0.05), Just(0.1), Just(0.5)],
    )
        .prop_map(|(p, n, t)| ProxyBank::from_proxies(matrix(&p), matrix(&n), t).unwrap())
}

fn labelled_rows() -> impl Strategy<Value = Vec<(Label, bool, f64)>> {
    prop::collection::vec(
        (
            prop_oneof![
                Just(Label::Positive),
                Just(Label::Negative),
                Just(Label::Unlabeled)
            ],
            any::<bool>(),
            0.0..=1.0f64,
        ),
        0..40,
    )
}

fn split(rows: &[(Label, bool, f64)]) -> (Vec<bool>, Vec<f64>, Vec<Label>) {
    (
        rows.iter().map(|r| r.1).collect(),
        rows.iter().map(|r| r.2).collect(),
        rows.iter().map(|r| r.0).collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scene_text_round_trip(
        rows in prop::collection::vec((point(), prop_oneof![Just(0u8), Just(1u8)], 0.0..=1.0f64), 1..50)
    ) {
        let points: Vec<Point> = rows.iter().map(|r| r.0).collect();
        let labels: Vec<Label> = rows.iter().map(|r| if r.1 == 1 { Label::Positive } else { Label::Unlabeled }).collect();
        let trav: Vec<Option<f64>> = rows.iter().map(|r| (r.1 == 1).then_some(r.2)).collect();
        let scene = Scene::new(SceneKind::Query, points, labels, trav).unwrap();
        let back = parse_scene(&format_scene(&scene), SceneKind::Query, Path::new("mem")).unwrap();
        prop_assert_eq!(back, scene);
    }

    #[test]
    fn knn_matches_sort_and_ignores_input_order(
        pts in prop::collection::vec(point(), 1..300),
        center in point(),
        k_frac in 0.0..1.0f64,
        seed in any::<u64>(),
    ) {
        let k = 1 + ((pts.len() - 1) as f64 * k_frac) as usize;
        let got = knn(&pts, &center, k).unwrap();
        let d2 = |p: &Point| (0..3).map(|j| (p[j] - center[j]).powi(2)).sum::<f64>();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.sort_by(|&a, &b| d2(&pts[a]).total_cmp(&d2(&pts[b])).then(a.cmp(&b)));
        prop_assert_eq!(&got, &order[..k].to_vec());

        // permuting the input permutes the answer, up to ties
        let mut rng = travmetric::seeded_rng(seed);
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let shuffled: Vec<Point> = perm.iter().map(|&i| pts[i]).collect();
        let mut a: Vec<f64> = knn(&shuffled, &center, k).unwrap().iter().map(|&i| d2(&shuffled[i])).collect();
        let mut b: Vec<f64> = got.iter().map(|&i| d2(&pts[i])).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn features_are_translation_invariant(
        pts in prop::collection::vec(point(), 9..60),
        shift in point(),
    ) {
        let moved: Vec<Point> = pts.iter().map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]]).collect();
        let a = featurize(&pts, 8).unwrap();
        let b = featurize(&moved, 8).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for j in 0..fa.len() {
                prop_assert!((fa[j] - fb[j]).abs() <= 1e-9 * (1.0 + fa[j].abs()) * (1.0 + shift.iter().map(|s| s.abs()).sum::<f64>()));
            }
        }
    }

    #[test]
    fn embeddings_are_unit_norm(seed in any::<u64>(), n in 1..30usize) {
        let mut rng = travmetric::seeded_rng(seed);
        let model = EncoderModel::new(EncoderShape::default(), &mut rng).unwrap();
        let emb = model.encode(&random_features(n, &mut rng)).unwrap();
        for i in 0..n {
            let r = &emb.data[i * emb.cols..(i + 1) * emb.cols];
            prop_assert!((dot(r, r).sqrt() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn similarity_bounded_permutation_invariant_and_matches_oracle(
        b in (1..5usize).prop_flat_map(|k| bank(k, 6)),
        x in unit_vec(6),
    ) {
        let plain = PlainBank::of(&b);
        for c in Class::BOTH {
            let s = b.class_similarity(&x, c);
            let cos: Vec<f64> = plain.class(c).iter().map(|p| dot(&x, p)).collect();
            let lo = cos.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s >= lo - 1e-12 && s <= hi + 1e-12);
            prop_assert!((s - soft_similarity(&x, plain.class(c), b.temperature)).abs() < 1e-12);
            let mut rev = b.clone();
            let rows_rev: Vec<Vec<f64>> = plain.class(c).iter().rev().cloned().collect();
            *rev.proxies_mut(c) = matrix(&rows_rev);
            prop_assert!((rev.class_similarity(&x, c) - s).abs() < 1e-12);
        }
        prop_assert_eq!(b.assign_pseudo_class(&x, Default::default()), pseudo_class(&x, &plain));
    }

    #[test]
    fn membership_matches_brute_force(
        b in (1..4usize).prop_flat_map(|k| bank(k, 5)),
        xs in prop::collection::vec(unit_vec(5), 0..40),
    ) {
        let mut b = b;
        b.reset_membership();
        if !xs.is_empty() {
            b.count_membership(&matrix(&xs));
        }
        let plain = PlainBank::of(&b);
        let k = b.k();
        let mut expect = vec![0u64; 2 * k];
        for x in &xs {
            // first maximum over Positive then Negative proxies
            let mut best = (f64::NEG_INFINITY, 0);
            for (slot, p) in plain.positive.iter().chain(&plain.negative).enumerate() {
                let c = dot(x, p);
                if c > best.0 {
                    best = (c, slot);
                }
            }
            expect[best.1] += 1;
        }
        for c in Class::BOTH {
            for index in 0..k {
                let slot = if c == Class::Positive { index } else { k + index };
                prop_assert_eq!(b.membership(ProxyId { class: c, index }), expect[slot]);
            }
        }
    }

    #[test]
    fn losses_finite_nonnegative_and_unsup_symmetric(
        b in (1..4usize).prop_flat_map(|k| bank(k, 5)),
        x in unit_vec(5),
    ) {
        let h = LossHyper::default();
        for y in Class::BOTH {
            let v = proxy_seg_loss(&x, y, &b, &h).value;
            prop_assert!(v.is_finite() && v > 0.0);
        }
        let (c, u) = unsup_loss(&x, &b, &h);
        prop_assert!(u.value.is_finite() && u.value >= 0.0);
        prop_assert!(u.value <= (1.0 + (h.lambda * h.delta).exp()).ln() + h.lambda * h.delta);
        // swapping the classes swaps the pseudo-class and keeps the loss (away from ties)
        let swapped = ProxyBank::from_proxies(b.negative.clone(), b.positive.clone(), b.temperature).unwrap();
        let sp = b.class_similarity(&x, Class::Positive);
        let sn = b.class_similarity(&x, Class::Negative);
        if (sp - sn).abs() > 1e-12 {
            let (c2, u2) = unsup_loss(&x, &swapped, &h);
            prop_assert_eq!(c2, opposite(c));
            prop_assert!((u2.value - u.value).abs() <= 1e-12 * u.value.max(1.0));
        }
    }

    #[test]
    fn softtriple_is_monotone(sy in -1.0..1.0f64, so in -1.0..1.0f64, step in 1e-3..0.5f64) {
        let (l, d) = (20.0, 0.01);
        prop_assert!(softtriple(sy + step, so, l, d) < softtriple(sy, so, l, d));
        prop_assert!(softtriple(sy, so + step, l, d) > softtriple(sy, so, l, d));
    }

    #[test]
    fn tpe_bounds_reductions_and_permutation(rows in labelled_rows(), seed in any::<u64>()) {
        let (s, t, gt) = split(&rows);
        let v = tpe(&s, &t, &gt, TpeVariant::AsPrinted);
        prop_assert!((0.0..=1.0).contains(&v));
        let c = Confusion::from_predictions(&s, &t, &gt);
        prop_assert_eq!(c.labeled(), gt.iter().filter(|l| **l != Label::Unlabeled).count() as u64);

        let ones = vec![1.0; t.len()];
        let zeros = vec![0.0; t.len()];
        let (tn, fp, fn_) = (c.tn as f64, c.fp as f64, c.fn_ as f64);
        let expect1 = if tn + fn_ == 0.0 { 1.0 } else { tn / (tn + fn_) };
        let expect0 = if tn + fp + fn_ == 0.0 { 1.0 } else { tn / (tn + fp + fn_) };
        prop_assert!((tpe(&s, &ones, &gt, TpeVariant::AsPrinted) - expect1).abs() < 1e-12);
        prop_assert!((tpe(&s, &zeros, &gt, TpeVariant::AsPrinted) - expect0).abs() < 1e-12);

        // lowering the traversability of a false positive never raises TPE
        if let Some(i) = (0..s.len()).find(|&i| s[i] && gt[i] == Label::Negative) {
            let mut lower = t.clone();
            lower[i] *= 0.5;
            prop_assert!(tpe(&s, &lower, &gt, TpeVariant::AsPrinted) <= v + 1e-15);
        }

        let mut rng = travmetric::seeded_rng(seed);
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let shuffled: Vec<_> = perm.iter().map(|&i| rows[i]).collect();
        let (s2, t2, gt2) = split(&shuffled);
        prop_assert!((tpe(&s2, &t2, &gt2, TpeVariant::AsPrinted) - v).abs() < 1e-12);
        prop_assert_eq!(miou(&s2, &gt2).miou, miou(&s, &gt).miou);
    }

    #[test]
    fn masked_map_is_product(rows in prop::collection::vec((any::<bool>(), 0.001..0.999f64), 1..50)) {
        let s: Vec<bool> = rows.iter().map(|r| r.0).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let pred = Prediction::new(vec![[0.0; 3]; s.len()], s.clone(), t.clone());
        for i in 0..s.len() {
            prop_assert_eq!(pred.t_masked[i], t[i] * if s[i] { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn lr_schedule_is_geometric(lr in 1e-6..1e-1f64, gamma in 0.01..=1.0f64, e in 0..60usize) {
        let c = TrainConfig { lr, lr_decay: gamma, ..TrainConfig::default() };
        prop_assert_eq!(c.lr_at(e), lr * gamma.powi(e as i32));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn episodes_are_balanced_and_duplicate_free(seed in any::<u64>(), nq in 1..400usize, half in 1..100usize) {
        let scenes = generate_synthetic_scene(&SyntheticSpec { n_points: 600, seed, ..SyntheticSpec::default() }).unwrap();
        let mut rng = travmetric::seeded_rng(seed);
        let ep = sample_episode(&scenes.query, 0, &scenes.support, 0, nq, 2 * half, &mut rng).unwrap();
        let labels = scenes.support.labels();
        prop_assert!(ep.support_indices.iter().any(|&i| labels[i] == Label::Positive));
        prop_assert!(ep.support_indices.iter().any(|&i| labels[i] == Label::Negative));
        prop_assert!(ep.support_indices.iter().all(|&i| labels[i] != Label::Unlabeled));
        for v in [&ep.query_indices, &ep.support_indices] {
            let mut u = v.clone();
            u.sort();
            u.dedup();
            prop_assert_eq!(u.len(), v.len());
        }
        prop_assert_eq!(ep.query_indices.len(), nq.min(scenes.query.len()));
    }

    #[test]
    fn synthetic_labels_follow_the_path(seed in any::<u64>()) {
        let spec = SyntheticSpec { n_points: 2000, seed, ..SyntheticSpec::default() };
        let s = generate_synthetic_scene(&spec).unwrap();
        let path = spec.path();
        let mut on_path_ground = 0;
        for i in 0..s.query.len() {
            let p = s.query.points()[i];
            let centre = path.offset + path.amplitude * (path.wavenumber * p[0] + path.phase).sin();
            let inside = s.eval.labels()[i] == Label::Positive && (p[1] - centre).abs() <= path.width / 2.0;
            on_path_ground += usize::from(inside);
            prop_assert_eq!(s.query.labels()[i] == Label::Positive, inside);
            if s.query.labels()[i] == Label::Positive {
                prop_assert_eq!(s.eval.labels()[i], Label::Positive);
            }
        }
        prop_assert_eq!(s.query.count(Label::Positive), on_path_ground);
    }
}

#[test]
fn path_fraction_on_the_reference_setting() {
    let spec = SyntheticSpec {
        n_points: 10_000,
        n_trees: 2,
        n_rocks: 2,
        n_bushes: 1,
        seed: 1,
        ..SyntheticSpec::default()
    };
    let s = generate_synthetic_scene(&spec).unwrap();
    let path = spec.path();
    let covered = (0..s.eval.len())
        .filter(|&i| {
            let p = s.eval.points()[i];
            let centre = path.offset + path.amplitude * (path.wavenumber * p[0] + path.phase).sin();
            s.eval.labels()[i] == Label::Positive && (p[1] - centre).abs() <= path.width / 2.0
        })
        .count();
    let frac_query = s.query.count(Label::Positive) as f64 / s.query.len() as f64;
    assert_eq!(frac_query, covered as f64 / s.eval.len() as f64);
    assert!(covered > 0);
}

#[test]
fn renormalize_and_reinit_keep_unit_norm() {
    let mut rng = travmetric::seeded_rng(3);
    let mut b = ProxyBank::init(8, 6, 0.05, &mut rng).unwrap();
    for v in b.positive.data.iter_mut() {
        *v *= 3.0;
    }
    b.renormalize();
    let xs: Vec<Vec<f64>> = (0..5).map(|_| b.positive.row(0).to_vec()).collect();
    b.count_membership(&matrix(&xs));
    let protos = travmetric::proxybank::Prototypes {
        positive: matrix(&[random_unit(6, &mut rng)]),
        negative: matrix(&[random_unit(6, &mut rng)]),
    };
    b.reinit_empty(&protos, 0.01, &mut rng).unwrap();
    for c in Class::BOTH {
        for r in 0..8 {
            let row = b.proxies(c).row(r);
            assert!((dot(row, row).sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
