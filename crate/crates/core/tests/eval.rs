mod common;

use common::oracle::{dist, dot, matmul};
use lfa::eval::{classify, evaluate, gt_rank, knn_baseline, modality_gap, predict, rank_histogram, top1_accuracy};
use lfa::{FeatureMatrix, LabeledFeatures, LinearMap, Mat, MapKind, PrototypeMatrix, Rng};
use proptest::prelude::*;

struct Case {
    x: FeatureMatrix<f64>,
    y: PrototypeMatrix<f64>,
    w: LinearMap<f64>,
    labels: Vec<usize>,
}

fn case(seed: u64, n: usize, c: usize, d: usize) -> Case {
    let mut rng = Rng::new(seed);
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(n, d, 1.0)).unwrap();
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(c, d, 1.0)).unwrap();
    let w = LinearMap::new(Mat::identity(d).add(&rng.gaussian_matrix(d, d, 0.3)).unwrap(), MapKind::Refined).unwrap();
    let labels = (0..n).map(|_| rng.below(c)).collect();
    Case { x, y, w, labels }
}

fn mapped(cs: &Case) -> Vec<Vec<f64>> {
    matmul(&common::to_rows(cs.x.matrix()), &common::to_rows(&cs.w.data))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn predict_is_cosine_argmax(seed in 0u64..100_000, n in 1usize..20, c in 2usize..8, d in 2usize..10) {
        let cs = case(seed, n, c, d);
        let preds = predict(&cs.x, &cs.w, &cs.y).unwrap();
        for (zi, &p) in mapped(&cs).iter().zip(&preds) {
            let scores: Vec<f64> = (0..c).map(|j| dot(zi, cs.y.row(j))).collect();
            let best = scores.iter().cloned().fold(f64::MIN, f64::max);
            prop_assert!(scores[p] >= best - 1e-12);
        }
    }

    #[test]
    fn gt_rank_counts_strictly_closer_prototypes(seed in 0u64..100_000, n in 1usize..20, c in 2usize..8, d in 2usize..10) {
        let cs = case(seed, n, c, d);
        let ranks = gt_rank(&cs.x, &cs.w, &cs.y, &cs.labels).unwrap();
        for ((zi, &gt), &r) in mapped(&cs).iter().zip(&cs.labels).zip(&ranks) {
            let own = dist(zi, cs.y.row(gt));
            let closer = (0..c).filter(|&j| j != gt && dist(zi, cs.y.row(j)) < own).count();
            prop_assert_eq!(r, closer + 1);
            prop_assert!((1..=c).contains(&r));
        }
        let hist = rank_histogram(&ranks, c);
        prop_assert_eq!(hist.iter().sum::<usize>(), n);
    }

    #[test]
    fn classify_probabilities_are_a_softmax(seed in 0u64..100_000, n in 1usize..10, c in 2usize..6, tau in 0.01f64..1.0) {
        let cs = case(seed, n, c, 5);
        let (probs, preds) = classify(&cs.x, &cs.w, &cs.y, tau).unwrap();
        for (i, zi) in mapped(&cs).iter().enumerate() {
            let logits: Vec<f64> = (0..c).map(|j| dot(zi, cs.y.row(j)) / tau).collect();
            let mx = logits.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = logits.iter().map(|l| (l - mx).exp()).sum();
            for j in 0..c {
                prop_assert!((probs[(i, j)] - (logits[j] - mx).exp() / z).abs() < 1e-9);
            }
            prop_assert!((probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert_eq!(preds, predict(&cs.x, &cs.w, &cs.y).unwrap());
    }
}

#[test]
fn knn_matches_brute_force() {
    let mut rng = Rng::new(31);
    for _ in 0..20 {
        let n = 5 + rng.below(20);
        let c = 2 + rng.below(4);
        let train_x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(n, 6, 1.0)).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
        let train = LabeledFeatures::new(train_x, labels.clone(), c).unwrap();
        let test = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(8, 6, 1.0)).unwrap();
        let k = 1 + rng.below(5);
        let got = knn_baseline(&train, &test, k).unwrap();
        for (q, &g) in got.iter().enumerate() {
            let qv = test.matrix().row(q);
            let mut sims: Vec<(f64, usize)> = (0..n).map(|i| (dot(qv, train.features.matrix().row(i)), i)).collect();
            sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let mut votes = vec![0; c];
            for &(_, i) in &sims[..k] {
                votes[labels[i]] += 1;
            }
            let top = *votes.iter().max().unwrap();
            let expect = sims[..k].iter().map(|&(_, i)| labels[i]).find(|&l| votes[l] == top).unwrap();
            assert_eq!(g, expect);
        }
    }
}

#[test]
fn knn_rejects_bad_k() {
    let mut rng = Rng::new(32);
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(4, 3, 1.0)).unwrap();
    let train = LabeledFeatures::new(x.clone(), vec![0, 1, 0, 1], 2).unwrap();
    assert_eq!(knn_baseline(&train, &x, 0).unwrap_err().name(), "InvalidConfig");
    assert_eq!(knn_baseline(&train, &x, 5).unwrap_err().name(), "InvalidConfig");
}

#[test]
fn perfect_alignment_puts_everything_at_rank_one() {
    let mut rng = Rng::new(33);
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(6, 8, 1.0)).unwrap();
    let labels: Vec<usize> = (0..18).map(|i| i % 6).collect();
    let x = FeatureMatrix::new(&y.gather(&labels)).unwrap();
    let data = LabeledFeatures::new(x, labels, 6).unwrap();
    let report = evaluate(&data, &LinearMap::identity(8), &y).unwrap();
    assert_eq!(report.top1, 1.0);
    assert_eq!(report.mean_gt_rank, 1.0);
    assert_eq!(report.rank_histogram[0], 18);
    assert!(report.modality_gap < 1e-12);
    assert!(report.per_class_acc.iter().all(|a| *a == Some(1.0)));
}

#[test]
fn absent_classes_have_no_accuracy() {
    let mut rng = Rng::new(34);
    let y = PrototypeMatrix::<f64>::unnamed(&rng.gaussian_matrix(4, 5, 1.0)).unwrap();
    let x = FeatureMatrix::<f64>::new(&rng.gaussian_matrix(3, 5, 1.0)).unwrap();
    let data = LabeledFeatures::new(x, vec![0, 0, 2], 4).unwrap();
    let report = evaluate(&data, &LinearMap::identity(5), &y).unwrap();
    assert!(report.per_class_acc[1].is_none() && report.per_class_acc[3].is_none());
    assert!(report.per_class_acc[0].is_some());
}

#[test]
fn modality_gap_is_centroid_distance() {
    let a = Mat::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
    let b = Mat::from_rows(&[[0.0, 0.0], [0.0, 0.0]]);
    let g: f64 = modality_gap(&a, &b).unwrap();
    assert!((g - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn top1_rejects_length_mismatch() {
    assert_eq!(top1_accuracy(&[0, 1], &[0]).unwrap_err().name(), "LengthMismatch");
    assert_eq!(top1_accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
}
