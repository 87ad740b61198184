mod common;

use common::{embed, random_datum, scenario_sample};
use fdmaha_core::classifiers::{
    centroid_classify, coef_bayes_classify, flbcr_classify, fqbcr_classify, knn_classify, majority_vote,
};
use fdmaha_core::distances::{d_lp, LpNorm, ModelSet};
use fdmaha_core::fpca::{fit_per_class, fit_pooled, Center};
use fdmaha_core::rng::stream_rng;
use fdmaha_core::{
    BasisSystem, DistanceKind, FunctionalDatum, Hyperparameters, LabeledSample, Method, MethodSpec, TrainedClassifier,
};
use nalgebra::DVector;
use rand::Rng;

fn hyper(truncation: Option<usize>, k: Option<usize>) -> Hyperparameters {
    Hyperparameters { truncation, k_neighbors: k }
}

fn line_point(basis: &BasisSystem, x: f64) -> FunctionalDatum {
    embed(basis, &DVector::from_fn(6, |i, _| if i == 0 { x } else { 0.0 }))
}

#[test]
fn knn_matches_exhaustive_enumeration() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 6).unwrap();
    let xs = [0.0, 0.4, 1.1, 2.0, 2.2];
    let labels = vec![0, 1, 0, 1, 1];
    let sample = LabeledSample::new(xs.iter().map(|&x| line_point(&basis, x)).collect(), labels.clone(), 2).unwrap();
    let clf = TrainedClassifier::train(&basis, &sample, MethodSpec::knn(DistanceKind::L2), hyper(None, Some(3))).unwrap();
    for q in [-1.0, 0.3, 0.75, 1.0, 1.6, 3.0] {
        let f0 = line_point(&basis, q);
        let mut d: Vec<(f64, usize)> = sample
            .data()
            .iter()
            .zip(&labels)
            .map(|(f, &l)| (d_lp(&basis, &f0, f, LpNorm::L2).unwrap(), l))
            .collect();
        for (i, &x) in xs.iter().enumerate() {
            assert!((d[i].0 - (q - x).abs()).abs() < 1e-10);
        }
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ones = d[..3].iter().filter(|p| p.1 == 1).count();
        let expected = usize::from(ones >= 2);
        assert_eq!(knn_classify(&clf, &f0).unwrap(), expected, "query {q}");
    }
}

#[test]
fn knn_sanity() {
    let (basis, sample) = scenario_sample(1, 15, 50, 51);
    for kind in [DistanceKind::L1, DistanceKind::L2, DistanceKind::Linf, DistanceKind::FmC, DistanceKind::FpcD] {
        let t = kind.uses_truncation().then_some(6);
        let clf = TrainedClassifier::train(&basis, &sample, MethodSpec::knn(kind), hyper(t, Some(1))).unwrap();
        for (f, &l) in sample.data().iter().zip(sample.labels()) {
            assert_eq!(clf.classify(f).unwrap(), l, "{kind}");
        }
    }
    let one = LabeledSample::new(sample.data().to_vec(), vec![0; sample.len()], 1).unwrap();
    let clf = TrainedClassifier::train(&basis, &one, MethodSpec::knn(DistanceKind::L2), hyper(None, Some(7))).unwrap();
    let mut rng = stream_rng(52, 0);
    assert_eq!(clf.classify(&random_datum(&basis, &mut rng)).unwrap(), 0);
}

#[test]
fn majority_vote_tie_shrinks_k() {
    assert_eq!(majority_vote(&[1, 0, 0, 1], 4, 2), 0);
    assert_eq!(majority_vote(&[0, 1, 1, 0], 4, 2), 1);
    assert_eq!(majority_vote(&[0, 1], 2, 2), 0);
}

#[test]
fn centroid_fm_matches_brute_force_scores() {
    let (basis, sample) = scenario_sample(1, 5, 50, 53);
    let k = 2;
    let clf = TrainedClassifier::train(&basis, &sample, MethodSpec::centroid(DistanceKind::FmC), hyper(Some(k), None))
        .unwrap();
    let model = fit_pooled(&basis, &sample).unwrap();
    let (_, queries) = scenario_sample(1, 10, 50, 54);
    for f0 in queries.data() {
        let crit: Vec<f64> = (0..2)
            .map(|g| {
                let mu = model.mean(Center::Class(g)).unwrap();
                let r = f0.sub(mu).unwrap();
                (0..k)
                    .map(|j| {
                        let w = basis.inner_product(&r, &model.eigenfunction(j)).unwrap() / model.eigenvalues()[j].sqrt();
                        w * w
                    })
                    .sum::<f64>()
            })
            .collect();
        let expected = usize::from(crit[1] < crit[0]);
        assert_eq!(centroid_classify(&clf, f0).unwrap(), expected);
    }
}

#[test]
fn flbcr_hand_criterion_with_unequal_priors() {
    let (basis, sample) = scenario_sample(1, 8, 50, 55);
    let priors = [0.8, 0.2];
    let clf =
        TrainedClassifier::train_with_priors(&basis, &sample, MethodSpec::plain(Method::Flbcr), hyper(Some(1), None), &priors)
            .unwrap();
    let model = fit_pooled(&basis, &sample).unwrap();
    let lam = model.eigenvalues()[0];
    let psi = model.eigenfunction(0);
    let m0 = model.mean(Center::Class(0)).unwrap();
    let m1 = model.mean(Center::Class(1)).unwrap();
    let mut rng = stream_rng(56, 0);
    let mut flipped = 0;
    for _ in 0..200 {
        let t: f64 = rng.random_range(-1.0..2.0);
        let f0 = m0.axpy(t, &m1.sub(m0).unwrap()).unwrap();
        let score = |mu: &FunctionalDatum| basis.inner_product(&f0.sub(mu).unwrap(), &psi).unwrap() / lam.sqrt();
        let c0 = score(m0).powi(2) - 2.0 * priors[0].ln();
        let c1 = score(m1).powi(2) - 2.0 * priors[1].ln();
        let expected = usize::from(c1 < c0);
        flipped += usize::from(expected != usize::from(score(m1).abs() < score(m0).abs()));
        assert_eq!(flbcr_classify(&clf, &f0).unwrap(), expected, "t={t}");
    }
    assert!(flipped > 0, "priors never mattered");
}

#[test]
fn fqbcr_hand_criterion() {
    let (basis, sample) = scenario_sample(2, 10, 50, 57);
    let k = 2;
    let clf = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::Fqbcr), hyper(Some(k), None)).unwrap();
    let models = fit_per_class(&basis, &sample).unwrap();
    let (_, queries) = scenario_sample(2, 20, 50, 58);
    for f0 in queries.data() {
        let crit: Vec<f64> = (0..2)
            .map(|g| {
                let m = &models[g];
                let r = f0.sub(m.mean(Center::Class(g)).unwrap()).unwrap();
                (0..k)
                    .map(|j| {
                        let lam = m.eigenvalues()[j];
                        basis.inner_product(&r, &m.eigenfunction(j)).unwrap().powi(2) / lam + lam.ln()
                    })
                    .sum::<f64>()
            })
            .collect();
        let expected = usize::from(crit[1] < crit[0]);
        assert_eq!(fqbcr_classify(&clf, f0).unwrap(), expected);
    }
}

#[test]
fn flbcr_equals_centroid_fm_with_equal_priors() {
    let (basis, sample) = scenario_sample(1, 40, 50, 59);
    let (_, test) = scenario_sample(1, 100, 50, 60);
    for k in [1, 3, 7, 12] {
        let a = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::Flbcr), hyper(Some(k), None)).unwrap();
        let b = TrainedClassifier::train(&basis, &sample, MethodSpec::centroid(DistanceKind::FmC), hyper(Some(k), None))
            .unwrap();
        assert_eq!(a.classify_batch(test.data()).unwrap(), b.classify_batch(test.data()).unwrap());
    }
}

/// Class 1 is class 0 shifted by a fixed curve, so both classes share one
/// covariance exactly.
fn shifted_classes(basis: &BasisSystem, seed: u64) -> LabeledSample {
    let mut rng = stream_rng(seed, 0);
    let base: Vec<FunctionalDatum> = (0..30).map(|_| random_datum(basis, &mut rng)).collect();
    let shift = random_datum(basis, &mut rng).scale(0.7);
    let mut data = base.clone();
    data.extend(base.iter().map(|f| f.add(&shift).unwrap()));
    LabeledSample::new(data, [vec![0; 30], vec![1; 30]].concat(), 2).unwrap()
}

#[test]
fn fqbcr_with_identical_models_matches_flbcr() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 8).unwrap();
    let sample = shifted_classes(&basis, 61);
    let q = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::Fqbcr), hyper(Some(4), None)).unwrap();
    let l = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::Flbcr), hyper(Some(4), None)).unwrap();
    let ModelSet::PerClass(ms) = q.state().models().unwrap() else { panic!("per-class models expected") };
    assert!((ms[0].eigenvalues()[0] - ms[1].eigenvalues()[0]).abs() < 1e-10);
    let mut rng = stream_rng(62, 0);
    let points: Vec<FunctionalDatum> = (0..100).map(|_| random_datum(&basis, &mut rng)).collect();
    assert_eq!(q.classify_batch(&points).unwrap(), l.classify_batch(&points).unwrap());
}

#[test]
fn qbcr_with_identical_covariances_matches_lbcr() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 8).unwrap();
    let sample = shifted_classes(&basis, 63);
    let q = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::QbcrCoef), hyper(None, None)).unwrap();
    let l = TrainedClassifier::train(&basis, &sample, MethodSpec::plain(Method::LbcrCoef), hyper(None, None)).unwrap();
    let mut rng = stream_rng(64, 0);
    let points: Vec<FunctionalDatum> = (0..100).map(|_| random_datum(&basis, &mut rng)).collect();
    assert_eq!(q.classify_batch(&points).unwrap(), l.classify_batch(&points).unwrap());
}

#[test]
fn coefficient_rules_in_one_dimension() {
    let basis = BasisSystem::bspline(0.0, 1.0, 1, 1).unwrap();
    let xs0 = [0.0, 1.0, 2.0];
    let xs1 = [3.0, 5.0, 7.0];
    let data = xs0.iter().chain(&xs1).map(|&x| basis.datum(DVector::from_element(1, x)).unwrap()).collect();
    let sample = LabeledSample::new(data, vec![0, 0, 0, 1, 1, 1], 2).unwrap();
    let priors = [0.3, 0.7];
    let lbcr = TrainedClassifier::train_with_priors(&basis, &sample, MethodSpec::plain(Method::LbcrCoef), hyper(None, None), &priors)
        .unwrap();
    let qbcr = TrainedClassifier::train_with_priors(&basis, &sample, MethodSpec::plain(Method::QbcrCoef), hyper(None, None), &priors)
        .unwrap();
    // class means 1 and 5; within-class variances 2/3 and 8/3, pooled 5/3
    let ridge = |v: f64| v * (1.0 + 1e-8);
    let (v0, v1, vp) = (ridge(2.0 / 3.0), ridge(8.0 / 3.0), ridge(5.0 / 3.0));
    for x in [-1.0, 1.5, 2.6, 2.9, 3.1, 3.5, 4.0, 9.0] {
        let f0 = basis.datum(DVector::from_element(1, x)).unwrap();
        let l0 = (x - 1.0f64).powi(2) / vp - 2.0 * priors[0].ln();
        let l1 = (x - 5.0f64).powi(2) / vp - 2.0 * priors[1].ln();
        assert_eq!(coef_bayes_classify(&lbcr, &f0).unwrap(), usize::from(l1 < l0), "LBCR x={x}");
        let q0 = (x - 1.0f64).powi(2) / v0 + v0.ln() - 2.0 * priors[0].ln();
        let q1 = (x - 5.0f64).powi(2) / v1 + v1.ln() - 2.0 * priors[1].ln();
        assert_eq!(coef_bayes_classify(&qbcr, &f0).unwrap(), usize::from(q1 < q0), "QBCR x={x}");
    }
}

#[test]
fn centroid_tie_goes_to_lowest_class() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 6).unwrap();
    let data = [-1.0, -1.2, 1.0, 1.2].iter().map(|&x| line_point(&basis, x)).collect();
    let sample = LabeledSample::new(data, vec![0, 0, 1, 1], 2).unwrap();
    let clf = TrainedClassifier::train(&basis, &sample, MethodSpec::centroid(DistanceKind::L2), hyper(None, None)).unwrap();
    assert_eq!(clf.classify(&line_point(&basis, 0.0)).unwrap(), 0);
    assert_eq!(clf.classify(&line_point(&basis, 1.1)).unwrap(), 1);
}
