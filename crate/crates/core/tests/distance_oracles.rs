mod common;

use std::sync::OnceLock;

use common::{embed, inverse, random_datum, scenario_sample, trapezoid};
use fdmaha_core::distances::{d_dh, d_fm, d_fpc, d_lp, DistanceKind, DistanceSpec, LpNorm, ModelSet};
use fdmaha_core::fpca::{fit_global, fit_per_class, fit_pooled, Center};
use fdmaha_core::rng::stream_rng;
use fdmaha_core::{BasisSystem, FunctionalDatum, LabeledSample};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

struct Fixture {
    basis: BasisSystem,
    pooled: ModelSet,
    per_class: ModelSet,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (basis, sample) = scenario_sample(2, 60, 50, 31);
        let pooled = ModelSet::Common(fit_pooled(&basis, &sample).unwrap());
        let per_class = ModelSet::PerClass(fit_per_class(&basis, &sample).unwrap());
        Fixture { basis, pooled, per_class }
    })
}

fn distance(kind: DistanceKind, k: usize, f: &FunctionalDatum, g: &FunctionalDatum, class: usize) -> f64 {
    let fx = fixture();
    let spec = DistanceSpec::new(kind, k);
    match kind {
        DistanceKind::L1 => d_lp(&fx.basis, f, g, LpNorm::L1).unwrap(),
        DistanceKind::L2 => d_lp(&fx.basis, f, g, LpNorm::L2).unwrap(),
        DistanceKind::Linf => d_lp(&fx.basis, f, g, LpNorm::Linf).unwrap(),
        DistanceKind::FpcC => d_fpc(&spec, &fx.pooled, f, g, class).unwrap(),
        DistanceKind::FpcD => d_fpc(&spec, &fx.per_class, f, g, class).unwrap(),
        DistanceKind::FmC => d_fm(&spec, &fx.pooled, f, g, class).unwrap(),
        DistanceKind::FmD => d_fm(&spec, &fx.per_class, f, g, class).unwrap(),
        DistanceKind::Dh => unreachable!(),
    }
}

fn datum_strategy() -> impl Strategy<Value = FunctionalDatum> {
    prop::collection::vec(-3.0f64..3.0, 20).prop_map(|c| fixture().basis.datum(DVector::from_vec(c)).unwrap())
}

const SEMI: [DistanceKind; 7] = [
    DistanceKind::L1,
    DistanceKind::L2,
    DistanceKind::Linf,
    DistanceKind::FpcC,
    DistanceKind::FpcD,
    DistanceKind::FmC,
    DistanceKind::FmD,
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn semi_distance_axioms(
        f in datum_strategy(),
        g in datum_strategy(),
        h in datum_strategy(),
        kind in prop::sample::select(SEMI.to_vec()),
        k in 1usize..=12,
        class in 0usize..2,
    ) {
        let dfg = distance(kind, k, &f, &g, class);
        let dgf = distance(kind, k, &g, &f, class);
        let dfh = distance(kind, k, &f, &h, class);
        let dhg = distance(kind, k, &h, &g, class);
        prop_assert!(dfg >= 0.0);
        prop_assert!((dfg - dgf).abs() <= 1e-10 * (1.0 + dfg));
        prop_assert!(dfg <= dfh + dhg + 1e-10 * (1.0 + dfg));
        prop_assert!(distance(kind, k, &f, &f, class) <= 1e-10);
    }

    #[test]
    fn truncated_distances_grow_with_k(f in datum_strategy(), g in datum_strategy(), class in 0usize..2) {
        for kind in [DistanceKind::FmC, DistanceKind::FmD, DistanceKind::FpcC, DistanceKind::FpcD] {
            let mut prev = 0.0;
            for k in 1..=12 {
                let d = distance(kind, k, &f, &g, class);
                prop_assert!(d + 1e-12 >= prev, "{} at K={}", kind, k);
                prev = d;
            }
        }
    }

    #[test]
    fn common_model_distance_ignores_centering(f in datum_strategy(), g in datum_strategy()) {
        for kind in [DistanceKind::FmC, DistanceKind::FpcC] {
            let a = distance(kind, 8, &f, &g, 0);
            let b = distance(kind, 8, &f, &g, 1);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a));
        }
    }
}

/// Random correlated 6-dimensional sample.
fn multivariate_sample<R: Rng>(rng: &mut R, n: usize) -> Vec<DVector<f64>> {
    let a = DMatrix::from_fn(6, 6, |_, _| rng.sample::<f64, _>(StandardNormal));
    let shift = DVector::from_fn(6, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    (0..n).map(|_| &a * DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal)) + &shift).collect()
}

#[test]
fn fm_equals_multivariate_mahalanobis() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 6).unwrap();
    let mut rng = stream_rng(41, 0);
    for _ in 0..50 {
        let xs = multivariate_sample(&mut rng, 40);
        let n = xs.len() as f64;
        let mean = xs.iter().fold(DVector::zeros(6), |acc, x| acc + x) / n;
        let cov = xs.iter().fold(DMatrix::zeros(6, 6), |acc, x| acc + (x - &mean) * (x - &mean).transpose()) / n;
        let cinv = inverse(&cov);

        let curves: Vec<FunctionalDatum> = xs.iter().map(|x| embed(&basis, x)).collect();
        let models = ModelSet::Common(fit_global(&basis, &curves).unwrap());
        let spec = DistanceSpec::new(DistanceKind::FmC, 6);
        for i in 0..5 {
            let (x, y) = (&xs[2 * i], &xs[2 * i + 1]);
            let classical = ((x - y).transpose() * &cinv * (x - y))[(0, 0)].sqrt();
            let functional = d_fm(&spec, &models, &curves[2 * i], &curves[2 * i + 1], 0).unwrap();
            assert!((functional - classical).abs() <= 1e-6 * classical, "{functional} vs {classical}");
        }
    }
}

#[test]
fn l1_linf_match_dense_grid() {
    let basis = &fixture().basis;
    let mut rng = stream_rng(42, 0);
    let (grid, w) = trapezoid(0.0, 1.0, 100_001);
    for _ in 0..5 {
        let f = random_datum(basis, &mut rng);
        let g = random_datum(basis, &mut rng);
        let diff: Vec<f64> = basis
            .evaluate(&f, &grid)
            .unwrap()
            .iter()
            .zip(basis.evaluate(&g, &grid).unwrap())
            .map(|(a, b)| (a - b).abs())
            .collect();
        let l1: f64 = diff.iter().zip(&w).map(|(d, w)| d * w).sum();
        let linf = diff.iter().copied().fold(0.0, f64::max);
        let d1 = d_lp(basis, &f, &g, LpNorm::L1).unwrap();
        let dinf = d_lp(basis, &f, &g, LpNorm::Linf).unwrap();
        assert!((d1 - l1).abs() <= 1e-4 * l1, "L1 {d1} vs {l1}");
        assert!((dinf - linf).abs() <= 1e-4 * linf, "Linf {dinf} vs {linf}");
    }
}

#[test]
fn opposite_unit_offsets_are_two_apart() {
    let fx = fixture();
    let ModelSet::Common(model) = &fx.pooled else { unreachable!() };
    let mu = model.mean(Center::Class(0)).unwrap();
    let step = model.eigenfunction(0).scale(model.eigenvalues()[0].sqrt());
    let f = mu.add(&step).unwrap();
    let g = mu.sub(&step).unwrap();
    for k in [1, 4, 10] {
        let d = d_fm(&DistanceSpec::new(DistanceKind::FmC, k), &fx.pooled, &f, &g, 0).unwrap();
        assert!((d - 2.0).abs() < 1e-8, "K={k}: {d}");
    }
    let c = 0.37;
    let h = f.add(&model.eigenfunction(0).scale(c)).unwrap();
    let d = d_fpc(&DistanceSpec::new(DistanceKind::FpcC, 5), &fx.pooled, &h, &f, 1).unwrap();
    assert!((d - c).abs() < 1e-10);
}

#[test]
fn semi_distance_witness() {
    let fx = fixture();
    let ModelSet::Common(model) = &fx.pooled else { unreachable!() };
    let mut rng = stream_rng(43, 0);
    let f = random_datum(&fx.basis, &mut rng);
    let k = 5;
    let g = f.add(&model.eigenfunction(k)).unwrap();
    let d = d_fm(&DistanceSpec::new(DistanceKind::FmC, k), &fx.pooled, &f, &g, 0).unwrap();
    assert!(d < 1e-10, "{d}");
    assert!((d_lp(&fx.basis, &f, &g, LpNorm::L2).unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn fm_is_scale_free_and_l2_scales() {
    let (basis, sample) = scenario_sample(1, 40, 50, 44);
    let c = 3.7;
    let scaled = LabeledSample::new(sample.data().iter().map(|f| f.scale(c)).collect(), sample.labels().to_vec(), 2)
        .unwrap();
    let m1 = ModelSet::Common(fit_pooled(&basis, &sample).unwrap());
    let m2 = ModelSet::Common(fit_pooled(&basis, &scaled).unwrap());
    let mut rng = stream_rng(45, 0);
    let spec = DistanceSpec::new(DistanceKind::FmC, 7);
    for _ in 0..10 {
        let f = random_datum(&basis, &mut rng);
        let g = random_datum(&basis, &mut rng);
        let a = d_fm(&spec, &m1, &f, &g, 0).unwrap();
        let b = d_fm(&spec, &m2, &f.scale(c), &g.scale(c), 0).unwrap();
        assert!((a - b).abs() <= 1e-8 * a, "{a} vs {b}");
        let l2 = d_lp(&basis, &f, &g, LpNorm::L2).unwrap();
        let l2c = d_lp(&basis, &f.scale(c), &g.scale(c), LpNorm::L2).unwrap();
        assert!((l2c - c * l2).abs() <= 1e-12 * l2c);
    }
}

#[test]
fn dh_rank_one_hand_value() {
    let basis = BasisSystem::bspline(0.0, 1.0, 4, 6).unwrap();
    let (a, b) = (2.0, 0.5);
    let e = |i: usize| DVector::from_fn(6, |j, _| if i == j { 1.0 } else { 0.0 });
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for class in 0..2 {
        for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            xs.push(e(0) * (s1 * a + class as f64 * a) + e(1) * (s2 * b));
            labels.push(class);
        }
    }
    let sample = LabeledSample::new(xs.iter().map(|x| embed(&basis, x)).collect(), labels, 2).unwrap();
    let model = fit_pooled(&basis, &sample).unwrap();
    assert!((model.eigenvalues()[0] - a * a).abs() < 1e-10);
    let models = ModelSet::Common(model);
    for c in [-1.3, 0.0, 0.8, 2.5] {
        let f = embed(&basis, &(e(0) * c));
        let d = d_dh(2, &models, &f, 0).unwrap();
        assert!((d - (c / a).abs()).abs() < 1e-10, "c={c}: {d}");
    }
}
