use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fdmaha_core::fpca::{fit_per_class, fit_pooled};
use fdmaha_core::simulate::{generate_with_seed, smooth_dataset, ScenarioConfig};
use fdmaha_core::{
    BasisSystem, DistanceKind, FittedState, FunctionalDatum, Hyperparameters, LabeledSample, MethodSpec,
    TrainedClassifier, TuningGrid,
};

struct Setup {
    basis: BasisSystem,
    grid: Vec<f64>,
    raw: Vec<Vec<f64>>,
    train: LabeledSample,
    test: Vec<FunctionalDatum>,
}

fn setup() -> Setup {
    let cfg = ScenarioConfig::scenario(1, 200, 50).unwrap();
    let data = generate_with_seed(&cfg, 1).unwrap();
    let basis = BasisSystem::bspline(0.0, 1.0, 6, 20).unwrap();
    let (train, test, _) = smooth_dataset(&basis, &data).unwrap();
    Setup { basis, grid: data.grid.clone(), raw: data.curves.clone(), train, test }
}

fn smoothing(c: &mut Criterion) {
    let s = setup();
    c.bench_function("smooth 200 curves (J=50, M=20)", |b| {
        b.iter(|| {
            let sm = s.basis.smoother(&s.grid).unwrap();
            s.raw.iter().map(|y| sm.fit(y).unwrap()).collect::<Vec<_>>()
        })
    });
}

fn fpca(c: &mut Criterion) {
    let s = setup();
    c.bench_function("pooled FPCA, 150 curves", |b| b.iter(|| fit_pooled(&s.basis, black_box(&s.train)).unwrap()));
    c.bench_function("per-class FPCA, 150 curves", |b| {
        b.iter(|| fit_per_class(&s.basis, black_box(&s.train)).unwrap())
    });
}

fn knn(c: &mut Criterion) {
    let s = setup();
    for kind in [DistanceKind::FmC, DistanceKind::L2, DistanceKind::L1] {
        let spec = MethodSpec::knn(kind);
        let hyper = Hyperparameters { truncation: kind.uses_truncation().then_some(8), k_neighbors: Some(5) };
        let clf = TrainedClassifier::train(&s.basis, &s.train, spec, hyper).unwrap();
        c.bench_function(&format!("{spec}: classify 50 test curves"), |b| {
            b.iter(|| clf.classify_batch(black_box(&s.test)).unwrap())
        });
    }
    let state = FittedState::fit(&s.basis, &s.train, MethodSpec::knn(DistanceKind::FmC)).unwrap();
    let ks: Vec<usize> = (1..=9).collect();
    c.bench_function("kNN/FM_C: full 15x9 grid for one curve", |b| {
        b.iter(|| state.predict_grid(black_box(&s.test[0]), 15, &ks).unwrap())
    });
}

fn tuning(c: &mut Criterion) {
    let s = setup();
    let grid = TuningGrid::default();
    let mut group = c.benchmark_group("cross-validation");
    group.sample_size(10);
    group.bench_function("kNN/FM_C, 10-fold, 15x9 grid", |b| {
        b.iter(|| fdmaha_core::cross_validate(&s.basis, &s.train, MethodSpec::knn(DistanceKind::FmC), &grid, 3).unwrap())
    });
    group.finish();
}

criterion_group!(benches, smoothing, fpca, knn, tuning);
criterion_main!(benches);
