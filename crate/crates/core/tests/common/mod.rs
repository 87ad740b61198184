#![allow(dead_code)]

use fdmaha_core::basis::{BasisSystem, FunctionalDatum};
use fdmaha_core::fpca::LabeledSample;
use fdmaha_core::rng::stream_rng;
use fdmaha_core::simulate::{generate_dataset, ScenarioConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn sim_basis() -> BasisSystem {
    BasisSystem::bspline(0.0, 1.0, 6, 20).unwrap()
}

pub fn random_datum<R: Rng>(basis: &BasisSystem, rng: &mut R) -> FunctionalDatum {
    let c = DVector::from_fn(basis.num_basis(), |_, _| rng.sample::<f64, _>(StandardNormal));
    basis.datum(c).unwrap()
}

/// Trapezoid weights on `n` uniform points of [a, b].
pub fn trapezoid(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = (b - a) / (n - 1) as f64;
    let grid = (0..n).map(|i| if i == n - 1 { b } else { a + h * i as f64 }).collect();
    let w = (0..n).map(|i| if i == 0 || i == n - 1 { h / 2.0 } else { h }).collect();
    (grid, w)
}

/// Scenario curves with every curve in the (smoothed) sample.
pub fn scenario_sample(id: u8, per_class: usize, grid: usize, seed: u64) -> (BasisSystem, LabeledSample) {
    let mut cfg = ScenarioConfig::scenario(id, 200, grid).unwrap();
    cfg.class_sizes = [per_class, per_class];
    cfg.train_sizes = [per_class, per_class];
    let data = generate_dataset(&cfg, &mut stream_rng(seed, 0)).unwrap();
    let basis = sim_basis();
    let sm = basis.smoother(&data.grid).unwrap();
    let curves = data.curves.iter().map(|y| sm.fit(y).unwrap()).collect();
    (basis, LabeledSample::new(curves, data.labels.clone(), 2).unwrap())
}

/// Coefficients whose curves are orthonormal images of `x`: `⟨f_x, f_y⟩ = x'y`.
pub fn embed(basis: &BasisSystem, x: &DVector<f64>) -> FunctionalDatum {
    let s = basis.gram_inv_sqrt().unwrap();
    basis.datum(s * x).unwrap()
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}
