mod common;

use common::{random_datum, scenario_sample, trapezoid};
use fdmaha_core::fpca::{fit_global, fit_pooled, sample_mean, Center, FpcaModel};
use fdmaha_core::quadrature::uniform_grid;
use fdmaha_core::rng::stream_rng;
use fdmaha_core::simulate::{base_eigenvalue, class_mean};
use fdmaha_core::{BasisSystem, FunctionalDatum, LabeledSample};

fn gram_of_eigenfunctions(basis: &BasisSystem, model: &FpcaModel) -> nalgebra::DMatrix<f64> {
    let c = model.eigenfunction_coeffs();
    c.transpose() * basis.gram() * c
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

#[test]
fn eigenfunctions_are_orthonormal() {
    let (basis, sample) = scenario_sample(1, 100, 50, 21);
    for model in [fit_global(&basis, sample.data()).unwrap(), fit_pooled(&basis, &sample).unwrap()] {
        let g = gram_of_eigenfunctions(&basis, &model);
        let k = model.retained_count();
        assert!(k > 10);
        let worst = (g - nalgebra::DMatrix::<f64>::identity(k, k)).amax();
        assert!(worst <= 1e-8, "orthonormality defect {worst}");
    }
}

#[test]
fn score_variances_recover_eigenvalues() {
    let (basis, sample) = scenario_sample(1, 100, 50, 22);
    let global = fit_global(&basis, sample.data()).unwrap();
    let k = global.retained_count();
    let scores: Vec<Vec<f64>> = sample.data().iter().map(|f| global.scores(f, Center::Global, k).unwrap()).collect();
    for j in 0..k {
        let col: Vec<f64> = scores.iter().map(|s| s[j]).collect();
        let lam = global.eigenvalues()[j];
        assert!((variance(&col) - lam).abs() <= 1e-8 * lam, "global k={j}");
    }

    let pooled = fit_pooled(&basis, &sample).unwrap();
    let k = pooled.retained_count();
    let n = sample.len() as f64;
    for j in 0..k {
        // class-centered scores have zero mean within each class
        let ss: f64 = sample
            .data()
            .iter()
            .zip(sample.labels())
            .map(|(f, &l)| pooled.scores(f, Center::Class(l), k).unwrap()[j].powi(2))
            .sum();
        let lam = pooled.eigenvalues()[j];
        assert!((ss / n - lam).abs() <= 1e-8 * lam, "pooled k={j}");
    }
}

#[test]
fn eigenvalues_sum_to_covariance_trace() {
    let (basis, sample) = scenario_sample(1, 100, 50, 23);
    let model = fit_global(&basis, sample.data()).unwrap();
    let mean = sample_mean(sample.data()).unwrap();
    let m = basis.num_basis();
    let mut cov = nalgebra::DMatrix::<f64>::zeros(m, m);
    for f in sample.data() {
        let r = f.coeffs() - mean.coeffs();
        cov += &r * r.transpose();
    }
    cov /= sample.len() as f64;
    let trace = (cov * basis.gram()).trace();
    let total: f64 = model.eigenvalues().iter().sum();
    assert!((total - trace).abs() <= 1e-8 * trace, "{total} vs {trace}");
}

#[test]
fn pooled_with_one_class_is_global() {
    let (basis, sample) = scenario_sample(1, 40, 50, 24);
    let one = LabeledSample::new(sample.data().to_vec(), vec![0; sample.len()], 1).unwrap();
    let pooled = fit_pooled(&basis, &one).unwrap();
    let global = fit_global(&basis, one.data()).unwrap();
    assert_eq!(pooled.eigenvalues(), global.eigenvalues());
    assert_eq!(pooled.eigenfunction_coeffs(), global.eigenfunction_coeffs());
}

/// The class-1 process has Brownian covariance, `Var χ(t) = Σ λ_k ψ_k(t)² = t`,
/// so the mean of 75 curves has pointwise standard deviation `(t / 75)^{1/2}`.
#[test]
fn class_mean_concentrates() {
    let grid = uniform_grid(0.1, 0.9, 81);
    let mut within_tenth = 0;
    for seed in 0..10 {
        let (basis, sample) = scenario_sample(1, 75, 50, 100 + seed);
        let members: Vec<FunctionalDatum> =
            sample.class_indices(0).into_iter().map(|i| sample.data()[i].clone()).collect();
        let mean = sample_mean(&members).unwrap();
        let vals = basis.evaluate(&mean, &grid).unwrap();
        let mut worst = 0.0f64;
        for (&t, v) in grid.iter().zip(&vals) {
            let err = (v - class_mean(0, t)).abs();
            let sd = ((t + 0.01 / 50.0) / 75.0).sqrt();
            assert!(err < 4.0 * sd, "seed {seed}, t={t}: {err}");
            worst = worst.max(err);
        }
        within_tenth += usize::from(worst < 0.1);
    }
    println!("{within_tenth}/10 seeds within 0.1 uniformly on [0.1, 0.9]");
}

#[test]
fn leading_eigenvalues_recovered() {
    let (basis, sample) = scenario_sample(1, 1000, 50, 25);
    let model = fit_pooled(&basis, &sample).unwrap();
    for k in 1..=2 {
        let (est, truth) = (model.eigenvalues()[k - 1], base_eigenvalue(k));
        assert!((est - truth).abs() <= 0.1 * truth, "λ_{k}: {est} vs {truth}");
    }
    assert!((base_eigenvalue(1) - 0.40528).abs() < 1e-5);
    assert!((base_eigenvalue(2) - 0.04503).abs() < 1e-5);
}

#[test]
fn scores_match_quadrature() {
    let (basis, sample) = scenario_sample(1, 50, 50, 26);
    let model = fit_pooled(&basis, &sample).unwrap();
    let mut rng = stream_rng(27, 0);
    let f = random_datum(&basis, &mut rng);
    let mu = model.mean(Center::Class(1)).unwrap();
    let (grid, w) = trapezoid(0.0, 1.0, 100_001);
    let resid: Vec<f64> = basis
        .evaluate(&f, &grid)
        .unwrap()
        .iter()
        .zip(basis.evaluate(mu, &grid).unwrap())
        .map(|(a, b)| a - b)
        .collect();
    let theta = model.scores(&f, Center::Class(1), 8).unwrap();
    for (k, th) in theta.iter().enumerate() {
        let psi = basis.evaluate(&model.eigenfunction(k), &grid).unwrap();
        let quad: f64 = resid.iter().zip(&psi).zip(&w).map(|((r, p), w)| r * p * w).sum();
        assert!((th - quad).abs() <= 1e-6, "k={k}: {th} vs {quad}");
    }
}

#[test]
fn standardized_scores_have_unit_variance_out_of_sample() {
    let (basis, fit) = scenario_sample(1, 1000, 50, 28);
    let (_, fresh) = scenario_sample(1, 1000, 50, 29);
    let model = fit_pooled(&basis, &fit).unwrap();
    let omega: Vec<Vec<f64>> = fresh
        .data()
        .iter()
        .zip(fresh.labels())
        .map(|(f, &l)| model.standardized_scores(f, Center::Class(l), 5).unwrap())
        .collect();
    for k in 0..5 {
        let col: Vec<f64> = omega.iter().map(|w| w[k]).collect();
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let var = variance(&col);
        assert!(mean.abs() < 0.1, "k={k} mean {mean}");
        assert!((0.8..=1.2).contains(&var), "k={k} variance {var}");
    }
}
