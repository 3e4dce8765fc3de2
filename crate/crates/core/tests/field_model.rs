mod common;

use std::f64::consts::{PI, TAU};

use annulus_core::field::{
    fit_map_with_diagnostics, fourier_features, kernel, log_map_objective, AnnulusKernel,
};
use annulus_core::synth::sample_measurements;
use annulus_core::{
    fit_map, Hyperparameters, Location, OptimizerSettings, PredictiveSource, SensorDataset,
    StationConfig, TrainedField,
};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Continuous, Normal};

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0_f64, 0.0_f64);
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

fn kernel_term_by_term(x: Location, y: Location, h: &Hyperparameters, w: &[u32]) -> f64 {
    let mut terms = vec![h.fourier_variances[0]];
    for (q, &om) in w.iter().enumerate() {
        let om = om as f64;
        terms.push(h.fourier_variances[2 * q + 1] * (om * x.theta).sin() * (om * y.theta).sin());
        terms.push(h.fourier_variances[2 * q + 2] * (om * x.theta).cos() * (om * y.theta).cos());
    }
    let kc = compensated_sum(terms);
    let dr = x.r - y.r;
    h.radial_signal_variance * (-dr * dr / (2.0 * h.radial_lengthscale_sq)).exp() * kc
}

#[test]
fn fourier_feature_layout() {
    assert_eq!(
        fourier_features(0.0, &[1, 2]),
        vec![1.0, 0.0, 1.0, 0.0, 1.0]
    );
    let q = fourier_features(PI / 2.0, &[1]);
    assert!((q[1] - 1.0).abs() < 1e-15 && q[2].abs() < 1e-15);
    let w: Vec<u32> = (1..=8).collect();
    let a = fourier_features(0.0, &w);
    let b = fourier_features(TAU, &w);
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn kernel_same_point_example() {
    let h = Hyperparameters::unit(1);
    let x = Location::new(0.5, 1.0);
    assert!((kernel(x, x, &h, &[1]) - 2.0).abs() < 1e-15);
}

#[test]
fn kernel_matches_term_by_term_oracle() {
    let mut rng = rng(11);
    let w: Vec<u32> = (1..=8).collect();
    for _ in 0..2000 {
        let h = random_hyper(8, &mut rng);
        let l = random_locations(2, &mut rng);
        let got = kernel(l[0], l[1], &h, &w);
        let want = kernel_term_by_term(l[0], l[1], &h, &w);
        let scale = h.radial_signal_variance * h.fourier_variances.iter().sum::<f64>();
        assert!((got - want).abs() <= 1e-13 * scale, "{got} vs {want}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_symmetry_and_periodicity(
        r1 in 0.0..=1.0_f64, t1 in 0.0..TAU, r2 in 0.0..=1.0_f64, t2 in 0.0..TAU, seed in 0u64..1000
    ) {
        let h = random_hyper(8, &mut rng(seed));
        let w: Vec<u32> = (1..=8).collect();
        let (a, b) = (Location::new(r1, t1), Location::new(r2, t2));
        prop_assert_eq!(kernel(a, b, &h, &w).to_bits(), kernel(b, a, &h, &w).to_bits());
        let k = kernel(a, b, &h, &w);
        let shifted = kernel(Location::new(r1, t1 + TAU), b, &h, &w);
        let bound = 1e-12 * h.radial_signal_variance * h.fourier_variances.iter().sum::<f64>();
        prop_assert!((k - shifted).abs() <= bound.max(1e-12 * k.abs()));
    }

    #[test]
    fn gram_matrices_are_psd(n in 2usize..50, seed in 0u64..10_000) {
        let mut g = rng(seed);
        let h = random_hyper(3, &mut g);
        let locs = random_locations(n, &mut g);
        let k = AnnulusKernel::new(&h, &[1, 2, 3]).gram(&locs);
        let min = k.clone().symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-10 * k.trace() / n as f64, "min eigenvalue {}", min);
    }
}

/// Golub–Welsch nodes and weights for `∫ e^{-x²} f(x) dx`.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |a, b| {
        if a + 1 == b || b + 1 == a {
            (a.max(b) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let e = j.symmetric_eigen();
    let w = (0..n)
        .map(|i| PI.sqrt() * e.eigenvectors[(0, i)].powi(2))
        .collect();
    (e.eigenvalues.iter().copied().collect(), w)
}

#[test]
fn objective_matches_latent_quadrature() {
    let config = StationConfig::new(vec![1], 0.5, 0.4, 1.0).unwrap();
    let h = Hyperparameters::new(vec![0.3, 0.2, 0.25], 0.8, 0.15).unwrap();
    let locs = vec![
        Location::new(0.1, 0.3),
        Location::new(0.4, 2.0),
        Location::new(0.7, 4.1),
        Location::new(0.95, 5.5),
    ];
    let values = vec![300.3, 299.4, 300.9, 300.0];
    let data = SensorDataset::new(locs.clone(), values.clone(), 0.5, "gh").unwrap();
    let got = log_map_objective(&h, &data, &config).unwrap();

    let mean = values.iter().sum::<f64>() / 4.0;
    let t: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let k = DMatrix::from_fn(4, 4, |i, j| kernel_term_by_term(locs[i], locs[j], &h, &[1]));
    let l = k.cholesky().unwrap().l();
    let (x, w) = gauss_hermite(24);
    let n = x.len();
    let noise = Normal::new(0.0, 0.5_f64.sqrt()).unwrap();
    let mut total = 0.0;
    for idx in 0..n.pow(4) {
        let ii = [idx % n, (idx / n) % n, (idx / n / n) % n, idx / n / n / n];
        let z = DVector::from_iterator(4, ii.iter().map(|&i| 2f64.sqrt() * x[i]));
        let f = &l * z;
        let weight: f64 = ii.iter().map(|&i| w[i]).product();
        let lik: f64 = (0..4).map(|d| noise.pdf(t[d] - f[d])).product();
        total += weight * lik;
    }
    let log_marginal = (total / PI.powi(2)).ln();
    let prior: f64 = h
        .to_vec()
        .iter()
        .map(|&p| 2f64.ln() + Normal::new(0.0, 1.0).unwrap().ln_pdf(p))
        .sum();
    let want = log_marginal + prior;
    assert!((got - want).abs() < 1e-6, "{got} vs {want}");
}

#[test]
fn prediction_matches_conditional_gaussian() {
    let mut g = rng(5);
    let config = small_config();
    for m in 2..=5 {
        let h = random_hyper(2, &mut g);
        let locs = random_locations(m, &mut g);
        let values: Vec<f64> = (0..m).map(|_| 5.0 + g.random::<f64>()).collect();
        let data = SensorDataset::new(locs.clone(), values.clone(), 0.04, "c").unwrap();
        let field = TrainedField::from_hyperparameters(data, config.clone(), h.clone()).unwrap();
        let query = random_locations(4, &mut g);

        // dense joint of (observations, query) and the textbook conditional
        let all: Vec<Location> = locs.iter().chain(&query).copied().collect();
        let joint = DMatrix::from_fn(m + 4, m + 4, |i, j| {
            kernel_term_by_term(all[i], all[j], &h, &config.wave_numbers)
                + if i == j && i < m { 0.04 } else { 0.0 }
        });
        let a = joint.view((0, 0), (m, m)).into_owned();
        let b = joint.view((0, m), (m, 4)).into_owned();
        let c = joint.view((m, m), (4, 4)).into_owned();
        let a_inv = a.lu().try_inverse().unwrap();
        let tbar = values.iter().sum::<f64>() / m as f64;
        let t = DVector::from_iterator(m, values.iter().map(|v| v - tbar));
        let mean = b.transpose() * &a_inv * t;
        let cov = c - b.transpose() * &a_inv * &b;

        let p = field.predict(&query).unwrap();
        for i in 0..4 {
            assert!((p.mean()[i] - tbar - mean[i]).abs() < 1e-10);
            for j in 0..4 {
                assert!((p.covariance()[(i, j)] - cov[(i, j)]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn interpolation_contract_at_sensors() {
    let config = small_config();
    let mut g = rng(8);
    let h = random_hyper(2, &mut g);
    let locs = random_locations(20, &mut g);
    let truth = prior_field(&locs, &h, &config, 300.0);
    let data = sample_measurements(&truth, &locs, 0.04, 1, "d").unwrap();
    let field =
        TrainedField::from_hyperparameters(data.clone(), config.clone(), h.clone()).unwrap();
    let p = field.predict(data.locations()).unwrap();
    let k = AnnulusKernel::new(&h, &config.wave_numbers);
    for i in 0..data.len() {
        assert!((p.mean()[i] - data.values()[i]).abs() <= 2.0 * 0.2);
        let prior = k.prior_variance(data.locations()[i]);
        assert!(p.covariance()[(i, i)] <= 0.04 + prior * 1e-6);
        assert!(p.covariance()[(i, i)] <= prior);
    }
}

#[test]
fn variance_reverts_to_prior_far_from_data() {
    let config = StationConfig::new(vec![1, 2], 0.04, 0.4, 1.0).unwrap();
    let h = Hyperparameters::new(vec![1.0, 0.5, 0.5, 0.3, 0.3], 1.0, 0.01).unwrap();
    let locs: Vec<Location> = (0..8)
        .map(|i| Location::new(0.02 * (i % 4) as f64, 1.5 * i as f64))
        .collect();
    let data = SensorDataset::new(locs, vec![300.0; 8], 0.04, "near hub").unwrap();
    let field = TrainedField::from_hyperparameters(data, config.clone(), h.clone()).unwrap();
    let far = Location::new(1.0, 2.0);
    let m = field.predict_marginals(&[far]).unwrap()[0];
    let prior = AnnulusKernel::new(&h, &config.wave_numbers).prior_variance(far);
    assert!(m.variance >= 0.5 * prior);
}

#[test]
fn noise_floor_reproduces_noise_free_data() {
    let mut g = rng(21);
    let config = StationConfig::new(vec![1, 2, 3], 1e-8, 0.4, 1.0).unwrap();
    let h = random_hyper(3, &mut g);
    let locs = random_locations(25, &mut g);
    let truth = prior_field(&locs, &h, &config, 300.0);
    let clean = sample_measurements(&truth, &locs, 0.0, 4, "clean").unwrap();
    let data = SensorDataset::new(
        clean.locations().to_vec(),
        clean.values().to_vec(),
        1e-8,
        "x",
    )
    .unwrap();
    let field = TrainedField::from_hyperparameters(data.clone(), config, h).unwrap();
    let p = field.predict(data.locations()).unwrap();
    let (lo, hi) = data
        .values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let worst = (0..data.len())
        .map(|i| (p.mean()[i] - data.values()[i]).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-3 * (hi - lo), "{worst} vs range {}", hi - lo);
}

#[test]
fn constant_dataset_fits_to_the_constant() {
    let config = small_config();
    let locs = random_locations(12, &mut rng(2));
    let data = SensorDataset::new(locs, vec![287.5; 12], 0.04, "flat").unwrap();
    let field = fit_map(&data, &config, &OptimizerSettings::default()).unwrap();
    let grid = random_locations(200, &mut rng(3));
    for m in field.predict_marginals(&grid).unwrap() {
        assert!((m.mean - 287.5).abs() < 1e-8);
    }
    assert!((field.area_average().unwrap().mean - 287.5).abs() < 1e-8);
}

#[test]
fn map_fit_converges_and_beats_every_start() {
    let config = small_config();
    let mut g = rng(31);
    let h = random_hyper(2, &mut g);
    let locs = random_locations(30, &mut g);
    let truth = prior_field(&locs, &h, &config, 300.0);
    let data = sample_measurements(&truth, &locs, 0.04, 7, "d").unwrap();
    let (field, runs) =
        fit_map_with_diagnostics(&data, &config, &OptimizerSettings::default()).unwrap();
    let best = log_map_objective(field.hyperparameters(), &data, &config).unwrap();
    assert_eq!(runs.len(), 8);
    for r in &runs {
        assert!(best >= r.initial_objective);
        if r.converged {
            assert!(r.grad_norm < 1e-6);
        }
    }
    assert!((field.data_offset() - data.mean_value()).abs() < 1e-12);
}

#[test]
fn map_fit_is_deterministic_for_a_seed() {
    let config = small_config();
    let mut g = rng(41);
    let h = random_hyper(2, &mut g);
    let locs = random_locations(15, &mut g);
    let data =
        sample_measurements(&prior_field(&locs, &h, &config, 10.0), &locs, 0.04, 2, "d").unwrap();
    let s = OptimizerSettings::default().with_seed(9);
    let a = fit_map(&data, &config, &s).unwrap();
    let b = fit_map(
        &data,
        &config,
        &OptimizerSettings {
            parallel: false,
            ..s
        },
    )
    .unwrap();
    assert_eq!(a.hyperparameters(), b.hyperparameters());
}

#[test]
fn adding_a_constant_shifts_means_only() {
    let config = small_config();
    let mut g = rng(51);
    let h = random_hyper(2, &mut g);
    let locs = random_locations(20, &mut g);
    let data =
        sample_measurements(&prior_field(&locs, &h, &config, 0.0), &locs, 0.04, 5, "d").unwrap();
    let shifted = data.map_values(|_, v| v + 100.0);

    let s = OptimizerSettings::default();
    let a = fit_map(&data, &config, &s).unwrap();
    let b = fit_map(&shifted, &config, &s).unwrap();
    for (x, y) in a
        .hyperparameters()
        .to_vec()
        .iter()
        .zip(b.hyperparameters().to_vec())
    {
        assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
    }

    // at fixed hyperparameters the shift is exact up to rounding
    let fa = TrainedField::from_hyperparameters(data, config.clone(), h.clone()).unwrap();
    let fb = TrainedField::from_hyperparameters(shifted, config, h).unwrap();
    let grid = random_locations(50, &mut g);
    let (pa, pb) = (fa.predict(&grid).unwrap(), fb.predict(&grid).unwrap());
    for i in 0..grid.len() {
        assert!((pb.mean()[i] - pa.mean()[i] - 100.0).abs() < 1e-9);
    }
    assert!((pa.covariance() - pb.covariance()).norm() < 1e-12);
    let (aa, ab) = (fa.area_average().unwrap(), fb.area_average().unwrap());
    assert!((ab.mean - aa.mean - 100.0).abs() < 1e-9);
    assert!((ab.variance - aa.variance).abs() < 1e-12);
}

#[test]
fn paper_station_settings_fit() {
    let config = paper_config();
    let layout = rake_layout();
    assert_eq!(layout.len(), 27);
    let mut g = rng(61);
    let h = random_hyper(8, &mut g);
    let truth = prior_field(&layout, &h, &config, 300.0);
    let data = sample_measurements(&truth, &layout, 0.04, 3, "station-1").unwrap();
    let field = fit_map(&data, &config, &OptimizerSettings::default()).unwrap();
    assert_eq!(field.hyperparameters().fourier_variances.len(), 17);
    let a = field.area_average().unwrap();
    assert!(a.variance >= 0.0 && a.mean.is_finite());
    assert!((field.value_scale() - 300.0).abs() < 50.0);
}

#[test]
fn trained_field_round_trips_through_json() {
    let config = small_config();
    let mut g = rng(71);
    let h = random_hyper(2, &mut g);
    let locs = random_locations(10, &mut g);
    let data = sample_measurements(
        &prior_field(&locs, &h, &config, 300.0),
        &locs,
        0.04,
        1,
        "rt",
    )
    .unwrap();
    let f = TrainedField::from_hyperparameters(data, config, h).unwrap();
    let s = annulus_core::io::to_json_string(&f).unwrap();
    let back: TrainedField = serde_json::from_str(&s).unwrap();
    assert_eq!(back.hyperparameters(), f.hyperparameters());
    assert_eq!(back.data_offset(), f.data_offset());
    assert_eq!(back.dataset(), f.dataset());
    assert_eq!(annulus_core::io::to_json_string(&back).unwrap(), s);
}

#[test]
fn rejects_invalid_inputs() {
    let locs = vec![Location::new(0.1, 0.0), Location::new(0.1, TAU)];
    assert!(SensorDataset::new(locs, vec![1.0, 2.0], 0.04, "dup").is_err());
    let locs = vec![Location::new(0.1, 0.0), Location::new(1.1, 0.0)];
    assert!(SensorDataset::new(locs.clone(), vec![1.0, 2.0], 0.04, "range").is_err());
    let locs = vec![Location::new(0.1, 0.0), Location::new(0.2, 0.0)];
    assert!(SensorDataset::new(locs.clone(), vec![1.0, 2.0], 0.0, "noise").is_err());
    assert!(SensorDataset::new(locs[..1].to_vec(), vec![1.0], 0.04, "short").is_err());
    assert!(StationConfig::new(vec![2, 1], 0.04, 0.4, 1.0).is_err());
    assert!(StationConfig::new(vec![1], 0.04, 1.0, 0.4).is_err());
    assert!(StationConfig::new(vec![0, 1], 0.04, 0.4, 1.0).is_err());
}
