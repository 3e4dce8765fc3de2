mod common;

use annulus_core::anomaly::{calibrate_threshold, CalibrationSettings};
use annulus_core::ot::{barycenter, geodesic, wasserstein2_sq, BarycenterSettings};
use annulus_core::synth::{dirichlet, sample_measurements, substream, SimplexSampler};
use annulus_core::{fit_map, GaussianField, Location, OptimizerSettings, SensorDataset};
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn random_field(n: usize, g: &mut impl Rng) -> GaussianField {
    let b = DMatrix::from_fn(n, n, |_, _| g.random::<f64>() - 0.5);
    let cov = b.transpose() * &b + DMatrix::identity(n, n) * 0.05;
    let locs: Vec<Location> = (0..n).map(|i| Location::new(0.5, i as f64 * 0.3)).collect();
    let mean = DVector::from_fn(n, |_, _| 300.0 + g.random::<f64>());
    GaussianField::new(locs, mean, cov).unwrap()
}

#[test]
fn uniform_dirichlet_mean_within_three_standard_errors() {
    let sampler = SimplexSampler::new(
        {
            let mut g = rng(1);
            (0..3).map(|_| random_field(2, &mut g)).collect()
        },
        42,
    )
    .unwrap();
    let n = 100_000;
    let w = sampler.sample_weights(n);
    // Var of one component of Dir(1, 1, 1) is (1/3)(2/3)/4
    let se = (2.0 / 36.0 / n as f64).sqrt();
    for k in 0..3 {
        let m: f64 = w.iter().map(|x| x[k]).sum::<f64>() / n as f64;
        assert!((m - 1.0 / 3.0).abs() <= 3.0 * se, "component {k}: {m}");
    }
    for x in &w {
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!((x.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn degenerate_concentration_sits_on_first_vertex() {
    let mut g = rng(2);
    let mut near = 0;
    for _ in 0..1000 {
        let w = dirichlet(&[1e6, 1e-6, 1e-6, 1e-6], &mut g);
        if w[0] > 0.999 {
            near += 1;
        }
    }
    assert!(near > 990, "{near}");
}

#[test]
fn weights_are_reproducible_and_order_independent() {
    let mut g = rng(3);
    let vertices: Vec<GaussianField> = (0..4).map(|_| random_field(3, &mut g)).collect();
    let a =
        SimplexSampler::with_concentration(vertices.clone(), vec![0.5, 1.0, 2.0, 3.0], 7).unwrap();
    let b = SimplexSampler::with_concentration(vertices, vec![0.5, 1.0, 2.0, 3.0], 7).unwrap();
    let wa = a.sample_weights(64);
    assert_eq!(wa, b.sample_weights(64));
    for (i, w) in wa.iter().enumerate() {
        assert_eq!(*w, a.weights_at(i as u64));
    }
    assert_ne!(a.weights_at(0), a.weights_at(1));
}

#[test]
fn sampler_rejects_bad_inputs() {
    let mut g = rng(4);
    let one = vec![random_field(3, &mut g)];
    assert!(SimplexSampler::new(one, 0).is_err());
    let two: Vec<GaussianField> = (0..2).map(|_| random_field(3, &mut g)).collect();
    assert!(SimplexSampler::with_concentration(two.clone(), vec![1.0, 0.0], 0).is_err());
    assert!(SimplexSampler::with_concentration(two.clone(), vec![1.0], 0).is_err());
    let other = random_field(4, &mut g);
    assert!(SimplexSampler::new(vec![two[0].clone(), other], 0).is_err());
}

#[test]
fn two_vertices_stay_on_the_geodesic() {
    let mut g = rng(5);
    let a = random_field(6, &mut g);
    let b = random_field(6, &mut g);
    let sampler = SimplexSampler::new(vec![a.clone(), b.clone()], 11).unwrap();
    let weights = sampler.sample_weights(10);
    let fields = sampler.generate_synthetic(10).unwrap();
    for (w, f) in weights.iter().zip(&fields) {
        let on_path = geodesic(&a, &b, w[1]).unwrap();
        assert!(rel_frobenius(f.covariance(), on_path.covariance()) <= 1e-6);
        let dm = (f.mean() - on_path.mean()).norm() / on_path.mean().norm();
        assert!(dm <= 1e-6);
    }
}

#[test]
fn one_hot_weights_reproduce_vertices() {
    let mut g = rng(6);
    let vertices: Vec<GaussianField> = (0..3).map(|_| random_field(5, &mut g)).collect();
    let b = barycenter(&vertices, &[1.0, 0.0, 0.0], &BarycenterSettings::default()).unwrap();
    assert!(rel_frobenius(b.field.covariance(), vertices[0].covariance()) <= 1e-9);
    assert_eq!(b.field.mean(), vertices[0].mean());
}

#[test]
fn samples_stay_within_the_vertex_diameter() {
    let mut g = rng(7);
    let vertices: Vec<GaussianField> = (0..4).map(|_| random_field(5, &mut g)).collect();
    let mut diameter: f64 = 0.0;
    for i in 0..4 {
        for j in i + 1..4 {
            diameter = diameter.max(wasserstein2_sq(&vertices[i], &vertices[j]).unwrap().sqrt());
        }
    }
    let sampler = SimplexSampler::new(vertices.clone(), 13).unwrap();
    for f in sampler.generate_synthetic(40).unwrap() {
        let nearest = vertices
            .iter()
            .map(|v| wasserstein2_sq(&f, v).unwrap().sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(nearest <= diameter * (1.0 + 1e-9));
    }
}

#[test]
fn measurement_variance_matches_marginal_plus_noise() {
    let loc = [Location::new(0.4, 1.0), Location::new(0.8, 2.0)];
    let var = 0.7;
    let noise = 0.2;
    let field = GaussianField::new(
        loc.to_vec(),
        DVector::from_element(2, 300.0),
        DMatrix::from_diagonal_element(2, 2, var),
    )
    .unwrap();
    let n = 10_000;
    let draws: Vec<f64> = (0..n)
        .map(|s| {
            sample_measurements(&field, &loc, noise, s, "m")
                .unwrap()
                .values()[0]
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let s2 = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let want = var + noise;
    let se = want * (2.0 / (n as f64 - 1.0)).sqrt();
    assert!((s2 - want).abs() <= 3.0 * se, "{s2} vs {want}");
    assert!((mean - 300.0).abs() <= 3.0 * (want / n as f64).sqrt());
}

#[test]
fn measurement_draws_are_bit_reproducible() {
    let mut g = rng(8);
    let h = random_hyper(2, &mut g);
    let layout = rake_layout();
    let truth = prior_field(&layout, &h, &small_config(), 300.0);
    let a = sample_measurements(&truth, &layout, 0.04, 3, "a").unwrap();
    let b = sample_measurements(&truth, &layout, 0.04, 3, "a").unwrap();
    let bits = |d: &SensorDataset| d.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let c = sample_measurements(&truth, &layout, 0.04, 4, "a").unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn measurements_from_a_trained_field() {
    let mut g = rng(9);
    let h = random_hyper(2, &mut g);
    let layout = rake_layout();
    let truth = prior_field(&layout, &h, &small_config(), 300.0);
    let d = sample_measurements(&truth, &layout, 0.04, 1, "base").unwrap();
    let f = fit_map(&d, &small_config(), &OptimizerSettings::default()).unwrap();
    let again = sample_measurements(&f, &layout, 0.04, 2, "again").unwrap();
    assert_eq!(again.len(), 27);
    assert_eq!(again.noise_variance(), 0.04);
    assert!(sample_measurements(&f, &layout, -1.0, 2, "x").is_err());
}

#[test]
fn augmented_corpus_gives_a_positive_threshold() {
    let config = small_config();
    let mut g = rng(10);
    let h = random_hyper(2, &mut g);
    let layout = rake_layout();
    let truth = prior_field(&layout, &h, &config, 300.0);
    let real: Vec<SensorDataset> = (0..3)
        .map(|i| sample_measurements(&truth, &layout, 0.04, 20 + i, format!("real{i}")).unwrap())
        .collect();
    let settings = CalibrationSettings::default();
    let tau_real = calibrate_threshold("s", &real, &config, &settings)
        .unwrap()
        .tau;
    assert!(tau_real.is_finite() && tau_real > 0.0);

    let vertices: Vec<GaussianField> = real
        .iter()
        .map(|d| {
            fit_map(d, &config, &OptimizerSettings::default())
                .unwrap()
                .predict_with_area_average(&layout)
                .unwrap()
        })
        .collect();
    let sampler = SimplexSampler::new(vertices, 5).unwrap();
    let mut corpus = real.clone();
    for (i, f) in sampler.generate_synthetic(3).unwrap().iter().enumerate() {
        corpus
            .push(sample_measurements(f, &layout, 0.04, 40 + i as u64, format!("syn{i}")).unwrap());
    }
    let t = calibrate_threshold("s", &corpus, &config, &settings).unwrap();
    assert_eq!(t.pair_count, 15);
    assert!(t.tau.is_finite() && t.tau > 0.0);
}

#[test]
fn substreams_differ_by_index() {
    let a: u64 = substream(1, 0).random();
    let b: u64 = substream(1, 1).random();
    let c: u64 = substream(1, 0).random();
    assert_ne!(a, b);
    assert_eq!(a, c);
}
