#![allow(dead_code)]

use std::f64::consts::TAU;

use annulus_core::field::AnnulusKernel;
use annulus_core::{GaussianField, Hyperparameters, Location, StationConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_locations(n: usize, rng: &mut impl Rng) -> Vec<Location> {
    (0..n)
        .map(|_| Location::new(rng.random::<f64>(), TAU * rng.random::<f64>()))
        .collect()
}

/// Three rakes of nine radial positions each.
pub fn rake_layout() -> Vec<Location> {
    let angles = [0.35, 2.45, 4.55];
    angles
        .iter()
        .flat_map(|&t| (0..9).map(move |i| Location::new((i as f64 + 0.5) / 9.0, t)))
        .collect()
}

pub fn paper_config() -> StationConfig {
    StationConfig::new((1..=8).collect(), 0.04, 0.4, 1.0).unwrap()
}

pub fn small_config() -> StationConfig {
    StationConfig::new(vec![1, 2], 0.04, 0.4, 1.0).unwrap()
}

pub fn random_hyper(k: usize, rng: &mut impl Rng) -> Hyperparameters {
    let lam: Vec<f64> = (0..2 * k + 1).map(|_| 0.05 + rng.random::<f64>()).collect();
    Hyperparameters::new(
        lam,
        0.5 + rng.random::<f64>(),
        0.02 + 0.3 * rng.random::<f64>(),
    )
    .unwrap()
}

/// Prior of the field at `locations`, shifted by `offset`.
pub fn prior_field(
    locations: &[Location],
    hyper: &Hyperparameters,
    config: &StationConfig,
    offset: f64,
) -> GaussianField {
    let k = AnnulusKernel::new(hyper, &config.wave_numbers).gram(locations);
    GaussianField::new(
        locations.to_vec(),
        DVector::from_element(locations.len(), offset),
        k,
    )
    .unwrap()
}

pub fn rel_frobenius(a: &nalgebra::DMatrix<f64>, b: &nalgebra::DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
