//! Deterministic fixtures shared by the benchmarks.

use annulus_core::field::AnnulusKernel;
use annulus_core::synth::sample_measurements;
use annulus_core::{GaussianField, Hyperparameters, Location, SensorDataset, StationConfig};
use nalgebra::DVector;

pub fn paper_config() -> StationConfig {
    StationConfig::new((1..=8).collect(), 0.04, 0.4, 1.0).expect("valid config")
}

/// Three rakes of nine radial positions each.
pub fn rake_layout() -> Vec<Location> {
    [0.35, 2.45, 4.55]
        .iter()
        .flat_map(|&t| (0..9).map(move |i| Location::new((i as f64 + 0.5) / 9.0, t)))
        .collect()
}

/// Scattered points from a low-discrepancy sequence.
pub fn scattered(n: usize) -> Vec<Location> {
    (0..n)
        .map(|i| {
            let r = (i as f64 * 0.618_033_988_75).fract();
            let t = (i as f64 * 0.754_877_666_25).fract();
            Location::new(r, std::f64::consts::TAU * t)
        })
        .collect()
}

pub fn hyperparameters(scale: f64) -> Hyperparameters {
    let lam: Vec<f64> = (0..17).map(|q| scale / (1.0 + q as f64)).collect();
    Hyperparameters::new(lam, 1.0, 0.08).expect("valid hyperparameters")
}

pub fn prior(locations: &[Location], scale: f64) -> GaussianField {
    let config = paper_config();
    let h = hyperparameters(scale);
    let k = AnnulusKernel::new(&h, &config.wave_numbers).gram(locations);
    GaussianField::new(
        locations.to_vec(),
        DVector::from_element(locations.len(), 300.0),
        k,
    )
    .expect("prior is PSD")
}

/// One noisy prior draw on the rake layout.
pub fn rake_dataset(seed: u64) -> SensorDataset {
    let layout = rake_layout();
    sample_measurements(
        &prior(&layout, 1.0),
        &layout,
        0.04,
        seed,
        format!("d{seed}"),
    )
    .expect("draw")
}
