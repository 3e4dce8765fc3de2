#![allow(dead_code)]

use std::ffi::OsStr;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use annulus_core::field::AnnulusKernel;
use annulus_core::io::{to_json_string, write_dataset_csv};
use annulus_core::synth::sample_measurements;
use annulus_core::{GaussianField, Hyperparameters, Location, SensorDataset, StationConfig};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Fixed `SOURCE_DATE_EPOCH` for reproducible manifests.
pub const EPOCH: &str = "1700000000";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Three rakes of nine radial positions each.
pub fn rake_layout() -> Vec<Location> {
    [0.35, 2.45, 4.55]
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

/// Prior of the field at `locations` around a constant `offset`.
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

/// `q` noisy draws of one prior-drawn field at the rake layout.
pub fn clean_datasets(config: &StationConfig, q: u64, seed: u64) -> Vec<SensorDataset> {
    let mut g = rng(seed);
    let h = random_hyper(config.wave_numbers.len(), &mut g);
    let layout = rake_layout();
    let truth = prior_field(&layout, &h, config, 300.0);
    (0..q)
        .map(|i| {
            sample_measurements(
                &truth,
                &layout,
                config.noise_variance,
                seed * 1000 + i,
                format!("d{i}"),
            )
            .unwrap()
        })
        .collect()
}

/// Scratch directory that commands run in, so manifests hold relative paths.
pub struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, body: &str) -> PathBuf {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        fs::write(&p, body).unwrap();
        p
    }

    pub fn config(&self, name: &str, config: &StationConfig) -> PathBuf {
        self.write(name, &to_json_string(config).unwrap())
    }

    pub fn dataset(&self, name: &str, data: &SensorDataset) -> PathBuf {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).unwrap();
        }
        write_dataset_csv(data, &p).unwrap();
        p
    }

    pub fn layout(&self, name: &str, locations: &[Location]) -> PathBuf {
        let mut body = String::from("r,theta\n");
        for l in locations {
            body.push_str(&format!("{:e},{:e}\n", l.r, l.theta));
        }
        self.write(name, &body)
    }

    pub fn read(&self, name: &str) -> Vec<u8> {
        fs::read(self.path(name)).unwrap()
    }

    pub fn json(&self, name: &str) -> serde_json::Value {
        serde_json::from_slice(&self.read(name)).unwrap()
    }

    /// Runs the binary in this directory.
    pub fn run<I, S>(&self, args: I) -> Output
    where
        I: IntoIterator<Item = S>,
        S: AsRef<OsStr>,
    {
        Command::new(env!("CARGO_BIN_EXE_annulus"))
            .args(args)
            .current_dir(self.root())
            .env("SOURCE_DATE_EPOCH", EPOCH)
            .env_remove("ANNULUS_SEED")
            .output()
            .unwrap()
    }

    /// Runs the binary and panics with its stderr on failure.
    pub fn ok<I, S>(&self, args: I) -> Output
    where
        I: IntoIterator<Item = S>,
        S: AsRef<OsStr>,
    {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        );
        out
    }
}
