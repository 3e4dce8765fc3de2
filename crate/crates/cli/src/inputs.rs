use std::fs;
use std::path::{Path, PathBuf};

use annulus_core::io::{parse_dataset, parse_layout, read_json, AngleUnit, GridSpec};
use annulus_core::{
    fit_map, GaussianField, Location, Marginal, OptimizerSettings, PredictiveSource, StationConfig,
    TrainedField,
};

use crate::commands::Context;
use crate::error::{usage, CliError};

pub fn load_config(path: &Path) -> Result<StationConfig, CliError> {
    let config: StationConfig = read_json(path)?;
    config.validate()?;
    Ok(config)
}

pub fn optional_config(path: Option<&Path>) -> Result<Option<StationConfig>, CliError> {
    path.map(load_config).transpose()
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug)]
pub enum Field {
    Trained(TrainedField),
    Grid(GaussianField),
}

/// A field read from disk, labelled by its file stem.
#[derive(Debug)]
pub struct Source {
    pub field: Field,
    pub label: String,
}

impl Source {
    /// Sensor locations of the dataset behind a trained field.
    pub fn sensors(&self) -> Option<&[Location]> {
        match &self.field {
            Field::Trained(f) => Some(f.dataset().locations()),
            Field::Grid(_) => None,
        }
    }

    /// The field as moments on a grid, with its area average attached.
    pub fn on_grid(&self, locations: &[Location]) -> Result<GaussianField, CliError> {
        match &self.field {
            Field::Trained(f) => Ok(f.predict_with_area_average(locations)?),
            Field::Grid(g) => Ok(g.clone()),
        }
    }

    pub fn trained(&self) -> Result<&TrainedField, CliError> {
        match &self.field {
            Field::Trained(f) => Ok(f),
            Field::Grid(_) => Err(usage(format!(
                "`{}` is a grid field; a dataset CSV or trained field JSON is needed",
                self.label
            ))),
        }
    }
}

impl PredictiveSource for Source {
    fn joint(&self, locations: &[Location]) -> annulus_core::Result<GaussianField> {
        match &self.field {
            Field::Trained(f) => f.joint(locations),
            Field::Grid(g) => g.joint(locations),
        }
    }

    fn marginals(&self, locations: &[Location]) -> annulus_core::Result<Vec<Marginal>> {
        match &self.field {
            Field::Trained(f) => f.marginals(locations),
            Field::Grid(g) => g.marginals(locations),
        }
    }

    fn area_average_mean(&self) -> annulus_core::Result<f64> {
        match &self.field {
            Field::Trained(f) => f.area_average_mean(),
            Field::Grid(g) => g.area_average_mean(),
        }
    }

    fn value_scale(&self) -> f64 {
        match &self.field {
            Field::Trained(f) => PredictiveSource::value_scale(f),
            Field::Grid(g) => g.value_scale(),
        }
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Reads a dataset CSV (fitted under `config`), a trained field JSON, or a
/// grid field JSON such as a barycenter.
pub fn load_source(
    ctx: &Context,
    path: &Path,
    config: Option<&StationConfig>,
) -> Result<Source, CliError> {
    let label = stem(path);
    if is_csv(path) {
        let config = config.ok_or_else(|| {
            usage(format!(
                "{} is a dataset; --config is needed to fit it",
                path.display()
            ))
        })?;
        let data = parse_dataset(path, ctx.unit(), config.noise_variance)?;
        ctx.log.info(
            "fit",
            format!("fitting {} ({} sensors)", path.display(), data.len()),
        );
        let fitted = fit_map(&data, config, &ctx.optimizer())?;
        return Ok(Source {
            field: Field::Trained(fitted),
            label,
        });
    }
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}:{}: {e}", path.display(), e.line())))?;
    let field = if value.get("hyperparameters").is_some() {
        Field::Trained(read_json(path)?)
    } else if value.get("covariance").is_some() {
        Field::Grid(read_json(path)?)
    } else {
        return Err(usage(format!(
            "{} is neither a trained field nor a grid field",
            path.display()
        )));
    };
    Ok(Source { field, label })
}

/// Grid for commands that need moments on a shared set of points.
#[derive(Debug, Clone)]
pub struct GridChoice {
    spec: GridSpec,
    layout: Option<PathBuf>,
}

impl GridChoice {
    pub fn new(text: &str, layout: Option<PathBuf>) -> Result<Self, CliError> {
        Ok(GridChoice {
            spec: parse_grid(text)?,
            layout,
        })
    }

    pub fn layout(&self) -> Option<&Path> {
        self.layout.as_deref()
    }

    /// Polar grid points followed by any layout points not already on it.
    pub fn locations(&self, unit: AngleUnit) -> Result<Vec<Location>, CliError> {
        let mut points = self.spec.locations();
        if let Some(p) = &self.layout {
            for l in parse_layout(p, unit)? {
                if !points.iter().any(|q| q.coincides(&l, 1e-9)) {
                    points.push(l);
                }
            }
        }
        Ok(points)
    }
}

/// Parses `N_RxN_THETA`, e.g. `50x128`.
pub fn parse_grid(text: &str) -> Result<GridSpec, CliError> {
    let bad = || usage(format!("grid `{text}` is not of the form N_RxN_THETA"));
    let (a, b) = text.split_once(['x', 'X']).ok_or_else(bad)?;
    let n_r = a.trim().parse().map_err(|_| bad())?;
    let n_theta = b.trim().parse().map_err(|_| bad())?;
    Ok(GridSpec::new(n_r, n_theta)?)
}

pub fn default_optimizer(seed: u64) -> OptimizerSettings {
    OptimizerSettings::default().with_seed(seed)
}
