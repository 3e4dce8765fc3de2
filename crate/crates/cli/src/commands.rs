use std::fs;
use std::path::{Path, PathBuf};

use annulus_core::anomaly::{
    calibrate_from_fields, classify, distance_vector, fit_all, CalibrationSettings,
    DistanceOptions, ThresholdModel,
};
use annulus_core::io::{
    self, parse_dataset, parse_layout, read_json, to_json_string, write_json, AngleUnit,
};
use annulus_core::ot::{self, BarycenterSettings};
use annulus_core::synth::{sample_measurements, SimplexSampler};
use annulus_core::{fit_map, GaussianField, OptimizerSettings, PredictiveSource};
use serde::Serialize;

use crate::error::{usage, CliError};
use crate::inputs::{
    default_optimizer, load_config, load_source, optional_config, parse_grid, GridChoice, Source,
};
use crate::log::Logger;
use crate::manifest::RunManifest;
use crate::Global;

pub struct Context {
    pub global: Global,
    pub log: Logger,
}

impl Context {
    pub fn new(global: Global) -> Self {
        let log = Logger::new(global.json_logs);
        Context { global, log }
    }

    pub fn unit(&self) -> AngleUnit {
        if self.global.degrees {
            AngleUnit::Degrees
        } else {
            AngleUnit::Radians
        }
    }

    pub fn optimizer(&self) -> OptimizerSettings {
        default_optimizer(self.global.seed)
    }

    fn manifest(&self) -> RunManifest {
        let mut m = RunManifest::new();
        m.seed("seed", self.global.seed);
        m
    }

    fn wrote(&self, path: &Path) {
        self.log.info("wrote", format!("wrote {}", path.display()));
    }
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<(), CliError> {
    print!("{}", to_json_string(value)?);
    Ok(())
}

pub fn fit(ctx: &Context, data: &Path, config: &Path, out: &Path) -> Result<(), CliError> {
    let cfg = load_config(config)?;
    let dataset = parse_dataset(data, ctx.unit(), cfg.noise_variance)?;
    ctx.log.info(
        "fit",
        format!("fitting {} ({} sensors)", data.display(), dataset.len()),
    );
    let field = fit_map(&dataset, &cfg, &ctx.optimizer())?;
    write_json(&field, out)?;
    ctx.manifest()
        .config(Some(config))?
        .input(data)?
        .output(out)
        .write_beside(out)?;
    ctx.wrote(out);
    Ok(())
}

#[derive(Serialize)]
struct AverageOutput {
    label: String,
    mean: f64,
    variance: f64,
    std: f64,
}

pub fn average(
    ctx: &Context,
    field: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = optional_config(config)?;
    let source = load_source(ctx, field, cfg.as_ref())?;
    let area = match &source.field {
        crate::inputs::Field::Trained(f) => f.area_average()?,
        crate::inputs::Field::Grid(g) => g
            .area_average()
            .ok_or_else(|| usage(format!("{} carries no area average", field.display())))?,
    };
    let output = AverageOutput {
        label: source.label.clone(),
        mean: area.mean,
        variance: area.variance,
        std: area.std(),
    };
    print_json(&output)?;
    if let Some(out) = out {
        write_json(&output, out)?;
        ctx.manifest()
            .config(config)?
            .input(field)?
            .output(out)
            .write_beside(out)?;
        ctx.wrote(out);
    }
    Ok(())
}

pub fn distance(
    ctx: &Context,
    a: &Path,
    b: &Path,
    config: Option<&Path>,
    layout: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = optional_config(config)?;
    let sa = load_source(ctx, a, cfg.as_ref())?;
    let sb = load_source(ctx, b, cfg.as_ref())?;
    let locations = match layout {
        Some(p) => parse_layout(p, ctx.unit())?,
        None => sb
            .sensors()
            .ok_or_else(|| usage("`b` has no sensors; pass --layout"))?
            .to_vec(),
    };
    let d = distance_vector(&sa, &sb, &locations, &DistanceOptions::default())?;
    print_json(&d)?;
    if let Some(out) = out {
        write_json(&d, out)?;
        let mut m = ctx.manifest();
        m.config(config)?.input(a)?.input(b)?;
        if let Some(p) = layout {
            m.input(p)?;
        }
        m.output(out).write_beside(out)?;
        ctx.wrote(out);
    }
    Ok(())
}

pub struct CalibrateArgs {
    pub station: String,
    pub config: PathBuf,
    pub percentile: f64,
    pub both_orientations: bool,
    pub keep_pool: bool,
    pub data: Vec<PathBuf>,
    pub out: PathBuf,
}

pub fn calibrate(ctx: &Context, args: CalibrateArgs) -> Result<(), CliError> {
    let cfg = load_config(&args.config)?;
    let datasets = args
        .data
        .iter()
        .map(|p| parse_dataset(p, ctx.unit(), cfg.noise_variance))
        .collect::<Result<Vec<_>, _>>()?;
    ctx.log.info(
        "calibrate",
        format!(
            "fitting {} datasets for station {}",
            datasets.len(),
            args.station
        ),
    );
    let settings = CalibrationSettings {
        percentile: args.percentile,
        both_orientations: args.both_orientations,
        optimizer: ctx.optimizer(),
        distance: DistanceOptions::default(),
    };
    let fields = fit_all(&datasets, &cfg, &settings.optimizer)?;
    let mut model = calibrate_from_fields(&args.station, &fields, &settings)?;
    if !args.keep_pool {
        model.pool = None;
    }
    write_json(&model, &args.out)?;
    ctx.manifest()
        .config(Some(&args.config))?
        .inputs(&args.data)?
        .output(&args.out)
        .write_beside(&args.out)?;
    ctx.log.info(
        "calibrate",
        format!(
            "tau = {} over {} pairs",
            io::fmt17(model.tau),
            model.pair_count
        ),
    );
    ctx.wrote(&args.out);
    Ok(())
}

pub fn detect(
    ctx: &Context,
    baseline: &Path,
    observed: &Path,
    threshold: &Path,
    config: Option<&Path>,
    report: &Path,
) -> Result<(), CliError> {
    let cfg = optional_config(config)?;
    let model: ThresholdModel = read_json(threshold)?;
    let base = load_source(ctx, baseline, cfg.as_ref())?;
    let obs = load_source(ctx, observed, cfg.as_ref())?;
    let sensors = obs.trained()?.dataset().locations().to_vec();
    let d = distance_vector(&base, &obs, &sensors, &DistanceOptions::default())?;
    let mut result = classify(&d, model.tau)?;
    result.station_id = Some(model.station_id.clone());
    write_json(&result, report)?;
    ctx.manifest()
        .config(config)?
        .input(baseline)?
        .input(observed)?
        .input(threshold)?
        .output(report)
        .write_beside(report)?;
    ctx.log.info(
        "detect",
        format!(
            "{} of {} sensors flagged",
            result.flagged_indices().len(),
            result.sensors.len()
        ),
    );
    ctx.wrote(report);
    Ok(())
}

fn grid_fields(
    ctx: &Context,
    paths: &[PathBuf],
    grid: &GridChoice,
    config: Option<&Path>,
) -> Result<Vec<GaussianField>, CliError> {
    let cfg = optional_config(config)?;
    let sources = paths
        .iter()
        .map(|p| load_source(ctx, p, cfg.as_ref()))
        .collect::<Result<Vec<Source>, _>>()?;
    let locations = grid.locations(ctx.unit())?;
    sources.iter().map(|s| s.on_grid(&locations)).collect()
}

fn grid_manifest(
    ctx: &Context,
    inputs: &[PathBuf],
    grid: &GridChoice,
    config: Option<&Path>,
) -> Result<RunManifest, CliError> {
    let mut m = ctx.manifest();
    m.config(config)?.inputs(inputs)?;
    if let Some(p) = grid.layout() {
        m.input(p)?;
    }
    Ok(m)
}

pub fn barycenter(
    ctx: &Context,
    paths: &[PathBuf],
    weights: Option<Vec<f64>>,
    grid: &GridChoice,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let fields = grid_fields(ctx, paths, grid, config)?;
    let k = fields.len();
    let weights = weights.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let result = ot::barycenter(&fields, &weights, &BarycenterSettings::default())?;
    ctx.log.info(
        "barycenter",
        format!(
            "converged in {} iterations, residual {:.3e}",
            result.iterations, result.residual
        ),
    );
    write_json(&result, out)?;
    grid_manifest(ctx, paths, grid, config)?
        .output(out)
        .write_beside(out)?;
    ctx.wrote(out);
    Ok(())
}

pub fn geodesic(
    ctx: &Context,
    a: &Path,
    b: &Path,
    t: f64,
    grid: &GridChoice,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let paths = [a.to_path_buf(), b.to_path_buf()];
    let fields = grid_fields(ctx, &paths, grid, config)?;
    let point = ot::geodesic(&fields[0], &fields[1], t)?;
    write_json(&point, out)?;
    grid_manifest(ctx, &paths, grid, config)?
        .output(out)
        .write_beside(out)?;
    ctx.wrote(out);
    Ok(())
}

#[derive(Serialize)]
struct SynthWeights<'a> {
    seed: u64,
    concentration: &'a [f64],
    weights: Vec<Vec<f64>>,
}

pub fn synth(
    ctx: &Context,
    vertices: &[PathBuf],
    n: usize,
    concentration: Option<Vec<f64>>,
    grid: &GridChoice,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    if n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    let fields = grid_fields(ctx, vertices, grid, config)?;
    let k = fields.len();
    let seed = ctx.global.seed;
    let sampler = SimplexSampler::with_concentration(
        fields,
        concentration.unwrap_or_else(|| vec![1.0; k]),
        seed,
    )?;
    let synthetic = sampler.generate_synthetic(n)?;
    fs::create_dir_all(out).map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let mut manifest = grid_manifest(ctx, vertices, grid, config)?;
    let width = n.to_string().len().max(4);
    for (i, f) in synthetic.iter().enumerate() {
        let p = out.join(format!("synthetic-{i:0width$}.json"));
        write_json(f, &p)?;
        manifest.output(&p);
    }
    let wpath = out.join("weights.json");
    write_json(
        &SynthWeights {
            seed,
            concentration: sampler.concentration(),
            weights: sampler.sample_weights(n),
        },
        &wpath,
    )?;
    manifest.output(&wpath).write_in(out)?;
    ctx.log
        .info("synth", format!("wrote {n} fields to {}", out.display()));
    Ok(())
}

pub fn sample(
    ctx: &Context,
    field: &Path,
    layout: &Path,
    noise: f64,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = optional_config(config)?;
    let source = load_source(ctx, field, cfg.as_ref())?;
    let locations = parse_layout(layout, ctx.unit())?;
    let label = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| source.label());
    let data = sample_measurements(&source, &locations, noise, ctx.global.seed, label)?;
    io::write_dataset_csv(&data, out)?;
    ctx.manifest()
        .config(config)?
        .input(field)?
        .input(layout)?
        .output(out)
        .write_beside(out)?;
    ctx.wrote(out);
    Ok(())
}

pub fn export_grid(
    ctx: &Context,
    field: &Path,
    config: Option<&Path>,
    grid: &str,
    out: &Path,
) -> Result<(), CliError> {
    let spec = parse_grid(grid)?;
    let cfg = optional_config(config)?;
    let source = load_source(ctx, field, cfg.as_ref())?;
    io::export_grid(source.trained()?, &spec, out)?;
    ctx.manifest()
        .config(config)?
        .input(field)?
        .output(out)
        .write_beside(out)?;
    ctx.wrote(out);
    Ok(())
}
