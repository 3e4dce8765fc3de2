//! `annulus`: fit, compare and fuse Gaussian random fields of annular sensor
//! readings, and flag anomalous sensors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod inputs;
mod log;
mod manifest;

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "annulus", version, about, propagate_version = true)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Read `theta` columns of CSV inputs as degrees.
    #[arg(long, global = true)]
    pub degrees: bool,

    /// Write progress to stderr as JSON lines.
    #[arg(long, global = true)]
    pub json_logs: bool,

    /// Seed for optimizer restarts and all sampling.
    #[arg(long, global = true, env = "ANNULUS_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a field to one dataset by MAP.
    Fit {
        /// Dataset CSV with header `r,theta,value`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bayesian area average of a field.
    Average {
        /// Trained field JSON, or a dataset CSV together with `--config`.
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sensor distances between two fields, at the sensors of `b`.
    Distance {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluate at these locations instead of the sensors of `b`.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate a station threshold on a corpus of standard datasets.
    Calibrate {
        #[arg(long)]
        station: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 95.0)]
        percentile: f64,
        /// Also pool the distances evaluated at the first dataset of each pair.
        #[arg(long)]
        both_orientations: bool,
        /// Store the pooled distances in the threshold file.
        #[arg(long)]
        keep_pool: bool,
        #[arg(required = true, num_args = 2..)]
        data: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare an observed dataset against a baseline and flag sensors.
    Detect {
        /// Dataset CSV, trained field JSON or barycenter JSON.
        #[arg(long)]
        baseline: PathBuf,
        /// Dataset CSV or trained field JSON.
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        threshold: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Wasserstein barycenter of fields on a shared grid.
    Barycenter {
        /// Dataset CSVs, trained field JSONs or grid field JSONs.
        #[arg(required = true, num_args = 1..)]
        fields: Vec<PathBuf>,
        /// Comma separated weights; uniform when omitted.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        /// Grid as `N_RxN_THETA` for trained fields.
        #[arg(long, default_value = "15x36")]
        grid: String,
        /// Extra grid points, typically the sensors to be compared later.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Point on the displacement geodesic from `a` (t = 0) to `b` (t = 1).
    Geodesic {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "15x36")]
        grid: String,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic fields from Dirichlet-weighted barycenters of vertex fields.
    Synth {
        #[arg(long, required = true, num_args = 2..)]
        vertices: Vec<PathBuf>,
        #[arg(long)]
        n: usize,
        /// Comma separated Dirichlet concentration; all ones when omitted.
        #[arg(long, value_delimiter = ',')]
        concentration: Option<Vec<f64>>,
        #[arg(long, default_value = "15x36")]
        grid: String,
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a noisy dataset from a field at a sensor layout.
    Sample {
        #[arg(long)]
        field: PathBuf,
        /// CSV with header `r,theta`.
        #[arg(long)]
        layout: PathBuf,
        #[arg(long)]
        noise: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predictive mean and standard deviation on a polar grid as CSV.
    ExportGrid {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "50x128")]
        grid: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = commands::Context::new(cli.global);
    match cli.command {
        Command::Fit { data, config, out } => commands::fit(&ctx, &data, &config, &out),
        Command::Average { field, config, out } => {
            commands::average(&ctx, &field, config.as_deref(), out.as_deref())
        }
        Command::Distance {
            a,
            b,
            config,
            layout,
            out,
        } => commands::distance(
            &ctx,
            &a,
            &b,
            config.as_deref(),
            layout.as_deref(),
            out.as_deref(),
        ),
        Command::Calibrate {
            station,
            config,
            percentile,
            both_orientations,
            keep_pool,
            data,
            out,
        } => commands::calibrate(
            &ctx,
            commands::CalibrateArgs {
                station,
                config,
                percentile,
                both_orientations,
                keep_pool,
                data,
                out,
            },
        ),
        Command::Detect {
            baseline,
            observed,
            threshold,
            config,
            report,
        } => commands::detect(
            &ctx,
            &baseline,
            &observed,
            &threshold,
            config.as_deref(),
            &report,
        ),
        Command::Barycenter {
            fields,
            weights,
            grid,
            layout,
            config,
            out,
        } => {
            let grid = inputs::GridChoice::new(&grid, layout)?;
            commands::barycenter(&ctx, &fields, weights, &grid, config.as_deref(), &out)
        }
        Command::Geodesic {
            a,
            b,
            t,
            grid,
            layout,
            config,
            out,
        } => {
            let grid = inputs::GridChoice::new(&grid, layout)?;
            commands::geodesic(&ctx, &a, &b, t, &grid, config.as_deref(), &out)
        }
        Command::Synth {
            vertices,
            n,
            concentration,
            grid,
            layout,
            config,
            out,
        } => {
            let grid = inputs::GridChoice::new(&grid, layout)?;
            commands::synth(
                &ctx,
                &vertices,
                n,
                concentration,
                &grid,
                config.as_deref(),
                &out,
            )
        }
        Command::Sample {
            field,
            layout,
            noise,
            config,
            out,
        } => commands::sample(&ctx, &field, &layout, noise, config.as_deref(), &out),
        Command::ExportGrid {
            field,
            config,
            grid,
            out,
        } => commands::export_grid(&ctx, &field, config.as_deref(), &grid, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json_logs = cli.global.json_logs;
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::Logger::new(json_logs).error(&e);
            ExitCode::from(e.exit_code())
        }
    }
}
