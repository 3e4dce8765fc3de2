//! CSV ingestion, grid export and JSON persistence at 17 significant digits.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SensorDataset, TrainedField};
use crate::gaussian::{Location, LOCATION_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

impl AngleUnit {
    pub fn to_radians(self, theta: f64) -> f64 {
        match self {
            AngleUnit::Radians => theta,
            AngleUnit::Degrees => theta.to_radians(),
        }
    }
}

/// Rows of a location CSV, with an optional value column.
struct Rows {
    locations: Vec<Location>,
    values: Option<Vec<f64>>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn read_rows(path: &Path, unit: AngleUnit, require_value: bool) -> Result<Rows> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let has_value = match names.as_slice() {
        ["r", "theta", "value"] => true,
        ["r", "theta"] if !require_value => false,
        _ if require_value => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "expected header `r,theta,value`, found `{}`",
                    names.join(",")
                ),
            ))
        }
        _ => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "expected header `r,theta` or `r,theta,value`, found `{}`",
                    names.join(",")
                ),
            ))
        }
    };

    let mut locations: Vec<Location> = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let width = if has_value { 3 } else { 2 };
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = record[i].parse().map_err(|_| {
                parse_err(
                    path,
                    line,
                    format!("{name} `{}` is not a number", &record[i]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("{name} is not finite")));
            }
            Ok(v)
        };
        let r = field(0, "r")?;
        if !(0.0..=1.0).contains(&r) {
            return Err(parse_err(path, line, format!("r = {r} outside [0, 1]")));
        }
        let theta = unit.to_radians(field(1, "theta")?);
        let loc = Location::new(r, theta).canonical();
        if let Some(j) = locations
            .iter()
            .position(|o| o.coincides(&loc, LOCATION_EPS))
        {
            return Err(parse_err(
                path,
                line,
                format!("duplicate of the location on data row {}", j + 1),
            ));
        }
        locations.push(loc);
        if has_value {
            values.push(field(2, "value")?);
        }
    }
    if locations.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(Rows {
        locations,
        values: has_value.then_some(values),
    })
}

/// Reads a `r,theta,value` CSV. The label is the file stem.
pub fn parse_dataset(path: &Path, unit: AngleUnit, noise_variance: f64) -> Result<SensorDataset> {
    let rows = read_rows(path, unit, true)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    SensorDataset::new(
        rows.locations,
        rows.values.unwrap_or_default(),
        noise_variance,
        label,
    )
    .map_err(|e| match e {
        Error::InvalidDataset(m) => parse_err(path, 0, m),
        e => e,
    })
}

/// Reads sensor locations from a `r,theta` CSV; a `value` column is ignored.
pub fn parse_layout(path: &Path, unit: AngleUnit) -> Result<Vec<Location>> {
    Ok(read_rows(path, unit, false)?.locations)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes a dataset as `r,theta,value` with angles in radians.
pub fn write_dataset_csv(dataset: &SensorDataset, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "r,theta,value").map_err(io)?;
    for (l, v) in dataset.locations().iter().zip(dataset.values()) {
        writeln!(w, "{},{},{}", fmt17(l.r), fmt17(l.theta), fmt17(*v)).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_r: usize,
    pub n_theta: usize,
}

impl GridSpec {
    /// Export grid used for plotting.
    pub const EXPORT: GridSpec = GridSpec {
        n_r: 50,
        n_theta: 128,
    };
    /// Coarse grid that keeps barycenter covariances small.
    pub const BARYCENTER: GridSpec = GridSpec {
        n_r: 15,
        n_theta: 36,
    };

    pub fn new(n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 2 || n_theta < 4 {
            return Err(Error::InvalidInput(format!(
                "grid needs n_r >= 2 and n_theta >= 4, got {n_r} x {n_theta}"
            )));
        }
        Ok(GridSpec { n_r, n_theta })
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points, radial index outermost. `θ` stops short of `2π`.
    pub fn locations(&self) -> Vec<Location> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.n_r {
            let r = i as f64 / (self.n_r - 1) as f64;
            for j in 0..self.n_theta {
                out.push(Location::new(r, TAU * j as f64 / self.n_theta as f64));
            }
        }
        out
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::EXPORT
    }
}

/// Writes the predictive mean and standard deviation over `grid` as CSV
/// `r,theta,mean,std`.
pub fn export_grid(field: &TrainedField, grid: &GridSpec, path: &Path) -> Result<()> {
    let grid = GridSpec::new(grid.n_r, grid.n_theta)?;
    let locs = grid.locations();
    let marginals = field.predict_marginals(&locs)?;
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "r,theta,mean,std").map_err(io)?;
    for (l, m) in locs.iter().zip(&marginals) {
        writeln!(
            w,
            "{},{},{},{}",
            fmt17(l.r),
            fmt17(l.theta),
            fmt17(m.mean),
            fmt17(m.variance.max(0.0).sqrt())
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// serde_json formatter that prints every float with 17 significant digits.
#[derive(Debug, Clone, Default)]
pub struct Sig17Formatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(
            fn $name<W: ?Sized + std::io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
                self.inner.$name(w $(, $arg)*)
            }
        )*
    };
}

impl serde_json::ser::Formatter for Sig17Formatter {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        value: f32,
    ) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        end_object_key();
        begin_object_value();
        end_object_value();
    }
}

/// Pretty JSON with 17-significant-digit floats and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter::default());
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let s = to_json_string(value)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| parse_err(path, e.line(), e.to_string()))
}
