//! Delimited-text datasets, detrending and standardization, and
//! inverse-distance interpolation onto map grids.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attributes::{Predictor, PredictorKind};
use crate::covariance::{distance, DistanceMetric, Location};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorColumn {
    pub column: String,
    #[serde(flatten)]
    pub kind: PredictorKind,
}

/// Column roles of an input file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    /// First coordinate column (longitude for great-circle data).
    pub x: String,
    /// Second coordinate column (latitude for great-circle data).
    pub y: String,
    #[serde(default)]
    pub metric: DistanceMetric,
    pub response: String,
    #[serde(default)]
    pub predictors: Vec<PredictorColumn>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_delimiter() -> char {
    ','
}

impl Schema {
    pub fn new(x: &str, y: &str, response: &str, metric: DistanceMetric) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            metric,
            response: response.into(),
            predictors: vec![],
            delimiter: ',',
        }
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| Error::Config(format!("delimiter {:?} is not a single ASCII character", self.delimiter)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpatialDataset {
    pub schema: Schema,
    pub locations: Vec<Location>,
    pub response: Vec<f64>,
    pub predictors: Vec<Predictor>,
    pub meta: Vec<String>,
}

impl SpatialDataset {
    pub fn n(&self) -> usize {
        self.locations.len()
    }

    pub fn metric(&self) -> DistanceMetric {
        self.schema.metric
    }

    /// Rows `idx` as a new dataset.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            locations: idx.iter().map(|&i| self.locations[i]).collect(),
            response: idx.iter().map(|&i| self.response[i]).collect(),
            predictors: self
                .predictors
                .iter()
                .map(|p| Predictor {
                    name: p.name.clone(),
                    kind: p.kind.clone(),
                    values: idx.iter().map(|&i| p.values[i]).collect(),
                })
                .collect(),
            meta: self.meta.clone(),
        }
    }
}

pub fn read_dataset(path: &Path, schema: &Schema) -> Result<SpatialDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = parse_dataset(file, schema, path)?;
    ds.meta.push(format!("source: {}", path.display()));
    Ok(ds)
}

/// Parses delimited text; `source` only labels error messages.
pub fn parse_dataset<R: std::io::Read>(reader: R, schema: &Schema, source: &Path) -> Result<SpatialDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("{}: missing column '{name}'", source.display())))
    };
    let ix = find(&schema.x)?;
    let iy = find(&schema.y)?;
    let ir = find(&schema.response)?;
    let ip: Vec<usize> = schema.predictors.iter().map(|p| find(&p.column)).collect::<Result<_>>()?;
    for p in &schema.predictors {
        if let PredictorKind::Unordered { levels } = &p.kind {
            if levels.len() > 2 {
                return Err(Error::Config(format!(
                    "{}: unordered categorical with {} levels; declare an ordering or one-hot encode it",
                    p.column,
                    levels.len()
                )));
            }
        }
    }

    let mut locations = vec![];
    let mut response = vec![];
    let mut values: Vec<Vec<f64>> = vec![vec![]; ip.len()];
    let mut seen: HashMap<(u64, u64), u64> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |col: usize| -> Result<&str> {
            rec.get(col).ok_or_else(|| Error::Parse {
                path: source.into(),
                line,
                column: col + 1,
                message: "missing field".into(),
            })
        };
        let num = |col: usize| -> Result<f64> {
            let s = field(col)?;
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    path: source.into(),
                    line,
                    column: col + 1,
                    message: format!("expected a finite number, found '{s}'"),
                }),
            }
        };
        let loc = Location::new(num(ix)?, num(iy)?);
        // normalise -0.0 so it collides with 0.0
        let key = ((loc.x + 0.0).to_bits(), (loc.y + 0.0).to_bits());
        if let Some(first) = seen.insert(key, line) {
            return Err(Error::domain(format!(
                "{}: rows at lines {first} and {line} share location ({}, {})",
                source.display(),
                loc.x,
                loc.y
            )));
        }
        distance(loc, loc, schema.metric).map_err(|e| Error::Parse {
            path: source.into(),
            line,
            column: ix + 1,
            message: e.to_string(),
        })?;
        locations.push(loc);
        response.push(num(ir)?);
        for (k, (&col, spec)) in ip.iter().zip(&schema.predictors).enumerate() {
            let v = match &spec.kind {
                PredictorKind::Continuous => num(col)?,
                PredictorKind::Ordered { levels } | PredictorKind::Unordered { levels } => {
                    let s = field(col)?;
                    levels.iter().position(|l| l == s).ok_or_else(|| Error::Parse {
                        path: source.into(),
                        line,
                        column: col + 1,
                        message: format!("undeclared level '{s}' for {}", spec.column),
                    })? as f64
                }
            };
            values[k].push(v);
        }
    }
    if locations.is_empty() {
        return Err(Error::domain(format!("{}: no data rows", source.display())));
    }
    let predictors = schema
        .predictors
        .iter()
        .zip(values)
        .map(|(spec, values)| Predictor {
            name: spec.column.clone(),
            kind: spec.kind.clone(),
            values,
        })
        .collect();
    Ok(SpatialDataset {
        schema: schema.clone(),
        locations,
        response,
        predictors,
        meta: vec![],
    })
}

/// Writes the columns named by the dataset's schema; categorical values are
/// written as their level labels.
pub fn write_dataset(ds: &SpatialDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(ds, file)
}

pub fn write_dataset_to<W: std::io::Write>(ds: &SpatialDataset, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(ds.schema.delimiter_byte()?)
        .from_writer(out);
    let mut header = vec![ds.schema.x.clone(), ds.schema.y.clone(), ds.schema.response.clone()];
    header.extend(ds.predictors.iter().map(|p| p.name.clone()));
    w.write_record(&header)?;
    for i in 0..ds.n() {
        let mut row = vec![
            ds.locations[i].x.to_string(),
            ds.locations[i].y.to_string(),
            ds.response[i].to_string(),
        ];
        for p in &ds.predictors {
            row.push(match &p.kind {
                PredictorKind::Continuous => p.values[i].to_string(),
                PredictorKind::Ordered { levels } | PredictorKind::Unordered { levels } => {
                    levels[p.values[i] as usize].clone()
                }
            });
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendCoord {
    X,
    #[default]
    Y,
}

/// Linear trend in one coordinate followed by scaling to unit sd.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub coord: TrendCoord,
    pub intercept: f64,
    pub slope: f64,
    /// Sample sd of the detrended response.
    pub sd: f64,
}

impl TrendModel {
    fn coord_of(&self, l: &Location) -> f64 {
        match self.coord {
            TrendCoord::X => l.x,
            TrendCoord::Y => l.y,
        }
    }

    pub fn apply(&self, locs: &[Location], y: &[f64]) -> Vec<f64> {
        locs.iter()
            .zip(y)
            .map(|(l, v)| (v - self.intercept - self.slope * self.coord_of(l)) / self.sd)
            .collect()
    }

    pub fn invert(&self, locs: &[Location], r: &[f64]) -> Vec<f64> {
        locs.iter()
            .zip(r)
            .map(|(l, v)| v * self.sd + self.intercept + self.slope * self.coord_of(l))
            .collect()
    }
}

/// OLS of the response on one coordinate; residuals scaled to unit sd.
pub fn detrend_standardize(ds: &SpatialDataset, coord: TrendCoord) -> Result<(Vec<f64>, TrendModel)> {
    let n = ds.n();
    if n < 3 {
        return Err(Error::domain("detrending needs at least three observations"));
    }
    if ds.response.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("response contains non-finite values"));
    }
    let t: Vec<f64> = ds
        .locations
        .iter()
        .map(|l| match coord {
            TrendCoord::X => l.x,
            TrendCoord::Y => l.y,
        })
        .collect();
    let nf = n as f64;
    let tm = t.iter().sum::<f64>() / nf;
    let ym = ds.response.iter().sum::<f64>() / nf;
    let stt: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    let sty: f64 = t.iter().zip(&ds.response).map(|(a, b)| (a - tm) * (b - ym)).sum();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let intercept = ym - slope * tm;
    let resid: Vec<f64> = t.iter().zip(&ds.response).map(|(a, b)| b - intercept - slope * a).collect();
    let rm = resid.iter().sum::<f64>() / nf;
    let sd = (resid.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    if !(sd > 0.0) {
        return Err(Error::domain("response has zero variance after detrending"));
    }
    let model = TrendModel {
        coord,
        intercept: intercept + rm,
        slope,
        sd,
    };
    Ok((model.apply(&ds.locations, &ds.response), model))
}

/// Inverse-distance weighting from the `neighbors` nearest points. A target
/// that coincides with a data point takes its value.
pub fn grid_interpolate(
    locs: &[Location],
    values: &[f64],
    targets: &[Location],
    power: f64,
    neighbors: usize,
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    if locs.is_empty() || targets.is_empty() {
        return Err(Error::domain("interpolation needs data and target points"));
    }
    if locs.len() != values.len() {
        return Err(Error::domain("locations and values differ in length"));
    }
    if neighbors == 0 {
        return Err(Error::domain("need at least one neighbour"));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(Error::domain(format!("power must be positive, got {power}")));
    }
    let k = neighbors.min(locs.len());
    targets
        .iter()
        .map(|t| {
            let mut d: Vec<(f64, usize)> = locs
                .iter()
                .enumerate()
                .map(|(i, l)| distance(*t, *l, metric).map(|v| (v, i)))
                .collect::<Result<_>>()?;
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if d[0].0 == 0.0 {
                return Ok(values[d[0].1]);
            }
            let (mut num, mut den) = (0.0, 0.0);
            for &(dist, i) in &d[..k] {
                let w = dist.powf(-power);
                num += w * values[i];
                den += w;
            }
            Ok(num / den)
        })
        .collect()
}

/// `nx x ny` grid spanning the bounding box of `locs`, row-major in y.
pub fn regular_grid(locs: &[Location], nx: usize, ny: usize) -> Result<Vec<Location>> {
    if locs.is_empty() || nx < 2 || ny < 2 {
        return Err(Error::domain("grid needs data points and at least 2x2 nodes"));
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for l in locs {
        x0 = x0.min(l.x);
        x1 = x1.max(l.x);
        y0 = y0.min(l.y);
        y1 = y1.max(l.y);
    }
    let mut g = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            g.push(Location::new(
                x0 + (x1 - x0) * i as f64 / (nx - 1) as f64,
                y0 + (y1 - y0) * j as f64 / (ny - 1) as f64,
            ));
        }
    }
    Ok(g)
}
