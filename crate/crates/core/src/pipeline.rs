//! End-to-end analysis driver and artifact writers.
//!
//! Stages run in order: noise model for the observations, conditional draws
//! of the latent field, scale selection on the ensemble mean, per-draw
//! decomposition with credibility maps, per-detail attribute fits, and
//! optionally block cross-validation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::attributes::{decompose_predictors, fit_detail, AttributeFit, DesignMatrix, Predictor};
use crate::covariance::{build_cov, pairwise_distances, DistanceMetric, Location};
use crate::credibility::{pw_map, PWMap};
use crate::dataio::{detrend_standardize, read_dataset, Schema, SpatialDataset, TrendCoord, TrendModel};
use crate::error::{Error, Result, StageContext};
use crate::estimation::{default_init, fit_ml, FitOptions, FixedParams, Interval, MLFit};
use crate::sampling::{conditional_sample, SampleEnsemble};
use crate::scalespace::{
    decompose, log_grid, select_scales, Decomposition, DerivativeCurve, NormKind, ScaleSet, SmootherSpec,
};
use crate::validation::{block_split, run_cv, CVReport};

/// Fitted smoothness of the coarsest detail above which the smoother is
/// likely too smooth.
pub const NU_WARNING: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detrend {
    /// Centre and scale only.
    None,
    X,
    #[default]
    Y,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub path: PathBuf,
    #[serde(flatten)]
    pub schema: Schema,
    #[serde(default)]
    pub detrend: Detrend,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Holds the smoothness at this value instead of estimating it.
    #[serde(default)]
    pub fix_nu: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherConfig {
    pub rho: f64,
    #[serde(default = "default_smoother_nu")]
    pub nu: f64,
    #[serde(default = "default_grid_min")]
    pub grid_min: f64,
    #[serde(default = "default_grid_max")]
    pub grid_max: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default)]
    pub norm: NormKind,
}

fn default_smoother_nu() -> f64 {
    0.5
}
fn default_grid_min() -> f64 {
    1e-3
}
fn default_grid_max() -> f64 {
    1e3
}
fn default_grid_points() -> usize {
    64
}

impl SmootherConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        log_grid(self.grid_min, self.grid_max, self.grid_points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default = "default_draws")]
    pub draws: usize,
}

fn default_draws() -> usize {
    1000
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { draws: default_draws() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CredibilityConfig {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.95
}

impl Default for CredibilityConfig {
    fn default() -> Self {
        Self { alpha: default_alpha() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeConfig {
    #[serde(default = "yes")]
    pub intercept: bool,
    #[serde(default)]
    pub fix_nu: Option<f64>,
}

fn yes() -> bool {
    true
}

impl Default for AttributeConfig {
    fn default() -> Self {
        Self {
            intercept: true,
            fix_nu: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Side of a square block, in coordinate units (km for great-circle data).
    pub block_size: f64,
    /// Draws per fold; defaults to the main draw count.
    #[serde(default)]
    pub draws: Option<usize>,
}

fn default_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub data: DataConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    pub smoother: SmootherConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub credibility: CredibilityConfig,
    #[serde(default)]
    pub attributes: AttributeConfig,
    #[serde(default)]
    pub cv: Option<CvConfig>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

impl PipelineConfig {
    /// Parses TOML; relative data paths resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        if let Some(b) = base {
            if cfg.data.path.is_relative() {
                cfg.data.path = b.join(&cfg.data.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.smoother;
        if !(s.rho.is_finite() && s.rho > 0.0 && s.nu.is_finite() && s.nu > 0.0) {
            return Err(Error::config("smoother rho and nu must be positive"));
        }
        s.grid().map_err(|e| Error::config(e.to_string()))?;
        if s.grid_points < crate::scalespace::MIN_GRID_POINTS {
            return Err(Error::config(format!(
                "smoother grid needs at least {} points",
                crate::scalespace::MIN_GRID_POINTS
            )));
        }
        if self.sampling.draws == 0 {
            return Err(Error::config("sampling.draws must be positive"));
        }
        let a = self.credibility.alpha;
        if !(a > 0.5 && a < 1.0) {
            return Err(Error::config(format!("credibility.alpha must lie in (0.5, 1), got {a}")));
        }
        for nu in [self.noise.fix_nu, self.attributes.fix_nu].into_iter().flatten() {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(Error::config("fixed smoothness must be positive"));
            }
        }
        if let Some(cv) = &self.cv {
            if cv.k < 2 {
                return Err(Error::config("cv.k must be at least 2"));
            }
            if !(cv.block_size.is_finite() && cv.block_size > 0.0) {
                return Err(Error::config("cv.block_size must be positive"));
            }
            if cv.draws == Some(0) {
                return Err(Error::config("cv.draws must be positive"));
            }
        }
        Ok(())
    }
}

/// How far an analysis runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Until {
    NoiseModel,
    Scales,
    Decomposition,
    Attributes,
}

/// Outcome of one attribute fit; failures are kept rather than aborting.
#[derive(Clone, Debug)]
pub enum FitOutcome {
    Fitted(Box<AttributeFit>),
    Failed(String),
}

impl FitOutcome {
    pub fn fit(&self) -> Option<&AttributeFit> {
        match self {
            FitOutcome::Fitted(f) => Some(f),
            FitOutcome::Failed(_) => None,
        }
    }
}

pub struct Analysis {
    pub locations: Vec<Location>,
    pub metric: DistanceMetric,
    pub response: Vec<f64>,
    pub noise: MLFit,
    pub ensemble: Option<SampleEnsemble>,
    /// Derivative curves of the ensemble mean, maximum norm first.
    pub curves: Vec<DerivativeCurve>,
    pub scales: Option<ScaleSet>,
    /// Scales the other norm would select.
    pub alt_scales: Option<ScaleSet>,
    pub decomposition: Option<Decomposition>,
    pub pw: Vec<PWMap>,
    pub designs: Vec<DesignMatrix>,
    pub attributes: Vec<FitOutcome>,
}

impl Analysis {
    /// Whether both norms select the same scales.
    pub fn norms_agree(&self) -> Option<bool> {
        match (&self.scales, &self.alt_scales) {
            (Some(a), Some(b)) => Some(a.lambdas == b.lambdas),
            _ => None,
        }
    }
}

/// Detrended and standardized response.
pub fn prepare_response(ds: &SpatialDataset, detrend: Detrend) -> Result<(Vec<f64>, TrendModel)> {
    match detrend {
        Detrend::X => detrend_standardize(ds, TrendCoord::X),
        Detrend::Y => detrend_standardize(ds, TrendCoord::Y),
        Detrend::None => {
            let n = ds.n() as f64;
            let m = ds.response.iter().sum::<f64>() / n;
            let sd = (ds.response.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(Error::domain("response has zero variance"));
            }
            let model = TrendModel {
                coord: TrendCoord::Y,
                intercept: m,
                slope: 0.0,
                sd,
            };
            Ok((model.apply(&ds.locations, &ds.response), model))
        }
    }
}

/// Inputs of one analysis run.
pub struct AnalysisInput<'a> {
    pub locations: &'a [Location],
    pub metric: DistanceMetric,
    pub response: &'a [f64],
    pub predictors: &'a [Predictor],
    pub draws: usize,
    pub seed: u64,
}

pub fn analyse(
    input: &AnalysisInput<'_>,
    cfg: &PipelineConfig,
    spec: Option<&SmootherSpec>,
    until: Until,
) -> Result<Analysis> {
    let locs = input.locations;
    let y = input.response;
    let metric = input.metric;
    let opts = FitOptions::default();

    info!("fitting noise model on {} observations", y.len());
    let noise = (|| {
        let dist = pairwise_distances(locs, metric)?;
        let mut init = default_init(y, &dist)?;
        let mut fixed = FixedParams::none();
        if let Some(nu) = cfg.noise.fix_nu {
            init.nu = nu;
            fixed.nu = true;
        }
        let fit = fit_ml(y, locs, metric, &init, &fixed, &opts)?;
        if !fit.converged {
            return Err(Error::NonConvergence {
                iterations: fit.iterations,
            });
        }
        Ok(fit)
    })()
    .stage("noise model")?;

    let mut out = Analysis {
        locations: locs.to_vec(),
        metric,
        response: y.to_vec(),
        noise,
        ensemble: None,
        curves: vec![],
        scales: None,
        alt_scales: None,
        decomposition: None,
        pw: vec![],
        designs: vec![],
        attributes: vec![],
    };
    if until == Until::NoiseModel {
        return Ok(out);
    }

    let p = out.noise.params;
    let ensemble = (|| {
        let sigma = build_cov(locs, &p, metric, false)?;
        conditional_sample(y, &sigma, p.nugget, input.draws, input.seed)
    })()
    .stage("conditional sampling")?;

    let owned;
    let spec = match spec {
        Some(s) => {
            if s.n() != locs.len() {
                return Err(Error::domain("smoother was built on other locations")).stage("scale selection");
            }
            s
        }
        None => {
            owned = SmootherSpec::new(locs, cfg.smoother.rho, cfg.smoother.nu, metric).stage("scale selection")?;
            &owned
        }
    };
    let grid = cfg.smoother.grid().stage("scale selection")?;
    let mut curves = vec![];
    for norm in [NormKind::Maximum, NormKind::Euclidean] {
        curves.push(spec.derivative_curve(&ensemble.mean, &grid, norm).stage("scale selection")?);
    }
    let chosen = cfg.smoother.norm;
    let (main, alt) = if chosen == NormKind::Maximum { (0, 1) } else { (1, 0) };
    let scales = select_scales(&curves[main]);
    let alt_scales = select_scales(&curves[alt]);
    if scales.lambdas != alt_scales.lambdas {
        warn!(
            "maximum and euclidean norms select different scales: {:?} vs {:?}",
            scales.interior(),
            alt_scales.interior()
        );
    }
    out.curves = curves;
    out.scales = Some(scales.clone());
    out.alt_scales = Some(alt_scales);
    out.ensemble = Some(ensemble);
    if until == Until::Scales {
        return Ok(out);
    }

    let ens = out.ensemble.as_ref().expect("set above");
    let dec = decompose(spec, &scales, ens).stage("decomposition")?;
    let mut pw = vec![];
    for l in 0..scales.details() {
        pw.push(
            pw_map(dec.band_draws(l).expect("per-draw details kept"), cfg.credibility.alpha)
                .stage("credibility maps")?,
        );
    }
    out.pw = pw;
    out.decomposition = Some(dec);
    if until == Until::Decomposition {
        return Ok(out);
    }

    let designs = if input.predictors.is_empty() && !cfg.attributes.intercept {
        vec![]
    } else {
        decompose_predictors(input.predictors, cfg.attributes.intercept, spec, &scales).stage("predictor decomposition")?
    };
    let dec = out.decomposition.as_ref().expect("set above");
    let mut fits = vec![];
    for (l, z) in dec.details.iter().enumerate() {
        let design = designs.get(l);
        let outcome = (|| {
            let dist = pairwise_distances(locs, metric)?;
            let mut init = default_init(z, &dist)?;
            let mut fixed = FixedParams::none();
            if let Some(nu) = cfg.attributes.fix_nu {
                init.nu = nu;
                fixed.nu = true;
            }
            fit_detail(z, design, locs, metric, Some(init), &fixed, &opts)
        })();
        fits.push(match outcome {
            Ok(f) => {
                if !f.converged() {
                    warn!("attribute fit for detail {} did not converge", l + 1);
                }
                FitOutcome::Fitted(Box::new(f))
            }
            Err(e) => {
                warn!("attribute fit for detail {} failed: {e}", l + 1);
                FitOutcome::Failed(e.to_string())
            }
        });
    }
    if let Some(f) = fits.last().and_then(FitOutcome::fit) {
        if f.spatial.nu > NU_WARNING {
            warn!(
                "fitted smoothness {:.3} of the coarsest detail exceeds {NU_WARNING}; \
                 the smoothing correlation is probably too smooth",
                f.spatial.nu
            );
        }
    }
    out.designs = designs;
    out.attributes = fits;
    Ok(out)
}

/// Result of a configured run.
pub struct RunOutput {
    pub dataset: SpatialDataset,
    pub trend: TrendModel,
    pub analysis: Analysis,
    pub cv: Option<CVReport>,
    pub artifacts: Vec<PathBuf>,
}

/// Loads the data and runs the analysis up to `until`, plus CV when asked.
pub fn run(cfg: &PipelineConfig, until: Until, with_cv: bool, out_dir: &Path) -> Result<RunOutput> {
    let ds = read_dataset(&cfg.data.path, &cfg.data.schema).stage("load data")?;
    let (y, trend) = prepare_response(&ds, cfg.data.detrend).stage("detrend")?;
    let spec = if until >= Until::Scales || with_cv {
        Some(SmootherSpec::new(&ds.locations, cfg.smoother.rho, cfg.smoother.nu, ds.metric()).stage("smoother")?)
    } else {
        None
    };
    let input = AnalysisInput {
        locations: &ds.locations,
        metric: ds.metric(),
        response: &y,
        predictors: &ds.predictors,
        draws: cfg.sampling.draws,
        seed: cfg.seed,
    };
    let analysis = analyse(&input, cfg, spec.as_ref(), until)?;

    let cv = if with_cv {
        let cv_cfg = cfg
            .cv
            .as_ref()
            .ok_or_else(|| Error::config("cross-validation requested but [cv] is missing"))?;
        let split = block_split(&ds.locations, ds.metric(), cv_cfg.block_size, cv_cfg.k, cfg.seed).stage("block split");
        let full = spec.as_ref().expect("built for cv");
        Some(split.and_then(|split| run_cv(&ds, &y, cfg, &split, full, &analysis).stage("cross-validation")))
    } else {
        None
    };

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut artifacts = write_analysis(&analysis, &ds, out_dir).stage("write artifacts")?;
    let (cv, failure) = match cv {
        Some(Ok(r)) => (Some(r), None),
        Some(Err(e)) => (None, Some(e)),
        None => (None, None),
    };
    if let Some(r) = &cv {
        artifacts.extend(crate::validation::write_cv(r, &cfg.data.schema.response, out_dir).stage("write artifacts")?);
    }
    let manifest = out_dir.join("manifest.json");
    let failed = failure.as_ref().map(|e| e.to_string());
    write_manifest(cfg, &trend, &analysis, &artifacts, failed.as_deref(), &manifest).stage("write artifacts")?;
    if let Some(e) = failure {
        return Err(e);
    }
    artifacts.push(manifest);
    Ok(RunOutput {
        dataset: ds,
        trend,
        analysis,
        cv,
        artifacts,
    })
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn interval_rows(w: &mut csv::Writer<fs::File>, prefix: &[String], iv: &Interval) -> Result<()> {
    let mut row = prefix.to_vec();
    row.extend([
        iv.name.clone(),
        fmt_f64(iv.estimate),
        fmt_f64(iv.lower),
        fmt_f64(iv.upper),
        fmt_f64(iv.std_error),
        format!("{:?}", iv.scale).to_lowercase(),
    ]);
    w.write_record(&row)?;
    Ok(())
}

/// Parameter table: every parameter with its estimate and, for free interior
/// parameters, its Wald interval.
pub fn write_noise_model(fit: &MLFit, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["parameter", "estimate", "lower", "upper", "std_error", "scale", "status"])?;
    let p = fit.params;
    for (name, value) in [("rho", p.rho), ("sigma2", p.sigma2), ("nu", p.nu), ("nugget", p.nugget)] {
        let (lower, upper, se, scale) = match fit.wald.iter().find(|iv| iv.name == name) {
            Some(iv) => (fmt_f64(iv.lower), fmt_f64(iv.upper), fmt_f64(iv.std_error), "log".to_string()),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let status = if fit.at_bound.iter().any(|b| b.name() == name) {
            "at_bound"
        } else if fit.free.iter().any(|b| b.name() == name) {
            "free"
        } else {
            "fixed"
        };
        w.write_record([name, &fmt_f64(value), &lower, &upper, &se, &scale, status])?;
    }
    w.write_record(["loglik", &fmt_f64(fit.loglik), "", "", "", "", ""])?;
    w.write_record(["converged", if fit.converged { "1" } else { "0" }, "", "", "", "", ""])?;
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_curves(curves: &[DerivativeCurve], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["norm", "lambda", "value"])?;
    for c in curves {
        let norm = match c.norm {
            NormKind::Maximum => "max",
            NormKind::Euclidean => "euclid",
        };
        for (l, v) in c.lambdas.iter().zip(&c.values) {
            w.write_record([norm, &fmt_f64(*l), &fmt_f64(*v)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_scales(scales: &ScaleSet, alt: Option<&ScaleSet>, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["norm", "index", "lambda"])?;
    for s in std::iter::once(scales).chain(alt) {
        let norm = match s.norm {
            NormKind::Maximum => "max",
            NormKind::Euclidean => "euclid",
        };
        for (i, l) in s.lambdas.iter().enumerate() {
            w.write_record([norm, &(i + 1).to_string(), &fmt_f64(*l)])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_detail(locs: &[Location], z: &[f64], pw: &PWMap, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "value", "label", "prob_pos"])?;
    for i in 0..locs.len() {
        w.write_record([
            fmt_f64(locs[i].x),
            fmt_f64(locs[i].y),
            fmt_f64(z[i]),
            pw.labels[i].as_str().to_string(),
            fmt_f64(pw.prob_pos[i]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_attributes(fits: &[FitOutcome], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["detail", "term", "estimate", "lower", "upper", "std_error", "scale"])?;
    for (l, outcome) in fits.iter().enumerate() {
        let d = (l + 1).to_string();
        match outcome {
            FitOutcome::Failed(msg) => {
                w.write_record([d.as_str(), "failed", msg.as_str(), "", "", "", ""])?;
            }
            FitOutcome::Fitted(f) => {
                let prefix = vec![d.clone()];
                let mut listed = vec![];
                for iv in &f.wald {
                    interval_rows(&mut w, &prefix, iv)?;
                    listed.push(iv.name.clone());
                }
                let p = f.spatial;
                let rest = f
                    .names
                    .iter()
                    .cloned()
                    .zip(f.beta.iter().copied())
                    .chain([
                        ("rho".to_string(), p.rho),
                        ("sigma2".to_string(), p.sigma2),
                        ("nu".to_string(), p.nu),
                        ("nugget".to_string(), p.nugget),
                    ]);
                for (name, v) in rest {
                    if !listed.contains(&name) {
                        w.write_record([d.as_str(), &name, &fmt_f64(v), "", "", "", ""])?;
                    }
                }
                for (name, v) in [
                    ("fixed_effect_variance", f.fixed_effect_variance),
                    ("random_variance", f.random_variance),
                    ("loglik", f.loglik),
                    ("converged", if f.converged() { 1.0 } else { 0.0 }),
                ] {
                    w.write_record([d.as_str(), name, &fmt_f64(v), "", "", "", ""])?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes every artifact the analysis reached; returns their paths.
pub fn write_analysis(a: &Analysis, ds: &SpatialDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = vec![];
    let p = dir.join("noise_model.csv");
    write_noise_model(&a.noise, &p)?;
    out.push(p);
    if let Some(s) = &a.scales {
        let p = dir.join("scale_curve.csv");
        write_curves(&a.curves, &p)?;
        out.push(p);
        let p = dir.join("scales.csv");
        write_scales(s, a.alt_scales.as_ref(), &p)?;
        out.push(p);
    }
    if let Some(d) = &a.decomposition {
        for (l, z) in d.details.iter().enumerate() {
            let p = dir.join(format!("detail_{}.csv", l + 1));
            write_detail(&ds.locations, z, &a.pw[l], &p)?;
            out.push(p);
        }
    }
    if !a.attributes.is_empty() {
        let p = dir.join("attributes.csv");
        write_attributes(&a.attributes, &p)?;
        out.push(p);
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    software: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a PipelineConfig,
    trend: &'a TrendModel,
    observations: usize,
    noise_converged: bool,
    interior_scales: Vec<f64>,
    norms_agree: Option<bool>,
    failed_attribute_fits: Vec<usize>,
    /// False when a later stage failed and only these artifacts were written.
    complete: bool,
    failure: Option<&'a str>,
    artifacts: Vec<String>,
}

pub fn write_manifest(
    cfg: &PipelineConfig,
    trend: &TrendModel,
    a: &Analysis,
    artifacts: &[PathBuf],
    failure: Option<&str>,
    path: &Path,
) -> Result<()> {
    let m = Manifest {
        software: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
        trend,
        observations: a.locations.len(),
        noise_converged: a.noise.converged,
        interior_scales: a.scales.as_ref().map(|s| s.interior().to_vec()).unwrap_or_default(),
        norms_agree: a.norms_agree(),
        failed_attribute_fits: a
            .attributes
            .iter()
            .enumerate()
            .filter(|(_, f)| f.fit().is_none())
            .map(|(l, _)| l + 1)
            .collect(),
        complete: failure.is_none(),
        failure,
        artifacts: artifacts
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
    };
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut f, &m)?;
    writeln!(f).map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7
[data]
path = "data.csv"
x = "lon"
y = "lat"
response = "ba"
metric = { kind = "great_circle", radius_km = 6371.0088 }
[smoother]
rho = 26.0
[cv]
block_size = 26.0
"#;

    #[test]
    fn config_defaults() {
        let c = PipelineConfig::from_toml(MINIMAL, Some(Path::new("/tmp/x"))).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.data.path, Path::new("/tmp/x/data.csv"));
        assert_eq!(c.smoother.nu, 0.5);
        assert_eq!(c.smoother.grid_points, 64);
        assert_eq!(c.sampling.draws, 1000);
        assert_eq!(c.credibility.alpha, 0.95);
        let cv = c.cv.unwrap();
        assert_eq!((cv.k, cv.block_size), (5, 26.0));
        assert!(matches!(c.data.schema.metric, DistanceMetric::GreatCircle { .. }));
    }

    #[test]
    fn config_rejections() {
        let bad_alpha = MINIMAL.replace("[smoother]", "[credibility]\nalpha = 0.4\n[smoother]");
        assert!(matches!(PipelineConfig::from_toml(&bad_alpha, None), Err(Error::Config(_))));
        let unknown = MINIMAL.replace("rho = 26.0", "rho = 26.0\nrange = 3");
        assert!(matches!(PipelineConfig::from_toml(&unknown, None), Err(Error::Config(_))));
        let short = MINIMAL.replace("rho = 26.0", "rho = 26.0\ngrid_points = 8");
        assert!(PipelineConfig::from_toml(&short, None).is_err());
    }

    #[test]
    fn infinity_formatting() {
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.25), "0.25");
    }
}
