//! Spatial block cross-validation and predictive scores.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::attributes::{decompose_predictors, predict_detail, Conditioning, PredictOptions};
use crate::covariance::{build_cov, DistanceMetric, Location, MaternParams, EARTH_RADIUS_KM};
use crate::dataio::SpatialDataset;
use crate::error::{Error, Result};
use crate::pipeline::{analyse, fmt_f64, Analysis, AnalysisInput, PipelineConfig, Until};
use crate::rng::{self, domain};
use crate::sampling::conditional_mean;
use crate::scalespace::SmootherSpec;

/// Shown with every CV summary.
pub const CV_NOTE: &str = "Scales are reselected inside every fold, so fold scores also reflect \
     the variability of scale selection and are not a clean out-of-sample measure of one fixed \
     decomposition.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSplit {
    pub block_size: f64,
    pub k: usize,
    /// Fold of each location, `0..k`.
    pub assignments: Vec<usize>,
    /// Block of each location.
    pub blocks: Vec<usize>,
}

impl BlockSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }

    /// `(train, test)` index pairs, one per fold.
    pub fn folds(&self) -> Vec<(Vec<usize>, Vec<usize>)> {
        (0..self.k).map(|f| (self.train_indices(f), self.test_indices(f))).collect()
    }
}

/// Planar coordinates for tiling: equirectangular km for great-circle data.
fn planar(locs: &[Location], metric: DistanceMetric) -> Vec<(f64, f64)> {
    match metric {
        DistanceMetric::Euclidean => locs.iter().map(|l| (l.x, l.y)).collect(),
        DistanceMetric::GreatCircle { radius_km } => {
            let r = if radius_km > 0.0 { radius_km } else { EARTH_RADIUS_KM };
            let lat0 = (locs.iter().map(|l| l.y).sum::<f64>() / locs.len() as f64).to_radians();
            locs.iter()
                .map(|l| (r * l.x.to_radians() * lat0.cos(), r * l.y.to_radians()))
                .collect()
        }
    }
}

/// Tiles the bounding box with square blocks and deals whole blocks to
/// `k` folds, round-robin after a seeded shuffle.
pub fn block_split(locs: &[Location], metric: DistanceMetric, block_size: f64, k: usize, seed: u64) -> Result<BlockSplit> {
    if k < 2 {
        return Err(Error::domain("block cross-validation needs k >= 2"));
    }
    if locs.is_empty() {
        return Err(Error::domain("no locations to split"));
    }
    if !(block_size.is_finite() && block_size > 0.0) {
        return Err(Error::domain(format!("block size must be positive, got {block_size}")));
    }
    let pts = planar(locs, metric);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    let extent = (x1 - x0).max(y1 - y0);
    if block_size > extent {
        return Err(Error::domain(format!(
            "block size {block_size} exceeds the domain extent {extent}"
        )));
    }
    let cells: Vec<(i64, i64)> = pts
        .iter()
        .map(|(x, y)| (((x - x0) / block_size).floor() as i64, ((y - y0) / block_size).floor() as i64))
        .collect();
    let mut ids: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for c in &cells {
        let next = ids.len();
        ids.entry(*c).or_insert(next);
    }
    // renumber in sorted cell order so ids do not depend on point order
    for (i, v) in ids.values_mut().enumerate() {
        *v = i;
    }
    if ids.len() < k {
        return Err(Error::domain(format!(
            "only {} occupied blocks for {k} folds; use smaller blocks",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut rng::stream(seed, domain::FOLDS, 0));
    let mut fold_of_block = vec![0; ids.len()];
    for (pos, b) in order.iter().enumerate() {
        fold_of_block[*b] = pos % k;
    }
    let blocks: Vec<usize> = cells.iter().map(|c| ids[c]).collect();
    Ok(BlockSplit {
        block_size,
        k,
        assignments: blocks.iter().map(|b| fold_of_block[*b]).collect(),
        blocks,
    })
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::domain(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// CRPS of `N(mu, sd^2)` at `y`; `sd = 0` gives the absolute error.
pub fn crps_gaussian(mu: f64, sd: f64, y: f64) -> Result<f64> {
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::domain(format!("predictive sd must be non-negative, got {sd}")));
    }
    if sd == 0.0 {
        return Ok((y - mu).abs());
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let z = (y - mu) / sd;
    Ok(sd * (z * (2.0 * n.cdf(z) - 1.0) + 2.0 * n.pdf(z) - 1.0 / std::f64::consts::PI.sqrt()))
}

pub fn mean_crps(mu: &[f64], sd: &[f64], y: &[f64]) -> Result<f64> {
    if mu.len() != y.len() || sd.len() != y.len() || y.is_empty() {
        return Err(Error::domain("crps inputs differ in length"));
    }
    let mut s = 0.0;
    for i in 0..y.len() {
        s += crps_gaussian(mu[i], sd[i], y[i])?;
    }
    Ok(s / y.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldAttribute {
    pub detail: usize,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub spatial: MaternParams,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub interior_lambdas: Vec<f64>,
    pub attributes: Vec<FoldAttribute>,
    pub rmse: f64,
    pub crps: f64,
    pub train_rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FoldStatus {
    Ok(FoldScores),
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(flatten)]
    pub status: FoldStatus,
}

impl FoldRecord {
    pub fn scores(&self) -> Option<&FoldScores> {
        match &self.status {
            FoldStatus::Ok(s) => Some(s),
            FoldStatus::Failed { .. } => None,
        }
    }
}

/// Spread of the `index`-th interior scale over the folds that selected one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleStat {
    pub index: usize,
    pub folds: usize,
    pub mean: f64,
    pub sd: f64,
    /// `mean (sd)`
    pub formatted: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CVReport {
    pub note: String,
    pub folds: Vec<FoldRecord>,
    pub scale_stability: Vec<ScaleStat>,
    pub full_interior_lambdas: Vec<f64>,
}

impl CVReport {
    pub fn mean_rmse(&self) -> Option<f64> {
        mean(self.folds.iter().filter_map(|f| f.scores().map(|s| s.rmse)))
    }

    pub fn mean_crps(&self) -> Option<f64> {
        mean(self.folds.iter().filter_map(|f| f.scores().map(|s| s.crps)))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = it.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// `mean (sd)` with three decimals.
pub fn format_value_sd(mean: f64, sd: f64) -> String {
    format!("{mean:.3} ({sd:.3})")
}

pub fn scale_stability(folds: &[FoldRecord]) -> Vec<ScaleStat> {
    let lambdas: Vec<&Vec<f64>> = folds.iter().filter_map(|f| f.scores().map(|s| &s.interior_lambdas)).collect();
    let depth = lambdas.iter().map(|l| l.len()).max().unwrap_or(0);
    (0..depth)
        .map(|i| {
            let v: Vec<f64> = lambdas.iter().filter_map(|l| l.get(i).copied()).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = if v.len() > 1 {
                (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            ScaleStat {
                index: i + 1,
                folds: v.len(),
                mean: m,
                sd,
                formatted: format_value_sd(m, sd),
            }
        })
        .collect()
}

/// Block CV over the folds of `split`. `y` is the prepared response of the
/// full dataset, `full_spec` the smoother on all locations and `full` the
/// full-data analysis, whose posterior-mean field is the prediction target.
pub fn run_cv(
    ds: &SpatialDataset,
    y: &[f64],
    cfg: &PipelineConfig,
    split: &BlockSplit,
    full_spec: &SmootherSpec,
    full: &Analysis,
) -> Result<CVReport> {
    run_cv_on_folds(ds, y, cfg, &split.folds(), full_spec, full)
}

/// As [`run_cv`] with explicit `(train, test)` index sets.
pub fn run_cv_on_folds(
    ds: &SpatialDataset,
    y: &[f64],
    cfg: &PipelineConfig,
    folds: &[(Vec<usize>, Vec<usize>)],
    full_spec: &SmootherSpec,
    full: &Analysis,
) -> Result<CVReport> {
    if y.len() != ds.n() || full_spec.n() != ds.n() {
        return Err(Error::domain("response, smoother and dataset sizes differ"));
    }
    let p = full.noise.params;
    let sigma = build_cov(&ds.locations, &p, ds.metric(), false)?;
    let truth = conditional_mean(y, &sigma, p.nugget)?;
    let records: Vec<FoldRecord> = folds
        .par_iter()
        .enumerate()
        .map(|(f, (train, test))| {
            let status = match run_fold(ds, y, &truth, cfg, train, test, full_spec) {
                Ok(s) => FoldStatus::Ok(s),
                Err(e) => {
                    log::warn!("fold {} failed: {e}", f + 1);
                    FoldStatus::Failed { reason: e.to_string() }
                }
            };
            FoldRecord {
                fold: f + 1,
                n_train: train.len(),
                n_test: test.len(),
                status,
            }
        })
        .collect();
    Ok(CVReport {
        note: CV_NOTE.to_string(),
        scale_stability: scale_stability(&records),
        folds: records,
        full_interior_lambdas: full.scales.as_ref().map(|s| s.interior().to_vec()).unwrap_or_default(),
    })
}

fn rows(m: &faer::Mat<f64>, idx: &[usize]) -> faer::Mat<f64> {
    faer::Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

fn run_fold(
    ds: &SpatialDataset,
    y: &[f64],
    truth: &[f64],
    cfg: &PipelineConfig,
    train: &[usize],
    test: &[usize],
    full_spec: &SmootherSpec,
) -> Result<FoldScores> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::domain("fold has an empty training or test set"));
    }
    let tr = ds.subset(train);
    let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let input = AnalysisInput {
        locations: &tr.locations,
        metric: ds.metric(),
        response: &y_tr,
        predictors: &tr.predictors,
        draws: cfg.cv.as_ref().and_then(|c| c.draws).unwrap_or(cfg.sampling.draws),
        seed: cfg.seed,
    };
    let a = analyse(&input, cfg, None, Until::Attributes)?;
    let scales = a.scales.as_ref().expect("analysis ran to attributes");
    let dec = a.decomposition.as_ref().expect("analysis ran to attributes");
    // predictors are known everywhere, so test-site designs come from the
    // full-data smoother with this fold's scales
    let full_designs = if a.designs.is_empty() {
        vec![]
    } else {
        decompose_predictors(&ds.predictors, cfg.attributes.intercept, full_spec, scales)?
    };
    let test_locs: Vec<Location> = test.iter().map(|&i| ds.locations[i]).collect();
    let mut mu_test = vec![0.0; test.len()];
    let mut var_test = vec![0.0; test.len()];
    let mut mu_train = vec![0.0; train.len()];
    let mut attributes = vec![];
    for (l, outcome) in a.attributes.iter().enumerate() {
        let fit = outcome
            .fit()
            .ok_or_else(|| Error::numeric(format!("attribute fit for detail {} failed", l + 1)))?;
        let w_train = a.designs.get(l).map(|d| &d.columns);
        let cond = Conditioning {
            locs: &tr.locations,
            z: &dec.details[l],
            design: w_train,
        };
        let w_test = full_designs.get(l).map(|d| rows(&d.columns, test));
        let pt = predict_detail(fit, w_test.as_ref(), &test_locs, cond, PredictOptions::default())?;
        let pr = predict_detail(fit, w_train, &tr.locations, cond, PredictOptions::default())?;
        for i in 0..test.len() {
            mu_test[i] += pt.mean[i];
            var_test[i] += pt.sd[i] * pt.sd[i];
        }
        for i in 0..train.len() {
            mu_train[i] += pr.mean[i];
        }
        attributes.push(FoldAttribute {
            detail: l + 1,
            names: fit.names.clone(),
            beta: fit.beta.clone(),
            spatial: fit.spatial,
            converged: fit.converged(),
        });
    }
    let truth_test: Vec<f64> = test.iter().map(|&i| truth[i]).collect();
    let truth_train: Vec<f64> = train.iter().map(|&i| truth[i]).collect();
    let sd_test: Vec<f64> = var_test.iter().map(|v| v.sqrt()).collect();
    Ok(FoldScores {
        interior_lambdas: scales.interior().to_vec(),
        attributes,
        rmse: rmse(&mu_test, &truth_test)?,
        crps: mean_crps(&mu_test, &sd_test, &truth_test)?,
        train_rmse: rmse(&mu_train, &truth_train)?,
    })
}

/// Writes `cv_report.csv` (fold, column, metric, value) and `cv_summary.json`.
pub fn write_cv(report: &CVReport, column: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join("cv_report.csv");
    let f = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["fold", "column", "metric", "value"])?;
    for r in &report.folds {
        let fold = r.fold.to_string();
        let mut put = |metric: &str, v: f64| w.write_record([fold.as_str(), column, metric, &fmt_f64(v)]);
        put("n_train", r.n_train as f64)?;
        put("n_test", r.n_test as f64)?;
        match &r.status {
            FoldStatus::Failed { .. } => put("failed", 1.0)?,
            FoldStatus::Ok(s) => {
                put("rmse", s.rmse)?;
                put("crps", s.crps)?;
                put("train_rmse", s.train_rmse)?;
                for (i, l) in s.interior_lambdas.iter().enumerate() {
                    put(&format!("lambda_{}", i + 2), *l)?;
                }
            }
        }
    }
    for s in &report.scale_stability {
        w.write_record(["all", column, &format!("lambda_{}_mean", s.index + 1), &fmt_f64(s.mean)])?;
        w.write_record(["all", column, &format!("lambda_{}_sd", s.index + 1), &fmt_f64(s.sd)])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let json_path = dir.join("cv_summary.json");
    let mut f = fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    std::io::Write::write_all(&mut f, b"\n").map_err(|e| Error::io(&json_path, e))?;
    Ok(vec![csv_path, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Location> {
        (0..n * n).map(|i| Location::new((i % n) as f64, (i / n) as f64)).collect()
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, -1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[3.0, 4.0, 0.0, 0.0], &[0.0; 4]).unwrap(), 2.5);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn crps_closed_form_values() {
        assert_eq!(crps_gaussian(1.0, 0.0, 3.0).unwrap(), 2.0);
        assert!((crps_gaussian(0.0, 1.0, 0.0).unwrap() - 0.233_694).abs() < 1e-6);
        assert!((crps_gaussian(0.0, 1.0, 1.0).unwrap() - 0.602_441).abs() < 1e-6);
        assert!(crps_gaussian(0.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn blocks_are_atomic_and_balanced() {
        let locs = grid(40);
        let s = block_split(&locs, DistanceMetric::Euclidean, 8.0, 5, 3).unwrap();
        let mut fold_of_block = BTreeMap::new();
        for (b, f) in s.blocks.iter().zip(&s.assignments) {
            assert_eq!(*fold_of_block.entry(*b).or_insert(*f), *f);
        }
        for f in 0..5 {
            let train = s.train_indices(f).len();
            assert!((train as i64 - 1280).abs() <= 64, "{train}");
        }
    }

    #[test]
    fn split_errors() {
        let locs = grid(5);
        assert!(block_split(&locs, DistanceMetric::Euclidean, 10.0, 2, 0).is_err());
        assert!(block_split(&locs, DistanceMetric::Euclidean, 1.0, 1, 0).is_err());
        assert!(block_split(&locs, DistanceMetric::Euclidean, 3.5, 5, 0).is_err());
    }

    #[test]
    fn value_sd_format() {
        assert_eq!(format_value_sd(1.0, 1.16), "1.000 (1.160)");
    }
}
