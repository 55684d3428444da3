//! Per-detail attribute models: a Matérn field alone, or linear predictor
//! effects plus a Matérn field, fitted jointly by maximum likelihood.
//!
//! Predictors are decomposed with the same smoother and scales as the
//! response, so each detail gets its own design matrix. The intercept column
//! is shared by all details unchanged.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::covariance::{cross_cov_from_distances, cross_distances, DistanceMetric, Location, MaternParams};
use crate::error::{Error, Result};
use crate::estimation::{default_init, fit_model, FitOptions, FixedParams, Interval, MLFit, SpatialLikelihood};
use crate::linalg::{dot, Cholesky};
use crate::scalespace::{decompose_columns, ScaleSet, SmootherSpec};

/// How a raw predictor column is encoded before smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorKind {
    Continuous,
    /// Levels in increasing order; coded `0, 1, 2, ...`.
    Ordered { levels: Vec<String> },
    /// Only two-level columns are accepted, coded `0, 1`.
    Unordered { levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub name: String,
    pub kind: PredictorKind,
    /// Numeric values, already coded for categorical columns.
    pub values: Vec<f64>,
}

impl Predictor {
    pub fn continuous(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            kind: PredictorKind::Continuous,
            values,
        }
    }

    /// Codes the raw labels of a categorical column.
    pub fn categorical(name: &str, kind: PredictorKind, raw: &[&str]) -> Result<Self> {
        let levels = match &kind {
            PredictorKind::Continuous => {
                return Err(Error::domain(format!("{name}: continuous columns take numeric values")))
            }
            PredictorKind::Ordered { levels } => levels,
            PredictorKind::Unordered { levels } => levels,
        };
        let values = raw
            .iter()
            .enumerate()
            .map(|(row, v)| {
                levels
                    .iter()
                    .position(|l| l == v)
                    .map(|p| p as f64)
                    .ok_or_else(|| Error::domain(format!("{name}: row {row} has undeclared level '{v}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Self {
            name: name.to_string(),
            kind,
            values,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{}: non-finite predictor value", self.name)));
        }
        match &self.kind {
            PredictorKind::Continuous => Ok(()),
            PredictorKind::Unordered { levels } if levels.len() > 2 => Err(Error::domain(format!(
                "{}: unordered categorical with {} levels; declare an ordering or one-hot encode it",
                self.name,
                levels.len()
            ))),
            PredictorKind::Ordered { levels } | PredictorKind::Unordered { levels } => {
                let max = levels.len().saturating_sub(1) as f64;
                if self.values.iter().any(|v| *v < 0.0 || *v > max || v.fract() != 0.0) {
                    return Err(Error::domain(format!("{}: level code outside 0..={max}", self.name)));
                }
                Ok(())
            }
        }
    }
}

/// Design matrix for one detail.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub columns: Mat<f64>,
    pub scale_index: usize,
}

impl DesignMatrix {
    pub fn k(&self) -> usize {
        self.columns.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.col(j).iter().copied().collect()
    }
}

pub const INTERCEPT: &str = "intercept";

/// One design matrix per detail. With `intercept`, a column of ones comes
/// first in every matrix, undecomposed.
pub fn decompose_predictors(
    predictors: &[Predictor],
    intercept: bool,
    spec: &SmootherSpec,
    scales: &ScaleSet,
) -> Result<Vec<DesignMatrix>> {
    let n = spec.n();
    for p in predictors {
        p.validate()?;
        if p.values.len() != n {
            return Err(Error::domain(format!(
                "{}: {} values for {} locations",
                p.name,
                p.values.len(),
                n
            )));
        }
    }
    let raw = Mat::from_fn(n, predictors.len(), |i, j| predictors[j].values[i]);
    let bands = if predictors.is_empty() {
        vec![Mat::zeros(n, 0); scales.details()]
    } else {
        decompose_columns(spec, scales, &raw)?
    };
    let offset = usize::from(intercept);
    let mut names: Vec<String> = vec![];
    if intercept {
        names.push(INTERCEPT.to_string());
    }
    names.extend(predictors.iter().map(|p| p.name.clone()));
    Ok(bands
        .into_iter()
        .enumerate()
        .map(|(l, band)| DesignMatrix {
            names: names.clone(),
            columns: Mat::from_fn(n, offset + band.ncols(), |i, j| {
                if j < offset {
                    1.0
                } else {
                    band[(i, j - offset)]
                }
            }),
            scale_index: l,
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct AttributeFit {
    pub scale_index: Option<usize>,
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    pub spatial: MaternParams,
    pub loglik: f64,
    pub metric: DistanceMetric,
    /// Sample variance of the fitted fixed effects `W beta`.
    pub fixed_effect_variance: f64,
    /// Partial sill plus nugget.
    pub random_variance: f64,
    /// Wald intervals with `beta` entries renamed to their predictors.
    pub wald: Vec<Interval>,
    pub ml: MLFit,
}

impl AttributeFit {
    pub fn converged(&self) -> bool {
        self.ml.converged
    }
}

/// Joint ML fit of a detail. Without a design matrix the mean is zero.
pub fn fit_detail(
    z: &[f64],
    design: Option<&DesignMatrix>,
    locs: &[Location],
    metric: DistanceMetric,
    init: Option<MaternParams>,
    fixed: &FixedParams,
    opts: &FitOptions,
) -> Result<AttributeFit> {
    let w = design.map(|d| d.columns.clone());
    let model = SpatialLikelihood::new(z, locs, metric, w)?;
    let init = match init {
        Some(p) => p,
        None => default_init(z, model.distances())?,
    };
    let ml = fit_model(&model, &init, fixed, opts)?;
    let names = design.map(|d| d.names.clone()).unwrap_or_default();
    let fitted: Vec<f64> = match design {
        Some(d) => (0..z.len())
            .map(|i| (0..d.k()).map(|j| d.columns[(i, j)] * ml.beta[j]).sum())
            .collect(),
        None => vec![],
    };
    let wald = ml
        .wald
        .iter()
        .map(|iv| {
            let mut iv = iv.clone();
            if let Some(j) = iv.name.strip_prefix("beta").and_then(|s| s.parse::<usize>().ok()) {
                iv.name = names[j].clone();
            }
            iv
        })
        .collect();
    Ok(AttributeFit {
        scale_index: design.map(|d| d.scale_index),
        names,
        beta: ml.beta.clone(),
        spatial: ml.params,
        loglik: ml.loglik,
        metric,
        fixed_effect_variance: crate::estimation::sample_variance(&fitted),
        random_variance: ml.params.sigma2 + ml.params.nugget,
        wald,
        ml,
    })
}

/// Data the prediction conditions on.
#[derive(Clone, Copy)]
pub struct Conditioning<'a> {
    pub locs: &'a [Location],
    pub z: &'a [f64],
    pub design: Option<&'a Mat<f64>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PredictOptions {
    /// Add the variance from estimating `beta` (universal kriging).
    pub beta_uncertainty: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

/// Kriging mean `w0^T beta + c0^T C^{-1} (z - W beta)` and plug-in predictive
/// sd `sqrt(sigma2 + nugget - c0^T C^{-1} c0)` at new locations.
pub fn predict_detail(
    fit: &AttributeFit,
    design_new: Option<&Mat<f64>>,
    locs_new: &[Location],
    cond: Conditioning<'_>,
    opts: PredictOptions,
) -> Result<Prediction> {
    let n = cond.locs.len();
    let k = fit.beta.len();
    if cond.z.len() != n {
        return Err(Error::domain("conditioning response and locations differ in length"));
    }
    let check = |w: Option<&Mat<f64>>, rows: usize, what: &str| -> Result<()> {
        match w {
            None if k == 0 => Ok(()),
            Some(w) if w.ncols() == k && w.nrows() == rows => Ok(()),
            _ => Err(Error::domain(format!("{what} design does not match {k} coefficients"))),
        }
    };
    check(cond.design, n, "conditioning")?;
    check(design_new, locs_new.len(), "prediction")?;

    let p = fit.spatial;
    let model = SpatialLikelihood::new(cond.z, cond.locs, fit.metric, None)?;
    let chol = model.factor(&p)?;
    let c0 = cross_cov_from_distances(&cross_distances(cond.locs, locs_new, fit.metric)?, &p)?;
    let resid: Vec<f64> = (0..n)
        .map(|i| cond.z[i] - (0..k).map(|j| cond.design.expect("checked")[(i, j)] * fit.beta[j]).sum::<f64>())
        .collect();
    let alpha = chol.solve_vec(&resid);
    let cinv_c0 = chol.solve(c0.as_ref());

    let ub = if opts.beta_uncertainty && k > 0 {
        let w = cond.design.expect("checked");
        let info = w.transpose() * chol.solve(w.as_ref());
        Some((w.transpose() * &cinv_c0, Cholesky::new(info.as_ref())?))
    } else {
        None
    };

    let m = locs_new.len();
    let mut mean = Vec::with_capacity(m);
    let mut sd = Vec::with_capacity(m);
    for t in 0..m {
        let c0t: Vec<f64> = c0.col(t).iter().copied().collect();
        let fixed: f64 = (0..k).map(|j| design_new.expect("checked")[(t, j)] * fit.beta[j]).sum();
        mean.push(fixed + dot(&c0t, &alpha));
        let quad: f64 = (0..n).map(|i| c0[(i, t)] * cinv_c0[(i, t)]).sum();
        let mut var = p.sigma2 + p.nugget - quad;
        if let Some((wt_cinv_c0, info)) = &ub {
            let w0 = design_new.expect("checked");
            let r: Vec<f64> = (0..k).map(|j| w0[(t, j)] - wt_cinv_c0[(j, t)]).collect();
            var += dot(&r, &info.solve_vec(&r));
        }
        sd.push(var.max(0.0).sqrt());
    }
    Ok(Prediction { mean, sd })
}
