//! Scale-space smoothing with a Matérn correlation matrix.
//!
//! The smoother is `S_lambda = R (R + lambda I)^{-1}` and its scale
//! derivative `D_lambda = d S_lambda / d log lambda = -lambda R (R + lambda I)^{-2}`.
//! Both share the eigenvectors of `R`, so with `R = U diag(e) U^T`
//!
//! ```text
//! S_lambda x = U diag(e / (e + lambda)) U^T x
//! D_lambda x = U diag(-lambda e / (e + lambda)^2) U^T x
//! ```
//!
//! One eigendecomposition serves every scale and every draw. Eigenvalues are
//! clamped at zero, which keeps the smoother spectrum inside `[0, 1]` even
//! when `R` is numerically rank deficient.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::covariance::{build_corr, DistanceMetric, Location};
use crate::error::{Error, Result};
use crate::linalg::{col_mat, SymmetricEigen};
use crate::sampling::{column_means, SampleEnsemble};

/// Minimum number of grid points for a derivative curve.
pub const MIN_GRID_POINTS: usize = 16;
/// Relative tolerance under which neighbouring curve values count as a plateau.
pub const PLATEAU_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    #[default]
    Maximum,
    Euclidean,
}

impl NormKind {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            NormKind::Maximum => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Smoother tuned by the range and smoothness of its correlation matrix.
pub struct SmootherSpec {
    pub rho: f64,
    pub nu: f64,
    pub metric: DistanceMetric,
    pub corr: Mat<f64>,
    vectors: Mat<f64>,
    values: Vec<f64>,
}

impl SmootherSpec {
    pub fn new(locs: &[Location], rho: f64, nu: f64, metric: DistanceMetric) -> Result<Self> {
        let corr = build_corr(locs, rho, nu, metric)?.entries;
        Self::from_correlation(corr, rho, nu, metric)
    }

    /// Wraps an arbitrary symmetric PSD matrix with unit diagonal.
    pub fn from_correlation(corr: Mat<f64>, rho: f64, nu: f64, metric: DistanceMetric) -> Result<Self> {
        let eig = SymmetricEigen::new(corr.as_ref())?;
        let values = eig.values.iter().map(|&e| e.max(0.0)).collect();
        Ok(Self {
            rho,
            nu,
            metric,
            corr,
            vectors: eig.vectors,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.corr.nrows()
    }

    /// Eigenvalues of `R` after clamping, nondecreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::domain(format!(
                "field has {} values but the smoother was built on {} locations",
                len,
                self.n()
            )));
        }
        Ok(())
    }

    /// `U^T X`
    fn project(&self, x: &Mat<f64>) -> Mat<f64> {
        self.vectors.transpose() * x
    }

    /// `U diag(f) C`
    fn expand(&self, coef: &Mat<f64>, f: impl Fn(f64) -> f64) -> Mat<f64> {
        let scaled = Mat::from_fn(coef.nrows(), coef.ncols(), |i, j| f(self.values[i]) * coef[(i, j)]);
        &self.vectors * scaled
    }

    /// `S_lambda X` for the columns of `X`.
    pub fn smooth_columns(&self, lambda: f64, x: &Mat<f64>) -> Result<Mat<f64>> {
        self.check_len(x.nrows())?;
        check_lambda(lambda)?;
        if lambda == 0.0 {
            return Ok(x.clone());
        }
        if lambda == f64::INFINITY {
            return Ok(Mat::zeros(x.nrows(), x.ncols()));
        }
        let coef = self.project(x);
        Ok(self.expand(&coef, |e| e / (e + lambda)))
    }

    pub fn smooth(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.smooth_columns(lambda, &col_mat(x))?;
        Ok(out.col(0).iter().copied().collect())
    }

    pub fn scale_derivative(&self, lambda: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::domain(format!(
                "scale derivative needs a finite positive lambda, got {lambda}"
            )));
        }
        let coef = self.project(&col_mat(x));
        let out = self.expand(&coef, |e| -lambda * e / ((e + lambda) * (e + lambda)));
        Ok(out.col(0).iter().copied().collect())
    }

    /// Norm of the scale derivative over a log-spaced grid of lambdas.
    pub fn derivative_curve(&self, x: &[f64], grid: &[f64], norm: NormKind) -> Result<DerivativeCurve> {
        self.check_len(x.len())?;
        check_grid(grid)?;
        let coef = self.project(&col_mat(x));
        let n = self.n();
        let values = grid
            .iter()
            .map(|&lambda| {
                let w = Mat::from_fn(n, 1, |i, _| {
                    let e = self.values[i];
                    -lambda * e / ((e + lambda) * (e + lambda)) * coef[(i, 0)]
                });
                let d = &self.vectors * w;
                let v: Vec<f64> = d.col(0).iter().copied().collect();
                norm.apply(&v)
            })
            .collect();
        Ok(DerivativeCurve {
            lambdas: grid.to_vec(),
            values,
            norm,
        })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::domain(format!("smoothing scale must be >= 0, got {lambda}")));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < MIN_GRID_POINTS {
        return Err(Error::domain(format!(
            "derivative grid needs at least {MIN_GRID_POINTS} points, got {}",
            grid.len()
        )));
    }
    if !grid.iter().all(|l| l.is_finite() && *l > 0.0) || !grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::domain("derivative grid must be finite, positive and strictly increasing"));
    }
    Ok(())
}

/// `points` log-spaced values spanning `[min, max]`.
pub fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min && points >= 2) {
        return Err(Error::domain(format!("invalid grid [{min}, {max}] with {points} points")));
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| {
            if i + 1 == points {
                max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// Default grid: 64 points over `[1e-3, 1e3]`.
pub fn default_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 64).expect("valid constants")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeCurve {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    pub norm: NormKind,
}

/// Ordered smoothing scales `0 = l_1 < ... < l_L = inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet {
    pub lambdas: Vec<f64>,
    pub curve: Option<DerivativeCurve>,
    pub norm: NormKind,
}

impl ScaleSet {
    /// Wraps interior scales with the `0` and `inf` sentinels.
    pub fn from_interior(interior: &[f64], norm: NormKind) -> Result<Self> {
        if !interior.iter().all(|l| l.is_finite() && *l > 0.0) || !interior.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::domain("interior scales must be finite, positive and strictly increasing"));
        }
        let mut lambdas = vec![0.0];
        lambdas.extend_from_slice(interior);
        lambdas.push(f64::INFINITY);
        Ok(Self {
            lambdas,
            curve: None,
            norm,
        })
    }

    pub fn trivial() -> Self {
        Self {
            lambdas: vec![0.0, f64::INFINITY],
            curve: None,
            norm: NormKind::default(),
        }
    }

    /// Finite positive scales.
    pub fn interior(&self) -> &[f64] {
        &self.lambdas[1..self.lambdas.len() - 1]
    }

    /// Number of details, `L - 1`.
    pub fn details(&self) -> usize {
        self.lambdas.len() - 1
    }
}

/// Grid indices of strict local minima, plateaus resolved to the leftmost point.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    let m = values.len();
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = PLATEAU_TOL * scale;
    let mut out = vec![];
    if m < 3 || scale == 0.0 {
        return out;
    }
    let mut i = 1;
    while i + 1 < m {
        let mut j = i;
        while j + 1 < m && (values[j + 1] - values[i]).abs() <= tol {
            j += 1;
        }
        if j + 1 < m && values[i - 1] > values[i] + tol && values[j + 1] > values[i] + tol {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Scales at the local minima of a derivative curve.
pub fn select_scales(curve: &DerivativeCurve) -> ScaleSet {
    let interior: Vec<f64> = local_minima(&curve.values).into_iter().map(|i| curve.lambdas[i]).collect();
    let mut set = ScaleSet::from_interior(&interior, curve.norm).expect("grid is strictly increasing");
    set.curve = Some(curve.clone());
    set
}

/// Details `z_l = (S_{l_l} - S_{l_{l+1}}) x`, per draw and averaged.
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// Posterior-mean detail fields, one per scale band.
    pub details: Vec<Vec<f64>>,
    /// Per band, a `B x n` matrix of per-draw details.
    pub per_draw: Option<Vec<Mat<f64>>>,
    pub scales: ScaleSet,
}

impl Decomposition {
    /// Per-draw details of band `l`, if retained.
    pub fn band_draws(&self, l: usize) -> Option<&Mat<f64>> {
        self.per_draw.as_ref().map(|p| &p[l])
    }
}

/// Details for the columns of `x` (`n x B`), one `n x B` matrix per band.
pub fn decompose_columns(spec: &SmootherSpec, scales: &ScaleSet, x: &Mat<f64>) -> Result<Vec<Mat<f64>>> {
    spec.check_len(x.nrows())?;
    let interior = scales.interior();
    if interior.is_empty() {
        return Ok(vec![x.clone()]);
    }
    let coef = spec.project(x);
    let smooths: Vec<Mat<f64>> = interior
        .iter()
        .map(|&lambda| spec.expand(&coef, |e| e / (e + lambda)))
        .collect();
    let mut out = Vec::with_capacity(interior.len() + 1);
    out.push(x - &smooths[0]);
    for w in smooths.windows(2) {
        out.push(&w[0] - &w[1]);
    }
    out.push(smooths.last().expect("non-empty").clone());
    Ok(out)
}

/// Decomposition of a single field.
pub fn decompose_field(spec: &SmootherSpec, scales: &ScaleSet, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let bands = decompose_columns(spec, scales, &col_mat(x))?;
    Ok(bands.iter().map(|m| m.col(0).iter().copied().collect()).collect())
}

/// Decomposes every draw of `draws`; the posterior-mean details are the
/// per-band averages over draws.
pub fn decompose(spec: &SmootherSpec, scales: &ScaleSet, draws: &SampleEnsemble) -> Result<Decomposition> {
    if draws.n() != spec.n() {
        return Err(Error::domain(format!(
            "ensemble has {} locations but the smoother has {}",
            draws.n(),
            spec.n()
        )));
    }
    let columns = draws.draws.transpose().to_owned();
    let bands = decompose_columns(spec, scales, &columns)?;
    let per_draw: Vec<Mat<f64>> = bands.into_iter().map(|m| m.transpose().to_owned()).collect();
    let details = per_draw.iter().map(column_means).collect();
    Ok(Decomposition {
        details,
        per_draw: Some(per_draw),
        scales: scales.clone(),
    })
}
