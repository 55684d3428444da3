//! Gaussian log-likelihood and maximum-likelihood fitting of Matérn
//! parameters, with finite-difference Hessians and Wald intervals.
//!
//! Covariance parameters are optimized on the log scale. An optional design
//! matrix turns the model into `N(W beta, C)`; `beta` is then profiled out by
//! generalized least squares at every covariance evaluation.

use std::cell::RefCell;
use std::f64::consts::PI;

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::{cov_from_distances, pairwise_distances, CovMatrix, DistanceMetric, Location, MaternParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, inverse_condition, Cholesky};
use crate::optimize::{self, BfgsOptions, Bounds};

/// Covariance parameters, in the order the optimizer sees them. Partial sill
/// and nugget come first so that their finite-difference probes reuse the
/// cached correlation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Sigma2,
    Nugget,
    Rho,
    Nu,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Sigma2, Param::Nugget, Param::Rho, Param::Nu];

    pub fn name(self) -> &'static str {
        match self {
            Param::Rho => "rho",
            Param::Sigma2 => "sigma2",
            Param::Nu => "nu",
            Param::Nugget => "nugget",
        }
    }

    fn get(self, p: &MaternParams) -> f64 {
        match self {
            Param::Rho => p.rho,
            Param::Sigma2 => p.sigma2,
            Param::Nu => p.nu,
            Param::Nugget => p.nugget,
        }
    }

    fn set(self, p: &mut MaternParams, v: f64) {
        match self {
            Param::Rho => p.rho = v,
            Param::Sigma2 => p.sigma2 = v,
            Param::Nu => p.nu = v,
            Param::Nugget => p.nugget = v,
        }
    }
}

/// Which covariance parameters stay at their initial value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub rho: bool,
    pub sigma2: bool,
    pub nu: bool,
    pub nugget: bool,
}

impl FixedParams {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        Self {
            rho: true,
            sigma2: true,
            nu: true,
            nugget: true,
        }
    }

    pub fn nu_only() -> Self {
        Self {
            nu: true,
            ..Self::default()
        }
    }

    pub fn is_fixed(&self, p: Param) -> bool {
        match p {
            Param::Rho => self.rho,
            Param::Sigma2 => self.sigma2,
            Param::Nu => self.nu,
            Param::Nugget => self.nugget,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log,
    Linear,
}

/// Wald interval for one parameter, reported on the natural scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// Standard error on the optimization scale.
    pub std_error: f64,
    pub scale: Scale,
}

#[derive(Clone, Debug)]
pub struct MLFit {
    pub params: MaternParams,
    pub loglik: f64,
    /// Names of the Hessian rows: free, interior covariance parameters on
    /// the log scale, followed by linear coefficients.
    pub hessian_names: Vec<String>,
    /// Log-likelihood Hessian over the optimization-scale vector.
    pub hessian: Mat<f64>,
    /// Optimization-scale estimates matching `hessian_names`.
    pub estimates: Vec<f64>,
    pub scales: Vec<Scale>,
    pub wald: Vec<Interval>,
    /// Why `wald` is empty, if it is.
    pub wald_error: Option<String>,
    pub level: f64,
    /// Free parameters that ended on the edge of the search box; they are
    /// excluded from the Hessian.
    pub at_bound: Vec<Param>,
    pub free: Vec<Param>,
    /// Projected log-scale gradient of the log-likelihood at the optimum.
    pub gradient: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub beta: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    /// Wald confidence level.
    pub level: f64,
    /// Step for the finite-difference Hessian, log scale.
    pub hessian_step: f64,
    /// Compute the Hessian and Wald intervals. When off the fit carries an
    /// empty Hessian.
    pub intervals: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            level: 0.95,
            hessian_step: 1e-3,
            intervals: true,
        }
    }
}

fn cov_matrix_check(y: &[f64], mean: &[f64], cov: &CovMatrix) -> Result<()> {
    if y.len() != mean.len() || y.len() != cov.n() {
        return Err(Error::domain(format!(
            "dimension mismatch: y {}, mean {}, covariance {}",
            y.len(),
            mean.len(),
            cov.n()
        )));
    }
    Ok(())
}

/// Log-density of `y` under `N(mean, cov)` from a single Cholesky factorization.
pub fn gaussian_loglik(y: &[f64], mean: &[f64], cov: &CovMatrix) -> Result<f64> {
    cov_matrix_check(y, mean, cov)?;
    let chol = Cholesky::with_jitter(cov.entries.as_ref(), cov.params.sigma2)?;
    let r: Vec<f64> = y.iter().zip(mean).map(|(a, b)| a - b).collect();
    Ok(loglik_from_factor(&chol, &r))
}

fn loglik_from_factor(chol: &Cholesky, resid: &[f64]) -> f64 {
    let n = resid.len() as f64;
    let h = chol.half_solve_vec(resid);
    -0.5 * n * (2.0 * PI).ln() - 0.5 * chol.log_det() - 0.5 * dot(&h, &h)
}

/// Likelihood engine over fixed locations: caches the pairwise distances and
/// the most recent correlation matrix.
pub struct SpatialLikelihood {
    dist: Mat<f64>,
    z: Vec<f64>,
    design: Option<Mat<f64>>,
    cache: RefCell<Option<(f64, f64, Mat<f64>)>>,
}

/// Result of one covariance evaluation.
pub struct Evaluation {
    pub loglik: f64,
    pub beta: Vec<f64>,
}

impl SpatialLikelihood {
    pub fn new(z: &[f64], locs: &[Location], metric: DistanceMetric, design: Option<Mat<f64>>) -> Result<Self> {
        if z.len() != locs.len() {
            return Err(Error::domain("response and locations differ in length"));
        }
        let dist = pairwise_distances(locs, metric)?;
        Self::from_distances(z, dist, design)
    }

    pub fn from_distances(z: &[f64], dist: Mat<f64>, design: Option<Mat<f64>>) -> Result<Self> {
        if let Some(w) = &design {
            if w.nrows() != z.len() {
                return Err(Error::domain("design matrix rows differ from response length"));
            }
            if w.ncols() > 0 && inverse_condition(w.as_ref())? <= 1e-8 {
                return Err(Error::domain("design matrix is rank deficient"));
            }
        }
        Ok(Self {
            dist,
            z: z.to_vec(),
            design,
            cache: RefCell::new(None),
        })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn distances(&self) -> &Mat<f64> {
        &self.dist
    }

    pub fn response(&self) -> &[f64] {
        &self.z
    }

    pub fn design(&self) -> Option<&Mat<f64>> {
        self.design.as_ref()
    }

    /// `sigma2 R + nugget I`.
    pub fn covariance(&self, p: &MaternParams) -> Result<Mat<f64>> {
        p.validate()?;
        let mut cache = self.cache.borrow_mut();
        let hit = matches!(&*cache, Some((rho, nu, _)) if *rho == p.rho && *nu == p.nu);
        if !hit {
            let unit = MaternParams::new(p.rho, 1.0, p.nu, 0.0);
            *cache = Some((p.rho, p.nu, cov_from_distances(&self.dist, &unit, false)?));
        }
        let r = &cache.as_ref().expect("cache filled above").2;
        let n = r.nrows();
        Ok(Mat::from_fn(n, n, |i, j| {
            p.sigma2 * r[(i, j)] + if i == j { p.nugget } else { 0.0 }
        }))
    }

    pub fn factor(&self, p: &MaternParams) -> Result<Cholesky> {
        let c = self.covariance(p)?;
        Cholesky::with_jitter(c.as_ref(), p.sigma2)
    }

    /// GLS coefficients for a given factorization.
    fn gls(&self, chol: &Cholesky) -> Result<Vec<f64>> {
        let Some(w) = &self.design else {
            return Ok(vec![]);
        };
        let (wt_cinv_w, wt_cinv_z) = self.gls_system(chol, w);
        let info = Cholesky::new(wt_cinv_w.as_ref())
            .map_err(|_| Error::numeric("GLS normal equations are singular"))?;
        Ok(info.solve_vec(&wt_cinv_z))
    }

    fn gls_system(&self, chol: &Cholesky, w: &Mat<f64>) -> (Mat<f64>, Vec<f64>) {
        let cinv_w = chol.solve(w.as_ref());
        let cinv_z = chol.solve_vec(&self.z);
        let a = w.transpose() * &cinv_w;
        let b = (0..w.ncols())
            .map(|j| (0..w.nrows()).map(|i| w[(i, j)] * cinv_z[i]).sum())
            .collect();
        (a, b)
    }

    fn residual(&self, beta: &[f64]) -> Vec<f64> {
        match &self.design {
            None => self.z.clone(),
            Some(w) => (0..self.z.len())
                .map(|i| self.z[i] - (0..w.ncols()).map(|j| w[(i, j)] * beta[j]).sum::<f64>())
                .collect(),
        }
    }

    /// Profile log-likelihood (beta at its GLS value).
    pub fn evaluate(&self, p: &MaternParams) -> Result<Evaluation> {
        let chol = self.factor(p)?;
        let beta = self.gls(&chol)?;
        let r = self.residual(&beta);
        Ok(Evaluation {
            loglik: loglik_from_factor(&chol, &r),
            beta,
        })
    }

    /// Profile log-likelihood with the partial sill at its closed-form
    /// maximizer, returned alongside it. `p.sigma2` is ignored and `p.nugget`
    /// is read as the nugget-to-sill ratio.
    pub fn profile_sill(&self, p: &MaternParams) -> Result<(f64, f64)> {
        let unit = MaternParams { sigma2: 1.0, ..*p };
        let chol = self.factor(&unit)?;
        let beta = self.gls(&chol)?;
        let h = chol.half_solve_vec(&self.residual(&beta));
        let n = self.n() as f64;
        let sigma2 = dot(&h, &h) / n;
        if !(sigma2 > 0.0) {
            return Err(Error::numeric("residual quadratic form vanishes"));
        }
        Ok((-0.5 * n * ((2.0 * PI).ln() + 1.0 + sigma2.ln()) - 0.5 * chol.log_det(), sigma2))
    }

    /// Log-likelihood at a given `beta`.
    pub fn loglik_at(&self, p: &MaternParams, beta: &[f64]) -> Result<f64> {
        let chol = self.factor(p)?;
        Ok(loglik_from_factor(&chol, &self.residual(beta)))
    }

    /// `d loglik / d beta = W^T C^{-1} (z - W beta)`.
    pub fn beta_gradient(&self, p: &MaternParams, beta: &[f64]) -> Result<Vec<f64>> {
        let Some(w) = &self.design else {
            return Ok(vec![]);
        };
        let chol = self.factor(p)?;
        let cr = chol.solve_vec(&self.residual(beta));
        Ok((0..w.ncols())
            .map(|j| (0..w.nrows()).map(|i| w[(i, j)] * cr[i]).sum())
            .collect())
    }

    /// `W^T C^{-1} W`, the (negated) beta block of the Hessian.
    pub fn beta_information(&self, p: &MaternParams) -> Result<Mat<f64>> {
        let Some(w) = &self.design else {
            return Ok(Mat::zeros(0, 0));
        };
        let chol = self.factor(p)?;
        Ok(w.transpose() * chol.solve(w.as_ref()))
    }
}

/// Starting values for a zero-mean response: range at the median pairwise
/// distance, variance split evenly between partial sill and nugget, unit
/// smoothness.
pub fn default_init(y: &[f64], dist: &Mat<f64>) -> Result<MaternParams> {
    let v = sample_variance(y);
    if !(v > 0.0) {
        return Err(Error::domain("response has zero variance"));
    }
    let mut d = Vec::with_capacity(dist.nrows() * dist.nrows().saturating_sub(1) / 2);
    for j in 0..dist.ncols() {
        for i in (j + 1)..dist.nrows() {
            d.push(dist[(i, j)]);
        }
    }
    if d.is_empty() {
        return Err(Error::domain("need at least two locations"));
    }
    let mid = d.len() / 2;
    let (_, median, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Ok(MaternParams::new(*median, v / 2.0, 1.0, v / 2.0))
}

pub(crate) fn sample_variance(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    if y.len() < 2 {
        return 0.0;
    }
    let m = y.iter().sum::<f64>() / n;
    y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
}

fn log_bounds(param: Param, var: f64, dist: &Mat<f64>) -> (f64, f64) {
    match param {
        Param::Sigma2 => ((1e-8 * var).ln(), (1e4 * var).ln()),
        Param::Nugget => ((1e-8 * var).ln(), (1e4 * var).ln()),
        Param::Nu => (0.05f64.ln(), 50f64.ln()),
        Param::Rho => {
            let mut max: f64 = 0.0;
            let mut min = f64::INFINITY;
            for j in 0..dist.ncols() {
                for i in (j + 1)..dist.nrows() {
                    max = max.max(dist[(i, j)]);
                    min = min.min(dist[(i, j)]);
                }
            }
            ((1e-2 * min).ln(), (1e2 * max).ln())
        }
    }
}

/// Maximizes the (profile) likelihood of `model` over the free parameters.
pub fn fit_model(model: &SpatialLikelihood, init: &MaternParams, fixed: &FixedParams, opts: &FitOptions) -> Result<MLFit> {
    init.validate()?;
    let free: Vec<Param> = Param::ALL.iter().copied().filter(|p| !fixed.is_fixed(*p)).collect();
    for p in &free {
        if !(p.get(init) > 0.0) {
            return Err(Error::domain(format!("free parameter {} needs a positive start", p.name())));
        }
    }
    let var = sample_variance(model.response()).max(f64::MIN_POSITIVE);
    let mut bounds = Bounds::unbounded(free.len());
    for (i, p) in free.iter().enumerate() {
        let (lo, hi) = log_bounds(*p, var, model.distances());
        bounds.lower[i] = lo;
        bounds.upper[i] = hi;
        bounds.snap_lower[i] = *p == Param::Nugget;
    }
    let unpack = |theta: &[f64]| {
        let mut p = *init;
        for (k, param) in free.iter().enumerate() {
            param.set(&mut p, theta[k].exp());
        }
        p
    };
    let objective = |theta: &[f64]| -> f64 {
        match model.evaluate(&unpack(theta)) {
            Ok(e) if e.loglik.is_finite() => -e.loglik,
            _ => f64::INFINITY,
        }
    };
    let mut theta0: Vec<f64> = free.iter().map(|p| p.get(init).ln()).collect();
    for (i, t) in theta0.iter_mut().enumerate() {
        *t = t.clamp(bounds.lower[i], bounds.upper[i]);
    }
    let mut iterations = 0;
    let mut exact = false;
    if !fixed.is_fixed(Param::Sigma2) && (!fixed.is_fixed(Param::Nugget) || init.nugget == 0.0) {
        if let Some(start) = sill_profiled_start(model, init, &free, &bounds, var, &opts.bfgs) {
            if let Some((i, floor)) = start.nugget_floor {
                bounds.lower[i] = floor;
            }
            theta0 = start.theta;
            iterations = start.iterations;
            exact = start.exact;
        }
    }
    // the profile maximum is the full maximum unless mapping back clipped it
    let res = if exact {
        optimize::assess(objective, &theta0, &bounds, &opts.bfgs)
    } else {
        optimize::minimize(objective, &theta0, &bounds, &opts.bfgs)
    };
    log::debug!("{iterations} profiled iterations, {} full", res.iterations);
    iterations += res.iterations;
    let params = unpack(&res.x);
    let eval = model.evaluate(&params)?;

    let edge = 1e-6;
    let at_bound: Vec<Param> = free
        .iter()
        .enumerate()
        .filter(|(i, _)| res.x[*i] <= bounds.lower[*i] + edge || res.x[*i] >= bounds.upper[*i] - edge)
        .map(|(_, p)| *p)
        .collect();
    let interior: Vec<Param> = free.iter().copied().filter(|p| !at_bound.contains(p)).collect();

    let (hessian, names, estimates, scales) = if opts.intervals {
        joint_hessian(model, &params, &eval.beta, &interior, opts.hessian_step)?
    } else {
        (Mat::zeros(0, 0), vec![], vec![], vec![])
    };
    let mut fit = MLFit {
        params,
        loglik: eval.loglik,
        hessian_names: names,
        hessian,
        estimates,
        scales,
        wald: vec![],
        wald_error: None,
        level: opts.level,
        at_bound,
        free,
        gradient: res.grad.iter().map(|g| -g).collect(),
        converged: res.converged,
        iterations,
        beta: eval.beta,
    };
    if !opts.intervals {
        fit.wald_error = Some("intervals not requested".into());
        return Ok(fit);
    }
    match wald_intervals(&fit, opts.level) {
        Ok(w) => fit.wald = w,
        Err(e) => fit.wald_error = Some(e.to_string()),
    }
    Ok(fit)
}

/// Runs the optimizer with the partial sill concentrated out, which removes
/// the sill-range ridge, and maps the optimum back to the full log-parameter
/// vector. `None` if the reduced problem fails.
struct ProfiledStart {
    theta: Vec<f64>,
    iterations: usize,
    /// Converged, and the full-scale point lies inside the box.
    exact: bool,
    /// Lowered nugget bound, slot and value, for a nugget share that rests on
    /// its own floor while the partial sill is below the sample variance.
    nugget_floor: Option<(usize, f64)>,
}

fn sill_profiled_start(
    model: &SpatialLikelihood,
    init: &MaternParams,
    free: &[Param],
    bounds: &Bounds,
    var: f64,
    opts: &BfgsOptions,
) -> Option<ProfiledStart> {
    let slot = |p: Param| free.iter().position(|q| *q == p);
    let sill = slot(Param::Sigma2)?;
    let reduced: Vec<Param> = free.iter().copied().filter(|p| *p != Param::Sigma2).collect();
    let mut rb = Bounds::unbounded(reduced.len());
    let mut start = Vec::with_capacity(reduced.len());
    for (k, p) in reduced.iter().enumerate() {
        let i = slot(*p).expect("reduced is a subset of free");
        if *p == Param::Nugget {
            // the nugget floor taken relative to the sample variance, so a
            // vanishing nugget reaches it in a few steps
            rb.lower[k] = bounds.lower[i] - var.ln();
            rb.snap_lower[k] = true;
            rb.upper[k] = bounds.upper[i] - bounds.lower[sill];
            start.push((init.nugget / init.sigma2).ln().clamp(rb.lower[k], rb.upper[k]));
        } else {
            rb.lower[k] = bounds.lower[i];
            rb.upper[k] = bounds.upper[i];
            start.push(p.get(init).ln().clamp(rb.lower[k], rb.upper[k]));
        }
    }
    let unpack = |t: &[f64]| {
        let mut p = *init;
        for (k, param) in reduced.iter().enumerate() {
            param.set(&mut p, t[k].exp());
        }
        p
    };
    let objective = |t: &[f64]| match model.profile_sill(&unpack(t)) {
        Ok((ll, _)) if ll.is_finite() => -ll,
        _ => f64::INFINITY,
    };
    // coarse screen over shorter ranges and a smaller nugget share: a start
    // at a long range can settle in the all-nugget optimum of a rough field
    if let Some(r) = reduced.iter().position(|p| *p == Param::Rho) {
        let nug = reduced.iter().position(|p| *p == Param::Nugget);
        let mut best = (objective(&start), start.clone());
        for halvings in 0..=5 {
            for share in [None, Some(0.1f64.ln())] {
                let mut t = start.clone();
                t[r] = (t[r] - halvings as f64 * std::f64::consts::LN_2).clamp(rb.lower[r], rb.upper[r]);
                match (nug, share) {
                    (Some(k), Some(v)) => t[k] = v.clamp(rb.lower[k], rb.upper[k]),
                    (None, Some(_)) => continue,
                    _ => {}
                }
                let f = objective(&t);
                if f < best.0 {
                    best = (f, t);
                }
            }
        }
        start = best.1;
    }
    let res = optimize::minimize(objective, &start, &rb, opts);
    let p = unpack(&res.x);
    let (_, sigma2) = model.profile_sill(&p).ok()?;
    let mut theta = vec![0.0; free.len()];
    let mut clipped = false;
    let mut nugget_floor = None;
    for (i, param) in free.iter().enumerate() {
        let v = match param {
            Param::Sigma2 => sigma2,
            Param::Nugget => p.nugget * sigma2,
            other => other.get(&p),
        };
        let share_on_floor = reduced
            .iter()
            .position(|q| q == param)
            .is_some_and(|k| *param == Param::Nugget && res.x[k] <= rb.lower[k]);
        if share_on_floor && v.ln() < bounds.lower[i] {
            nugget_floor = Some((i, v.ln()));
            theta[i] = v.ln();
            continue;
        }
        theta[i] = v.ln().clamp(bounds.lower[i], bounds.upper[i]);
        clipped |= theta[i] != v.ln();
    }
    Some(ProfiledStart {
        theta,
        iterations: res.iterations,
        exact: res.converged && !clipped,
        nugget_floor,
    })
}

/// Hessian of the full log-likelihood over `(log theta_interior, beta)`.
/// The covariance block comes from second differences at fixed `beta`, the
/// cross block from differences of the analytic beta-gradient, and the beta
/// block is exactly `-W^T C^{-1} W`.
fn joint_hessian(
    model: &SpatialLikelihood,
    params: &MaternParams,
    beta: &[f64],
    interior: &[Param],
    h: f64,
) -> Result<(Mat<f64>, Vec<String>, Vec<f64>, Vec<Scale>)> {
    let kt = interior.len();
    let kb = beta.len();
    let theta: Vec<f64> = interior.iter().map(|p| p.get(params).ln()).collect();
    let unpack = |t: &[f64]| {
        let mut p = *params;
        for (k, param) in interior.iter().enumerate() {
            param.set(&mut p, t[k].exp());
        }
        p
    };
    let mut failure = None;
    let mut f = |t: &[f64]| match model.loglik_at(&unpack(t), beta) {
        Ok(v) => v,
        Err(e) => {
            failure = Some(e);
            f64::NAN
        }
    };
    let htt = optimize::hessian(&mut f, &theta, h);
    if let Some(e) = failure {
        return Err(e);
    }
    let mut hess = Mat::<f64>::zeros(kt + kb, kt + kb);
    for i in 0..kt {
        for j in 0..kt {
            hess[(i, j)] = htt[i][j];
        }
    }
    if kb > 0 {
        let info = model.beta_information(params)?;
        for i in 0..kb {
            for j in 0..kb {
                hess[(kt + i, kt + j)] = -info[(i, j)];
            }
        }
        let mut tw = theta.clone();
        for i in 0..kt {
            tw[i] = theta[i] + h;
            let gp = model.beta_gradient(&unpack(&tw), beta)?;
            tw[i] = theta[i] - h;
            let gm = model.beta_gradient(&unpack(&tw), beta)?;
            tw[i] = theta[i];
            for j in 0..kb {
                let v = (gp[j] - gm[j]) / (2.0 * h);
                hess[(i, kt + j)] = v;
                hess[(kt + j, i)] = v;
            }
        }
    }
    let mut names: Vec<String> = interior.iter().map(|p| p.name().to_string()).collect();
    names.extend((0..kb).map(|j| format!("beta{j}")));
    let mut estimates = theta;
    estimates.extend_from_slice(beta);
    let mut scales = vec![Scale::Log; kt];
    scales.extend(std::iter::repeat(Scale::Linear).take(kb));
    Ok((hess, names, estimates, scales))
}

/// Wald intervals `estimate ± z_{(1+level)/2} * se` on the optimization
/// scale, exponentiated for log-scale parameters.
pub fn wald_intervals(fit: &MLFit, level: f64) -> Result<Vec<Interval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let k = fit.hessian.nrows();
    if k == 0 {
        return Ok(vec![]);
    }
    let info = Mat::from_fn(k, k, |i, j| -0.5 * (fit.hessian[(i, j)] + fit.hessian[(j, i)]));
    let chol = Cholesky::new(info.as_ref()).map_err(|_| {
        Error::numeric(
            "log-likelihood Hessian is not negative definite at the estimate; \
             refit from another start or use profile-likelihood intervals",
        )
    })?;
    let identity = Mat::<f64>::identity(k, k);
    let cov = chol.solve(identity.as_ref());
    let zq = Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(0.5 * (1.0 + level));
    Ok((0..k)
        .map(|i| {
            let se = cov[(i, i)].max(0.0).sqrt();
            interval(&fit.hessian_names[i], fit.estimates[i], se, zq, fit.scales[i])
        })
        .collect())
}

pub(crate) fn interval(name: &str, est: f64, se: f64, zq: f64, scale: Scale) -> Interval {
    let (estimate, lower, upper) = match scale {
        Scale::Log => (est.exp(), (est - zq * se).exp(), (est + zq * se).exp()),
        Scale::Linear => (est, est - zq * se, est + zq * se),
    };
    Interval {
        name: name.to_string(),
        estimate,
        lower,
        upper,
        std_error: se,
        scale,
    }
}

/// Maximum-likelihood fit of a zero-mean Matérn-plus-nugget model.
pub fn fit_ml(
    y: &[f64],
    locs: &[Location],
    metric: DistanceMetric,
    init: &MaternParams,
    fixed: &FixedParams,
    opts: &FitOptions,
) -> Result<MLFit> {
    let model = SpatialLikelihood::new(y, locs, metric, None)?;
    fit_model(&model, init, fixed, opts)
}
