//! Unconditional Gaussian-process simulation and two-step conditional
//! sampling of the latent field given noisy observations.
//!
//! For `Y = X + eps` with `X ~ N(0, S)` and `eps ~ N(0, t I)` independent,
//! a joint draw `(X, Y)` is corrected to a draw of `X | y` by
//! `X + S (S + t I)^{-1} (y - Y)`. Only `S + t I` is ever solved against.

use faer::Mat;

use crate::covariance::{build_cov, CovMatrix, DistanceMetric, Location, MaternParams};
use crate::error::{Error, Result};
use crate::linalg::{col_mat, Cholesky};
use crate::rng::{self, domain};

/// Conditional draws of the latent field.
#[derive(Clone, Debug)]
pub struct SampleEnsemble {
    /// `B x n`, one draw per row.
    pub draws: Mat<f64>,
    /// Arithmetic mean of the draws.
    pub mean: Vec<f64>,
    pub seed: u64,
}

impl SampleEnsemble {
    pub fn from_draws(draws: Mat<f64>, seed: u64) -> Result<Self> {
        if draws.nrows() == 0 {
            return Err(Error::domain("an ensemble needs at least one draw"));
        }
        let mean = column_means(&draws);
        Ok(Self { draws, mean, seed })
    }

    /// Number of draws.
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    /// Number of locations.
    pub fn n(&self) -> usize {
        self.draws.ncols()
    }

    pub fn draw(&self, b: usize) -> Vec<f64> {
        self.draws.row(b).iter().copied().collect()
    }
}

pub(crate) fn column_means(m: &Mat<f64>) -> Vec<f64> {
    let b = m.nrows() as f64;
    (0..m.ncols()).map(|j| m.col(j).iter().sum::<f64>() / b).collect()
}

/// One zero-mean draw with covariance `build_cov(p)` plus the nugget on the
/// diagonal when it is positive.
pub fn simulate_gp(locs: &[Location], p: &MaternParams, metric: DistanceMetric, seed: u64) -> Result<Vec<f64>> {
    let cov = build_cov(locs, p, metric, p.nugget > 0.0)?;
    let chol = Cholesky::with_jitter(cov.entries.as_ref(), p.sigma2)?;
    let mut rng = rng::stream(seed, domain::SIMULATE, 0);
    let z = rng::standard_normals(&mut rng, locs.len());
    let x = chol.lower_mul(col_mat(&z).as_ref());
    Ok(x.col(0).iter().copied().collect())
}

fn check_inputs(y: &[f64], sigma: &CovMatrix, nugget: f64) -> Result<()> {
    if y.len() != sigma.n() {
        return Err(Error::domain(format!(
            "observation length {} differs from covariance dimension {}",
            y.len(),
            sigma.n()
        )));
    }
    if !(nugget.is_finite() && nugget >= 0.0) {
        return Err(Error::domain(format!("nugget must be non-negative, got {nugget}")));
    }
    Ok(())
}

fn noisy(sigma: &CovMatrix, nugget: f64) -> Mat<f64> {
    let n = sigma.n();
    Mat::from_fn(n, n, |i, j| sigma.entries[(i, j)] + if i == j { nugget } else { 0.0 })
}

/// Mean `S (S + t I)^{-1} y` and covariance `S - S (S + t I)^{-1} S` of `X | y`.
pub fn conditional_moments(y: &[f64], sigma: &CovMatrix, nugget: f64) -> Result<(Vec<f64>, Mat<f64>)> {
    check_inputs(y, sigma, nugget)?;
    let n = y.len();
    if nugget == 0.0 {
        return Ok((y.to_vec(), Mat::zeros(n, n)));
    }
    let a = Cholesky::new(noisy(sigma, nugget).as_ref())
        .map_err(|_| Error::numeric("S + nugget I is not positive definite"))?;
    let s = &sigma.entries;
    // (S + tI)^{-1} [y | S] in one pass over the factor
    let mut rhs = Mat::<f64>::zeros(n, n + 1);
    for i in 0..n {
        rhs[(i, 0)] = y[i];
        for j in 0..n {
            rhs[(i, j + 1)] = s[(i, j)];
        }
    }
    let sol = a.solve(rhs.as_ref());
    let prod = s * &sol;
    let mean = (0..n).map(|i| prod[(i, 0)]).collect();
    let cov = Mat::from_fn(n, n, |i, j| s[(i, j)] - 0.5 * (prod[(i, j + 1)] + prod[(j, i + 1)]));
    Ok((mean, cov))
}

/// Mean `S (S + t I)^{-1} y` of `X | y` alone.
pub fn conditional_mean(y: &[f64], sigma: &CovMatrix, nugget: f64) -> Result<Vec<f64>> {
    check_inputs(y, sigma, nugget)?;
    if nugget == 0.0 {
        return Ok(y.to_vec());
    }
    let a = Cholesky::new(noisy(sigma, nugget).as_ref())
        .map_err(|_| Error::numeric("S + nugget I is not positive definite"))?;
    Ok(crate::linalg::mat_vec(sigma.entries.as_ref(), &a.solve_vec(y)))
}

/// `B` conditional draws of `X | y` by joint simulation and correction.
///
/// Draw `b` uses its own random stream, so the ensemble does not depend on
/// evaluation order.
pub fn conditional_sample(y: &[f64], sigma: &CovMatrix, nugget: f64, draws: usize, seed: u64) -> Result<SampleEnsemble> {
    check_inputs(y, sigma, nugget)?;
    if draws == 0 {
        return Err(Error::domain("need at least one draw"));
    }
    let n = y.len();
    if nugget == 0.0 {
        return SampleEnsemble::from_draws(Mat::from_fn(draws, n, |_, j| y[j]), seed);
    }
    let sig_chol = Cholesky::with_jitter(sigma.entries.as_ref(), sigma.params.sigma2)?;
    let a = Cholesky::new(noisy(sigma, nugget).as_ref())
        .map_err(|_| Error::numeric("S + nugget I is not positive definite"))?;

    // columns are draws: xi -> X = L xi, eps = sqrt(t) eta
    let mut xi = Mat::<f64>::zeros(n, draws);
    let mut eps = Mat::<f64>::zeros(n, draws);
    let sd = nugget.sqrt();
    for b in 0..draws {
        let mut r = rng::stream(seed, domain::CONDITIONAL, b as u64);
        let z = rng::standard_normals(&mut r, 2 * n);
        for i in 0..n {
            xi[(i, b)] = z[i];
            eps[(i, b)] = sd * z[n + i];
        }
    }
    let x = sig_chol.lower_mul(xi.as_ref());
    // y - Y = y - X - eps
    let resid = Mat::from_fn(n, draws, |i, b| y[i] - x[(i, b)] - eps[(i, b)]);
    let correction = &sigma.entries * a.solve(resid.as_ref());
    let out = Mat::from_fn(draws, n, |b, i| x[(i, b)] + correction[(i, b)]);
    SampleEnsemble::from_draws(out, seed)
}
