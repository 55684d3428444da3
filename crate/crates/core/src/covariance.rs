//! Matérn covariance, distance metrics and dense covariance matrices.
//!
//! The Matérn family is parametrized by its *effective range* `rho`: the
//! argument of the Bessel function is `sqrt(8 nu) d / rho`, which puts the
//! correlation at `d = rho` near 0.13 for every smoothness.

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::bessel::BesselK;
use crate::error::{Error, Result};

/// Default earth radius in km (mean radius).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A point in the plane, or `(longitude, latitude)` in decimal degrees when
/// used with [`DistanceMetric::GreatCircle`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    /// Effective range.
    pub rho: f64,
    /// Partial sill.
    pub sigma2: f64,
    /// Smoothness.
    pub nu: f64,
    /// Nugget variance.
    pub nugget: f64,
}

impl MaternParams {
    pub fn new(rho: f64, sigma2: f64, nu: f64, nugget: f64) -> Self {
        Self {
            rho,
            sigma2,
            nu,
            nugget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rho.is_finite()
            && self.rho > 0.0
            && self.sigma2.is_finite()
            && self.sigma2 > 0.0
            && self.nu.is_finite()
            && self.nu > 0.0
            && self.nugget.is_finite()
            && self.nugget >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid Matérn parameters {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    /// Haversine distance on a sphere; locations are `(lon, lat)` degrees.
    GreatCircle { radius_km: f64 },
}

impl Default for DistanceMetric {
    fn default() -> Self {
        DistanceMetric::Euclidean
    }
}

impl DistanceMetric {
    pub fn great_circle() -> Self {
        DistanceMetric::GreatCircle {
            radius_km: EARTH_RADIUS_KM,
        }
    }
}

/// Distance between two locations under `metric`.
pub fn distance(a: Location, b: Location, metric: DistanceMetric) -> Result<f64> {
    if !(a.x.is_finite() && a.y.is_finite() && b.x.is_finite() && b.y.is_finite()) {
        return Err(Error::domain("non-finite coordinate"));
    }
    match metric {
        DistanceMetric::Euclidean => Ok((a.x - b.x).hypot(a.y - b.y)),
        DistanceMetric::GreatCircle { radius_km } => {
            for p in [a, b] {
                if !(-90.0..=90.0).contains(&p.y) || !(-180.0..=180.0).contains(&p.x) {
                    return Err(Error::domain(format!(
                        "coordinate (lon {}, lat {}) out of range",
                        p.x, p.y
                    )));
                }
            }
            if !(radius_km.is_finite() && radius_km > 0.0) {
                return Err(Error::domain("sphere radius must be positive"));
            }
            let (lat1, lat2) = (a.y.to_radians(), b.y.to_radians());
            let dlat = lat2 - lat1;
            let dlon = (b.x - a.x).to_radians();
            let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
            Ok(2.0 * radius_km * h.sqrt().min(1.0).asin())
        }
    }
}

/// Symmetric matrix of pairwise distances. Fails on duplicate locations.
pub fn pairwise_distances(locs: &[Location], metric: DistanceMetric) -> Result<Mat<f64>> {
    let n = locs.len();
    let mut d = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in (j + 1)..n {
            let v = distance(locs[i], locs[j], metric)?;
            if v == 0.0 {
                return Err(Error::domain(format!(
                    "locations {j} and {i} coincide; observations must sit at distinct locations"
                )));
            }
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Cross distances, rows indexing `a` and columns indexing `b`. Coincident
/// points are allowed here.
pub fn cross_distances(a: &[Location], b: &[Location], metric: DistanceMetric) -> Result<Mat<f64>> {
    let mut d = Mat::<f64>::zeros(a.len(), b.len());
    for j in 0..b.len() {
        for i in 0..a.len() {
            d[(i, j)] = distance(a[i], b[j], metric)?;
        }
    }
    Ok(d)
}

/// Matérn covariance with the order-dependent constants hoisted out.
#[derive(Clone, Debug)]
pub struct MaternKernel {
    sigma2: f64,
    nu: f64,
    inv_scale: f64,
    log_norm: f64,
    bessel: BesselK,
}

impl MaternKernel {
    pub fn new(p: &MaternParams) -> Result<Self> {
        p.validate()?;
        Ok(Self {
            sigma2: p.sigma2,
            nu: p.nu,
            inv_scale: (8.0 * p.nu).sqrt() / p.rho,
            log_norm: p.sigma2.ln() - (p.nu - 1.0) * std::f64::consts::LN_2 - ln_gamma(p.nu),
            bessel: BesselK::new(p.nu),
        })
    }

    /// Covariance at lag `d >= 0`, nugget excluded.
    #[inline]
    pub fn eval(&self, d: f64) -> f64 {
        if d == 0.0 {
            return self.sigma2;
        }
        let z = self.inv_scale * d;
        let (m, s) = self.bessel.eval_scaled(z);
        let l = self.log_norm + self.nu * z.ln() + s;
        if l.abs() < 600.0 {
            l.exp() * m
        } else {
            (l + m.ln()).exp()
        }
    }
}

/// Matérn covariance at lag `d`, nugget excluded.
pub fn matern_cov(d: f64, p: &MaternParams) -> Result<f64> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::domain(format!("lag must be finite and non-negative, got {d}")));
    }
    Ok(MaternKernel::new(p)?.eval(d))
}

/// Dense covariance matrix together with the parameters that produced it.
#[derive(Clone, Debug)]
pub struct CovMatrix {
    pub entries: Mat<f64>,
    pub params: MaternParams,
    pub metric: DistanceMetric,
    pub includes_nugget: bool,
}

impl CovMatrix {
    pub fn n(&self) -> usize {
        self.entries.nrows()
    }
}

/// Covariance matrix from precomputed distances.
pub fn cov_from_distances(dist: &Mat<f64>, p: &MaternParams, include_nugget: bool) -> Result<Mat<f64>> {
    let kernel = MaternKernel::new(p)?;
    let n = dist.nrows();
    let mut c = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = p.sigma2 + if include_nugget { p.nugget } else { 0.0 };
        for i in (j + 1)..n {
            let v = kernel.eval(dist[(i, j)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Rectangular cross-covariance from precomputed cross distances (no nugget).
pub fn cross_cov_from_distances(dist: &Mat<f64>, p: &MaternParams) -> Result<Mat<f64>> {
    let kernel = MaternKernel::new(p)?;
    Ok(Mat::from_fn(dist.nrows(), dist.ncols(), |i, j| kernel.eval(dist[(i, j)])))
}

pub fn build_cov(
    locs: &[Location],
    p: &MaternParams,
    metric: DistanceMetric,
    include_nugget: bool,
) -> Result<CovMatrix> {
    p.validate()?;
    let dist = pairwise_distances(locs, metric)?;
    Ok(CovMatrix {
        entries: cov_from_distances(&dist, p, include_nugget)?,
        params: *p,
        metric,
        includes_nugget: include_nugget,
    })
}

/// Correlation matrix: unit partial sill, no nugget.
pub fn build_corr(locs: &[Location], rho: f64, nu: f64, metric: DistanceMetric) -> Result<CovMatrix> {
    build_cov(locs, &MaternParams::new(rho, 1.0, nu, 0.0), metric, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Cholesky, SymmetricEigen};

    fn unit(nu: f64) -> MaternParams {
        MaternParams::new(1.0, 1.0, nu, 0.0)
    }

    fn grid_locs(n: usize) -> Vec<Location> {
        (0..n)
            .map(|i| Location::new((i % 7) as f64 * 0.13 + 0.01 * i as f64, (i / 7) as f64 * 0.11))
            .collect()
    }

    #[test]
    fn zero_lag_is_partial_sill() {
        let p = MaternParams::new(0.3, 2.5, 1.7, 0.4);
        assert_eq!(matern_cov(0.0, &p).unwrap(), 2.5);
    }

    #[test]
    fn exponential_special_case() {
        let v = matern_cov(1.0, &unit(0.5)).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-14);
        assert!((v - 0.135_335).abs() < 1e-6);
    }

    #[test]
    fn three_halves_closed_form() {
        let v = matern_cov(0.5, &unit(1.5)).unwrap();
        let z = 12f64.sqrt() * 0.5;
        let exact = (1.0 + z) * (-z).exp();
        assert!((v - exact).abs() < 1e-13);
        assert!((v - 0.48335).abs() < 1e-5);
    }

    #[test]
    fn effective_range_correlation_band() {
        let mut nu = 0.25;
        while nu <= 5.0 {
            let c = matern_cov(1.0, &unit(nu)).unwrap();
            assert!((0.10..=0.15).contains(&c), "nu={nu}: corr {c}");
            nu += 0.05;
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(matern_cov(1.0, &MaternParams::new(0.0, 1.0, 1.0, 0.0)).is_err());
        assert!(matern_cov(1.0, &MaternParams::new(1.0, -1.0, 1.0, 0.0)).is_err());
        assert!(matern_cov(1.0, &MaternParams::new(1.0, 1.0, f64::NAN, 0.0)).is_err());
        assert!(matern_cov(1.0, &MaternParams::new(1.0, 1.0, 1.0, -0.1)).is_err());
        assert!(matern_cov(-1.0, &unit(1.0)).is_err());
    }

    #[test]
    fn euclidean_and_identity() {
        let a = Location::new(0.0, 0.0);
        let b = Location::new(3.0, 4.0);
        assert_eq!(distance(a, b, DistanceMetric::Euclidean).unwrap(), 5.0);
        assert_eq!(distance(b, b, DistanceMetric::great_circle()).unwrap(), 0.0);
    }

    #[test]
    fn haversine_helsinki_to_rovaniemi() {
        // independent spherical law of cosines on the same sphere
        let a = Location::new(24.94, 60.17);
        let b = Location::new(26.63, 67.37);
        let (p1, p2) = (a.y.to_radians(), b.y.to_radians());
        let dl = (b.x - a.x).to_radians();
        let oracle = 6371.0 * (p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos()).acos();
        let d = distance(a, b, DistanceMetric::GreatCircle { radius_km: 6371.0 }).unwrap();
        assert!((d - oracle).abs() < 1e-6);
        assert!((d - 805.0).abs() < 2.0, "{d}");
    }

    #[test]
    fn great_circle_rejects_bad_coordinates() {
        let a = Location::new(10.0, 95.0);
        let b = Location::new(0.0, 0.0);
        assert!(distance(a, b, DistanceMetric::great_circle()).is_err());
        let c = Location::new(181.0, 0.0);
        assert!(distance(c, b, DistanceMetric::great_circle()).is_err());
    }

    #[test]
    fn single_location_matrix() {
        let p = MaternParams::new(1.0, 2.0, 1.0, 0.5);
        let c = build_cov(&[Location::new(0.0, 0.0)], &p, DistanceMetric::Euclidean, true).unwrap();
        assert_eq!(c.entries[(0, 0)], 2.5);
        let c = build_cov(&[Location::new(0.0, 0.0)], &p, DistanceMetric::Euclidean, false).unwrap();
        assert_eq!(c.entries[(0, 0)], 2.0);
    }

    #[test]
    fn two_points_at_effective_range() {
        let p = MaternParams::new(0.7, 3.0, 0.5, 0.0);
        let locs = [Location::new(0.0, 0.0), Location::new(0.7, 0.0)];
        let c = build_cov(&locs, &p, DistanceMetric::Euclidean, false).unwrap();
        assert!((c.entries[(0, 1)] - 3.0 * (-2.0f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn duplicates_rejected() {
        let locs = [Location::new(0.0, 0.0), Location::new(1.0, 0.0), Location::new(0.0, 0.0)];
        let err = build_cov(&locs, &unit(1.0), DistanceMetric::Euclidean, false).unwrap_err();
        assert!(err.to_string().contains("0 and 2"));
    }

    #[test]
    fn matrix_symmetric_and_psd() {
        let locs = grid_locs(40);
        let p = MaternParams::new(0.4, 1.3, 1.2, 0.0);
        let c = build_cov(&locs, &p, DistanceMetric::Euclidean, false).unwrap();
        for i in 0..40 {
            assert_eq!(c.entries[(i, i)], 1.3);
            for j in 0..40 {
                assert_eq!(c.entries[(i, j)], c.entries[(j, i)]);
            }
        }
        let e = SymmetricEigen::new(c.entries.as_ref()).unwrap();
        assert!(e.values[0] >= -1e-8 * 1.3);
    }

    #[test]
    fn nugget_makes_it_positive_definite() {
        let locs = grid_locs(60);
        let p = MaternParams::new(2.0, 1.0, 2.5, 1e-3);
        let c = build_cov(&locs, &p, DistanceMetric::Euclidean, true).unwrap();
        let chol = Cholesky::new(c.entries.as_ref()).unwrap();
        assert_eq!(chol.jitter(), 0.0);
    }

    #[test]
    fn correlation_scaling_identity() {
        let locs = grid_locs(15);
        let p = MaternParams::new(0.5, 4.0, 0.9, 0.0);
        let c = build_cov(&locs, &p, DistanceMetric::Euclidean, false).unwrap();
        let r = build_corr(&locs, 0.5, 0.9, DistanceMetric::Euclidean).unwrap();
        for i in 0..15 {
            assert_eq!(r.entries[(i, i)], 1.0);
            for j in 0..15 {
                assert!((r.entries[(i, j)] - c.entries[(i, j)] / 4.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn vanishing_range_gives_identity() {
        let locs = grid_locs(20);
        let d = pairwise_distances(&locs, DistanceMetric::Euclidean).unwrap();
        let mut dmin = f64::INFINITY;
        for i in 0..20 {
            for j in 0..i {
                dmin = dmin.min(d[(i, j)]);
            }
        }
        let r = build_corr(&locs, 1e-6 * dmin, 1.0, DistanceMetric::Euclidean).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((r.entries[(i, j)] - want).abs() < 1e-10);
            }
        }
    }
}
