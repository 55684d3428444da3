//! Two-process simulation study of the smoothing-correlation parameters.
//!
//! A fine field (range 0.05, smoothness 0.8) and a coarse field (range 0.2,
//! smoothness 2.2) are summed on uniform points in the unit square. For each
//! smoother setting the derivative curve of the sum is computed, scales are
//! selected, and Matérn parameters are fitted to the first and last detail.

use std::path::Path;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attributes::fit_detail;
use crate::covariance::{DistanceMetric, Location, MaternParams};
use crate::error::{Error, Result};
use crate::estimation::{FitOptions, FixedParams};
use crate::pipeline::{fmt_f64, NU_WARNING};
use crate::rng::{self, derive_seed, domain};
use crate::sampling::simulate_gp;
use crate::scalespace::{decompose_field, default_grid, select_scales, DerivativeCurve, NormKind, SmootherSpec};

pub const FINE: MaternParams = MaternParams {
    rho: 0.05,
    sigma2: 1.0,
    nu: 0.8,
    nugget: 0.0,
};

pub const COARSE: MaternParams = MaternParams {
    rho: 0.2,
    sigma2: 1.0,
    nu: 2.2,
    nugget: 0.0,
};

pub const DEFAULT_RHO_GRID: [f64; 5] = [0.05, 0.1, 0.2, 0.4, 0.8];
pub const DEFAULT_NU_GRID: [f64; 4] = [0.5, 1.0, 2.0, 4.0];

#[derive(Clone, Debug)]
pub struct Composition {
    pub locations: Vec<Location>,
    pub fine: Vec<f64>,
    pub coarse: Vec<f64>,
    pub field: Vec<f64>,
}

/// `n` uniform points on the unit square and the sum of the two processes.
pub fn simulate_composition(n: usize, seed: u64) -> Result<Composition> {
    if n < 64 {
        return Err(Error::domain(format!("composition needs at least 64 points, got {n}")));
    }
    let mut r = rng::stream(seed, domain::LOCATIONS, 0);
    let locations: Vec<Location> = (0..n).map(|_| Location::new(r.random(), r.random())).collect();
    let e = DistanceMetric::Euclidean;
    let fine = simulate_gp(&locations, &FINE, e, derive_seed(seed, domain::COMPOSITION, 1))?;
    let coarse = simulate_gp(&locations, &COARSE, e, derive_seed(seed, domain::COMPOSITION, 2))?;
    let field = fine.iter().zip(&coarse).map(|(a, b)| a + b).collect();
    Ok(Composition {
        locations,
        fine,
        coarse,
        field,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub rho_s: f64,
    pub nu_s: f64,
    pub curve: Option<DerivativeCurve>,
    pub interior: Vec<f64>,
    /// Fits of the first and last detail, when the setting yields two or more.
    pub z1: Option<MaternParams>,
    pub z2: Option<MaternParams>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub n: usize,
    pub seed: u64,
    pub records: Vec<SweepRecord>,
}

impl SweepResult {
    pub fn get(&self, rho_s: f64, nu_s: f64) -> Option<&SweepRecord> {
        self.records.iter().find(|r| r.rho_s == rho_s && r.nu_s == nu_s)
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub grid: Vec<f64>,
    pub norm: NormKind,
    /// Fit detail parameters (the expensive part).
    pub fit_details: bool,
    pub fit: FitOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            norm: NormKind::Maximum,
            fit_details: true,
            fit: FitOptions {
                intervals: false,
                ..FitOptions::default()
            },
        }
    }
}

/// Curve, scales and detail fits for one smoother setting.
pub fn evaluate_setting(comp: &Composition, rho_s: f64, nu_s: f64, opts: &SweepOptions) -> SweepRecord {
    let mut rec = SweepRecord {
        rho_s,
        nu_s,
        curve: None,
        interior: vec![],
        z1: None,
        z2: None,
        error: None,
    };
    if let Err(e) = evaluate_into(comp, opts, &mut rec) {
        warn!("setting rho_s = {rho_s}, nu_s = {nu_s} failed: {e}");
        rec.error = Some(e.to_string());
    }
    rec
}

fn evaluate_into(comp: &Composition, opts: &SweepOptions, rec: &mut SweepRecord) -> Result<()> {
    let e = DistanceMetric::Euclidean;
    let spec = SmootherSpec::new(&comp.locations, rec.rho_s, rec.nu_s, e)?;
    let curve = spec.derivative_curve(&comp.field, &opts.grid, opts.norm)?;
    let scales = select_scales(&curve);
    rec.interior = scales.interior().to_vec();
    rec.curve = Some(curve);
    if !opts.fit_details || scales.details() < 2 {
        return Ok(());
    }
    let details = decompose_field(&spec, &scales, &comp.field)?;
    let fit = |z: &[f64]| -> Result<MaternParams> {
        let f = fit_detail(z, None, &comp.locations, e, None, &FixedParams::none(), &opts.fit)?;
        if !f.converged() {
            warn!("detail fit at rho_s = {}, nu_s = {} did not converge", rec.rho_s, rec.nu_s);
        }
        Ok(f.spatial)
    };
    let z1 = fit(&details[0])?;
    let z2 = fit(details.last().expect("two or more details"))?;
    if z2.nu > NU_WARNING {
        warn!(
            "coarsest detail smoothness {:.2} at nu_s = {} suggests the smoother is too smooth",
            z2.nu, rec.nu_s
        );
    }
    rec.z1 = Some(z1);
    rec.z2 = Some(z2);
    Ok(())
}

/// Every `(rho_s, nu_s)` combination on one simulated composition.
pub fn run_sweep(n: usize, seed: u64, rho_grid: &[f64], nu_grid: &[f64], opts: &SweepOptions) -> Result<SweepResult> {
    if rho_grid.is_empty() || nu_grid.is_empty() {
        return Err(Error::domain("sweep grids must be non-empty"));
    }
    if rho_grid.iter().chain(nu_grid).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::domain("sweep grid values must be positive"));
    }
    let comp = simulate_composition(n, seed)?;
    let settings: Vec<(f64, f64)> = nu_grid
        .iter()
        .flat_map(|&nu| rho_grid.iter().map(move |&rho| (rho, nu)))
        .collect();
    let records = settings
        .par_iter()
        .map(|&(rho, nu)| evaluate_setting(&comp, rho, nu, opts))
        .collect();
    Ok(SweepResult { n, seed, records })
}

/// Tidy CSV: one row per curve point and per estimate.
pub fn write_sweep(result: &SweepResult, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["rho_s", "nu_s", "kind", "key", "value"])?;
    for r in &result.records {
        let (rho, nu) = (fmt_f64(r.rho_s), fmt_f64(r.nu_s));
        let mut put = |kind: &str, key: &str, v: f64| w.write_record([rho.as_str(), nu.as_str(), kind, key, &fmt_f64(v)]);
        if let Some(c) = &r.curve {
            for (l, v) in c.lambdas.iter().zip(&c.values) {
                put("curve", &fmt_f64(*l), *v)?;
            }
        }
        for (i, l) in r.interior.iter().enumerate() {
            put("scale", &format!("lambda_{}", i + 2), *l)?;
        }
        for (name, p) in [("z1", r.z1), ("z2", r.z2)] {
            if let Some(p) = p {
                put(name, "rho", p.rho)?;
                put(name, "sigma2", p.sigma2)?;
                put(name, "nu", p.nu)?;
                put(name, "nugget", p.nugget)?;
            }
        }
        if r.error.is_some() {
            put("status", "failed", 1.0)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_is_seeded() {
        let a = simulate_composition(64, 5).unwrap();
        let b = simulate_composition(64, 5).unwrap();
        let c = simulate_composition(64, 6).unwrap();
        assert_eq!(a.field, b.field);
        assert_ne!(a.field, c.field);
        assert!(a.locations.iter().all(|l| (0.0..1.0).contains(&l.x) && (0.0..1.0).contains(&l.y)));
        assert!(simulate_composition(63, 5).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(run_sweep(64, 1, &[], &[1.0], &SweepOptions::default()).is_err());
        assert!(run_sweep(64, 1, &[0.1], &[-1.0], &SweepOptions::default()).is_err());
    }
}
