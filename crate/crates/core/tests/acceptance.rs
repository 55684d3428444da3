//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints one line; the process fails if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use dfi::covariance::{build_cov, matern_cov};
use dfi::credibility::{pw_map, Label};
use dfi::estimation::{FitOptions, FixedParams};
use dfi::pipeline::{run, PipelineConfig, Until};
use dfi::sampling::{conditional_moments, conditional_sample, simulate_gp, SampleEnsemble};
use dfi::scalespace::{decompose, NormKind, ScaleSet, SmootherSpec};
use dfi::simstudy::{evaluate_setting, simulate_composition, SweepOptions, DEFAULT_RHO_GRID};
use dfi::validation::{block_split, crps_gaussian, format_value_sd};
use dfi::{DistanceMetric, MaternParams};

const E: DistanceMetric = DistanceMetric::Euclidean;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn matern() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for sigma2 in [0.5, 1.0, 3.0] {
        for rho in [0.1, 1.0, 26.0] {
            let p = MaternParams::new(rho, sigma2, 0.5, 0.0);
            for k in 0..=400 {
                let t = 10f64.powf(-3.0 + 4.0 * k as f64 / 400.0);
                let d = t * rho;
                let got = matern_cov(d, &p).unwrap();
                worst = worst.max((got - sigma2 * (-2.0 * t).exp()).abs());
            }
        }
    }
    let at_range: Vec<f64> = [0.5, 1.0, 1.5, 2.5]
        .iter()
        .map(|&nu| matern_cov(0.7, &MaternParams::new(0.7, 1.0, nu, 0.0)).unwrap())
        .collect();
    let in_band = at_range.iter().all(|c| (0.13..=0.14).contains(c));
    let t = start.elapsed();
    outcome(
        worst < 1e-10 && in_band && within(t, 1.0),
        format!("max |C - s2 exp(-2d/rho)| = {worst:.1e}; corr at d = rho {at_range:.4?}; {:.2} s", t.as_secs_f64()),
    )
}

fn conditional_sampling() -> Outcome {
    let start = Instant::now();
    let n = 50;
    let locs = common::uniform_locations(n, 1.0, 50);
    let p = MaternParams::new(0.3, 1.0, 1.5, 0.25);
    let sigma = build_cov(&locs, &p, E, false).unwrap();
    let y = simulate_gp(&locs, &p, E, 51).unwrap();
    let (mean, cov) = conditional_moments(&y, &sigma, p.nugget).unwrap();
    let b = 1000;
    let ens = conditional_sample(&y, &sigma, p.nugget, b, 52).unwrap();
    let worst = (0..n)
        .map(|i| {
            let m = (0..b).map(|r| ens.draws[(r, i)]).sum::<f64>() / b as f64;
            (m - mean[i]).abs() / (cov[(i, i)] / b as f64).sqrt()
        })
        .fold(0.0, f64::max);
    let exact = conditional_sample(&y, &sigma, 0.0, 20, 53).unwrap();
    let reproduces = (0..20).all(|r| (0..n).all(|i| exact.draws[(r, i)] == y[i]));
    let t = start.elapsed();
    outcome(
        worst < 4.0 && reproduces && within(t, 10.0),
        format!("max |mean error| / MC se = {worst:.2}; nugget 0 reproduces y: {reproduces}; {:.2} s", t.as_secs_f64()),
    )
}

fn decomposition_identity() -> Outcome {
    let start = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for inst in 0..100u64 {
        let n = r.random_range(10..=200);
        let bands = r.random_range(2..=4usize);
        let locs = common::uniform_locations(n, 1.0, 300 + inst);
        let spec = SmootherSpec::new(&locs, r.random_range(0.05..1.0), r.random_range(0.3..2.5), E).unwrap();
        let mut interior: Vec<f64> = (0..bands - 1).map(|_| 10f64.powf(r.random_range(-3.0..3.0))).collect();
        interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
        interior.dedup();
        let scales = ScaleSet::from_interior(&interior, NormKind::Maximum).unwrap();
        let b = 8;
        let z = common::normals(b * n, 400 + inst);
        let draws = Mat::from_fn(b, n, |i, j| 3.0 * z[i * n + j]);
        let d = decompose(&spec, &scales, &SampleEnsemble::from_draws(draws.clone(), 0).unwrap()).unwrap();
        for row in 0..b {
            for i in 0..n {
                let total: f64 = (0..scales.details()).map(|l| d.band_draws(l).unwrap()[(row, i)]).sum();
                worst = worst.max((draws[(row, i)] - total).abs());
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-8 && within(t, 30.0),
        format!("max |x - sum z| = {worst:.1e} over 100 instances; {:.2} s", t.as_secs_f64()),
    )
}

fn scale_derivative() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let h: f64 = 1e-4;
    for inst in 0..50u64 {
        let n = r.random_range(5..=120);
        let locs = common::uniform_locations(n, 1.0, 500 + inst);
        let spec = SmootherSpec::new(&locs, r.random_range(0.05..1.0), r.random_range(0.3..2.5), E).unwrap();
        let x = common::normals(n, 600 + inst);
        let lambda = 10f64.powf(r.random_range(-2.0..2.0));
        let analytic = spec.scale_derivative(lambda, &x).unwrap();
        let up = spec.smooth(lambda * h.exp(), &x).unwrap();
        let down = spec.smooth(lambda * (-h).exp(), &x).unwrap();
        let num: f64 = (0..n).map(|i| (analytic[i] - (up[i] - down[i]) / (2.0 * h)).powi(2)).sum::<f64>().sqrt();
        let den: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    outcome(worst < 1e-6, format!("max relative error vs central differences = {worst:.1e}"))
}

/// Smoother setting in which the derivative curve of the two-process sum
/// shows a single separating minimum.
const STABLE: (f64, f64) = (0.2, 0.25);

fn appendix_sweep() -> Outcome {
    let start = Instant::now();
    let seeds: Vec<u64> = (1..=10).collect();
    let fit_opts = SweepOptions::default();
    let curve_opts = SweepOptions {
        fit_details: false,
        ..SweepOptions::default()
    };
    let (r1, r2) = (DEFAULT_RHO_GRID[DEFAULT_RHO_GRID.len() - 2], DEFAULT_RHO_GRID[DEFAULT_RHO_GRID.len() - 1]);
    let rows: Vec<(usize, Option<(f64, f64)>, Option<f64>)> = seeds
        .par_iter()
        .map(|&seed| {
            let comp = simulate_composition(1024, seed).unwrap();
            let rec = evaluate_setting(&comp, STABLE.0, STABLE.1, &fit_opts);
            let ranges = rec.z1.zip(rec.z2).map(|(a, b)| (a.rho, b.rho));
            let a = evaluate_setting(&comp, r1, STABLE.1, &curve_opts);
            let b = evaluate_setting(&comp, r2, STABLE.1, &curve_opts);
            let change = match (a.interior.as_slice(), b.interior.as_slice()) {
                ([la], [lb]) => Some((lb - la).abs() / la),
                _ => None,
            };
            (rec.interior.len(), ranges, change)
        })
        .collect();
    let single = rows.iter().filter(|r| r.0 == 1).count();
    let bracketed = rows
        .iter()
        .filter(|r| r.0 == 1 && r.1.is_some_and(|(a, b)| (0.02..=0.10).contains(&a) && (0.1..=0.4).contains(&b)))
        .count();
    let stable = rows.iter().filter(|r| r.2.is_some_and(|c| c < 0.1)).count();
    let t = start.elapsed();
    let fmt_range = |r: &Option<(f64, f64)>| r.map_or("-".to_string(), |(a, b)| format!("{a:.3}/{b:.3}"));
    let changes: Vec<String> = rows.iter().map(|r| r.2.map_or("-".into(), |c| format!("{:.0}%", 100.0 * c))).collect();
    let ranges: Vec<String> = rows.iter().map(|r| fmt_range(&r.1)).collect();
    let majority = seeds.len() / 2 + 1;
    outcome(
        single >= majority && bracketed >= majority && stable >= majority && within(t, 600.0),
        format!(
            "setting rho_s {} nu_s {}: one interior scale in {single}/10, both ranges in bracket in {bracketed}/10 \
             (z1/z2 rho {ranges:?}); lambda change rho_s {r1} -> {r2} at nu_s {} below 10% in {stable}/10 ({changes:?}); {:.0} s",
            STABLE.0,
            STABLE.1,
            STABLE.1,
            t.as_secs_f64()
        ),
    )
}

fn wald_calibration() -> Outcome {
    let truth = MaternParams::new(0.2, 1.0, 1.0, 0.1);
    let results: Vec<Option<bool>> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let locs = common::uniform_locations(400, 1.0, 700 + seed);
            let field = simulate_gp(&locs, &MaternParams { nugget: 0.0, ..truth }, E, 800 + seed).unwrap();
            let noise = common::normals(400, 900 + seed);
            let z: Vec<f64> = field.iter().zip(&noise).map(|(f, e)| f + truth.nugget.sqrt() * e).collect();
            let fit = dfi::attributes::fit_detail(&z, None, &locs, E, None, &FixedParams::none(), &FitOptions::default()).ok()?;
            let iv = fit.wald.iter().find(|iv| iv.name == "rho")?;
            Some(iv.lower <= truth.rho && truth.rho <= iv.upper)
        })
        .collect();
    let covered = results.iter().filter(|r| **r == Some(true)).count();
    let missing = results.iter().filter(|r| r.is_none()).count();
    outcome(covered >= 15, format!("log-range covered in {covered}/20 seeds ({missing} without an interval)"))
}

fn crps() -> Outcome {
    let triples = [
        (0.0, 1.0, 1.0),
        (0.0, 1.0, 0.0),
        (1.0, 0.5, -0.3),
        (-2.0, 1.5, 0.5),
        (0.3, 0.2, 0.35),
        (5.0, 1.2, 2.0),
        (-1.0, 0.8, -1.0),
        (0.0, 0.3, 1.5),
        (2.5, 1.0, 2.0),
        (-0.5, 1.4, -3.0),
    ];
    let samples = 10_000_000usize;
    let errs: Vec<f64> = triples
        .par_iter()
        .enumerate()
        .map(|(k, &(mu, sd, y))| {
            let mut r = ChaCha8Rng::seed_from_u64(1000 + k as u64);
            // E|X - y| - E|X - X'| / 2 with independent pairs
            let mut acc = 0.0;
            for _ in 0..samples {
                let a: f64 = mu + sd * r.sample::<f64, _>(StandardNormal);
                let b: f64 = mu + sd * r.sample::<f64, _>(StandardNormal);
                acc += 0.5 * ((a - y).abs() + (b - y).abs()) - 0.5 * (a - b).abs();
            }
            (crps_gaussian(mu, sd, y).unwrap() - acc / samples as f64).abs()
        })
        .collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let limit = [(0.0, 1.0), (2.0, -1.5), (-0.7, -0.7)]
        .iter()
        .all(|&(mu, y)| crps_gaussian(mu, 0.0, y).unwrap() == (mu - y).abs() && (crps_gaussian(mu, 1e-9, y).unwrap() - (mu - y).abs()).abs() < 1e-8);
    outcome(worst < 1e-3 && limit, format!("max |closed form - MC| = {worst:.1e}; sd -> 0 gives |mu - y|: {limit}"))
}

fn pw_maps() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut monotone = true;
    let mut equivariant = true;
    for inst in 0..50u64 {
        let (b, n) = (r.random_range(100..400), 15);
        let shift = common::normals(n, 1100 + inst);
        let z = common::normals(b * n, 1200 + inst);
        let draws = Mat::from_fn(b, n, |i, j| 2.0 * shift[j] + z[i * n + j]);
        let neg = Mat::from_fn(b, n, |i, j| -draws[(i, j)]);
        let alphas = [0.6, 0.8, 0.9, 0.95, 0.99];
        let maps: Vec<_> = alphas.iter().map(|a| pw_map(&draws, *a).unwrap()).collect();
        for w in maps.windows(2) {
            let lost = (0..n).any(|i| w[1].labels[i] != Label::Null && w[0].labels[i] != w[1].labels[i]);
            monotone &= w[0].count(Label::Null) <= w[1].count(Label::Null) && !lost;
        }
        for a in alphas {
            let (p, q) = (pw_map(&draws, a).unwrap(), pw_map(&neg, a).unwrap());
            equivariant &= (0..n).all(|i| {
                q.labels[i]
                    == match p.labels[i] {
                        Label::High => Label::Low,
                        Label::Low => Label::High,
                        Label::Null => Label::Null,
                    }
            });
        }
    }
    let example = Mat::from_fn(1000, 1, |i, _| if i < 960 { -1.0 } else { 1.0 });
    let label = pw_map(&example, 0.95).unwrap().labels[0];
    outcome(
        monotone && equivariant && label == Label::Low,
        format!("monotone in alpha: {monotone}; sign-equivariant: {equivariant}; 960/1000 negative at 0.95 -> {label:?}"),
    )
}

fn cv_harness() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    common::write_synthetic_csv(&data, 160, 10.0, 77);
    let cfg = PipelineConfig::from_toml(&common::pipeline_toml(&data, 4.0, 2.5, 100, 5), None).unwrap();
    let a = run(&cfg, Until::Attributes, true, &dir.path().join("a")).unwrap();
    let b = run(&cfg, Until::Attributes, true, &dir.path().join("b")).unwrap();
    let ds = &a.dataset;
    let split = block_split(&ds.locations, ds.metric(), 2.5, 3, cfg.seed).unwrap();
    let atomic = (0..ds.n()).all(|i| (0..ds.n()).all(|j| split.blocks[i] != split.blocks[j] || split.assignments[i] == split.assignments[j]));
    let (ra, rb) = (a.cv.unwrap(), b.cv.unwrap());
    let deterministic = ra == rb;
    let formatted: Vec<&str> = ra.scale_stability.iter().map(|s| s.formatted.as_str()).collect();
    let well_formed = !formatted.is_empty()
        && ra.scale_stability.iter().all(|s| s.formatted == format_value_sd(s.mean, s.sd) && s.formatted.ends_with(')'));
    outcome(
        atomic && deterministic && well_formed,
        format!("blocks atomic: {atomic}; deterministic: {deterministic}; interior lambda per fold {formatted:?}"),
    )
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    common::write_synthetic_csv(&data, 150, 10.0, 88);
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("out");
    let text = common::pipeline_toml(&data, 4.0, 2.5, 100, 9).replacen("seed = 9\n", &format!("seed = 9\noutput = \"{}\"\n", out.display()), 1);
    std::fs::write(&cfg, text).unwrap();
    let pipeline = || {
        Command::new(env!("CARGO_BIN_EXE_dfi"))
            .args(["pipeline", "--config", cfg.to_str().unwrap()])
            .output()
            .unwrap()
    };
    let first = pipeline();
    if !first.status.success() {
        return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&first.stderr)));
    }
    let kept = dir.path().join("first");
    std::fs::rename(&out, &kept).unwrap();
    let second = pipeline();
    if !second.status.success() {
        return outcome(false, format!("pipeline failed: {}", String::from_utf8_lossy(&second.stderr)));
    }
    let (a, b) = (files(&kept), files(&out));
    let names = |v: &[PathBuf]| v.iter().map(|p| p.file_name().unwrap().to_owned()).collect::<Vec<_>>();
    let same_names = names(&a) == names(&b);
    let differing: Vec<String> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| std::fs::read(x).unwrap() != std::fs::read(y).unwrap())
        .map(|(x, _)| x.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    outcome(
        same_names && differing.is_empty() && a.len() >= 6,
        format!("{} artifacts compared, differing: {differing:?}", a.len()),
    )
}

fn main() -> ExitCode {
    faer::set_global_parallelism(faer::Par::Seq);
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("Matern correctness", matern),
        ("conditional sampling", conditional_sampling),
        ("decomposition identity", decomposition_identity),
        ("scale derivative", scale_derivative),
        ("two-process reproduction", appendix_sweep),
        ("Wald calibration", wald_calibration),
        ("CRPS", crps),
        ("PW maps", pw_maps),
        ("CV harness", cv_harness),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|o| o != k + 1) {
            continue;
        }
        let o = f();
        println!("criterion {:>2} {} {name}: {}", k + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
