#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dfi::sampling::simulate_gp;
use dfi::{DistanceMetric, Location, MaternParams};

pub fn uniform_locations(n: usize, side: f64, seed: u64) -> Vec<Location> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Location::new(side * r.random::<f64>(), side * r.random::<f64>())).collect()
}

pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| r.sample(rand_distr::StandardNormal)).collect()
}

/// Smooth field plus a northward trend and white noise on `[0, side]^2`,
/// with one continuous and one ordered predictor.
pub fn write_synthetic_csv(path: &Path, n: usize, side: f64, seed: u64) {
    let locs = uniform_locations(n, side, seed);
    let field = simulate_gp(&locs, &MaternParams::new(0.3 * side, 1.0, 1.0, 0.0), DistanceMetric::Euclidean, seed + 1)
        .expect("field");
    let noise = normals(n, seed + 2);
    let mut out = String::from("x,y,value,elev,soil\n");
    let soils = ["poor", "medium", "rich"];
    for i in 0..n {
        let l = locs[i];
        let v = field[i] + 0.3 * noise[i] + 0.5 * l.y / side;
        let elev = (l.x / side).sin() + 0.1 * noise[(i + 1) % n];
        let soil = soils[((field[i] + 2.0).max(0.0) as usize).min(2)];
        writeln!(out, "{:.6},{:.6},{:.6},{:.6},{soil}", l.x, l.y, v, elev).unwrap();
    }
    std::fs::write(path, out).expect("write csv");
}

pub fn pipeline_toml(data: &Path, rho: f64, block: f64, draws: usize, seed: u64) -> String {
    format!(
        r#"seed = {seed}

[data]
path = "{}"
x = "x"
y = "y"
response = "value"
predictors = [
  {{ column = "elev", kind = "continuous" }},
  {{ column = "soil", kind = "ordered", levels = ["poor", "medium", "rich"] }},
]

[smoother]
rho = {rho}
nu = 0.5

[sampling]
draws = {draws}

[cv]
k = 3
block_size = {block}
draws = {draws}
"#,
        data.display()
    )
}
