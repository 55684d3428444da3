mod common;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dfi::attributes::PredictorKind;
use dfi::dataio::{read_dataset, write_dataset, PredictorColumn, Schema};
use dfi::{DistanceMetric, Error};

const FOREST_ROWS: usize = 3065;

fn forest_schema(response: &str) -> Schema {
    let yes_no = PredictorKind::Unordered {
        levels: vec!["no".into(), "yes".into()],
    };
    let mut s = Schema::new("lon", "lat", response, DistanceMetric::great_circle());
    s.predictors = vec![
        PredictorColumn {
            column: "site_type".into(),
            kind: PredictorKind::Ordered {
                levels: ["barren", "poor", "medium", "fertile", "rich"].map(String::from).to_vec(),
            },
        },
        PredictorColumn {
            column: "slash_burn".into(),
            kind: yes_no.clone(),
        },
        PredictorColumn {
            column: "grazed".into(),
            kind: yes_no,
        },
        PredictorColumn {
            column: "pop_density".into(),
            kind: PredictorKind::Continuous,
        },
    ];
    s
}

/// Inventory-shaped file: plot coordinates over Finland, four basal-area
/// columns and the recorded site attributes.
fn write_forest_file(path: &Path, rows: usize) {
    let mut r = ChaCha8Rng::seed_from_u64(3065);
    let sites = ["barren", "poor", "medium", "fertile", "rich"];
    let mut out = String::from("lat,lon,ba_pine,ba_spruce,ba_birch,ba_other,site_type,slash_burn,grazed,pop_density\n");
    for _ in 0..rows {
        let lat = 60.0 + 10.0 * r.random::<f64>();
        let lon = 21.0 + 10.0 * r.random::<f64>();
        let ba: Vec<f64> = (0..4).map(|_| 30.0 * r.random::<f64>()).collect();
        writeln!(
            out,
            "{lat:.6},{lon:.6},{:.3},{:.3},{:.3},{:.3},{},{},{},{:.2}",
            ba[0],
            ba[1],
            ba[2],
            ba[3],
            sites[r.random_range(0..5)],
            if r.random::<f64>() < 0.1 { "yes" } else { "no" },
            if r.random::<f64>() < 0.05 { "yes" } else { "no" },
            200.0 * r.random::<f64>(),
        )
        .unwrap();
    }
    std::fs::write(path, out).unwrap();
}

#[test]
fn inventory_shaped_file_parses() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.csv");
    write_forest_file(&path, FOREST_ROWS);
    for response in ["ba_pine", "ba_spruce", "ba_birch", "ba_other"] {
        let ds = read_dataset(&path, &forest_schema(response)).unwrap();
        assert_eq!(ds.n(), FOREST_ROWS);
        assert_eq!(ds.predictors.len(), 4);
        assert!(ds.response.iter().all(|v| (0.0..=30.0).contains(v)));
        let site = &ds.predictors[0];
        assert!(site.values.iter().all(|v| v.fract() == 0.0 && (0.0..5.0).contains(v)));
        assert!(ds.predictors[1].values.iter().all(|v| *v == 0.0 || *v == 1.0));
        assert!(ds.locations.iter().all(|l| (21.0..31.0).contains(&l.x) && (60.0..70.0).contains(&l.y)));
    }
}

#[test]
fn write_then_read_is_field_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_forest_file(&a, 200);
    let schema = forest_schema("ba_birch");
    let first = read_dataset(&a, &schema).unwrap();
    write_dataset(&first, &b).unwrap();
    let second = read_dataset(&b, &schema).unwrap();
    assert_eq!(first.locations, second.locations);
    assert_eq!(first.response, second.response);
    assert_eq!(first.predictors, second.predictors);
    assert_eq!(first.schema, second.schema);
}

#[test]
fn synthetic_planar_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    common::write_synthetic_csv(&a, 150, 10.0, 4);
    let mut schema = Schema::new("x", "y", "value", DistanceMetric::Euclidean);
    schema.predictors = vec![PredictorColumn {
        column: "elev".into(),
        kind: PredictorKind::Continuous,
    }];
    let first = read_dataset(&a, &schema).unwrap();
    write_dataset(&first, &b).unwrap();
    let second = read_dataset(&b, &schema).unwrap();
    assert_eq!(first.locations, second.locations);
    assert_eq!(first.response, second.response);
    assert_eq!(first.predictors, second.predictors);
}

#[test]
fn latitude_out_of_range_points_at_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "lat,lon,ba_pine\n61.0,25.0,3.0\n95.0,25.0,4.0\n").unwrap();
    let mut schema = Schema::new("lon", "lat", "ba_pine", DistanceMetric::great_circle());
    schema.delimiter = ',';
    match read_dataset(&path, &schema) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn undeclared_level_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lvl.csv");
    std::fs::write(&path, "lat,lon,ba_pine,grazed\n61.0,25.0,3.0,no\n62.0,25.0,4.0,maybe\n").unwrap();
    let mut schema = Schema::new("lon", "lat", "ba_pine", DistanceMetric::great_circle());
    schema.predictors = vec![PredictorColumn {
        column: "grazed".into(),
        kind: PredictorKind::Unordered {
            levels: vec!["no".into(), "yes".into()],
        },
    }];
    match read_dataset(&path, &schema) {
        Err(Error::Parse { line, column, message, .. }) => {
            assert_eq!((line, column), (3, 4));
            assert!(message.contains("maybe"));
        }
        other => panic!("expected a parse error, got {other:?}"),
    }
}
