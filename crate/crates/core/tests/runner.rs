use std::path::PathBuf;

use fxhhw_core::runner::{self, read_field, write_field, ExperimentConfig};

fn bundled(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn bundled_configs_parse() {
    for name in [
        "experiment-1.toml",
        "experiment-2.toml",
        "experiment-3.toml",
        "experiment-3-constant.toml",
    ] {
        let cfg = ExperimentConfig::load(&bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(cfg.reference.is_some(), "{name}");
    }
}

#[test]
fn experiment_one_reproduces_reference() {
    let cfg = ExperimentConfig::load(&bundled("experiment-1.toml")).unwrap();
    let out = runner::run_experiment(&cfg).unwrap();
    let row = &out.report.rows[0];
    assert!(row.eps2.unwrap() < 0.01, "{row:?}");
    assert!(row.eps1.unwrap() < 0.01, "{row:?}");
}

#[test]
fn field_round_trip_is_exact() {
    let text = std::fs::read_to_string(bundled("experiment-2.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let out = runner::run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.csv");
    write_field(&out.field, &path).unwrap();
    let back = read_field(&path).unwrap();
    assert_eq!(back.grid.shape(), out.field.grid.shape());
    for (a, b) in back.values.iter().zip(&out.field.values) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let q = [100.0, 0.04, 0.024, 0.024];
    assert_eq!(back.at(q).unwrap().to_bits(), out.field.at(q).unwrap().to_bits());
}
