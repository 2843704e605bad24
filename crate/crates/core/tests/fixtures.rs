use std::path::{Path, PathBuf};

use bart_borrow::data::{
    load_dataset, read_dataset, write_dataset_to, CovariateKind, DatasetSchema,
};
use bart_borrow::synth::{synthesize_external, SynthMode};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn acupuncture_fixture_complete_cases() {
    let d = load_dataset(
        fixture("acupuncture_synthetic.csv"),
        &DatasetSchema::acupuncture(),
    )
    .unwrap();
    assert_eq!(d.n_rows(), 18);
    assert_eq!(d.names, ["pk1", "age", "sex", "migraine", "chronicity"]);
    assert_eq!(
        d.kinds,
        [
            CovariateKind::Continuous,
            CovariateKind::Continuous,
            CovariateKind::Binary,
            CovariateKind::Binary,
            CovariateKind::Continuous
        ]
    );
    assert!(d.source.iter().all(|&s| s == 0));
    // First row: pk1 = 21.51, pk5 = 6.49.
    assert!((d.outcome[0] - (21.51 - 6.49)).abs() < 1e-12);
    assert_eq!(d.control_rows(false).len(), 10);
    assert_eq!(d.treated_rows().len(), 8);
}

#[test]
fn missing_values_fail_without_complete_cases() {
    let schema = DatasetSchema {
        complete_cases: false,
        ..DatasetSchema::acupuncture()
    };
    let err = load_dataset(fixture("acupuncture_synthetic.csv"), &schema)
        .unwrap_err()
        .to_string();
    assert!(err.contains("pk5"), "{err}");
}

#[test]
fn json_schema_file_equals_builtin() {
    let s = DatasetSchema::from_json_file(fixture("acupuncture_schema.json")).unwrap();
    assert_eq!(s, DatasetSchema::acupuncture());
}

#[test]
fn synthetic_external_rows_round_trip_in_native_layout() {
    let trial = load_dataset(
        fixture("acupuncture_synthetic.csv"),
        &DatasetSchema::acupuncture(),
    )
    .unwrap();
    let ext = synthesize_external(&trial, 25, SynthMode::CovariateShift, "pk1", 8).unwrap();
    let both = trial.with_external(&ext).unwrap();
    assert_eq!(both.n_external_sources(), 1);
    let mut buf = Vec::new();
    write_dataset_to(&both, &mut buf).unwrap();
    let back = read_dataset(buf.as_slice(), &DatasetSchema::default()).unwrap();
    assert_eq!(back, both);
}
