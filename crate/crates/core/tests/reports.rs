//! Every experiment's report validates against the checked-in schema, and the
//! markdown table regenerates byte-identically from report.json.

use std::fs;
use std::path::Path;

use vidtrace::corpus::{Family, GeneratorProfile, TracePeak};
use vidtrace::harness::{Experiment, ExperimentConfig, Harness};
use vidtrace::metrics::MetricsReport;

fn profile(id: &str, family: Family, u: i64, v: i64) -> GeneratorProfile {
    GeneratorProfile {
        id: id.into(),
        peaks: vec![TracePeak { u, v, amplitude: 0.08 }],
        grid_period: None,
        grid_strength: 0.0,
        family,
    }
}

fn small_harness(dir: &Path) -> Harness {
    let mut config = ExperimentConfig::default();
    config.corpus.profiles = vec![
        profile("va", Family::VideoLike, 24, 0),
        profile("vb", Family::VideoLike, 0, 24),
        profile("ia", Family::ImageLike, 0, 96),
    ];
    config.corpus.frames_per_source = 12;
    config.train.epochs = 4;
    config.fewshot_frames = 4;
    config.frames_per_clip = 2;
    config.n_values = vec![1, 2, 4];
    Harness::prepare(config, dir).unwrap()
}

#[test]
fn reports_match_schema_and_tables_regenerate() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let harness = small_harness(dir.path());
    for e in Experiment::ALL {
        let out = dir.path().join(e.name());
        harness.run_to(e, &out).unwrap();

        let bytes = fs::read(out.join("report.json")).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        let errors: Vec<String> = validator.iter_errors(&json).map(|err| err.to_string()).collect();
        assert!(errors.is_empty(), "{e}: {errors:?}");

        let report: MetricsReport = serde_json::from_slice(&bytes).unwrap();
        let table = fs::read_to_string(out.join("tables").join(format!("{e}.md"))).unwrap();
        assert_eq!(report.to_markdown(), table, "{e}");

        let csv = out.join("curves").join(format!("{e}.csv"));
        if !report.curves.is_empty() {
            let text = fs::read_to_string(csv).unwrap();
            assert!(text.starts_with("x,series,value\n"), "{e}");
        }
    }
}

#[test]
fn schema_rejects_malformed_reports() {
    let schema: serde_json::Value =
        serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let good = serde_json::to_value(MetricsReport::new("x")).unwrap();
    assert!(validator.is_valid(&good));

    let mut extra = good.clone();
    extra["surprise"] = serde_json::json!(1);
    assert!(!validator.is_valid(&extra));

    let mut bad_auc = good.clone();
    bad_auc["per_source"] = serde_json::json!([{"source_id": "g", "auc": 1.5}]);
    assert!(!validator.is_valid(&bad_auc));

    let mut missing = good;
    missing.as_object_mut().unwrap().remove("values");
    assert!(!validator.is_valid(&missing));
}
