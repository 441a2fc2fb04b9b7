use std::path::{Path, PathBuf};

use eve_core::config::{PipelineConfig, PoolSet};
use eve_core::corpus::{load_document, load_manifest};
use eve_core::evaluate::sweep;
use eve_core::gateway::{MockBackend, Session};
use eve_core::kind::ComponentKind;
use eve_core::pipeline::analyze;

fn samples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/samples")
}

fn mock() -> MockBackend {
    MockBackend::from_file(samples().join("mock_script.json")).unwrap()
}

#[test]
fn reports_do_not_depend_on_concurrency() {
    let doc = load_document(samples().join("brake_by_wire.txt")).unwrap();
    let config = PipelineConfig::default();
    let pools = PoolSet::builtin();
    let settings = config.request_settings();
    let model = mock();
    let run = |limit| {
        let mut r = analyze(&doc, &config, &pools, Session::new(&model, &settings).with_concurrency(limit)).unwrap();
        r.run_metadata.timestamps = None;
        r.to_json()
    };
    let serial = run(1);
    assert_eq!(serial, run(8));
    assert_eq!(serial, run(3));
}

#[test]
fn validation_trades_recall_for_precision_on_the_samples() {
    let dataset = load_manifest(samples().join("manifest.json")).unwrap();
    let config = PipelineConfig::default();
    let pools = PoolSet::builtin();
    let settings = config.request_settings();
    let model = mock();
    let rows = sweep(&dataset, &[1, 4], &[0, 4], &config, &pools, Session::new(&model, &settings)).unwrap();
    let cell = |label: &str| rows.iter().find(|r| r.stage_label == label).unwrap();
    let (q1v0, q4v0, q4v4) = (cell("q1v0"), cell("q4v0"), cell("q4v4"));
    assert!(q4v0.macro_metrics.recall > q1v0.macro_metrics.recall);
    assert!(q4v4.macro_metrics.precision > q4v0.macro_metrics.precision);
    assert_eq!(q4v4.per_kind[&ComponentKind::Sensor].recall, 1.0);
    assert!(rows.iter().all(|r| r.failures.is_empty() && r.n_docs == 3));
}
