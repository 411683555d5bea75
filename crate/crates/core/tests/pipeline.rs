mod common;

use std::fs;
use std::path::Path;

use betr_core::pipeline::{
    artifacts, load_manifests, run_pipeline, verify_chain, PipelineConfig, Stage,
};
use betr_core::Error;
use common::{setup_run, SynthSpec};

fn resolve(config: &Path, flags: &[(&str, &str)]) -> PipelineConfig {
    let flags: Vec<(String, String)> = flags
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    PipelineConfig::resolve(Some(config), Vec::new(), &flags).unwrap()
}

#[test]
fn prefix_run_stops_after_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup_run(dir.path(), &SynthSpec::default(), "");
    let cfg = resolve(&config, &[("run.stages", r#"["ingest", "sample"]"#)]);
    let outcome = run_pipeline(&cfg).unwrap();
    assert_eq!(outcome.stages, [Stage::Ingest, Stage::Sample]);
    let out = dir.path().join("out");
    assert!(out.join(artifacts::SAMPLE).is_file());
    assert!(out.join("manifests/sample.json").is_file());
    assert!(!out.join(artifacts::SCORES).exists());
}

#[test]
fn full_run_is_reproducible_and_chained() {
    let spec = SynthSpec::default();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ca = setup_run(a.path(), &spec, "");
    let cb = setup_run(b.path(), &spec, "");
    let oa = run_pipeline(&resolve(&ca, &[])).unwrap();
    run_pipeline(&resolve(&cb, &[])).unwrap();
    assert_eq!(oa.stages, Stage::ALL);

    let out_a = a.path().join("out");
    let out_b = b.path().join("out");
    for name in [
        artifacts::FILTERED,
        artifacts::DECONTAMINATED,
        artifacts::MODEL,
        artifacts::SCORES,
        artifacts::CALIBRATION,
    ] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name}"
        );
    }
    for stage in Stage::ALL {
        let name = format!("manifests/{}.json", stage.name());
        assert_eq!(
            fs::read(out_a.join(&name)).unwrap(),
            fs::read(out_b.join(&name)).unwrap(),
            "{name}"
        );
    }

    let manifests = load_manifests(&out_a.join("manifests")).unwrap();
    assert_eq!(manifests.len(), Stage::ALL.len());
    verify_chain(&manifests).unwrap();
    for m in &manifests {
        for d in &m.outputs {
            assert!(!d.path.starts_with('/'), "{}", d.path);
        }
    }

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(out_a.join(artifacts::DECONTAM_REPORT)).unwrap()).unwrap();
    assert!(
        report["documents_modified"].as_u64().unwrap() >= 1,
        "{report}"
    );
}

#[test]
fn stage_failure_names_the_stage_and_keeps_earlier_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup_run(dir.path(), &SynthSpec::default(), "");
    fs::write(dir.path().join("docs.emb"), b"not an embedding file").unwrap();
    let err = run_pipeline(&resolve(&config, &[])).unwrap_err();
    match &err {
        Error::Stage { stage, inputs, .. } => {
            assert_eq!(stage, "rank");
            assert!(
                inputs.iter().any(|i| i.starts_with("docs.emb@sha256:")),
                "{inputs:?}"
            );
        }
        other => panic!("unexpected error {other}"),
    }
    let manifests = dir.path().join("out/manifests");
    for stage in ["ingest", "sample", "build-targets"] {
        assert!(manifests.join(format!("{stage}.json")).is_file());
    }
    assert!(!manifests.join("rank.json").exists());
}

#[test]
fn missing_dependency_is_rejected_up_front() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup_run(dir.path(), &SynthSpec::default(), "");
    let cfg = resolve(&config, &[("run.stages", r#"["rank"]"#)]);
    let err = run_pipeline(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
}

#[test]
fn targeting_policy_shows_up_only_in_target_fields() {
    let dir = tempfile::tempdir().unwrap();
    let config = setup_run(dir.path(), &SynthSpec::default(), "");
    let ea = resolve(&config, &[]);
    let eb = resolve(
        &config,
        &[("targets.sampling", r#"{ kind = "all_examples" }"#)],
    );
    let (a, b) = (ea.to_json(), eb.to_json());
    let differing: Vec<&str> = a
        .as_object()
        .unwrap()
        .keys()
        .filter(|k| a[k.as_str()] != b[k.as_str()])
        .map(String::as_str)
        .collect();
    assert_eq!(differing, ["targets"]);
}
