use std::path::{Path, PathBuf};
use std::time::Duration;

use proptest::prelude::*;

use super::*;
use crate::gateway::{CompletionRequest, Gateway, GatewayError, GatewayMode, ReplayStore};
use crate::topology::{OclVerdict, TopologyError};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        vss_catalog: Some(fixture("catalogs/vss.json")),
        can_catalog: Some(fixture("catalogs/can.json")),
        out_dir: out.to_owned(),
        ..PipelineConfig::default()
    }
}

fn offline() -> Gateway {
    Gateway::live(|_: &CompletionRequest| Err(GatewayError::EmptyResponse))
}

#[test]
fn config_defaults() {
    let c = PipelineConfig::default();
    assert_eq!(c.token_budget, 4096);
    assert_eq!(c.max_iterations, 3);
    assert!(!c.auto_correct);
    assert_eq!(c.gateway.mode, GatewayMode::Live);
    assert_eq!(c.gateway.max_tokens, 4096);
}

#[test]
fn config_paths_resolve_against_the_file() {
    let text = "vss_catalog = \"catalogs/vss.json\"\nout_dir = \"out\"\n[gateway]\nmode = \"replay\"\nstore = \"r.json\"\n";
    let c = PipelineConfig::from_toml(text, Path::new("/etc/sdv")).unwrap();
    assert_eq!(c.vss_catalog.unwrap(), Path::new("/etc/sdv/catalogs/vss.json"));
    assert_eq!(c.out_dir, Path::new("/etc/sdv/out"));
    assert_eq!(c.gateway.store.unwrap(), Path::new("/etc/sdv/r.json"));
}

#[test]
fn config_rejects_bad_values() {
    for text in ["token_budget = 0", "top_k = 0", "[gateway]\nmode = \"replay\"", "unknown = 1", "[gateway]\napi_key = \"x\""] {
        assert!(matches!(PipelineConfig::from_toml(text, Path::new("")), Err(PipelineError::Config(_))), "{text}");
    }
}

#[test]
fn config_round_trips_through_toml() {
    let c = config(Path::new("/tmp/out"));
    assert_eq!(PipelineConfig::from_toml(&c.to_toml(), Path::new("/")).unwrap(), c);
}

#[test]
fn live_gateway_without_endpoint_fails_on_first_call() {
    std::env::remove_var(crate::gateway::ENV_URL);
    let g = PipelineConfig::default().build_gateway().unwrap();
    assert!(matches!(g.complete("hi"), Err(GatewayError::Config(_))));
}

#[test]
fn code_fence_is_stripped() {
    assert_eq!(strip_code_fence("Fixed:\n```python\nx = 1\n```\nDone."), "x = 1\n");
    assert_eq!(strip_code_fence("x = 1\n\n"), "x = 1\n");
    assert_eq!(strip_code_fence("```\na\nb"), "a\nb\n");
}

fn result(successes: usize, runs: usize) -> ScenarioResult {
    ScenarioResult { name: "s".into(), kind: ScenarioKind::Mapping, runs, successes, expected_rate: None, failures: vec![] }
}

#[test]
fn percent_rounds_half_up() {
    assert_eq!(result(10, 10).percent(), "100.0%");
    assert_eq!(result(0, 10).percent(), "0.0%");
    assert_eq!(result(1, 3).percent(), "33.3%");
    assert_eq!(result(2, 3).percent(), "66.7%");
    assert_eq!(result(1, 8).percent(), "12.5%");
    assert_eq!(result(1, 16).percent(), "6.3%");
    assert_eq!(result(141, 200).percent(), "70.5%");
}

proptest! {
    #[test]
    fn percent_matches_exact_rounding(runs in 1usize..5000, frac in 0.0f64..=1.0) {
        let successes = (frac * runs as f64).floor() as usize;
        let r = result(successes, runs);
        // Exact rational oracle: round(1000 * s / n) half up.
        let num = 1000 * successes as u128;
        let den = runs as u128;
        let tenths = num / den + u128::from(2 * (num % den) >= den);
        prop_assert_eq!(r.percent(), format!("{}.{}%", tenths / 10, tenths % 10));
        prop_assert!((r.success_rate() * runs as f64 - successes as f64).abs() < 1e-9);
    }
}

#[test]
fn manifest_validation() {
    let base = "vss_catalog = \"v\"\ncan_catalog = \"c\"\n";
    let bad = [
        String::new(),
        "[[scenario]]\nname = \"a\"\nkind = \"mapping\"\ncode = \"x\"\n".into(),
        "[[scenario]]\nname = \"a\"\nkind = \"chain\"\ncode = \"x\"\nexpected_verdicts = { r = \"pass\" }\n".into(),
        "[[scenario]]\nname = \"a\"\nkind = \"chain\"\ncode = \"x\"\nrules = \"r\"\n".into(),
        "fault_injection = { probability = 1.5, seed = 1 }\n[[scenario]]\nname = \"a\"\nkind = \"mapping\"\ncode = \"x\"\nexpected_entries = [{ name = \"BrakeCmd\", protocol = \"CAN\" }]\n".into(),
        "[[scenario]]\nname = \"a\"\nkind = \"mapping\"\ncode = \"x\"\nexpected_entries = [{ name = \"BrakeCmd\", protocol = \"CAN\" }]\n[[scenario]]\nname = \"a\"\nkind = \"mapping\"\ncode = \"x\"\nexpected_entries = [{ name = \"BrakeCmd\", protocol = \"CAN\" }]\n".into(),
    ];
    for tail in bad {
        let text = format!("{base}{tail}");
        assert!(matches!(HarnessManifest::from_toml(&text, Path::new("")), Err(PipelineError::Config(_))), "{tail}");
    }
    let ok = format!("{base}[[scenario]]\nname = \"a\"\nkind = \"mapping\"\ncode = \"x.py\"\nexpected_entries = [{{ name = \"BrakeCmd\", protocol = \"CAN\", value = \"80\" }}]\n");
    let m = HarnessManifest::from_toml(&ok, Path::new("/m")).unwrap();
    assert_eq!(m.scenarios[0].code, Path::new("/m/x.py"));
}

#[test]
fn harness_needs_runs() {
    let m = load_manifest(&fixture("harness/manifest.toml")).unwrap();
    let err = run_eval_harness(&PipelineConfig::default(), &m, 0).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
}

#[test]
fn deploy_to_directory_and_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = dir.path().join("app.py");
    std::fs::write(&artifact, "print('hi')\n").unwrap();
    let target = DeployTarget::parse(dir.path().join("target").to_str().unwrap());
    let receipt = deploy_stub(&artifact, &target, Duration::from_secs(1)).unwrap();
    let dest = receipt.destination.clone().unwrap();
    assert_eq!(std::fs::read(&dest).unwrap(), std::fs::read(&artifact).unwrap());
    assert_eq!(receipt.sha256, crate::digest::sha256_hex("print('hi')\n"));
    assert_eq!(Receipt::from_json(&receipt.to_json()).unwrap(), receipt);
    verify_receipt(&receipt).unwrap();

    std::fs::write(&dest, "print('pwned')\n").unwrap();
    assert!(matches!(verify_receipt(&receipt), Err(PipelineError::Tampered(_))));
}

#[test]
fn deploy_to_unreachable_endpoint_fails() {
    let dir = tempfile::tempdir().unwrap();
    let artifact = dir.path().join("app.py");
    std::fs::write(&artifact, "x").unwrap();
    let target = DeployTarget::parse("http://127.0.0.1:1/deploy");
    assert!(matches!(target, DeployTarget::Endpoint(_)));
    let err = deploy_stub(&artifact, &target, Duration::from_secs(2)).unwrap_err();
    assert!(matches!(err, PipelineError::Deploy(_)), "{err}");
}

#[test]
fn missing_catalog_stops_before_any_stage() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.can_catalog = Some(out.path().join("missing.json"));
    let err = run_safety_pipeline(&c, &fixture("scenarios/s1/code.py"), &fixture("rules/s1.rules"), &offline()).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)), "{err}");
    assert!(!out.path().join(record::RUN_RECORD).exists());
}

#[test]
fn stage_failure_is_recorded() {
    let out = tempfile::tempdir().unwrap();
    let c = config(out.path());
    let err = run_safety_pipeline(&c, &fixture("scenarios/s1/code.py"), &fixture("rules/s1.rules"), &offline()).unwrap_err();
    assert!(matches!(err, PipelineError::Stage { ref stage, .. } if stage == "extraction"), "{err}");
    let record = RunRecord::load(out.path()).unwrap();
    assert_eq!(record.verdict, RunVerdict::Error);
    assert_eq!(record.failed_stage.as_deref(), Some("extraction"));
    assert_eq!(record.verdict.exit_code(), 2);
}

fn replay(rel: &str) -> Gateway {
    Gateway::replay(ReplayStore::load(&fixture(rel)).unwrap())
}

#[test]
fn safety_run_record_verifies_and_detects_edits() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.auto_correct = true;
    let run = run_safety_pipeline(&c, &fixture("scenarios/s3/code.py"), &fixture("rules/s3.rules"), &replay("scenarios/s3/replay.json"))
        .unwrap();
    assert_eq!(run.record.verdict, RunVerdict::Pass);
    assert_eq!(run.record.iterations, 1);
    let saved = RunRecord::load(out.path()).unwrap();
    assert_eq!(saved, run.record);
    saved.verify(out.path()).unwrap();
    for name in ["code-1.txt", "chain-1.puml", "safety-report-1.json", "report.txt"] {
        assert!(saved.artifacts.contains_key(name), "{name}");
    }

    std::fs::write(out.path().join("chain.puml"), "@startuml\n@enduml\n").unwrap();
    let problems = saved.verify(out.path()).unwrap_err();
    assert!(problems.iter().any(|p| p.starts_with("chain.puml")), "{problems:?}");
}

#[test]
fn correction_loop_respects_the_cap() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.auto_correct = true;
    c.max_iterations = 0;
    let run = run_safety_pipeline(&c, &fixture("scenarios/s3/code.py"), &fixture("rules/s3.rules"), &replay("scenarios/s3/replay.json"))
        .unwrap();
    assert_eq!(run.record.iterations, 0);
    assert_eq!(run.record.verdict, RunVerdict::Violated);
}

fn topology(out: &Path, model: &Path) -> Result<TopologyRun, PipelineError> {
    let source = ModelSource { model: Some(model.to_owned()), requirements: None };
    let constraints = ConstraintSource::Constraints(fixture("topology/constraints.ocl"));
    run_topology_pipeline(&config(out), &source, &constraints, &offline())
}

#[test]
fn topology_fixture_passes() {
    let out = tempfile::tempdir().unwrap();
    let run = topology(out.path(), &fixture("topology/model.json")).unwrap();
    assert!(run.report.passed());
    assert_eq!(run.record.verdict, RunVerdict::Pass);
    run.record.verify(out.path()).unwrap();
    assert!(out.path().join("model.puml").is_file());

    let run = topology(out.path(), &fixture("topology/model.puml")).unwrap();
    assert!(run.report.passed());
}

#[test]
fn topology_steering_overrun_is_named() {
    let out = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("topology/model.json")).unwrap();
    let mut model = crate::topology::parse_instance(&text).unwrap();
    model.object_mut("zoneToSteer").unwrap().attributes.insert("payloadValue".into(), crate::topology::Literal::Str("16.0".into()));
    let path = out.path().join("steer16.json");
    std::fs::write(&path, model.to_json()).unwrap();
    let run = topology(&out.path().join("run"), &path).unwrap();
    assert_eq!(run.record.verdict, RunVerdict::Violated);
    let failing: Vec<_> = run.report.failing().map(|o| (o.constraint.as_str(), o.object.as_str())).collect();
    assert_eq!(failing, [("SteeringCommandWithinLimits", "zoneToSteer")]);
    let list = std::fs::read_to_string(out.path().join("run/pass-fail.txt")).unwrap();
    assert!(list.contains("SteeringCommandWithinLimits zoneToSteer (VSSMessage): fail"), "{list}");
}

#[test]
fn non_conformant_model_stops_at_conformance() {
    let out = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("topology/model.json")).unwrap();
    let mut model = crate::topology::parse_instance(&text).unwrap();
    model.object_mut("hpcToZone").unwrap().attributes.remove("standard");
    let path = out.path().join("bad.json");
    std::fs::write(&path, model.to_json()).unwrap();
    let err = topology(&out.path().join("run"), &path).unwrap_err();
    assert!(matches!(&err, PipelineError::Stage { stage, .. } if stage == "conformance"), "{err}");
    assert!(matches!(err.root(), PipelineError::Topology(TopologyError::NotConformant(_))));
    let record = RunRecord::load(&out.path().join("run")).unwrap();
    assert!(record.stages.iter().all(|s| s.name != "evaluation"));
    assert!(!out.path().join("run/topology-report.json").exists());
}

#[test]
fn topology_correction_from_replay() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.auto_correct = true;
    let source = ModelSource { model: Some(fixture("topology/can-backbone.json")), requirements: None };
    let constraints = ConstraintSource::Constraints(fixture("topology/constraints.ocl"));
    let run = run_topology_pipeline(&c, &source, &constraints, &replay("topology/replay.json")).unwrap();
    assert_eq!(run.record.iterations, 1);
    assert!(run.report.passed());
    let first = std::fs::read_to_string(out.path().join("topology-report.json")).unwrap();
    let first: crate::topology::TopologyReport = serde_json::from_str(&first).unwrap();
    assert_eq!(first.outcome("HPCtoZoneEthernetIEEE1722", "hpcToZone").unwrap().verdict, OclVerdict::Fail);
    assert!(out.path().join("model-1.puml").is_file());
    run.record.verify(out.path()).unwrap();
}

#[test]
fn unreachable_embedding_service_is_a_retrieval_error() {
    let out = tempfile::tempdir().unwrap();
    let mut c = config(out.path());
    c.embedding_url = Some("http://127.0.0.1:1/embed".into());
    c.gateway.timeout_secs = 2;
    let catalogs = load_catalogs(&c).unwrap();
    let err = extract_signals(&c, &catalogs, "brake()", &offline()).unwrap_err();
    assert!(matches!(err, PipelineError::Retrieval(crate::retrieval::RetrievalError::Endpoint(_))), "{err}");
}
