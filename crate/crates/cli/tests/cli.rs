use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel).to_str().unwrap().to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdv-guard")).args(args).env_remove("SDVGUARD_LLM_URL").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn out_dir(dir: &tempfile::TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

#[test]
fn check_chain_exit_codes() {
    let pass = run(&["check-chain", "--chain", &fixture("scenarios/s3/corrected.puml"), "--rules", &fixture("rules/s3.rules")]);
    assert_eq!(pass.status.code(), Some(0), "{}", stderr(&pass));
    assert_eq!(stdout(&pass).trim(), "brake-after-camera-detection: pass");

    let violated = run(&["check-chain", "--chain", &fixture("scenarios/s3/chain.puml"), "--rules", &fixture("rules/s3.rules"), "--json"]);
    assert_eq!(violated.status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_str(&stdout(&violated)).unwrap();
    assert_eq!(report["verdict"], "violated");

    let missing = run(&["check-chain", "--chain", "/nonexistent.puml", "--rules", &fixture("rules/s3.rules")]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(stderr(&missing).starts_with("error: "));
}

#[test]
fn safety_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "--out",
        &out_dir(&dir, "run"),
        "analyze-safety",
        "--code",
        &fixture("scenarios/s1/code.py"),
        "--rules",
        &fixture("rules/s1.rules"),
        "--vss",
        &fixture("catalogs/vss.json"),
        "--can",
        "/nonexistent/can.json",
        "--replay",
        &fixture("scenarios/s1/replay.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("CAN catalog"), "{}", stderr(&o));
    assert!(!dir.path().join("run/run.json").exists());

    let o = run(&[
        "--config",
        &fixture("sdv-guard.toml"),
        "--out",
        &out_dir(&dir, "miss"),
        "analyze-safety",
        "--code",
        &fixture("harness/brake-only.py"),
        "--rules",
        &fixture("rules/s1.rules"),
        "--replay",
        &fixture("scenarios/s1/replay.json"),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no recorded completion"), "{}", stderr(&o));
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("miss/run.json")).unwrap()).unwrap();
    assert_eq!(record["verdict"], "error");
    assert_eq!(record["failed_stage"], "extraction");
}

#[test]
fn topology_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pass = run(&[
        "--out",
        &out_dir(&dir, "pass"),
        "analyze-topology",
        "--metamodel",
        &fixture("topology/metamodel.json"),
        "--model",
        &fixture("topology/model.puml"),
        "--constraints",
        &fixture("topology/constraints.ocl"),
    ]);
    assert_eq!(pass.status.code(), Some(0), "{}", stderr(&pass));
    assert!(stdout(&pass).contains("verdict: pass"));

    let fail = run(&[
        "--out",
        &out_dir(&dir, "fail"),
        "analyze-topology",
        "--model",
        &fixture("topology/can-backbone.json"),
        "--constraints",
        &fixture("topology/constraints.ocl"),
    ]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(stdout(&fail).contains("HPCtoZoneEthernetIEEE1722 hpcToZone (Message): fail"), "{}", stdout(&fail));

    let fixed = run(&[
        "--out",
        &out_dir(&dir, "fixed"),
        "analyze-topology",
        "--model",
        &fixture("topology/can-backbone.json"),
        "--constraints",
        &fixture("topology/constraints.ocl"),
        "--auto-correct",
        "--replay",
        &fixture("topology/replay.json"),
    ]);
    assert_eq!(fixed.status.code(), Some(0), "{}", stderr(&fixed));
    assert!(dir.path().join("fixed/model-1.puml").is_file());

    let offline = run(&[
        "--out",
        &out_dir(&dir, "offline"),
        "analyze-topology",
        "--model",
        &fixture("topology/model.json"),
        "--guidelines",
        &fixture("topology/guidelines.txt"),
    ]);
    assert_eq!(offline.status.code(), Some(2));
    assert!(stderr(&offline).contains("SDVGUARD_LLM_URL"));
}

#[test]
fn extract_signals_and_build_chain_from_replay() {
    let config = fixture("sdv-guard.toml");
    let o = run(&[
        "--config",
        &config,
        "extract-signals",
        "--code",
        &fixture("scenarios/s2/code.py"),
        "--replay",
        &fixture("scenarios/s2/replay.json"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let keys: Vec<&str> = report["accepted"].as_array().unwrap().iter().map(|a| a["resolved_key"].as_str().unwrap()).collect();
    assert_eq!(keys, ["Vehicle.ADAS.Camera.IsActive", "Vehicle.ADAS.Lidar.PedestrianDetected", "BrakeCmd"]);

    let o = run(&[
        "--config",
        &config,
        "build-chain",
        "--code",
        &fixture("scenarios/s2/code.py"),
        "--replay",
        &fixture("scenarios/s2/replay.json"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), std::fs::read_to_string(fixture("scenarios/s2/chain.puml")).unwrap());
}

#[test]
fn deploy_and_verify_receipt() {
    let dir = tempfile::tempdir().unwrap();
    let artifact: PathBuf = dir.path().join("app.py");
    std::fs::write(&artifact, "print('ok')\n").unwrap();
    let receipt = out_dir(&dir, "receipt.json");
    let o = run(&["deploy", "--artifact", artifact.to_str().unwrap(), "--target", &out_dir(&dir, "target"), "--receipt", &receipt]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("target/app.py").is_file());
    assert_eq!(run(&["deploy", "--verify", &receipt]).status.code(), Some(0));

    std::fs::write(&artifact, "print('changed')\n").unwrap();
    let o = run(&["deploy", "--verify", &receipt]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("receipt check failed"), "{}", stderr(&o));

    let o = run(&["deploy", "--artifact", artifact.to_str().unwrap(), "--target", "http://127.0.0.1:1/upload", "--timeout-secs", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("deployment"), "{}", stderr(&o));
}

#[test]
fn eval_reports_fault_band_and_rejects_zero_runs() {
    let o = run(&["eval", "--manifest", &fixture("harness/fault.toml"), "--runs", "200", "--json"]);
    assert_eq!(o.status.code(), Some(1));
    let result: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let successes = result["scenarios"][0]["successes"].as_u64().unwrap();
    assert!((128..=152).contains(&successes), "{successes}");

    let o = run(&["eval", "--manifest", &fixture("harness/manifest.toml"), "--runs", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
