//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion does.

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdv_guard_core::catalog::{Catalog, MessageCatalog, Protocol, SignalCatalog};
use sdv_guard_core::eventchain::{enumerate_paths, ChainDocument, EventSequence};
use sdv_guard_core::extraction::{parse_extraction_response, validate_entries};
use sdv_guard_core::pipeline::{load_manifest, run_eval_harness, PipelineConfig};
use sdv_guard_core::retrieval::{chunk_entries, entry_tokens, Bm25, FirstStageScorer, RetrievalIndex, Retriever};
use sdv_guard_core::rules::{
    eval_atom, eval_rule, eval_rule_on_paths, parse_rules, Mode, RuleAtom, RuleExpr, SafetyRule, TemporalOp, Verdict,
};
use sdv_guard_core::topology::{
    default_metamodel, eval_constraints, parse_constraints, parse_instance, typecheck_all, InstanceModel, Literal,
    OclVerdict, TopologyError,
};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

struct Cli {
    code: i32,
    stdout: String,
    elapsed: Duration,
}

fn sdv_guard(args: &[&str]) -> Cli {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_sdv-guard")).args(args).output().expect("binary runs");
    Cli {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        elapsed: start.elapsed(),
    }
}

fn analyze_safety(out: &Path, code: &str, rules: &str, replay: &str, extra: &[&str]) -> Cli {
    let config = fixture("sdv-guard.toml");
    let (code, rules, replay) = (fixture(code), fixture(rules), fixture(replay));
    let mut args = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "analyze-safety",
        "--code",
        code.to_str().unwrap(),
        "--rules",
        rules.to_str().unwrap(),
        "--replay",
        replay.to_str().unwrap(),
    ];
    args.extend(extra);
    sdv_guard(&args)
}

fn report_verdict(out: &Path, rule: &str) -> String {
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let r = report["rules"].as_array().unwrap().iter().find(|r| r["rule"] == rule).unwrap_or_else(|| panic!("{rule} missing"));
    r["verdict"].as_str().unwrap().to_owned()
}

fn scenario_reproduction() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("s1", "scenarios/s1/code.py", "accelerate-only-before-detection", "violated", 1, vec![]),
        ("s2", "scenarios/s2/code.py", "brake-on-sensed-detection", "violated", 1, vec![]),
        ("s3", "scenarios/s3/code.py", "brake-after-camera-detection", "violated", 1, vec![]),
        ("s3-corrected", "scenarios/s3/corrected.py", "brake-after-camera-detection", "pass", 0, vec![]),
        ("s3-auto", "scenarios/s3/code.py", "brake-after-camera-detection", "pass", 0, vec!["--auto-correct"]),
    ];
    for (name, code, rule, want, exit, extra) in cases {
        let scenario = &name[..2];
        let out = dir.path().join(name);
        let run = analyze_safety(&out, code, &format!("rules/{scenario}.rules"), &format!("scenarios/{scenario}/replay.json"), &extra);
        assert_eq!(run.code, exit, "{name}: exit code; stdout:\n{}", run.stdout);
        assert_eq!(report_verdict(&out, rule), want, "{name}");
        assert!(run.stdout.contains(&format!("{rule}: {want}")), "{name}: {}", run.stdout);
        assert!(run.elapsed < Duration::from_secs(1), "{name} took {:?}", run.elapsed);
    }
    let auto = std::fs::read_to_string(dir.path().join("s3-auto/run.json")).unwrap();
    let auto: serde_json::Value = serde_json::from_str(&auto).unwrap();
    assert_eq!(auto["iterations"], 1);
}

/// Every occurrence of `later` has an occurrence of `earlier` strictly before it.
fn oracle_precedes(seq: &[String], earlier: &str, later: &str) -> bool {
    seq.iter().enumerate().filter(|(_, e)| *e == later).all(|(i, _)| seq[..i].iter().any(|e| e == earlier))
}

fn atom(left: &str, op: TemporalOp, right: &str) -> RuleAtom {
    RuleAtom { left: left.into(), op, right: right.into() }
}

fn rule(mode: Mode, expr: RuleExpr) -> SafetyRule {
    SafetyRule { name: "r".into(), mode, expr, aliases: BTreeMap::new() }
}

fn temporal_properties() {
    const ALPHABET: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..12_000 {
        let size = rng.random_range(1..=ALPHABET.len());
        let len = rng.random_range(0..=20);
        let seq: Vec<String> = (0..len).map(|_| ALPHABET[rng.random_range(0..size)].to_owned()).collect();
        let path = EventSequence::from_events(&seq);
        let a = ALPHABET[rng.random_range(0..size)];
        let b = ALPHABET[rng.random_range(0..size)];

        let before = eval_atom(&path, &atom(a, TemporalOp::Before, b));
        let after = eval_atom(&path, &atom(b, TemporalOp::After, a));
        assert_eq!(before, oracle_precedes(&seq, a, b), "{seq:?}: {a} before {b}");
        assert_eq!(before, after, "duality on {seq:?}");

        if !seq.iter().any(|e| e == b) {
            assert!(before, "vacuity on {seq:?}");
        }
        let present = seq.iter().any(|e| e == a);
        assert_eq!(eval_atom(&path, &atom(a, TemporalOp::Before, a)), !present, "self before on {seq:?}");
        assert_eq!(eval_atom(&path, &atom(a, TemporalOp::After, a)), !present, "self after on {seq:?}");

        let e = RuleExpr::Atom(atom(a, TemporalOp::Before, b));
        let required = eval_rule_on_paths(std::slice::from_ref(&path), &rule(Mode::Require, e.clone()));
        let forbidden = eval_rule_on_paths(std::slice::from_ref(&path), &rule(Mode::Forbid, RuleExpr::Not(Box::new(e))));
        assert_eq!(required.verdict, forbidden.verdict, "mode duality on {seq:?}");
        checked += 1;
    }
    assert!(checked >= 10_000);
}

fn all_paths() {
    let doc = ChainDocument::from_plantuml(&read("chains/eight-paths.puml")).unwrap();
    let paths = enumerate_paths(&doc).unwrap();
    assert_eq!(paths.len(), 8);
    let rules =
        parse_rules("brake-needs-a-sensor: require camera-pedestrian-check before brake or lidar-sense before brake\n").unwrap();
    let result = eval_rule(&doc, &rules.rules[0]).unwrap();
    assert_eq!(result.verdict, Verdict::Violated);
    assert_eq!(result.paths_checked, 8);
    assert_eq!(result.witnesses.len(), 1);
    assert_eq!(result.witnesses[0].path, ["camera-sense", "camera-fallback", "lidar-fallback", "brake"]);
}

fn model() -> InstanceModel {
    parse_instance(&read("topology/model.json")).unwrap()
}

fn set_attr(m: &mut InstanceModel, id: &str, attr: &str, value: &str) {
    m.object_mut(id).unwrap().attributes.insert(attr.into(), Literal::Str(value.into()));
}

fn verdict(m: &InstanceModel, constraint: &str, object: &str) -> OclVerdict {
    let mm = default_metamodel();
    let set = parse_constraints(&read("topology/constraints.ocl")).unwrap();
    let report = eval_constraints(m, &mm, &set).unwrap();
    report.outcome(constraint, object).unwrap_or_else(|| panic!("{constraint} on {object}")).verdict
}

fn ocl_rules() {
    let mm = default_metamodel();
    let text = read("topology/constraints.ocl");
    let set = parse_constraints(&text).unwrap();
    let names: Vec<_> = set.constraints.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["SteeringCommandWithinLimits", "HPCtoZoneEthernetIEEE1722", "TargetSpeedWithinSafetyLimit"]);
    typecheck_all(&set, &mm).unwrap();
    let typo = text.replace("self.payloadValue.toReal() <= 30.0", "sSelf.payloadValue.toReal() <= 30.0");
    let err = typecheck_all(&parse_constraints(&typo).unwrap(), &mm).unwrap_err();
    assert!(matches!(&err, TopologyError::Constraint { message, .. } if message.contains("sSelf")), "{err}");

    let steering = "SteeringCommandWithinLimits";
    for (payload, want) in [("15.0", OclVerdict::Pass), ("16.0", OclVerdict::Fail), ("-15.0", OclVerdict::Pass), ("-15.01", OclVerdict::Fail)] {
        let mut m = model();
        set_attr(&mut m, "zoneToSteer", "payloadValue", payload);
        assert_eq!(verdict(&m, steering, "zoneToSteer"), want, "steering {payload}");
    }

    let backbone = "HPCtoZoneEthernetIEEE1722";
    assert_eq!(verdict(&model(), backbone, "hpcToZone"), OclVerdict::Pass);
    let mut m = model();
    m.object_mut("hpcToZone").unwrap().references.insert("network".into(), "canZone".into());
    assert_eq!(verdict(&m, backbone, "hpcToZone"), OclVerdict::Fail);
    let mut m = model();
    set_attr(&mut m, "hpcToZone", "standard", "RAW");
    assert_eq!(verdict(&m, backbone, "hpcToZone"), OclVerdict::Fail);

    let speed = "TargetSpeedWithinSafetyLimit";
    for (payload, want) in [("30.0", OclVerdict::Pass), ("30.01", OclVerdict::Fail), ("0", OclVerdict::Pass)] {
        let mut m = model();
        set_attr(&mut m, "zoneToBrake", "payloadValue", payload);
        assert_eq!(verdict(&m, speed, "zoneToBrake"), want, "target speed {payload}");
    }

    // Antecedents that do not hold leave the consequent unchecked.
    let mut m = model();
    set_attr(&mut m, "zoneToWheel", "payloadValue", "99.0");
    set_attr(&mut m, "camLowToZone", "payloadValue", "99.0");
    assert_eq!(verdict(&m, steering, "zoneToWheel"), OclVerdict::Pass);
    assert_eq!(verdict(&m, steering, "camLowToZone"), OclVerdict::Pass);
    assert_eq!(verdict(&m, speed, "zoneToWheel"), OclVerdict::Pass);
    m.object_mut("camLowToZone").unwrap().references.insert("network".into(), "canZone".into());
    assert_eq!(verdict(&m, backbone, "camLowToZone"), OclVerdict::Pass);
    assert_eq!(verdict(&m, backbone, "zoneToSteer"), OclVerdict::Pass);
}

/// Leaf paths of a VSS tree with their numeric bounds.
fn vss_leaves(prefix: &str, node: &serde_json::Value, out: &mut BTreeMap<String, (Option<f64>, Option<f64>)>) {
    for (name, child) in node.as_object().unwrap() {
        let path = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
        if child["type"] == "branch" {
            vss_leaves(&path, &child["children"], out);
        } else {
            out.insert(path, (child["min"].as_f64(), child["max"].as_f64()));
        }
    }
}

fn can_messages() -> BTreeMap<String, (Option<f64>, Option<f64>)> {
    let can: serde_json::Value = serde_json::from_str(&read("catalogs/can.json")).unwrap();
    can.as_array()
        .unwrap()
        .iter()
        .map(|m| {
            let signals = m["signals"].as_array().unwrap();
            let lo = signals.iter().filter_map(|s| s["min"].as_f64()).reduce(f64::min);
            let hi = signals.iter().filter_map(|s| s["max"].as_f64()).reduce(f64::max);
            (m["name"].as_str().unwrap().to_owned(), (lo, hi))
        })
        .collect()
}

fn extraction_validation() {
    let completion = read("extraction/mixed-completion.txt");
    let entries = parse_extraction_response(&completion).unwrap();
    assert_eq!(entries.len(), 8);
    let signals = SignalCatalog::parse(&read("catalogs/vss.json")).unwrap();
    let messages = MessageCatalog::parse(&read("catalogs/can.json")).unwrap();
    let report = validate_entries(&entries, &signals, &messages);

    let mut vss = BTreeMap::new();
    vss_leaves("", &serde_json::from_str(&read("catalogs/vss.json")).unwrap(), &mut vss);
    let can = can_messages();
    let mut oracle_accepted = Vec::new();
    let mut oracle_rejected = BTreeMap::new();
    for e in &entries {
        let table = if e.protocol == Protocol::Vss { &vss } else { &can };
        let reason = match table.get(&e.name) {
            None => Some("unknown-name"),
            Some((lo, hi)) => match e.value.as_deref().and_then(|v| v.parse::<f64>().ok()) {
                Some(v) if lo.is_some_and(|lo| v < lo) || hi.is_some_and(|hi| v > hi) => Some("value-out-of-range"),
                _ => None,
            },
        };
        match reason {
            None => oracle_accepted.push(e.name.clone()),
            Some(r) => {
                oracle_rejected.insert(e.name.clone(), r.to_owned());
            }
        }
    }

    let accepted: Vec<String> = report.accepted.iter().map(|a| a.entry.name.clone()).collect();
    let rejected: BTreeMap<String, String> =
        report.rejected.iter().map(|r| (r.entry.name.clone(), r.reason.as_str().to_owned())).collect();
    assert_eq!(accepted.len(), 5);
    assert_eq!(rejected.len(), 3);
    assert_eq!(accepted, oracle_accepted);
    assert_eq!(rejected, oracle_rejected);

    let expected: serde_json::Value = serde_json::from_str(&read("extraction/mixed-expected.json")).unwrap();
    let want_accepted: Vec<String> = serde_json::from_value(expected["accepted"].clone()).unwrap();
    let want_rejected: BTreeMap<String, String> = serde_json::from_value(expected["rejected"].clone()).unwrap();
    assert_eq!(accepted, want_accepted);
    assert_eq!(rejected, want_rejected);
}

fn hand_bm25(docs: &[&[&str]], query: &[&str]) -> Vec<f64> {
    let (k1, b) = (1.2, 0.75);
    let n = docs.len() as f64;
    let avg = docs.iter().map(|d| d.len()).sum::<usize>() as f64 / n;
    docs.iter()
        .map(|d| {
            query
                .iter()
                .map(|q| {
                    let df = docs.iter().filter(|x| x.contains(q)).count() as f64;
                    let tf = d.iter().filter(|t| *t == q).count() as f64;
                    if df == 0.0 || tf == 0.0 {
                        return 0.0;
                    }
                    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                    idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * d.len() as f64 / avg))
                })
                .sum()
        })
        .collect()
}

fn retrieval() {
    use sdv_guard_core::catalog::{Bounds, CatalogEntry, DataType};
    let entry = |key: &str, text: &str| CatalogEntry {
        key: key.into(),
        protocol: Protocol::Vss,
        datatype: DataType::Float,
        unit: None,
        text: text.into(),
        bounds: Bounds::default(),
        allowed: None,
    };
    let docs = ["ADAS brake command actuator", "cabin light", "pedestrian detection camera"];
    let index = RetrievalIndex::build(docs.iter().enumerate().map(|(i, d)| entry(&format!("e{i}"), d)).collect()).unwrap();
    let scores = Bm25::default().score(&index, "Pedestrian brake brake").unwrap();
    let tokenized: Vec<Vec<String>> = docs.iter().map(|d| d.to_lowercase().split(' ').map(str::to_owned).collect()).collect();
    let refs: Vec<Vec<&str>> = tokenized.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
    let slices: Vec<&[&str]> = refs.iter().map(Vec::as_slice).collect();
    let oracle = hand_bm25(&slices, &["pedestrian", "brake"]);
    let frozen = [0.8631297426503192, 0.0, 0.9808292530117263];
    for i in 0..3 {
        assert!((scores[i] - oracle[i]).abs() < 1e-9, "doc {i}: {} vs {}", scores[i], oracle[i]);
        assert!((scores[i] - frozen[i]).abs() < 1e-9, "doc {i}: {} vs frozen {}", scores[i], frozen[i]);
    }

    let signals = SignalCatalog::parse(&read("catalogs/vss.json")).unwrap();
    let messages = MessageCatalog::parse(&read("catalogs/can.json")).unwrap();
    let catalog_index =
        RetrievalIndex::build(signals.entries().iter().chain(messages.entries()).cloned().collect()).unwrap();
    let query = read("scenarios/s2/code.py");
    let first = Retriever::default().retrieve_top_k(&catalog_index, &query, 10).unwrap();
    for _ in 0..10 {
        let again = Retriever::default().retrieve_top_k(&catalog_index, &query, 10).unwrap();
        assert_eq!(again.keys(), first.keys());
        assert_eq!(again, first);
    }

    let big = SignalCatalog::parse(&read("catalogs/vss-200.json")).unwrap();
    assert_eq!(big.entries().len(), 200);
    let big_index = RetrievalIndex::build(big.entries().to_vec()).unwrap();
    let shortlist = Retriever::default().retrieve_top_k(&big_index, "Vehicle", 200).unwrap();
    assert_eq!(shortlist.ranked.len(), 200);
    let chunks = chunk_entries(&shortlist, 4096).unwrap();
    let flattened: Vec<&str> = chunks.iter().flat_map(|c| c.entries.iter().map(|r| r.entry.key.as_str())).collect();
    assert_eq!(flattened, shortlist.keys());
    for c in &chunks {
        let total: usize = c.entries.iter().map(|r| entry_tokens(&r.entry)).sum();
        assert_eq!(c.token_estimate, total);
        assert!(c.token_estimate <= 4096);
    }
}

fn replay_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let run = analyze_safety(out, "scenarios/s2/code.py", "rules/s2.rules", "scenarios/s2/replay.json", &[]);
        assert_eq!(run.code, 1);
    }
    let mut compared = 0;
    for entry in std::fs::read_dir(&a).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "run.json" {
            continue;
        }
        let left = std::fs::read(a.join(&name)).unwrap();
        let right = std::fs::read(b.join(&name)).unwrap();
        assert!(left == right, "{name:?} differs");
        compared += 1;
    }
    assert!(compared > 10);
    assert!(a.join("report.json").is_file() && a.join("report.txt").is_file());
}

fn harness_statistics() {
    let start = Instant::now();
    let config = PipelineConfig::default();
    let manifest = load_manifest(&fixture("harness/manifest.toml")).unwrap();
    let result = run_eval_harness(&config, &manifest, 10).unwrap();
    assert_eq!(result.scenarios.len(), 7);
    for s in &result.scenarios {
        assert_eq!((s.runs, s.successes), (10, 10), "{}: {:?}", s.name, s.failures);
        assert_eq!(s.percent(), "100.0%");
    }

    let fault = load_manifest(&fixture("harness/fault.toml")).unwrap();
    let result = run_eval_harness(&config, &fault, 200).unwrap();
    let s = &result.scenarios[0];
    assert_eq!(s.runs, 200);
    assert!((s.success_rate() * 200.0 - s.successes as f64).abs() < 1e-9);
    assert!((0.64..=0.76).contains(&s.success_rate()), "rate {}", s.success_rate());
    assert!((s.expected_rate.unwrap() - 0.7).abs() < 1e-12);

    let manifest_path = fixture("harness/manifest.toml");
    let cli = sdv_guard(&["eval", "--manifest", manifest_path.to_str().unwrap(), "--runs", "10"]);
    assert_eq!(cli.code, 0, "{}", cli.stdout);
    assert_eq!(cli.stdout.matches("100.0%").count(), 7, "{}", cli.stdout);
    assert!(start.elapsed() < Duration::from_secs(30), "harness took {:?}", start.elapsed());
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn()); 8] = [
        ("scenario reproduction (S1/S2/S3 violated, corrected S3 pass, < 1 s each)", scenario_reproduction),
        ("temporal semantics properties on >= 10,000 sequences", temporal_properties),
        ("all-paths evaluation with single-path witness", all_paths),
        ("OCL constraint boundaries", ocl_rules),
        ("extraction validation 5 accepted / 3 rejected", extraction_validation),
        ("retrieval oracle, determinism and chunking", retrieval),
        ("byte-identical replay reports", replay_determinism),
        ("harness statistics (100% replay, fault band, < 30 s)", harness_statistics),
    ];
    // Written to the process stdout so the lines survive output capture.
    let mut stdout = std::io::stdout();
    let mut failed = Vec::new();
    for (name, check) in criteria {
        let line = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(()) => format!("acceptance: PASS  {name}"),
            Err(e) => {
                let why = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                failed.push(name);
                format!("acceptance: FAIL  {name}: {}", why.unwrap_or_default())
            }
        };
        writeln!(stdout, "{line}").unwrap();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
