use proptest::prelude::*;

use super::*;
use crate::gateway::CompletionRequest;

fn fixture(rel: &str) -> String {
    std::fs::read_to_string(format!("{}/../../fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn doc(text: &str) -> ChainDocument {
    ChainDocument::from_plantuml(text).unwrap()
}

fn path_events(d: &ChainDocument) -> Vec<Vec<String>> {
    enumerate_paths(d).unwrap().iter().map(|p| p.events().iter().map(|s| s.to_string()).collect()).collect()
}

#[test]
fn linear_chain() {
    let g = parse_activity_diagram("@startuml\nstart\n:camera-sense;\n:brake;\nstop\n@enduml").unwrap();
    let labels: Vec<_> = g.actions().map(|n| n.label.as_str()).collect();
    assert_eq!(labels, ["camera-sense", "brake"]);
    assert_eq!(g.edges.len(), 3);
}

#[test]
fn if_else_builds_guarded_decision_and_merge() {
    let g = parse_activity_diagram(
        "@startuml\nstart\nif (obstacle?) then (yes)\n:brake;\nelse (no)\n:cruise;\nendif\nstop\n@enduml",
    )
    .unwrap();
    let decision = g.nodes.iter().find(|n| n.kind == NodeKind::Decision).unwrap();
    let guards: Vec<_> = g.edges.iter().filter(|e| e.from == decision.id).map(|e| e.guard.clone().unwrap()).collect();
    assert_eq!(guards, ["yes", "no"]);
    assert_eq!(g.nodes.iter().filter(|n| n.kind == NodeKind::Merge).count(), 1);
    let merge = g.nodes.iter().find(|n| n.kind == NodeKind::Merge).unwrap();
    assert_eq!(g.edges.iter().filter(|e| e.to == merge.id).count(), 2);
}

#[test]
fn if_without_else_and_default_guards() {
    let d = doc("@startuml\nstart\nif (obstacle) then\n:brake;\nendif\nstop\n@enduml");
    assert_eq!(path_events(&d), vec![vec!["brake".to_owned()], vec![]]);
    let guards: Vec<_> = d.graph.edges.iter().filter_map(|e| e.guard.as_deref()).collect();
    assert_eq!(guards, ["obstacle", "else"]);
}

#[test]
fn s1_has_three_actions_in_order() {
    let d = doc(&fixture("scenarios/s1/chain.puml"));
    assert_eq!(path_events(&d), vec![vec!["camera-sense", "pedestrian-camera-detected", "accelerate"]]);
    let first = d.graph.actions().next().unwrap();
    let notes = first.notes.as_ref().unwrap();
    assert_eq!(notes.input_format.as_deref(), Some("image"));
    assert_eq!(notes.output_format.as_deref(), Some("VSS boolean"));
}

#[test]
fn label_normalization() {
    let d = doc("@startuml\nstart\n#red:Pedestrian (camera)\n detected;\n:already-normal;\nstop\n@enduml");
    let events: Vec<_> = d.events().collect();
    assert_eq!(events, ["pedestrian-camera-detected", "already-normal"]);
}

#[test]
fn fixtures_round_trip() {
    for rel in ["scenarios/s1/chain.puml", "scenarios/s2/chain.puml", "scenarios/s3/chain.puml", "scenarios/s3/corrected.puml", "chains/eight-paths.puml"] {
        let d = doc(&fixture(rel));
        assert_eq!(ChainDocument::from_json(&d.to_json()).unwrap(), d, "{rel}");
    }
}

#[test]
fn canonical_schema_shape() {
    let d = doc("@startuml\nstart\n:Brake;\nnote left: output=BrakeCmd\nstop\n@enduml");
    let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["nodes", "edges", "metadata"]);
    assert_eq!(v["nodes"][1]["event"], "brake");
    assert_eq!(v["nodes"][1]["label"], "Brake");
    assert_eq!(v["nodes"][1]["notes"]["output"], "BrakeCmd");
    assert!(v["nodes"][0].get("event").is_none());
}

#[test]
fn eight_paths_match_exhaustive_count() {
    let d = doc(&fixture("chains/eight-paths.puml"));
    let paths = path_events(&d);
    assert_eq!(paths.len(), 8);
    let mut expected = Vec::new();
    for a in ["camera-pedestrian-check", "camera-fallback"] {
        for b in ["lidar-sense", "lidar-fallback"] {
            for c in ["brake", "cruise"] {
                expected.push(vec!["camera-sense".to_owned(), a.into(), b.into(), c.into()]);
            }
        }
    }
    assert_eq!(paths, expected);
}

#[test]
fn parse_errors_carry_lines() {
    let cases = [
        ("@startuml\nstart\nif (x) then (y)\n:a;\nstop\n@enduml", 3, "endif"),
        ("@startuml\nstart\n:a;\nendif\nstop\n@enduml", 4, "without `if`"),
        ("@startuml\nstart\nfork\n:a;\nstop\n@enduml", 3, "unsupported"),
        ("@startuml\nstart\n:a;\nnote right: colour=red\nstop\n@enduml", 4, "unknown note key"),
        ("@startuml\nstart\n:a\nstop\n@enduml", 3, "closing"),
        ("@startuml\nstart\nif x then\n:a;\nendif\nstop\n@enduml", 3, "expected `(`"),
        ("@startuml\nstart\nnote right: input=x\nstop\n@enduml", 3, "follow an action"),
    ];
    for (text, line, needle) in cases {
        match parse_activity_diagram(text).unwrap_err() {
            EventChainError::Parse { line: l, message } => {
                assert_eq!(l, line, "{text}");
                assert!(message.contains(needle), "{message}");
            }
            other => panic!("unexpected {other:?} for {text}"),
        }
    }
    assert!(matches!(parse_activity_diagram("start\n:a;\nstop").unwrap_err(), EventChainError::Parse { .. }));
}

#[test]
fn structure_errors_list_offenders() {
    let err = parse_activity_diagram("@startuml\n:a;\nstop\n@enduml").unwrap_err();
    assert!(matches!(&err, EventChainError::Structure(i) if i.contains(&StructureIssue::NoStart)), "{err}");
    let err = parse_activity_diagram("@startuml\nstart\n:a;\nstop\n:orphan;\nstop\n@enduml").unwrap_err();
    match err {
        EventChainError::Structure(issues) => {
            assert!(issues.contains(&StructureIssue::Unreachable(vec!["n3".into(), "n4".into()])), "{issues:?}")
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = parse_activity_diagram("@startuml\nstart\nif (c) then (y)\n:a;\nelse (y)\n:b;\nendif\nstop\n@enduml").unwrap_err();
    assert!(matches!(err, EventChainError::Structure(ref i) if matches!(i[0], StructureIssue::DuplicateGuard { .. })));
    let err = parse_activity_diagram("@startuml\nstart\n:a;\n@enduml").unwrap_err();
    assert!(matches!(err, EventChainError::Structure(ref i) if i.contains(&StructureIssue::NoStop)));
}

#[test]
fn cycles_are_rejected() {
    let mut d = doc("@startuml\nstart\n:a;\nif (again?) then (yes)\n:b;\nelse (no)\n:c;\nendif\nstop\n@enduml");
    let b = d.graph.nodes.iter().find(|n| n.label == "b").unwrap().id.clone();
    let a = d.graph.nodes.iter().find(|n| n.label == "a").unwrap().id.clone();
    d.graph.edges.iter_mut().find(|e| e.from == b).unwrap().to = a.clone();
    let err = ChainDocument::from_json(&d.to_json()).and_then(|d| enumerate_paths(&d).map(|_| ()));
    assert!(matches!(err, Err(EventChainError::Cycle { .. })), "{err:?}");
}

#[test]
fn empty_label_is_rejected() {
    let err = ChainDocument::from_plantuml("@startuml\nstart\n:--;\nstop\n@enduml").unwrap_err();
    assert_eq!(err, EventChainError::EmptyLabel { node: "n1".into() });
}

#[test]
fn documents_with_stray_or_missing_events_fail_check() {
    let d = doc("@startuml\nstart\n:a;\nstop\n@enduml");
    let mut bad = d.clone();
    bad.graph.nodes[0].event = Some("x".into());
    assert!(ChainDocument::from_json(&bad.to_json()).is_err());
    let mut bad = d.clone();
    bad.graph.nodes[1].event = None;
    assert!(ChainDocument::from_json(&bad.to_json()).is_err());
}

#[test]
fn generation_strips_prose_and_fences() {
    let gateway = Gateway::live(|req: &CompletionRequest| {
        assert!(req.prompt.contains("given as @startuml\n@enduml, based on given source code: brake();."));
        Ok("Here is the diagram:\n```plantuml\n@startuml\nstart\n:brake;\nstop\n@enduml\n```\nDone.".into())
    });
    let g = generate_chain("brake();", "", &[], &gateway).unwrap();
    assert_eq!(g.diagram, "@startuml\nstart\n:brake;\nstop\n@enduml\n");
    assert_eq!(g.document.events().collect::<Vec<_>>(), ["brake"]);
    assert_eq!(g.document.metadata.source_digest.as_deref(), Some(sha256_hex("brake();").as_str()));
}

#[test]
fn generation_failure_keeps_raw_text() {
    let gateway = Gateway::live(|_: &CompletionRequest| Ok("@startuml\nstart\n:a;\nrepeat\n@enduml".into()));
    match generate_chain("x", "", &[], &gateway).unwrap_err() {
        EventChainError::Generation { raw, error } => {
            assert!(raw.contains("repeat"));
            assert!(matches!(*error, EventChainError::Parse { line: 4, .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
    let prose = Gateway::live(|_: &CompletionRequest| Ok("I cannot draw that.".into()));
    assert!(matches!(generate_chain("x", "", &[], &prose).unwrap_err(), EventChainError::Generation { .. }));
}

// Structured programs and their independently expanded paths.
#[derive(Debug, Clone)]
enum Stmt {
    Act(String),
    If(Vec<Stmt>, Option<Vec<Stmt>>),
}

fn arb_program() -> impl Strategy<Value = Vec<Stmt>> {
    let leaf = "[a-d]{1,2}".prop_map(Stmt::Act);
    let stmt = leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            3 => "[a-d]{1,2}".prop_map(Stmt::Act),
            1 => (prop::collection::vec(inner.clone(), 0..3), prop::option::of(prop::collection::vec(inner, 0..3)))
                .prop_map(|(t, e)| Stmt::If(t, e)),
        ]
    });
    prop::collection::vec(stmt, 0..5)
}

fn render(program: &[Stmt], out: &mut String, counter: &mut usize) {
    for s in program {
        match s {
            Stmt::Act(a) => out.push_str(&format!(":{a};\n")),
            Stmt::If(t, e) => {
                *counter += 1;
                out.push_str(&format!("if (c{counter}) then (yes)\n"));
                render(t, out, counter);
                if let Some(e) = e {
                    out.push_str("else (no)\n");
                    render(e, out, counter);
                }
                out.push_str("endif\n");
            }
        }
    }
}

fn expand(program: &[Stmt]) -> Vec<Vec<String>> {
    let mut paths = vec![Vec::new()];
    for s in program {
        let options = match s {
            Stmt::Act(a) => vec![vec![a.clone()]],
            Stmt::If(t, e) => {
                let mut o = expand(t);
                o.extend(expand(e.as_deref().unwrap_or(&[])));
                o
            }
        };
        paths = paths
            .iter()
            .flat_map(|p| options.iter().map(move |o| p.iter().chain(o).cloned().collect()))
            .collect();
    }
    paths
}

proptest! {
    #[test]
    fn paths_match_structural_expansion(program in arb_program()) {
        let mut text = "@startuml\nstart\n".to_owned();
        render(&program, &mut text, &mut 0);
        text.push_str("stop\n@enduml\n");
        let d = doc(&text);
        prop_assert_eq!(path_events(&d), expand(&program));
        for p in enumerate_paths(&d).unwrap() {
            let positions: Vec<_> = p.steps.iter().map(|s| s.position).collect();
            prop_assert_eq!(positions, (0..p.len()).collect::<Vec<_>>());
        }
        prop_assert_eq!(ChainDocument::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn linear_chain_is_declaration_order(labels in prop::collection::vec("[A-Za-z][A-Za-z0-9 ()_-]{0,12}", 1..8)) {
        let mut text = "@startuml\nstart\n".to_owned();
        for l in &labels {
            text.push_str(&format!(":{l};\n"));
        }
        text.push_str("stop\n@enduml\n");
        let d = doc(&text);
        let expected: Vec<String> = labels.iter().map(|l| normalize(l)).collect();
        prop_assert_eq!(path_events(&d), vec![expected]);
    }
}
