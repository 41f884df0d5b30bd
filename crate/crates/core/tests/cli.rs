use std::io::Cursor;

use mixbo::bench::{mixed_sphere, run_study, Arm};
use mixbo::cli::{parse_message, run, BestPayload, Hello, Session, WireMessage, EXIT_OK, EXIT_USAGE};
use mixbo::space::{ParamSpec, SearchSpace};
use mixbo::{OptimizerConfig, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn invoke(args: &[&str], stdin: &str) -> (i32, String, String) {
    let mut input = Cursor::new(stdin.as_bytes().to_vec());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["mixbo"];
    argv.extend_from_slice(args);
    let code = run(argv, &mut input, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn random_messages(rng: &mut ChaCha8Rng) -> Vec<WireMessage> {
    let space = mixed_sphere().space;
    let pts: Vec<Point> = (0..rng.random_range(0..5)).map(|_| space.random_point(rng)).collect();
    let values = pts.iter().map(|_| if rng.random::<f64>() < 0.2 { None } else { Some(rng.random_range(-1e6..1e6)) }).collect();
    let config = OptimizerConfig { batch_size: rng.random_range(1..10), seed: rng.random(), ..Default::default() };
    vec![
        WireMessage::Hello(Hello { space: space.clone(), config: Some(config) }),
        WireMessage::Hello(Hello { space, config: None }),
        WireMessage::SuggestRequest,
        WireMessage::Suggestions { points: pts.clone() },
        WireMessage::Observe { points: pts.clone(), values },
        WireMessage::Ack,
        WireMessage::Best(BestPayload::default()),
        WireMessage::Best(BestPayload { point: pts.first().cloned(), value: Some(rng.random()) }),
        WireMessage::error(format!("oops \"{}\"\n\u{1f600}", rng.random::<u32>())),
    ]
}

#[test]
fn wire_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..200 {
        for m in random_messages(&mut rng) {
            let line = m.to_line();
            assert!(!line.contains('\n'));
            assert_eq!(parse_message(&line).unwrap(), m);
        }
    }
    assert_eq!(parse_message(r#"{"kind":"best"}"#).unwrap(), WireMessage::Best(BestPayload::default()));
}

#[test]
fn fuzzed_lines_never_crash() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let space = serde_json::to_value(mixed_sphere().space).unwrap();
    let hello = json!({"kind": "hello", "payload": {"space": space}}).to_string();
    let fragments: [&[u8]; 8] = [b"{", b"}", b"\"kind\"", b":", b"\"observe\"", b"[", b"null", b"\"payload\""];
    let mut session = Session::new(None);
    let mut responses = 0;
    for i in 0..10_000 {
        if i == 5000 {
            assert!(matches!(session.handle_line(&hello), Some(WireMessage::Ack)));
        }
        let mut line = Vec::new();
        for _ in 0..rng.random_range(0..40) {
            if rng.random::<bool>() {
                line.extend_from_slice(fragments[rng.random_range(0..fragments.len())]);
            } else {
                line.push(rng.random::<u8>());
            }
        }
        line.retain(|&b| b != b'\n');
        match session.handle_bytes(&line) {
            Some(WireMessage::Error { .. }) => responses += 1,
            Some(other) => panic!("junk accepted: {other:?}"),
            None => assert!(line.iter().all(|b| b.is_ascii_whitespace())),
        }
    }
    assert!(responses > 9000);
    // the session still works after the junk
    assert!(matches!(session.handle_line(r#"{"kind":"suggest_request"}"#), Some(WireMessage::Suggestions { .. })));
}

/// Drives a full session over the wire; returns the final best value.
fn serve_session(seed: u64) -> f64 {
    let obj = mixed_sphere();
    let config = OptimizerConfig::default().with_seed(seed);
    let hello = WireMessage::Hello(Hello { space: obj.space.clone(), config: Some(config) });
    let mut session = Session::new(None);
    assert_eq!(session.handle_line(&hello.to_line()), Some(WireMessage::Ack));
    for _ in 0..16 {
        let Some(WireMessage::Suggestions { points }) = session.handle_line(r#"{"kind":"suggest_request"}"#) else {
            panic!("expected suggestions");
        };
        assert_eq!(points.len(), 8);
        let values = points.iter().map(|p| Some(obj.evaluate(p))).collect();
        let msg = WireMessage::Observe { points, values };
        assert_eq!(session.handle_line(&msg.to_line()), Some(WireMessage::Ack));
    }
    match session.handle_line(r#"{"kind":"best"}"#) {
        Some(WireMessage::Best(BestPayload { point: Some(p), value: Some(v) })) => {
            assert_eq!(obj.evaluate(&p), v);
            v
        }
        other => panic!("expected best, got {other:?}"),
    }
}

#[test]
fn scripted_session_beats_random_driver() {
    let seeds = [0u64, 1, 2, 3, 4];
    let served: Vec<f64> = seeds.iter().map(|&s| serve_session(s)).collect();
    let random: Vec<f64> =
        run_study(&Arm::random(), &mixed_sphere(), &seeds).into_iter().map(|t| t.unwrap().final_best()).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&served) <= mean(&random), "served {served:?} random {random:?}");
}

#[test]
fn protocol_errors_name_the_expected_kind() {
    let mut s = Session::new(None);
    let err = |m: Option<WireMessage>| match m {
        Some(WireMessage::Error { message }) => message,
        other => panic!("expected error, got {other:?}"),
    };
    assert!(err(s.handle_line(r#"{"kind":"suggest_request"}"#)).contains("expected hello"));
    assert!(err(s.handle_line(r#"{"kind":"frobnicate"}"#)).contains("malformed"));
    let space = SearchSpace::new(vec![ParamSpec::real("x", 0.0, 1.0)]).unwrap();
    let hello = WireMessage::Hello(Hello { space, config: Some(OptimizerConfig { batch_size: 2, ..Default::default() }) });
    assert_eq!(s.handle_line(&hello.to_line()), Some(WireMessage::Ack));
    let Some(WireMessage::Suggestions { points }) = s.handle_line(r#"{"kind":"suggest_request"}"#) else { panic!() };
    assert!(err(s.handle_line(r#"{"kind":"suggest_request"}"#)).contains("expected observe"));
    let short = WireMessage::Observe { points: points[..1].to_vec(), values: vec![Some(1.0)] };
    assert!(!err(s.handle_line(&short.to_line())).is_empty());
    assert!(s.optimizer().unwrap().history().is_empty());
    let ok = WireMessage::Observe { points, values: vec![Some(1.0), None] };
    assert_eq!(s.handle_line(&ok.to_line()), Some(WireMessage::Ack));
    assert_eq!(s.optimizer().unwrap().history().imputed_count(), 1);
    assert!(err(s.handle_line(r#"{"kind":"ack"}"#)).contains("expected suggest_request"));
}

#[test]
fn serve_over_stdio() {
    let space = serde_json::to_value(SearchSpace::new(vec![ParamSpec::integer("n", 0, 9)]).unwrap()).unwrap();
    let hello = json!({"kind": "hello", "payload": {"space": space}}).to_string();
    let stdin = format!("{hello}\n\nnot json\n{{\"kind\":\"suggest_request\"}}\n");
    let (code, out, _) = invoke(&["serve", "--seed", "3"], &stdin);
    assert_eq!(code, EXIT_OK);
    let lines: Vec<WireMessage> = out.lines().map(|l| parse_message(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], WireMessage::Ack);
    assert!(matches!(lines[1], WireMessage::Error { .. }));
    assert!(matches!(&lines[2], WireMessage::Suggestions { points } if points.len() == 8));
}

fn write_space(dir: &std::path::Path) -> String {
    let space = SearchSpace::new(vec![
        ParamSpec::real("x", -2.0, 2.0),
        ParamSpec::integer("k", 1, 5),
        ParamSpec::boolean("flag"),
    ])
    .unwrap();
    let path = dir.join("space.json");
    std::fs::write(&path, serde_json::to_string(&space).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn write_config(dir: &std::path::Path, text: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_against_constant_program() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let config = write_config(dir.path(), r#"{"max_iterations": 1}"#);
    let (code, out, _) = invoke(&["run", "--space", &space, "--config", &config, "--cmd", "echo 0"], "");
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["value"], json!(0.0));
    assert_eq!(v["evaluations"], json!(8));
    assert_eq!(v["warnings"], json!(0));
}

#[test]
fn run_counts_failed_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let config = write_config(dir.path(), r#"{"max_iterations": 2, "batch_size": 4}"#);
    // "nan" whenever the boolean is true, otherwise |x|
    let cmd = r#"read p; case "$p" in *'"flag":true'*) echo nan;; *) echo "$p" | sed 's/.*"x":\([-0-9.e]*\).*/\1/' | tr -d -;; esac"#;
    let (code, out, err) = invoke(&["run", "--space", &space, "--config", &config, "--cmd", cmd, "--seed", "1"], "");
    assert_eq!(code, EXIT_OK, "{err}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let warnings = v["warnings"].as_u64().unwrap() as usize;
    assert_eq!(warnings, err.lines().filter(|l| l.starts_with("warning:")).count());
    assert!(warnings > 0 && warnings < 8);
    assert_eq!(v["point"]["flag"], json!(false));

    let (code, _, _) = invoke(&["run", "--space", &space, "--config", &config, "--cmd", "exit 3"], "");
    assert_eq!(code, EXIT_OK);
}

#[test]
fn run_is_deterministic_given_seed() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let config = write_config(dir.path(), r#"{"max_iterations": 3, "batch_size": 4}"#);
    let cmd = r#"sed 's/.*"k":\([0-9]*\).*/\1/'"#;
    let a = invoke(&["run", "--space", &space, "--config", &config, "--cmd", cmd, "--seed", "7"], "");
    let b = invoke(&["run", "--space", &space, "--config", &config, "--cmd", cmd, "--seed", "7"], "");
    assert_eq!(a.0, EXIT_OK, "{}", a.2);
    assert_eq!(a.1, b.1);
}

#[test]
fn bench_contract() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("single");
    let (code, _, err) =
        invoke(&["bench", "--arm", "full", "--objective", "mixed-sphere", "--seeds", "3", "--out", out.to_str().unwrap()], "");
    assert_eq!(code, EXIT_OK, "{err}");
    let mut csv = csv::Reader::from_path(out.join("traces.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = csv.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3 * 16);
    let mut seeds: Vec<&str> = rows.iter().map(|r| &r[2]).collect();
    seeds.dedup();
    assert_eq!(seeds, ["0", "1", "2"]);
    assert!(out.join("scores.json").exists());

    let (code, _, err) = invoke(&["bench", "--objective", "no-such-thing"], "");
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("no-such-thing"));
    assert_eq!(invoke(&["bench", "--seeds", "zero"], "").0, EXIT_USAGE);
    assert_eq!(invoke(&["bench", "--frobnicate"], "").0, EXIT_USAGE);
    assert_eq!(invoke(&["--help"], "").0, EXIT_OK);
}

#[test]
fn bench_ablation_writes_four_arms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let (code, stdout, err) = invoke(&["bench", "--suite", "builtin", "--seeds", "1", "--out", out.to_str().unwrap()], "");
    assert_eq!(code, EXIT_OK, "{err}");
    let scores: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("scores.json")).unwrap()).unwrap();
    let names: Vec<&str> = scores["arms"].as_array().unwrap().iter().map(|a| a["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["baseline", "tuning", "arp", "full"]);
    assert!(stdout.contains("aggregate"));
}
