use std::process::{Command, Output};

use serde_json::Value;

fn einslot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_einslot"))
        .args(args)
        .output()
        .unwrap()
}

fn report(args: &[&str]) -> (i32, Value) {
    let out = einslot(args);
    let doc = serde_json::from_slice(&out.stdout).expect("report on stdout");
    (out.status.code().unwrap(), doc)
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn phase_line<'a>(listing: &'a str, phase: &str) -> &'a str {
    listing
        .lines()
        .find(|l| l.starts_with(&format!("[{phase}]")))
        .unwrap()
}

#[test]
fn run_matmul_matches_oracle() {
    let (code, doc) = report(&[
        "run",
        "ij,jk->ik",
        "--shapes",
        "4x5,5x2",
        "--backend",
        "ref",
    ]);
    assert_eq!(code, 0);
    assert_eq!(doc["correctness"]["oracle_match"], true);
    assert_eq!(doc["depth"], 3);
    assert_eq!(doc["cost"]["levels_consumed"], 3);
    assert_eq!(doc["backend"], "ref");
    assert_eq!(doc["shapes"], serde_json::json!([[4, 5], [5, 2]]));
    assert!(doc["error"].is_null());
    let phases: Vec<&str> = doc["cost"]["per_phase"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["phase"].as_str().unwrap())
        .collect();
    assert_eq!(
        phases,
        ["permute", "broadcast", "multiply", "reduce", "mask"]
    );
}

#[test]
fn report_fields_are_stable() {
    let (_, doc) = report(&["run", "ij->j", "--shapes", "3x3"]);
    let keys: Vec<&str> = doc
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    for field in [
        "equation",
        "shapes",
        "slot_count",
        "key_mode",
        "backend",
        "correctness",
        "cost",
        "depth",
        "wall_time_ms",
        "trace",
        "error",
    ] {
        assert!(keys.contains(&field), "missing {field}");
    }
    let (_, again) = report(&["run", "ij->j", "--shapes", "3x3"]);
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_ms");
        v
    };
    assert_eq!(strip(doc), strip(again));
}

#[test]
fn bsgs_keys_need_fewer_rotations() {
    let rotations = |keys: &str| {
        let (code, doc) = report(&["run", "ij,jk->ik", "--shapes", "4x5,5x2", "--keys", keys]);
        assert_eq!(code, 0);
        assert_eq!(doc["key_mode"], keys);
        doc["cost"]["rotations_total"].as_u64().unwrap()
    };
    assert!(rotations("pow2+bsgs") < rotations("pow2"));
}

#[test]
fn oversized_expression_reports_does_not_fit() {
    let (code, doc) = report(&[
        "run",
        "ij,jk->ik",
        "--shapes",
        "128x128,128x128",
        "--slots",
        "8",
    ]);
    assert_eq!(code, 3);
    assert_eq!(doc["error"]["kind"], "DoesNotFit");
    assert!(doc["correctness"].is_null());
}

#[test]
fn exit_codes_for_validation_and_levels() {
    let (code, doc) = report(&["run", "ij,jk->ik", "--shapes", "4x5,6x2"]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "SizeConflict");
    let (code, doc) = report(&["run", "ij,jk->ik", "--shapes", "4x5,5x2", "--level", "2"]);
    assert_eq!(code, 3);
    assert_eq!(doc["error"]["kind"], "LevelExhausted");
    let (code, _) = report(&["run", "ij", "--shapes", "4x5"]);
    assert_eq!(code, 2);
}

#[test]
fn noisy_run_uses_loose_tolerance() {
    let (code, doc) = report(&[
        "run",
        "ij,jk->ik",
        "--shapes",
        "4x5,5x2",
        "--noise",
        "1e-9",
        "--seed",
        "3",
    ]);
    assert_eq!(code, 0);
    assert_eq!(doc["correctness"]["tolerance"], 1e-4);
    assert!(doc["correctness"]["max_abs_error"].as_f64().unwrap() > 0.0);
}

#[test]
fn heavy_noise_is_a_mismatch() {
    let (code, doc) = report(&["run", "ij,jk->ik", "--shapes", "4x5,5x2", "--noise", "0.5"]);
    assert_eq!(code, 4);
    assert_eq!(doc["correctness"]["oracle_match"], false);
}

#[test]
fn json_file_output_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    let out = einslot(&[
        "run",
        "ij->ji",
        "--shapes",
        "3x5",
        "--trace",
        "--json",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let phases = doc["trace"]["phases"].as_array().unwrap();
    assert_eq!(phases.len(), 5);
    assert!(phases[2]["ops"].as_array().unwrap().is_empty());
}

#[test]
fn tensor_files_as_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let seq = |n: usize| (1..=n).map(|v| v.to_string()).collect::<Vec<_>>().join(",");
    std::fs::write(&a, format!(r#"{{"shape": [4, 5], "data": [{}]}}"#, seq(20))).unwrap();
    std::fs::write(&b, format!(r#"{{"shape": [5, 2], "data": [{}]}}"#, seq(10))).unwrap();
    let (code, doc) = report(&[
        "run",
        "ij,jk->ik",
        "--input",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(doc["correctness"]["max_abs_error"], 0.0);

    std::fs::write(&b, r#"{"shape": [5, 2], "data": [1, 2, 3]}"#).unwrap();
    let (code, doc) = report(&[
        "run",
        "ij,jk->ik",
        "--input",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert_eq!(doc["error"]["kind"], "InvalidInput");
}

#[test]
fn trace_reduce_rotations() {
    let out = einslot(&["trace", "ij,jk->ik", "--shapes", "4x5,5x2", "--slots", "64"]);
    assert!(out.status.success());
    let listing = stdout(&out);
    assert!(phase_line(&listing, "reduce").contains("rotations [+8, +16, +32]"));
    assert!(phase_line(&listing, "mask").contains("masks 1"));
}

#[test]
fn trace_dot_has_empty_permute() {
    let out = einslot(&["trace", "i,i->", "--shapes", "8,8"]);
    let listing = stdout(&out);
    assert!(phase_line(&listing, "permute").starts_with("[permute] 0 op(s)"));
}

#[test]
fn trace_transpose_has_empty_multiply() {
    let out = einslot(&["trace", "ij->ji", "--shapes", "3x5"]);
    let listing = stdout(&out);
    assert!(phase_line(&listing, "multiply").starts_with("[multiply] 0 op(s)"));
}

#[test]
fn key_listings() {
    let count = |args: &[&str]| {
        let out = einslot(args);
        assert!(out.status.success());
        stdout(&out)
            .lines()
            .find_map(|l| l.strip_prefix("key count: "))
            .unwrap()
            .parse::<usize>()
            .unwrap()
    };
    assert_eq!(count(&["keys", "--slots", "16384", "--keys", "pow2"]), 14);
    assert_eq!(
        count(&["keys", "--slots", "16384", "--keys", "pow2+bsgs"]),
        270
    );
    assert_eq!(count(&["keys", "--slots", "1024", "--keys", "pow2"]), 10);
    assert_eq!(einslot(&["keys", "--slots", "100"]).status.code(), Some(2));
}
