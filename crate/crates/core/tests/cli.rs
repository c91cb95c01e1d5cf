use std::path::Path;
use std::process::{Command, Output};

use sieve_core::corpus_io::read_selection;

fn sieve(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sieve"))
        .args(args)
        .current_dir(dir)
        .env_remove("SIEVE_BACKEND_URL")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sieve(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    sieve(dir, args).status.code().unwrap()
}

fn synth(dir: &Path, n: &str) {
    ok(dir, &["synth", "--n", n, "--rate", "0.3", "--seed", "1", "--out", "corpus"]);
}

#[test]
fn version_names_formats() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok(dir.path(), &["--version"]);
    assert!(v.starts_with("sieve "), "{v}");
    assert!(v.contains("selection format v1") && v.contains("shard format v1"), "{v}");
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "30");
    let m = "corpus/manifest.jsonl";
    std::fs::write(d.join("bad.conf"), "aplha = 0.5\n").unwrap();
    assert_eq!(code(d, &["--config", "bad.conf", "run", "--manifest", m, "--out", "o"]), 1);
    assert_eq!(code(d, &["run", "--manifest", m, "--out", "o", "--k", "1.5"]), 1);
    assert_eq!(code(d, &["run", "--manifest", m, "--out", "o", "--set", "max_len=2"]), 1);
    assert_eq!(code(d, &["no-such-command"]), 1);
    assert_eq!(code(d, &["run", "--manifest", "missing.jsonl", "--out", "o"]), 2);
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let url = format!("http://127.0.0.1:{port}");
    assert_eq!(
        code(d, &["run", "--manifest", m, "--out", "o", "--backend", "service", "--backend-url", &url]),
        3
    );
    std::fs::write(d.join("dup.jsonl"), "{\"uid\":\"a\"}\n{\"uid\":\"a\"}\n").unwrap();
    assert_eq!(code(d, &["run", "--manifest", "dup.jsonl", "--out", "o"]), 4);
    assert!(!d.join("o").join("selection.jsonl").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "100");
    std::fs::write(d.join("p.conf"), "k = 0.5\nalpha = 0.3\n").unwrap();
    ok(d, &["--config", "p.conf", "run", "--manifest", "corpus/manifest.jsonl", "--out", "a"]);
    assert_eq!(read_selection(d.join("a/selection.jsonl")).unwrap().len(), 50);
    ok(d, &["--config", "p.conf", "run", "--manifest", "corpus/manifest.jsonl", "--out", "b", "--k", "0.1"]);
    assert_eq!(read_selection(d.join("b/selection.jsonl")).unwrap().len(), 10);
    let report = std::fs::read_to_string(d.join("b/report.jsonl")).unwrap();
    let config: serde_json::Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
    assert_eq!(config["config"]["alpha"], "0.3");
    assert_eq!(config["config"]["k"], "0.1");
}

#[test]
fn mask_echoes_masked_lines() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("t.txt"), "a photo of a cat on a mat\nAn IMAGE OF an image of snow\n").unwrap();
    assert_eq!(ok(d, &["mask", "--in", "t.txt"]), "a cat on a mat\nsnow\n");
    std::fs::write(d.join("p.txt"), "# bare list\nphoto of\nimage of\n").unwrap();
    assert_eq!(
        ok(d, &["mask", "--in", "t.txt", "--phrases", "p.txt"]),
        "a a cat on a mat\nAn an snow\n"
    );
}

#[test]
fn selection_tools() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "200");
    ok(d, &["run", "--manifest", "corpus/manifest.jsonl", "--out", "r"]);
    let sel = read_selection(d.join("r/selection.jsonl")).unwrap();
    assert_eq!(ok(d, &["stats", "iou", "--a", "r/selection.jsonl", "--b", "r/selection.jsonl"]).trim(), "1");

    let members: String = sel.uids()[..5].iter().map(|u| format!("{u}\n")).collect();
    std::fs::write(d.join("members.txt"), format!("# cluster members\n{members}not-a-uid\n")).unwrap();
    ok(d, &["intersect", "--a", "r/selection.jsonl", "--b", "members.txt", "--out", "i.jsonl"]);
    let i = read_selection(d.join("i.jsonl")).unwrap();
    assert_eq!(i.uids(), &sel.uids()[..5]);
    assert_eq!(i.k(), 5.0 / 200.0);

    ok(d, &["intersect", "--a", "r/selection.jsonl", "--coverage", "corpus/manifest.jsonl", "--out", "c.jsonl"]);
    let c = read_selection(d.join("c.jsonl")).unwrap();
    assert!(c.uid_set().is_subset(&sel.uid_set()));

    let iou: f64 = ok(d, &["stats", "iou", "--a", "r/selection.jsonl", "--b", "i.jsonl"]).trim().parse().unwrap();
    assert_eq!(iou, 5.0 / 40.0);
}

#[test]
fn eval_and_simmatrix_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, "300");
    ok(d, &["run", "--manifest", "corpus/manifest.jsonl", "--out", "r"]);
    ok(d, &["eval", "--corpus", "corpus", "--scores", "r/fused.scores.jsonl", "--ks", "0.1,0.2,0.3", "--report", "e.jsonl"]);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(d.join("e.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["metric"], "auc");
    assert!(lines[0]["value"].as_f64().unwrap() > 0.9);
    assert_eq!(lines[2]["selected_count"], 60);

    std::fs::write(d.join("s.txt"), "red cat\n\nblue car\nA photo of red cat\n").unwrap();
    let csv = ok(d, &["stats", "simmatrix", "--texts", "s.txt", "--backend", "mock"]);
    let m: Vec<Vec<f64>> = csv
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(m.len(), 3);
    assert!(m.iter().all(|row| row.len() == 3));
    assert!((m[0][2] - 1.0).abs() < 1e-6, "masking makes rows 0 and 2 identical");
}
