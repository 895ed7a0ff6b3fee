use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn modcma(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modcma"))
        .current_dir(dir)
        .env("MODCMA_OUT", dir)
        .args(args)
        .output()
        .expect("spawn modcma")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_manifest(dir: &Path, name: &str, configs: Option<&str>, output: &str) {
    let mut text = String::new();
    if let Some(c) = configs {
        text.push_str(&format!("configs = {c}\n"));
    }
    text.push_str(&format!(
        "fids = 1\ninstances = 1, 2\nruns = 2\nbudget = 2000\nseed = 11\noutput = {output}\n"
    ));
    fs::write(dir.join(name), text).unwrap();
}

#[test]
fn enumerate_counts() {
    let dir = tempfile::tempdir().unwrap();
    let all = modcma(dir.path(), &["enumerate"]);
    assert!(all.status.success());
    assert_eq!(stdout(&all).trim(), "4608");
    let plain = modcma(dir.path(), &["enumerate", "--no-restarts"]);
    assert_eq!(stdout(&plain).trim(), "1536");
    let listed = modcma(dir.path(), &["enumerate", "--no-restarts", "--list"]);
    let lines: Vec<_> = stdout(&listed).lines().map(str::to_owned).collect();
    assert_eq!(lines.len(), 1536);
    assert!(lines.iter().all(|l| l.len() == 11 && l.ends_with('0')));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(modcma(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(modcma(dir.path(), &["select", "--method", "best"]).status.code(), Some(1));
    assert_eq!(modcma(dir.path(), &["--help"]).status.code(), Some(0));
    let missing = modcma(dir.path(), &["metrics", "--data", "absent.csv", "--budget", "10"]);
    assert_eq!(missing.status.code(), Some(2));
    fs::write(dir.path().join("bad.txt"), "fids = 1\nbogus = 3\n").unwrap();
    let bad = modcma(dir.path(), &["run-static", "--manifest", "bad.txt"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_manifest(d, "static.txt", Some("00000000000 10000000000 00100000000 10100000000"), "static.csv");
    let run = modcma(d, &["run-static", "--manifest", "static.txt", "--workers", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = fs::read_to_string(d.join("static.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 4 * 2 * 2);

    let again = modcma(d, &["run-static", "--manifest", "static.txt"]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("0 executed"));
    assert_eq!(fs::read_to_string(d.join("static.csv")).unwrap(), rows);

    let metrics = modcma(d, &["metrics", "--data", "static.csv", "--budget", "2000", "--out", "table.csv"]);
    assert!(metrics.status.success());
    let table = fs::read_to_string(d.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 4 * 51);

    for method in ["original", "sliding-mean", "sliding-worst"] {
        let out = format!("sel_{method}.csv");
        let sel = modcma(
            d,
            &["select", "--method", method, "--data", "static.csv", "--budget", "2000", "--top-k", "4", "--out", &out],
        );
        assert!(sel.status.success(), "{method}: {}", String::from_utf8_lossy(&sel.stderr));
        let n = fs::read_to_string(d.join(&out)).unwrap().lines().count() - 1;
        assert!((1..=4).contains(&n), "{method}: {n} triples");
    }

    write_manifest(d, "adaptive.txt", None, "adaptive.csv");
    let adaptive = modcma(d, &["run-adaptive", "--manifest", "adaptive.txt", "--selection", "sel_sliding-mean.csv"]);
    assert!(adaptive.status.success(), "{}", String::from_utf8_lossy(&adaptive.stderr));

    let data = ["--data", "static.csv", "--data", "adaptive.csv", "--budget", "2000"];
    let mut args = vec!["analyze", "--selection", "sel_sliding-mean.csv"];
    args.extend(data);
    let analysis = modcma(d, &args);
    assert!(analysis.status.success(), "{}", String::from_utf8_lossy(&analysis.stderr));
    assert!(stdout(&analysis).lines().nth(1).unwrap().trim_start().starts_with('1'));

    let mut args = vec!["export", "--selection", "sel_sliding-mean.csv", "--out", "reports"];
    args.extend(data);
    assert!(modcma(d, &args).status.success());
    for f in ["activation_f1.csv", "activation_f1.svg", "improvement.csv", "predicted_vs_achieved_f1.svg"] {
        assert!(d.join("reports").join(f).exists(), "{f}");
    }
}

#[test]
fn two_stage_writes_rerun_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_manifest(d, "static.txt", Some("00000000000 01000000000 00010000000"), "static.csv");
    assert!(modcma(d, &["run-static", "--manifest", "static.txt"]).status.success());
    let stage_a = modcma(
        d,
        &[
            "select", "--method", "two-stage", "--data", "static.csv", "--budget", "2000",
            "--top-k", "2", "--static-quota", "2", "--rerun-runs", "2", "--rerun-instances", "1",
        ],
    );
    assert!(stage_a.status.success(), "{}", String::from_utf8_lossy(&stage_a.stderr));
    let manifest = fs::read_to_string(d.join("rerun_manifest.txt")).unwrap();
    assert!(manifest.contains("output = rerun.csv"));

    assert!(modcma(d, &["run-static", "--manifest", "rerun_manifest.txt"]).status.success());
    let stage_b = modcma(d, &["two-stage", "--data", "rerun.csv", "--budget", "2000", "--top-k", "3"]);
    assert!(stage_b.status.success(), "{}", String::from_utf8_lossy(&stage_b.stderr));
    let csv = stdout(&stage_b);
    let first = csv.lines().nth(1).expect("one triple");
    assert!(first.contains("two_stage"));
    let ert: f64 = first.split(',').nth(6).unwrap().parse().unwrap();
    assert!(ert > 0.0);
}
