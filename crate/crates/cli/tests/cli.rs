use std::path::Path;
use std::process::{Command, Output};

fn chanest(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chanest"))
        .args(args)
        .env("CHANEST_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn design_check_designed_covers_epa() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanest(dir.path(), &["design-check", "--designed", "designed", "--candidate", "epa"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["applicable"], true);
    assert!(report["violations"].as_array().unwrap().is_empty());
    assert!(dir.path().join("design-check.config.json").exists());
}

#[test]
fn design_check_etu_rejects_designed_on_max_delay() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanest(dir.path(), &["design-check", "--designed", "etu", "--candidate", "designed"]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    assert_eq!(report["applicable"], false);
    let kinds: Vec<&str> = report["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["kind"].as_str().unwrap())
        .collect();
    assert!(kinds.iter().any(|k| k.contains("max_delay")), "{kinds:?}");
}

#[test]
fn no_arguments_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanest(dir.path(), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_usage_error_and_help_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(chanest(dir.path(), &["eigs", "--bogus"]).status.code(), Some(1));
    assert_eq!(chanest(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_error_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanest(dir.path(), &["eigs", "--channel", "no-such-channel"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("eigs.config.json").exists());
}

#[test]
fn eigs_prints_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = chanest(dir.path(), &["eigs", "--channel", "flat", "--count", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "index,eigenvalue");
    assert_eq!(lines.len(), 4);
    let first: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((first - 72.0).abs() < 1e-9);
}

#[test]
fn identical_config_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let csv = dir.path().join(name);
        let out = chanest(
            dir.path(),
            &[
                "eval", "--estimator", "ls", "--channels", "epa,designed", "--snr", "0:10:10", "--n", "40", "--seed", "9",
                "--threads", threads, "--out", csv.to_str().unwrap(),
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(csv).unwrap()
    };
    assert_eq!(run("a.csv", "1"), run("b.csv", "3"));
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval.config.json")).unwrap()).unwrap();
    assert_eq!(config["subcommand"], "eval");
}

#[test]
fn gen_dataset_and_simulate_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let out = chanest(
        dir.path(),
        &["gen-dataset", "--channel", "epa", "--count", "20", "--snr", "10:10", "--seed", "3", "--out", ds.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ds.join("manifest.json").exists() && ds.join("train.bin").exists() && ds.join("val.bin").exists());

    let sim = dir.path().join("sim");
    let out = chanest(
        dir.path(),
        &["simulate", "--channel", "CDL-A@30", "--snr", "20", "--doppler", "50", "--path", "td", "--out", sim.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = json(&out);
    assert!(summary["ls_mse"].as_f64().unwrap() < 0.1);
    for f in ["h.grid", "y.grid", "ls.grid"] {
        assert!(sim.join(f).exists());
    }
}

#[test]
fn suggest_covers_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let pdp = dir.path().join("suggested.json");
    let out = chanest(dir.path(), &["suggest", "--channels", "epa,eva,dc2", "--out", pdp.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for cand in ["epa", "eva", "dc2"] {
        let out = chanest(dir.path(), &["design-check", "--designed", pdp.to_str().unwrap(), "--candidate", cand]);
        assert_eq!(json(&out)["applicable"], true, "{cand}");
    }
}
