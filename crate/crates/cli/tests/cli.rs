use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nollik::simulation::{generate_scenario, ScenarioId, ScenarioSpec};

fn nollik(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nollik")).args(args).output().unwrap()
}

fn write_s1(dir: &Path, n: usize) -> PathBuf {
    let z = generate_scenario(&ScenarioSpec::new(ScenarioId::S1, n, 31).unwrap()).unwrap().z;
    let path = dir.join("data.csv");
    let body: String = z.iter().map(|v| format!("{v}\n")).collect();
    std::fs::write(&path, format!("z\n{body}")).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: [&str; 8] = ["--iters", "1200", "--burnin", "400", "--thin", "4", "--seed", "3"];

fn fit(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["fit", data.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(&SMALL);
    args.extend_from_slice(extra);
    nollik(&args)
}

#[test]
fn fit_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_s1(dir.path(), 300);
    let out = dir.path().join("run");
    let o = fit(&data, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.csv", "summary.json", "densities.csv", "trace.csv", "trace.json", "runtime.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let report = std::fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "z,p1,lfdr,flag");
    assert_eq!(report.lines().count(), 301);
}

#[test]
fn fit_outputs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_s1(dir.path(), 200);
    for model in ["parametric", "bnp"] {
        let (a, b) = (dir.path().join(format!("{model}-a")), dir.path().join(format!("{model}-b")));
        for out in [&a, &b] {
            let o = fit(&data, out, &["--model", model]);
            assert!(o.status.success(), "{}", stderr(&o));
        }
        for f in ["report.csv", "summary.json", "densities.csv", "trace.csv", "trace.json"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{model} {f}");
        }
    }
}

#[test]
fn grouped_fit_writes_one_directory_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let z = generate_scenario(&ScenarioSpec::new(ScenarioId::S2, 200, 2).unwrap()).unwrap().z;
    let body: String = z.iter().enumerate().map(|(i, v)| format!("{v},{}\n", if i % 2 == 0 { "a" } else { "b" })).collect();
    let data = dir.path().join("g.csv");
    std::fs::write(&data, format!("z,group\n{body}")).unwrap();
    let out = dir.path().join("run");
    let o = fit(&data, &out, &["--model", "grouped"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("summary.json").is_file());
    let groups = std::fs::read_dir(&out).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(groups, 2);
}

#[test]
fn failed_fit_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "z\n1.0\nNaN\n2.0\n").unwrap();
    let out = dir.path().join("run");
    let o = fit(&data, &out, &[]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn malformed_rows_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "z\n1.0\nabc\n2.0\n").unwrap();
    let o = fit(&data, &dir.path().join("run"), &[]);
    assert!(!o.status.success());
    let e = stderr(&o);
    assert!(e.contains("abc") || e.contains("row"), "{e}");
}

#[test]
fn invalid_configurations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_s1(dir.path(), 50);
    let corpus = [
        "alpha = 1.5",
        "unknown_key = 3",
        "[controls]\niterations = 100\nburn_in = 200",
        "[controls]\nthin = 0",
        "[parametric]\nk = 9",
        "[parametric]\nb_rho = -1.0",
        "model = \"bnp\"\n[bnp]\nj = 1",
        "model = \"bnp\"\n[bnp]\nj = 3",
        "[grid]\npoints = 1",
        "[data]\ndf = 0.0",
        "model = \"nonsense\"",
    ];
    for (i, text) in corpus.iter().enumerate() {
        let cfg = dir.path().join(format!("c{i}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let out = dir.path().join(format!("o{i}"));
        let o = nollik(&["fit", data.to_str().unwrap(), "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(!o.status.success(), "accepted config {text:?}");
        assert!(!out.exists(), "config {text:?} left outputs");
    }
}

#[test]
fn threshold_recomputes_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "z,p1\n3.1,0.99\n2.9,0.96\n2.4,0.90\n0.3,0.50\n").unwrap();
    let o = nollik(&["threshold", "--p1", path.to_str().unwrap(), "--alpha", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nu_hat"].as_f64().unwrap(), 0.9);
    assert!((v["bfdr_at_nu"].as_f64().unwrap() - 0.025).abs() < 1e-12);
    assert_eq!(v["n_flagged"].as_u64().unwrap(), 2);
}

#[test]
fn simulate_bh_writes_benchmark() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = nollik(&[
        "simulate", "--scenario", "S1,R-2", "--method", "bh", "--reps", "2", "--n", "200", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("benchmark.csv")).unwrap();
    assert!(csv.starts_with("scenario,method,replication,rule,metric,value"), "{csv}");
    assert!(csv.lines().any(|l| l.starts_with("R-2,bh,")));
}

#[test]
fn theory_prints_characteristics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("t.toml");
    std::fs::write(
        &cfg,
        "rho = 0.1\nsymmetric = [1.0, 2.0]\n[null]\nmu = 0.0\nsigma2 = 1.0\n\
         [[alternative]]\nweight = 0.5\nmu = -3.0\nsigma2 = 1.0\n[[alternative]]\nweight = 0.5\nmu = 3.0\nsigma2 = 1.0\n\
         [weight]\nkind = \"w1\"\nxi = 1.0\nk = 2\n",
    )
    .unwrap();
    let o = nollik(&["theory", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 3, "{text}");
}

#[test]
fn diagnose_reads_saved_trace() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_s1(dir.path(), 150);
    let out = dir.path().join("run");
    assert!(fit(&data, &out, &[]).status.success());
    let o = nollik(&["diagnose", "--trace", out.join("trace.csv").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}
