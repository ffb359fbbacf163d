use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn sgp(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sgp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn run_config(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    sgp(&args, out)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn bowen_root_on_doubling() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("bowen-root", &configs().join("doubling.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("t* = 1.00 ± 0.02"), "{}", stdout(&o));
    let trace = std::fs::read_to_string(dir.path().join("bowen_trace.csv")).unwrap();
    assert!(trace.starts_with("t,pressure\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert!(manifest["config"]["system"]["maps"].is_array());
}

#[test]
fn entropy_of_cantor() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("entropy", &configs().join("cantor.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("h = 0.693 ± 0.05"), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("entropy.csv")).unwrap();
    assert!(csv.starts_with("variant,N,epsilon,n_words,log_avg_sum,stderr\n"));
}

#[test]
fn schema_errors_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        r#"{"system": {"metric": "circle"}, "region": {"kind": "interval", "a": 0, "b": 1},
            "resolution": 0.01, "schedule": {"word_lengths": [2, 3], "epsilons": [0.1]}}"#,
    );
    let o = run_config("pressure", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("system.maps"), "{}", stderr(&o));

    let cfg = write_config(
        dir.path(),
        "noseed.json",
        r#"{"system": {"maps": [{"kind": "linear_mod1", "slope": 2}]}, "region": {"kind": "interval", "a": 0, "b": 1},
            "resolution": 0.001, "schedule": {"word_lengths": [2, 3], "epsilons": [0.1]}, "params": {"points": [0.3]}}"#,
    );
    let o = run_config("local-pressure", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("`seed`"), "{}", stderr(&o));

    let o = sgp(&["pressure"], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diagnostics_exit_3_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("bowen-root", &configs().join("pomeau.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("WARN_NONEXPANDING"));
    assert!(dir.path().join("manifest.json").exists() && dir.path().join("summary.txt").exists());

    let coarse = write_config(
        dir.path(),
        "coarse.json",
        r#"{"system": {"maps": [{"kind": "linear_mod1", "slope": 2}]}, "region": {"kind": "interval", "a": 0, "b": 1},
            "resolution": 0.01, "schedule": {"word_lengths": [2, 3, 4, 5], "epsilons": [0.1]}}"#,
    );
    let out = dir.path().join("coarse");
    let o = run_config("pressure", &coarse, &out, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("UNRESOLVED"));
    assert!(out.join("pressure.csv").exists());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    // three generators and a tiny budget force Monte-Carlo averaging
    let cfg = write_config(
        dir.path(),
        "mc.json",
        r#"{"system": {"maps": [{"kind": "linear_mod1", "slope": 2}, {"kind": "linear_mod1", "slope": 3},
                                {"kind": "linear_mod1", "slope": 4}],
                       "potential": {"kind": "scaled_log_factor", "value": -0.5}},
            "region": {"kind": "interval", "a": 0, "b": 1}, "resolution": 0.0005,
            "schedule": {"word_lengths": [3, 4, 5], "epsilons": [0.1], "word_budget": 32, "mc_samples": 40},
            "seed": 11}"#,
    );
    let read = |d: &Path| std::fs::read(d.join("pressure.csv")).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, threads) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        let o = run_config("pressure", &cfg, out, &["--threads", threads]);
        assert!(matches!(o.status.code(), Some(0 | 3)), "{}", stderr(&o));
    }
    assert_eq!(read(&a), read(&b));
    assert_eq!(read(&a), read(&c));
    let d = dir.path().join("d");
    let o = run_config("pressure", &cfg, &d, &["--seed", "12"]);
    assert!(matches!(o.status.code(), Some(0 | 3)));
    assert_ne!(read(&a), read(&d));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 12);
}

#[test]
fn lyapunov_classify_and_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("classify", &configs().join("pomeau.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("x = 0: A(0,inf) false") && s.contains("x = 0.5: A(0,inf) true"), "{s}");
    let o = run_config("lyapunov", &configs().join("pomeau.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("lyapunov.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 10);
    let o = run_config("dimension", &configs().join("cantor.json"), dir.path(), &[]);
    assert!(stdout(&o).contains("box dimension = 0.631") && stdout(&o).contains("Moran dimension = 0.6309"));
}

#[test]
fn skew_and_local_pressure() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config("skew-check", &configs().join("skew.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).matches(": pass; per-cell bounds hold").count(), 2);
    let csv = std::fs::read_to_string(dir.path().join("skew_1.csv")).unwrap();
    assert!(csv.starts_with("N,epsilon,log_multiplicity,"));
    let o = run_config("local-pressure", &configs().join("local_doubling.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("(tol 0.1): pass"));
    let csv = std::fs::read_to_string(dir.path().join("local_pressure.csv")).unwrap();
    assert_eq!(csv.matches("x,n,r,extreme,word,value").count(), 1);
}

#[test]
fn acceptance_subset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "acc.json",
        r#"{"system": {"maps": [{"kind": "linear_mod1", "slope": 2}]}, "region": {"kind": "interval", "a": 0, "b": 1},
            "resolution": 0.01, "schedule": {"word_lengths": [2, 3], "epsilons": [0.1]}, "params": {"criteria": [3, 8]}}"#,
    );
    let o = run_config("acceptance", &cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches(" PASS ").count(), 2);
    let csv = std::fs::read_to_string(dir.path().join("out/acceptance.csv")).unwrap();
    assert!(csv.starts_with("criterion,title,pass\n3,"));
}
