use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vanish-damp"))
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn summary(dir: &Path, name: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("{name}_summary.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn j0_example_fits_inverse_time_decay() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", example("j0.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = summary(dir.path(), "j0");
    let k = s["rate_fit"]["exponent"].as_f64().unwrap();
    assert!((k + 1.0).abs() < 0.02, "exponent {k}");
    assert_eq!(s["bootstrapped"], true);
    let series = fs::read_to_string(dir.path().join("j0_series.csv")).unwrap();
    assert!(series.starts_with("t,x_0,v_0,E,a,gnorm\n"));
    let events = fs::read_to_string(dir.path().join("j0_events.csv")).unwrap();
    let first: f64 = events.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    // first zero of J1, where x' = -J1 changes sign
    assert!((first - 3.831705970207512).abs() < 1e-6, "{first}");
}

#[test]
fn flat_bottom_example_does_not_converge() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", example("flatbottom_c1.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(summary(dir.path(), "flatbottom_c1")["classification"]["verdict"], "not_converged");
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["run", example("j0.cfg").to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success());
    }
    for f in ["j0_series.csv", "j0_events.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let mut sa = summary(a.path(), "j0");
    let mut sb = summary(b.path(), "j0");
    sa["wall_clock_ms"] = 0.into();
    sb["wall_clock_ms"] = 0.into();
    assert_eq!(sa, sb);
}

#[test]
fn unknown_potential_exits_two_and_names_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(example("j0.cfg")).unwrap().replace("kind = quadratic", "kind = mexican_hat");
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, text).unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("key 'kind'") && err.contains("mexican_hat") && err.contains("line "), "{err}");
}

#[test]
fn solver_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(example("j0.cfg")).unwrap().replace("t_end = 1000", "t_end = 1000\nmax_steps = 10");
    let cfg = dir.path().join("short.cfg");
    fs::write(&cfg, text).unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("max_steps_exceeded"), "{}", stderr(&o));
}

#[test]
fn verify_list_prints_ids_only() {
    let o = run(&["verify", "--list"]);
    assert!(o.status.success());
    let ids: Vec<String> = stdout(&o).lines().map(|l| l.split(' ').next().unwrap().to_owned()).collect();
    let want: Vec<String> = (1..=13).map(|i| format!("A{i}")).collect();
    assert_eq!(ids, want);
}

#[test]
fn verify_tampered_tolerance_fails_a1() {
    let o = run(&["verify", "--only", "A1", "--rel-tol", "1e-2"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("FAIL A1"), "{out}");
    assert!(out.contains("max |x - J0| = "), "{out}");
}

#[test]
fn verify_single_criterion_passes() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("v.json");
    let o = run(&["verify", "--only", "A7", "--json", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(json).unwrap()).unwrap();
    assert_eq!(v[0]["id"], "A7");
    assert_eq!(v[0]["pass"], true);
}

#[test]
fn oracle_prints_csv() {
    let o = run(&["oracle", "bessel-j", "--param", "0", "--t0", "0", "--t1", "1", "--points", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("t,value"));
    assert_eq!(lines.next(), Some("0.0,1.0"));
    let j01: f64 = lines.next().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!((j01 - 0.7651976865579666).abs() < 1e-15);
}

#[test]
fn sweep_over_amplitude_recovers_exponents() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep", example("decay_sweep.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()])
        .env("VANISH_DAMP_JOBS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("decay_sweep_sweep.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    for pair in v["mean_exponents"].as_array().unwrap() {
        let (c, k) = (pair[0].as_f64().unwrap(), pair[1].as_f64().unwrap());
        assert!((k + c).abs() / c < 0.05, "c {c}: {k}");
    }
}

#[test]
fn bad_jobs_variable_is_a_config_error() {
    let o = bin()
        .args(["sweep", example("decay_sweep.cfg").to_str().unwrap()])
        .env("VANISH_DAMP_JOBS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn double_well_sweep_settles_in_the_wells() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["sweep", example("double_well_sweep.cfg").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("double_well_sweep_sweep.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let f = &v["convergence_fractions"];
    let wells = f["-1.000000"].as_f64().unwrap_or(0.0) + f["1.000000"].as_f64().unwrap_or(0.0);
    assert!((wells - 1.0).abs() < 1e-12, "{f}");
    assert!(f.get("0.000000").is_none());
}
