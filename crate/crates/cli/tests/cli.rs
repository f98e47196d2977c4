use std::path::Path;
use std::process::{Command, Output};

fn relay_sim(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_relay-sim"));
    c.args(args).env_remove("RELAY_SIM_THREADS");
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().expect("run relay-sim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_lines(s: &str) -> Vec<&str> {
    s.lines().filter(|l| !l.starts_with('#')).collect()
}

const ATOM: &str = r#"{"kind":"atom_mixture","base":{"kind":"uniform","sup":1.0},"sup":1.0,"atom":0.2}"#;

#[test]
fn zero_hops_gives_header_and_start_rows() {
    let o = relay_sim(&["trajectory", "--n-hops", "0", "--n-reps", "2", "--start-height", "0.5"], &[]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.starts_with("# config_sha256="));
    assert!(s.contains("# seed=1"));
    assert_eq!(data_lines(&s), vec!["rep,hop,x,h,t", "0,0,0,0.5,inf", "1,0,0,0.5,inf"]);
}

#[test]
fn trajectories_are_reproducible_across_worker_counts() {
    let args = ["trajectory", "--n-hops", "5", "--n-reps", "300", "--seed", "9"];
    let a = relay_sim(&args, &[("RELAY_SIM_THREADS", "1")]);
    let b = relay_sim(&args, &[("RELAY_SIM_THREADS", "3")]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let s = stdout(&a);
    let rows = data_lines(&s);
    assert_eq!(rows.len(), 1 + 300 * 6);
    let other = relay_sim(&["trajectory", "--n-hops", "5", "--n-reps", "300", "--seed", "10"], &[]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn ten_thousand_five_hop_trajectories_are_quick() {
    let t0 = std::time::Instant::now();
    let o = relay_sim(&["trajectory", "--n-hops", "5", "--n-reps", "10000"], &[]);
    assert!(o.status.success());
    assert!(t0.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn finite_range_trajectory_stops_at_the_cemetery() {
    let o = relay_sim(&["trajectory", "--range", "horizontal:0.5", "--n-hops", "50", "--n-reps", "50"], &[]);
    assert!(o.status.success());
    let s = stdout(&o);
    let rows = data_lines(&s);
    assert!(rows.len() > 50 && rows.len() < 51 * 50);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(relay_sim(&["trajectory", "--bogus"], &[]).status.code(), Some(1));
    assert_eq!(relay_sim(&[], &[]).status.code(), Some(1));
    assert_eq!(relay_sim(&["trajectory", "--scheme", "tau7"], &[]).status.code(), Some(1));
    assert_eq!(relay_sim(&["--help"], &[]).status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 1, "unknown_key": true}"#).unwrap();
    let o = relay_sim(&["--config", cfg.to_str().unwrap(), "trajectory"], &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown_key"));
    // tau on a law with an atom at its supremum is rejected.
    assert_eq!(relay_sim(&["trajectory", "--heights", ATOM], &[]).status.code(), Some(1));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 4, "n_reps": 3, "n_hops": 2, "heights": {"kind": "uniform", "sup": 2.0}}"#)
        .unwrap();
    let out = dir.path().join("t.csv");
    let o =
        relay_sim(&["--config", cfg.to_str().unwrap(), "--seed", "5", "trajectory", "-o", out.to_str().unwrap()], &[]);
    assert!(o.status.success());
    let s = std::fs::read_to_string(&out).unwrap();
    assert!(s.contains("# seed=5"));
    assert_eq!(data_lines(&s).len(), 1 + 3 * 3);
}

#[test]
fn density_check_passes_and_sabotage_fails() {
    let dir = tempfile::tempdir().unwrap();
    let rep = dir.path().join("r.json");
    let o = relay_sim(&["density-check", "--criteria", "5", "--scale", "0.3", "--report", rep.to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert!(v["seed"].is_u64());
    assert_eq!(v["config_sha256"].as_str().unwrap().len(), 64);
    let o = relay_sim(
        &["density-check", "--criteria", "5", "--scale", "0.3", "--sabotage", "--report", rep.to_str().unwrap()],
        &[],
    );
    assert_eq!(o.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rep).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
}

#[test]
fn zone_reports_the_infinite_sentinel() {
    let o = relay_sim(&["zone", "--heights", ATOM, "--scheme", "tau2", "--beta", "1", "--tan-theta", "0"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["closed_form"]["expected_length"], "inf");
    assert_eq!(v["eft_class"], "I/F");
}

#[test]
fn zone_closed_forms_and_cdf_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cdf.csv");
    let o = relay_sim(
        &[
            "zone",
            "--beta",
            "2",
            "--tan-theta",
            "1",
            "--n-reps",
            "2000",
            "--cdf-grid",
            "4",
            "-o",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let e = v["closed_form"]["expected_length"].as_f64().unwrap();
    let mc = &v["monte_carlo"][0];
    assert!((mc["estimate"].as_f64().unwrap() - e).abs() < 5.0 * mc["std_error"].as_f64().unwrap());
    let s = std::fs::read_to_string(&out).unwrap();
    let rows = data_lines(&s);
    assert_eq!(rows[0], "t,cdf");
    assert_eq!(rows[3].split(',').next().unwrap(), "1");
    let c: f64 = rows[3].split(',').nth(1).unwrap().parse().unwrap();
    assert!((c - 0.2075).abs() < 1e-4);
}

#[test]
fn tree_flags_the_spine() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree.csv");
    let o = relay_sim(
        &[
            "tree",
            "--heights",
            ATOM,
            "--scheme",
            "tau2",
            "--window",
            "60",
            "--margin",
            "10",
            "-o",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = std::fs::read_to_string(Path::new(&out)).unwrap();
    assert!(s.contains("# eft_class=I/F"));
    let rows = data_lines(&s);
    assert_eq!(rows[0], "node_x,node_h,parent_x,parent_h,censored,spine");
    let mut spine = 0;
    for r in &rows[1..] {
        let f: Vec<&str> = r.split(',').collect();
        let at_sup = f[1] == "1";
        assert_eq!(f[5] == "1", at_sup, "{r}");
        spine += at_sup as usize;
    }
    assert!(spine > 0);
}

#[test]
fn finite_identity_report_and_hitting_times() {
    let o = relay_sim(&["finite", "--range", "horizontal:2", "--n-reps", "1500"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["expected_zone_length"]["via_hitting_time"]["estimate"].is_f64());
    assert!(v["expected_zone_length"]["direct"]["estimate"].is_f64());
    let o = relay_sim(&["finite", "--range", "horizontal:2", "--n-reps", "20", "--hitting-times"], &[]);
    let s = stdout(&o);
    let rows = data_lines(&s);
    assert_eq!(rows[0], "rep,T");
    assert_eq!(rows.len(), 21);
    assert_eq!(relay_sim(&["finite", "--range", "disc:1"], &[]).status.code(), Some(1));
}

#[test]
fn stoppage_report() {
    let o = relay_sim(&["stoppage", "--range", "disc:1", "--n-reps", "4000"], &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let mean = v["law_mean"].as_f64().unwrap();
    let mc = &v["monte_carlo"][0];
    assert!((mc["estimate"].as_f64().unwrap() - mean).abs() < 5.0 * mc["std_error"].as_f64().unwrap());
    let atom = v["atom_at_cap"].as_f64().unwrap();
    assert!((v["monte_carlo"][1]["estimate"].as_f64().unwrap() - atom).abs() < 0.03);
}
