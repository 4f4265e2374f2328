use std::fs;
use std::process::{Command, Output};

use robust_mean::harness::CSV_HEADER;
use serde_json::Value;

fn meanbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanbench"))
        .args(args)
        .output()
        .expect("spawn meanbench")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn csv_has_exact_header_and_one_row_per_trial() {
    let o = meanbench(&["--dist", "student_t:5", "--estimator", "mom_coordinatewise", "--n", "200", "--d", "3", "--trials", "7", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,estimator,dist,n,d,delta,seed,error,bound_eq1,bound_eq2,bound_prop1,bound_eq3,feasible,wall_ms"
    );
    assert_eq!(CSV_HEADER.trim_end(), text.lines().next().unwrap());
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7);
    for (i, row) in rows.iter().enumerate() {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f.len(), 14, "{row}");
        assert_eq!(f[0], i.to_string());
        assert_eq!(f[1], "mom_coordinatewise");
        assert!(f[7].parse::<f64>().unwrap() >= 0.0);
        assert!(f[8].parse::<f64>().unwrap() > 0.0);
        assert_eq!(f[13], "");
    }
}

#[test]
fn output_is_reproducible_for_a_seed() {
    let args = ["--estimator", "minsker", "--n", "300", "--d", "4", "--trials", "5", "--seed", "11"];
    let a = stdout(&meanbench(&args));
    let b = stdout(&meanbench(&args));
    assert_eq!(a, b);
    let c = stdout(&meanbench(&["--estimator", "minsker", "--n", "300", "--d", "4", "--trials", "5", "--seed", "12"]));
    assert_ne!(a, c);
}

#[test]
fn json_mirrors_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    let base = ["--estimator", "hybrid", "--dist", "gaussian", "--n", "2000", "--d", "2", "--trials", "4", "--seed", "9"];
    for (path, fmt) in [(&csv, "csv"), (&json, "json")] {
        let mut args = base.to_vec();
        args.extend(["--format", fmt, "--out", path.to_str().unwrap()]);
        let o = meanbench(&args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
    }
    let csv_text = fs::read_to_string(&csv).unwrap();
    let v: Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let records = v["records"].as_array().unwrap();
    let rows: Vec<&str> = csv_text.lines().skip(1).collect();
    assert_eq!(records.len(), rows.len());
    for (rec, row) in records.iter().zip(rows) {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(rec["trial"].as_u64().unwrap().to_string(), f[0]);
        assert_eq!(rec["estimator"], f[1]);
        assert_eq!(rec["seed"].as_u64().unwrap().to_string(), f[6]);
        let err = rec["error"].as_f64().unwrap();
        assert_eq!(err, f[7].parse::<f64>().unwrap());
    }
    assert_eq!(v["summary"]["trials"], 4);
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# test config\nn = 500\nd = 3\ntrials = 9\nestimator = spherical\n").unwrap();
    let o = meanbench(&["--config", cfg.to_str().unwrap(), "--trials", "2", "--print-config"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let get = |key: &str| {
        text.lines()
            .find_map(|l| l.split_once('=').filter(|(k, _)| k.trim() == key).map(|(_, v)| v.trim().to_string()))
            .unwrap()
    };
    assert_eq!(get("n"), "500");
    assert_eq!(get("d"), "3");
    assert_eq!(get("trials"), "2");
    assert_eq!(get("estimator"), "spherical");
    assert_eq!(get("delta"), "0.05");
    assert_eq!(get("format"), "csv");
}

#[test]
fn exit_codes() {
    assert_eq!(meanbench(&["--trials", "0"]).status.code(), Some(2));
    assert_eq!(meanbench(&["--dist", "cauchy"]).status.code(), Some(2));
    assert_eq!(meanbench(&["--delta", "1.5"]).status.code(), Some(2));
    assert_eq!(meanbench(&["--no-such-flag"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad_key = dir.path().join("bad.conf");
    fs::write(&bad_key, "colour = red\n").unwrap();
    assert_eq!(meanbench(&["--config", bad_key.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("absent.conf");
    assert_eq!(meanbench(&["--config", missing.to_str().unwrap()]).status.code(), Some(3));
    let unwritable = dir.path().join("no/such/dir/out.csv");
    assert_eq!(
        meanbench(&["--trials", "2", "--out", unwritable.to_str().unwrap()]).status.code(),
        Some(3)
    );
    assert_eq!(meanbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn cover_output_parses_back() {
    let o = meanbench(&["--d", "3", "--cover-gamma", "0.5", "--seed", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let cover = robust_mean::sphere_cover::Cover::from_text(&stdout(&o)).unwrap();
    assert_eq!(cover.dim, 3);
    assert!(!cover.is_empty());
}
