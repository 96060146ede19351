use std::path::Path;
use std::process::{Command, Output};

fn capmin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capmin"))
        .args(args)
        .output()
        .expect("binary runs")
}

const DROPLET: [&str; 10] = ["--family", "model_a", "--A", "1", "--B", "0", "--S", "-2.5", "--m", "2.5"];
const NON_UNIQUE: [&str; 10] = ["--family", "model_a", "--A", "1", "--B", "1.8", "--S", "-1", "--m", "2.5"];

fn with(cmd: &str, spec: &[&str], extra: &[&str]) -> Vec<String> {
    let mut v = vec![cmd.to_string()];
    v.extend(spec.iter().map(|s| s.to_string()));
    v.extend(["--n", "2"].iter().map(|s| s.to_string()));
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run(args: &[String]) -> Output {
    capmin(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn classify_reports_droplet_uniqueness() {
    let out = run(&with("classify", &DROPLET, &[]));
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["regime"], "droplet");
    assert_eq!(json["uniqueness"], "unique");
}

#[test]
fn exit_codes() {
    let no_min = capmin(&["classify", "--family", "model_a", "--S", "-1", "--m", "3.2", "--n", "2"]);
    assert_eq!(no_min.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&no_min.stderr).contains("no minimizer"));
    let bad_b = capmin(&["classify", "--family", "model_b", "--B", "-1", "--m", "1.1", "--n", "5"]);
    assert_eq!(bad_b.status.code(), Some(2));
    let bad_mass = run(&with("solve", &DROPLET, &["--M", "-3"]));
    assert_eq!(bad_mass.status.code(), Some(1));
    let missing = capmin(&["solve", "--family", "model_a"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn solve_writes_solution_profile_and_macro_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig4.json");
    let res = run(&with("solve", &DROPLET, &["--M", "2000", "--mass-tol", "1e-1", "--out", out.to_str().unwrap()]));
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!((json["M"].as_f64().unwrap() - 2000.0).abs() < 1e-12);
    let (header, rows) = read_csv(&dir.path().join("fig4.csv"));
    assert_eq!(header, ["x", "u", "uprime"]);
    let (mh, mrows) = read_csv(&dir.path().join("fig4.macro.csv"));
    assert_eq!(mh, ["x", "u", "uprime", "macro", "macro_prime", "micro", "micro_prime"]);
    assert_eq!(rows.len(), mrows.len());
    let first: Vec<f64> = mrows[0].iter().map(|v| v.parse().unwrap()).collect();
    assert!((first[3] / first[1] - 1.0).abs() < 0.02, "{first:?}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut docs = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("run{i}.json"));
        let res = run(&with("solve", &NON_UNIQUE, &["--M", "100", "--out", out.to_str().unwrap()]));
        assert_eq!(res.status.code(), Some(0));
        docs.push((
            std::fs::read(&out).unwrap(),
            std::fs::read(out.with_extension("csv")).unwrap(),
        ));
    }
    assert_eq!(docs[0], docs[1]);
}

#[test]
fn sweep_shows_several_segments_on_the_non_unique_spec() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let res = run(&with("sweep", &NON_UNIQUE, &["--format", "csv", "--points", "200", "--out", out.to_str().unwrap()]));
    assert_eq!(res.status.code(), Some(0));
    let (header, rows) = read_csv(&out);
    assert_eq!(header, ["u0", "mu", "energy", "segment"]);
    let segs: std::collections::BTreeSet<&str> = rows.iter().map(|r| r[3].as_str()).collect();
    assert!(segs.len() >= 2);
    for r in &rows {
        let mu: f64 = r[1].parse().unwrap();
        assert!(mu > 0.0);
    }
}

#[test]
fn asympt_table_approaches_one() {
    let res = run(&with("asympt", &DROPLET, &["--M-list", "1e2,1e3,1e4", "--format", "csv"]));
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("M,u0,u0_pred,rbar,rbar_pred,shape_err"));
    let gaps: Vec<f64> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (v[1] / v[2] - 1.0).abs() + (v[3] / v[4] - 1.0).abs()
        })
        .collect();
    assert_eq!(gaps.len(), 3);
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn crossing_is_null_for_convex_potentials() {
    let res = run(&with("crossing", &DROPLET, &[]));
    assert_eq!(res.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(json, serde_json::json!({ "crossing": null }));

    let res = run(&with("crossing", &NON_UNIQUE, &[]));
    let json: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert!(json["crossing"]["M"].as_f64().unwrap() > 0.0);
}

#[test]
fn spec_file_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"family":"model_a","A":1.0,"B":0.0,"S":-2.5,"m":2.5,"n":2.0}"#).unwrap();
    let from_file = Command::new(env!("CARGO_BIN_EXE_capmin"))
        .args(["solve", "--spec-file", spec.to_str().unwrap(), "--M", "20"])
        .env("CAPMIN_THREADS", "1")
        .output()
        .unwrap();
    let from_flags = run(&with("solve", &DROPLET, &["--M", "20"]));
    assert_eq!(from_file.status.code(), Some(0));
    assert_eq!(from_file.stdout, from_flags.stdout);

    let bad = Command::new(env!("CARGO_BIN_EXE_capmin"))
        .args(["classify", "--spec-file", spec.to_str().unwrap()])
        .env("CAPMIN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
