use std::path::PathBuf;

use clap::Parser;
use dimlab::cli::{report, Cli};
use dimlab::output::Report;

fn config(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "configs", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run_report(args: &[&str]) -> Report {
    let cli = Cli::try_parse_from(std::iter::once("dimlab").chain(args.iter().copied())).unwrap();
    report(&cli).unwrap()
}

fn summary(r: &Report, key: &str) -> serde_json::Value {
    r.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone()).unwrap()
}

fn code(args: &[&str]) -> i32 {
    dimlab::run(std::iter::once("dimlab").chain(args.iter().copied()))
}

#[test]
fn validate_lists_the_parabolic_point() {
    let r = run_report(&["map", "validate", &config("manneville.json")]);
    assert_eq!(r.rows.len(), 2);
    assert_eq!(r.rows[0][0], 0);
    assert_eq!(r.rows[0][4], 0.0);
    assert_eq!(r.rows[0][5], true);
    assert_eq!(r.rows[1][5], false);
    assert_eq!(summary(&r, "parabolic"), 1);
}

#[test]
fn hyperbolic_dimension_of_the_two_slope_map() {
    let r = run_report(&["dimension", "hyp", "--map", &config("cantor24.json"), "--restarts", "4"]);
    let s = summary(&r, "ratio").as_f64().unwrap();
    assert!((s - 0.694242).abs() < 1e-3, "{s}");
}

#[test]
fn besicovitch_table_carries_the_closed_form() {
    let r = run_report(&["repro", "besicovitch", "--p", "0.5,0.7"]);
    assert_eq!(r.columns, ["p", "bowen_root", "closed_form", "abs_error"]);
    let closed: Vec<f64> = r.rows.iter().map(|row| row[2].as_f64().unwrap()).collect();
    assert!((closed[0] - 1.0).abs() < 1e-15);
    assert!((closed[1] - 0.8812908992306927).abs() < 1e-12);
    for row in &r.rows {
        assert!(row[3].as_f64().unwrap() < 0.02);
    }
}

#[test]
fn metric_of_lebesgue_against_the_parabolic_point() {
    let r = run_report(&[
        "metric",
        "--map",
        &config("manneville.json"),
        "--mu",
        &config("lebesgue.json"),
        "--nu",
        &config("dirac0.json"),
    ]);
    let d = summary(&r, "d").as_f64().unwrap();
    assert!((d - (2.0 * 2f64.ln() - 1.0)).abs() < 1e-6);
}

#[test]
fn exit_codes() {
    assert_eq!(code(&["map", "validate", &config("manneville.json"), "--csv", "/dev/null"]), 0);
    assert_eq!(code(&["cylinders", "--map", &config("doubling.json"), "--depth", "40"]), 3);
    assert_eq!(code(&["map", "validate", &config("besicovitch_07.json")]), 2);
    assert_eq!(code(&["pressure", "--map", &config("doubling.json"), "--s-grid", "1:0:0.1"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
    let out = tempfile::tempdir().unwrap();
    let bad = out.path().join("bad.json");
    std::fs::write(&bad, r#"{"variant":"bernoulli","p":[0.5,0.6]}"#).unwrap();
    let args = ["metric", "--map", &config("doubling.json"), "--mu", bad.to_str().unwrap(), "--nu", &config("dirac0.json")];
    assert_eq!(code(&args), 2);
    assert_eq!(code(&["estimate", "boxdim", "--scheme", "x.json", "--points", "100000000"]), 3);
}

#[test]
fn csv_header_and_json() {
    let out = tempfile::tempdir().unwrap();
    let csv = out.path().join("c.csv");
    let js = out.path().join("c.json");
    let map = config("doubling.json");
    let base = ["cylinders", "--map", map.as_str(), "--depth", "3", "--seed", "9"];
    let csv_args: Vec<&str> = base.iter().copied().chain(["--csv", csv.to_str().unwrap()]).collect();
    assert_eq!(code(&csv_args), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# dimlab schema=1 command=cylinders seed=9 config="), "{first}");
    assert!(text.contains("\nword,lo,hi,diam,s_n_g\n"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);
    let json_args: Vec<&str> = base.iter().copied().chain(["--json", "--csv", js.to_str().unwrap()]).collect();
    assert_eq!(code(&json_args), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&js).unwrap()).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["rows"].as_array().unwrap().len(), 8);
    assert_eq!(v["rows"][0][0], "000");
}

#[test]
fn scheme_pipeline_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let scheme = dir.path().join("s.json");
    let word = dir.path().join("w.txt");
    let (map, mu) = (config("cantor24.json"), config("cantor24_equilibrium.json"));
    let mut bodies = Vec::new();
    for threads in ["1", "4"] {
        let build = run_report(&[
            "moran", "build", "--map", &map, "--mu", &mu, "--out", scheme.to_str().unwrap(),
            "--word-out", word.to_str().unwrap(), "--threads", threads, "--seed", "3",
        ]);
        let check = run_report(&["moran", "check", scheme.to_str().unwrap(), "--threads", threads]);
        let trace = run_report(&[
            "trace", "--map", &map, "--mu", &mu, "--word-file", word.to_str().unwrap(), "--threads", threads,
        ]);
        let limsup = summary(&trace, "tail_limsup").as_f64().unwrap();
        assert!(limsup <= 2.0 / 3.0, "{limsup}");
        bodies.push([build.to_csv().unwrap(), check.to_csv().unwrap(), trace.to_csv().unwrap()]);
    }
    assert_eq!(bodies[0], bodies[1]);

    let cyl = dir.path().join("c.json");
    run_report(&["moran", "cylinders", "--map", &config("middle_thirds.json"), "--mu", &config("uniform2.json"),
        "--depth", "14", "--out", cyl.to_str().unwrap()]);
    let a = run_report(&["estimate", "boxdim", "--scheme", cyl.to_str().unwrap(), "--threads", "1"]);
    let b = run_report(&["estimate", "boxdim", "--scheme", cyl.to_str().unwrap(), "--threads", "3"]);
    assert_eq!(a.csv_body().unwrap(), b.csv_body().unwrap());
    let slope = summary(&a, "slope").as_f64().unwrap();
    assert!((slope - 2f64.ln() / 3f64.ln()).abs() < 0.05);
    let check = run_report(&["moran", "check", cyl.to_str().unwrap()]);
    assert_eq!(summary(&check, "source"), "explicit");
    assert_eq!(summary(&check, "flags"), "");
}
