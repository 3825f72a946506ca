use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_robustpath"));
    c.env("ROBUSTPATH_THREADS", "2");
    c
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn rows(csv: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(csv).unwrap();
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn num(cell: &str) -> f64 {
    cell.parse().unwrap()
}

#[test]
fn simplex_trace_starts_at_uniform_portfolio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["trace", "--config", s(&example("simplex3.json")), "--mode", "proximal", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out);
    for j in 4..7 {
        assert!((num(&r[0][j]) - 1.0 / 3.0).abs() <= 1e-12);
    }
    assert_eq!(r[0][1], "inf");
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.with_extension("json")).unwrap()).unwrap();
    assert_eq!(meta["kind"], "proximal");
    assert_eq!(meta["monotone"], true);
}

#[test]
fn sharpness_trace_runs_between_the_anchors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p.csv");
    let o = run(&["trace", "--config", s(&example("sharpness.json")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&out);
    let first = (num(&r[0][4]), num(&r[0][5]));
    let last = r.last().unwrap();
    assert!((first.0 - 0.5).abs() < 1e-12 && (first.1 - 0.75).abs() < 1e-12);
    assert!((num(&last[4]) - 2.0).abs() < 1e-6 && num(&last[5]).abs() < 1e-6);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("monotone: false"), "{stdout}");
}

#[test]
fn reference_and_central_modes_write_output() {
    let dir = tempfile::tempdir().unwrap();
    for mode in ["central", "reference"] {
        let out = dir.path().join(format!("{mode}.csv"));
        let o = run(&["trace", "--config", s(&example("box3.json")), "--mode", mode, "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0));
        assert!(rows(&out).len() > 10);
    }
}

#[test]
fn traces_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run(&["trace", "--config", s(&example("box3.json")), "--out", s(&a)]);
    let o = bin().env("ROBUSTPATH_THREADS", "1").args(["trace", "--config", s(&example("box3.json")), "--out", s(&b)]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(std::fs::read(a.with_extension("json")).unwrap(), std::fs::read(b.with_extension("json")).unwrap());
}

#[test]
fn invalid_region_kind_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(example("simplex3.json")).unwrap().replace("eq_box", "polytope");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["trace", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("region") && err.contains("polytope"), "{err}");
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    let text = std::fs::read_to_string(example("simplex3.json")).unwrap().replace("\"seed\": 1", "\"seed\": 1, \"colour\": 2");
    std::fs::write(&cfg, text).unwrap();
    let o = run(&["verify", "--config", s(&cfg), "--checks", "thm4"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("colour"));
}

fn verify(config: &str, checks: &str) -> (Option<i32>, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v.json");
    let o = run(&["verify", "--config", s(&example(config)), "--checks", checks, "--out", s(&out)]);
    let v = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    (o.status.code(), v)
}

#[test]
fn simplex_theorem4_passes() {
    let (code, v) = verify("simplex3.json", "thm4");
    assert_eq!(code, Some(0));
    let c = &v["checks"][0];
    assert_eq!(c["applicable"], true);
    assert!(c["observed"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn sharpness_bound_is_attained() {
    let (code, v) = verify("sharpness.json", "thm2");
    assert_eq!(code, Some(0));
    let c = &v["checks"][0];
    let (obs, bound) = (c["observed"].as_f64().unwrap(), c["bound"].as_f64().unwrap());
    assert!((bound - 0.00625).abs() <= 1e-12);
    assert!(obs >= bound * (1.0 - 1e-6), "{obs} {bound}");
}

#[test]
fn polar_ball_iterates_lie_on_the_central_path() {
    let (code, v) = verify("polar_ball.json", "prop2");
    assert_eq!(code, Some(0));
    let c = &v["checks"][0];
    assert_eq!(c["applicable"], true);
    assert!(c["observed"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn unknown_check_is_an_input_error() {
    let o = run(&["verify", "--config", s(&example("simplex3.json")), "--checks", "thm9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synthetic_portfolio_on_the_simplex() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["portfolio", "--returns", "synthetic", "--region", "simplex", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["proximal", "reference", "two_fund"] {
        for t in ["in_sample", "out_of_sample"] {
            assert!(dir.path().join(format!("{f}_{t}.csv")).exists());
        }
    }
    let header = std::fs::read_to_string(dir.path().join("proximal_in_sample.csv")).unwrap();
    assert!(header.starts_with("k,omega,r,nominal,worst_case,sample_tag,weights_json\n"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let d = &report["proximal_vs_reference"];
    assert!(d["nominal"].as_f64().unwrap() <= 1e-4 && d["worst_case"].as_f64().unwrap() <= 1e-4);
}

#[test]
fn synthetic_portfolio_on_the_hyperplane_matches_two_fund() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["portfolio", "--returns", "synthetic", "--region", "hyperplane", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    for key in ["proximal_vs_reference", "proximal_vs_two_fund"] {
        for field in ["nominal", "worst_case", "weights"] {
            assert!(report[key][field].as_f64().unwrap() <= 1e-6, "{key}.{field}");
        }
    }
}

#[test]
fn portfolio_reads_a_returns_file() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let table = robustpath::portfolio::synthetic_returns(11, 4, 60).unwrap();
    robustpath::portfolio::write_returns_csv(&table, std::fs::File::create(&csv).unwrap()).unwrap();
    let o = run(&["portfolio", "--returns", s(&csv), "--region", "box", "--box-upper", "0.4", "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_returns_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["portfolio", "--returns", "/nonexistent/returns.csv", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}
