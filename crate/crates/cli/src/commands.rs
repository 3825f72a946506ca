//! Subcommand implementations. Each returns the process exit code.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use robustpath::output::{path_json, write_path_csv};
use robustpath::path::{accumulate_omega, resolve_schedule, trace_central_path, trace_proximal_path, trace_reference_robust_path, PathStatus, TracedPath};
use robustpath::portfolio::{
    load_returns, run_portfolio_experiment, synthetic_returns, write_frontier_csv, FrontierPoint, PortfolioConfig, PortfolioRegion, SYNTHETIC_SEED,
};
use robustpath::verify::{run_check, Check, CheckReport, VerifyOptions};
use robustpath::{radius_for, robust_anchor, solve_linear, Error, ProblemInstance};

use crate::config::{load_config, InstanceConfig};

pub const EXIT_OK: i32 = 0;
/// Unreadable or invalid input.
pub const EXIT_INPUT: i32 = 1;
/// A solve failed; partial output may have been written.
pub const EXIT_SOLVER: i32 = 2;
/// A verification check failed.
pub const EXIT_VERIFY: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Proximal,
    Central,
    Reference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    Simplex,
    Hyperplane,
    Box,
}

fn load(config: &Path) -> Result<(InstanceConfig, ProblemInstance), i32> {
    let c = load_config(config).map_err(|e| {
        eprintln!("error: invalid config at {e}");
        EXIT_INPUT
    })?;
    let inst = c.instance().map_err(|e| {
        eprintln!("error: invalid config at {e}");
        EXIT_INPUT
    })?;
    Ok((c, inst))
}

fn solver_failure(e: Error) -> i32 {
    eprintln!("error: solver failure: {e}");
    EXIT_SOLVER
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> i32 {
    eprintln!("error: cannot write {}: {e}", path.display());
    EXIT_INPUT
}

fn grid(c: &InstanceConfig, inst: &ProblemInstance) -> robustpath::Result<Vec<f64>> {
    let lambdas = resolve_schedule(inst, &c.schedule, &c.stop)?;
    let mut omegas = vec![f64::INFINITY];
    omegas.extend(accumulate_omega(&lambdas)?);
    Ok(omegas)
}

fn trace(c: &InstanceConfig, inst: &ProblemInstance, mode: Mode) -> robustpath::Result<TracedPath> {
    match mode {
        Mode::Proximal => trace_proximal_path(inst, &c.schedule, &c.stop),
        Mode::Central => trace_central_path(inst, &grid(c, inst)?, &robust_anchor(inst)?),
        Mode::Reference => trace_reference_robust_path(inst, &grid(c, inst)?),
    }
}

/// Every stored radius must equal `ω g'(‖x‖_{V°})` recomputed from the stored point.
fn check_radii(inst: &ProblemInstance, path: &TracedPath) -> Result<(), String> {
    for p in &path.points {
        let r = radius_for(inst, p.omega, &p.point());
        let same = r == p.radius || (r - p.radius).abs() <= 1e-12 * r.abs().max(p.radius.abs());
        if !same {
            return Err(format!("point {} stores radius {} but its data gives {}", p.k, p.radius, r));
        }
    }
    Ok(())
}

fn json_path(out: &Path) -> PathBuf {
    out.with_extension("json")
}

/// Traces one path and writes it as CSV to `out` and as JSON next to it.
pub fn cmd_trace(config: &Path, mode: Mode, out: &Path) -> i32 {
    let (c, inst) = match load(config) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let path = match trace(&c, &inst, mode) {
        Ok(p) => p,
        Err(e) => return solver_failure(e),
    };
    if let Err(msg) = check_radii(&inst, &path) {
        eprintln!("error: {msg}");
        return EXIT_SOLVER;
    }
    let file = match File::create(out) {
        Ok(f) => f,
        Err(e) => return io_failure(out, e),
    };
    if let Err(e) = write_path_csv(&path, BufWriter::new(file)) {
        return io_failure(out, e);
    }
    let meta = json_path(out);
    match path_json(&path) {
        Ok(text) => {
            if let Err(e) = fs::write(&meta, text + "\n") {
                return io_failure(&meta, e);
            }
        }
        Err(e) => return io_failure(&meta, e),
    }
    let gap = match (path.points.last(), solve_linear(&inst)) {
        (Some(p), Ok(e)) => format!("{:e}", p.nominal - inst.nominal(&e.point())),
        (_, Err(Error::Unbounded)) => "none (nominal problem unbounded)".into(),
        (_, Err(e)) => format!("unavailable ({e})"),
        (None, _) => "none".into(),
    };
    println!("points: {}", path.points.len());
    println!("status: {}", status_str(&path.status));
    println!("monotone: {}", path.monotone);
    println!("final nominal gap to x_E: {gap}");
    println!("wrote {} and {}", out.display(), meta.display());
    match path.status {
        PathStatus::Partial(_) => EXIT_SOLVER,
        _ => EXIT_OK,
    }
}

fn status_str(s: &PathStatus) -> String {
    match s {
        PathStatus::Complete => "complete".into(),
        PathStatus::ReachedTarget => "reached target".into(),
        PathStatus::Truncated => "truncated at the point budget".into(),
        PathStatus::Partial(why) => format!("partial: {why}"),
    }
}

#[derive(Serialize)]
struct CheckEntry {
    #[serde(flatten)]
    report: Option<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct VerifyOutput {
    fingerprint: String,
    seed: u64,
    checks: Vec<CheckEntry>,
}

/// Parses a comma-separated list of check names; empty means all.
pub fn parse_checks(list: Option<&str>) -> Result<Vec<Check>, Error> {
    let Some(list) = list else { return Ok(Check::ALL.to_vec()) };
    let mut checks: Vec<Check> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_, _>>()?;
    if checks.is_empty() {
        return Err(Error::InvalidArgument("no checks given".into()));
    }
    checks.sort();
    checks.dedup();
    Ok(checks)
}

/// Runs the requested checks and writes a JSON report to `out`, or stdout.
pub fn cmd_verify(config: &Path, checks: Option<&str>, seed: Option<u64>, out: Option<&Path>) -> i32 {
    let checks = match parse_checks(checks) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let (c, inst) = match load(config) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let opts = VerifyOptions { schedule: c.schedule.clone(), stop: c.stop, seed: seed.unwrap_or(c.seed), ..VerifyOptions::default() };
    let mut code = EXIT_OK;
    let mut entries = Vec::with_capacity(checks.len());
    for check in checks {
        match run_check(&inst, check, &opts) {
            Ok(r) => {
                let verdict = match (r.pass, r.applicable) {
                    (true, true) => "PASS",
                    (true, false) => "N/A",
                    (false, _) => "FAIL",
                };
                let bound = r.bound.map_or_else(|| "-".to_string(), |b| format!("{b:e}"));
                println!("{verdict:4} {check:6} observed {:e} bound {bound}  {}", r.observed, r.note);
                if !r.pass && code == EXIT_OK {
                    code = EXIT_VERIFY;
                }
                entries.push(CheckEntry { report: Some(r), error: None });
            }
            Err(e) => {
                println!("ERR  {check:6} {e}");
                code = EXIT_SOLVER;
                entries.push(CheckEntry { report: None, error: Some(format!("{check}: {e}")) });
            }
        }
    }
    let doc = VerifyOutput { fingerprint: inst.fingerprint(), seed: opts.seed, checks: entries };
    let text = serde_json::to_string_pretty(&doc).expect("report serializes") + "\n";
    match out {
        Some(p) => {
            if let Err(e) = fs::write(p, text) {
                return io_failure(p, e);
            }
        }
        None => print!("{text}"),
    }
    code
}

fn write_frontier(dir: &Path, name: &str, points: &[FrontierPoint]) -> Result<(), i32> {
    let p = dir.join(name);
    let f = File::create(&p).map_err(|e| io_failure(&p, e))?;
    write_frontier_csv(points, BufWriter::new(f)).map_err(|e| io_failure(&p, e))
}

/// Runs the portfolio experiment on a returns file, or on the synthetic fixture when
/// `returns` is `"synthetic"`, and writes six frontier CSVs plus `report.json` into `out`.
pub fn cmd_portfolio(returns: &str, region: RegionArg, box_upper: f64, seed: Option<u64>, out: &Path) -> i32 {
    let table = if returns == "synthetic" {
        synthetic_returns(seed.unwrap_or(SYNTHETIC_SEED), 10, 500)
    } else {
        load_returns(Path::new(returns))
    };
    let table = match table {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    if table.dropped_rows > 0 {
        eprintln!("warning: dropped {} rows with missing values", table.dropped_rows);
    }
    let region = match region {
        RegionArg::Simplex => PortfolioRegion::Simplex,
        RegionArg::Hyperplane => PortfolioRegion::Hyperplane,
        RegionArg::Box => PortfolioRegion::Box { upper: box_upper },
    };
    let config = PortfolioConfig { region, ..PortfolioConfig::default() };
    let report = match run_portfolio_experiment(&table, &config) {
        Ok(r) => r,
        Err(e @ (Error::Data(_) | Error::InvalidArgument(_) | Error::InvalidRegion(_) | Error::Infeasible | Error::InvalidShape(_))) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
        Err(e) => return solver_failure(e),
    };
    if let Err(e) = fs::create_dir_all(out) {
        return io_failure(out, e);
    }
    let files = [
        ("proximal_in_sample.csv", &report.in_sample.proximal),
        ("reference_in_sample.csv", &report.in_sample.reference),
        ("two_fund_in_sample.csv", &report.in_sample.two_fund),
        ("proximal_out_of_sample.csv", &report.out_of_sample.proximal),
        ("reference_out_of_sample.csv", &report.out_of_sample.reference),
        ("two_fund_out_of_sample.csv", &report.out_of_sample.two_fund),
    ];
    for (name, pts) in files {
        if let Err(code) = write_frontier(out, name, pts) {
            return code;
        }
    }
    let summary = out.join("report.json");
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    if let Err(e) = fs::write(&summary, text) {
        return io_failure(&summary, e);
    }
    let d = report.proximal_vs_reference;
    let t = report.proximal_vs_two_fund;
    println!("assets: {}, rows: {} in sample, {} out of sample", report.assets.len(), report.train_rows, report.test_rows);
    println!("proximal path monotone: {}, anchors equal: {}", report.monotone, report.anchors_equal);
    println!("max deviation proximal vs exact: nominal {:e}, worst case {:e}, weights {:e}", d.nominal, d.worst_case, d.weights);
    println!("max deviation proximal vs two-fund: nominal {:e}, worst case {:e}, weights {:e}", t.nominal, t.worst_case, t.weights);
    let b = &report.divergence_bound;
    if let (Some(bound), Some(obs)) = (b.bound, b.observed_max_gap) {
        println!("central vs robust divergence: observed {obs:e}, bound {bound:e}");
    }
    println!("wrote frontiers and report.json to {}", out.display());
    EXIT_OK
}
