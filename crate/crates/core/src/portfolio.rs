//! Robust mean-variance portfolios: returns data, moment estimates, frontiers and the
//! Two-Fund baseline.
//!
//! With `a0 = −μ`, `V = {ξ : ξᵀ Σ⁻¹ ξ ≤ 1}` and `φ = ½ xᵀ Σ x`, the robust anchor `x_R` is the
//! minimum-variance portfolio and the linear-program solution `x_E` the maximum-return one.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use crate::bounds::{theorem2_check, BoundReport};
use crate::error::{Error, Result};
use crate::gauge::{GaugeSet, PostComposition};
use crate::linalg::{Matrix, Vector};
use crate::output::{fmt_num, ser_f64};
use crate::parallel;
use crate::path::{trace_proximal_path, trace_reference_robust_path, StepSchedule, StopRule, TracedPath};
use crate::region::FeasibleRegion;
use crate::solve::{robust_anchor, solve_linear, ProblemInstance};

/// Per-period simple returns, one row per date.
#[derive(Clone, Debug)]
pub struct ReturnsTable {
    pub assets: Vec<String>,
    pub dates: Vec<String>,
    /// `T × n`.
    pub returns: Matrix,
    /// Rows dropped at load time for missing cells.
    pub dropped_rows: usize,
}

impl ReturnsTable {
    pub fn periods(&self) -> usize {
        self.returns.nrows()
    }

    pub fn assets_len(&self) -> usize {
        self.returns.ncols()
    }

    /// Chronological split: the first `⌊fraction·T⌋` rows and the rest.
    pub fn split(&self, fraction: f64) -> Result<(ReturnsTable, ReturnsTable)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::InvalidArgument(format!("split fraction must lie in (0, 1), got {fraction}")));
        }
        let t = self.periods();
        let cut = (fraction * t as f64).floor() as usize;
        if cut < 2 || t - cut < 2 {
            return Err(Error::Data(format!("split at {cut} of {t} rows leaves fewer than 2 rows on one side")));
        }
        let part = |lo: usize, hi: usize| ReturnsTable {
            assets: self.assets.clone(),
            dates: self.dates[lo..hi].to_vec(),
            returns: self.returns.rows(lo, hi - lo).into_owned(),
            dropped_rows: 0,
        };
        Ok((part(0, cut), part(cut, t)))
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null")
}

/// Parses `date,asset1,asset2,…` rows; rows with a missing cell are dropped and counted.
pub fn parse_returns<R: Read>(input: R) -> Result<ReturnsTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Data(format!("malformed header: {e}")))?.clone();
    if headers.len() < 2 {
        return Err(Error::Data("header must name a date column and at least one asset".into()));
    }
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let n = assets.len();
    let mut dates = Vec::new();
    let mut values = Vec::new();
    let mut dropped = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Data(format!("malformed row {}: {e}", i + 2)))?;
        if rec.len() != n + 1 {
            return Err(Error::Data(format!("row {} has {} cells, expected {}", i + 2, rec.len(), n + 1)));
        }
        if rec.iter().skip(1).any(is_missing) {
            dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(n);
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::Data(format!("row {}, column {}: not a number: {cell:?}", i + 2, assets[j])))?;
            if !v.is_finite() {
                return Err(Error::Data(format!("row {}, column {}: non-finite return", i + 2, assets[j])));
            }
            row.push(v);
        }
        dates.push(rec[0].to_string());
        values.extend(row);
    }
    if dates.len() < 2 {
        return Err(Error::Data(format!("{} usable rows; at least 2 are needed", dates.len())));
    }
    let returns = Matrix::from_row_slice(dates.len(), n, &values);
    Ok(ReturnsTable { assets, dates, returns, dropped_rows: dropped })
}

/// Reads a returns CSV from disk.
pub fn load_returns(path: &Path) -> Result<ReturnsTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_returns(std::io::BufReader::new(file))
}

/// Seed of the bundled synthetic fixture.
pub const SYNTHETIC_SEED: u64 = 7;

/// One-factor returns `r_t = μ + β f_t + e_t` with positive expected returns that increase
/// with the asset index. Betas stay close to one so that `Σ⁻¹ 1 > 0`.
pub fn synthetic_returns(seed: u64, assets: usize, periods: usize) -> Result<ReturnsTable> {
    if assets == 0 || periods < 2 {
        return Err(Error::InvalidArgument("synthetic fixture needs at least one asset and two periods".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = if assets > 1 { 1.0 / (assets - 1) as f64 } else { 0.0 };
    let mu: Vec<f64> = (0..assets).map(|i| 2e-4 + 8e-4 * i as f64 * spread).collect();
    let beta_dist = Uniform::new(0.9, 1.1);
    let idio_dist = Uniform::new(0.012, 0.016);
    let beta: Vec<f64> = (0..assets).map(|_| beta_dist.sample(&mut rng)).collect();
    let idio: Vec<f64> = (0..assets).map(|_| idio_dist.sample(&mut rng)).collect();
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let market_vol = 0.01;
    let mut values = Vec::with_capacity(assets * periods);
    for _ in 0..periods {
        let f = market_vol * std_normal.sample(&mut rng);
        for i in 0..assets {
            values.push(mu[i] + beta[i] * f + idio[i] * std_normal.sample(&mut rng));
        }
    }
    Ok(ReturnsTable {
        assets: (1..=assets).map(|i| format!("asset{i}")).collect(),
        dates: (0..periods).map(|t| format!("t{t:04}")).collect(),
        returns: Matrix::from_row_slice(periods, assets, &values),
        dropped_rows: 0,
    })
}

/// Writes a table in the input CSV layout.
pub fn write_returns_csv<W: Write>(table: &ReturnsTable, out: W) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string()];
    header.extend(table.assets.iter().cloned());
    w.write_record(&header).map_err(err)?;
    for (t, date) in table.dates.iter().enumerate() {
        let mut row = vec![date.clone()];
        row.extend(table.returns.row(t).iter().map(|&v| fmt_num(v)));
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))
}

/// Mean and shrunk covariance of a returns table.
#[derive(Clone, Debug)]
pub struct Moments {
    pub mu: Vector,
    /// Unbiased sample covariance plus `epsilon · I`.
    pub sigma: Matrix,
    pub epsilon: f64,
}

/// Column means and `Σ = cov + εI`; `epsilon = None` picks `1e-8 · trace(cov) / n`.
pub fn estimate_moments(table: &ReturnsTable, epsilon: Option<f64>) -> Result<Moments> {
    let t = table.periods();
    let n = table.assets_len();
    if t < 2 {
        return Err(Error::Data(format!("{t} rows; the covariance needs at least 2")));
    }
    if let Some(e) = epsilon {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(Error::InvalidArgument(format!("shrinkage must be nonnegative, got {e}")));
        }
    }
    let r = &table.returns;
    let mu = Vector::from_iterator(n, r.column_iter().map(|c| c.mean()));
    let mut centered = r.clone();
    for mut row in centered.row_iter_mut() {
        row -= mu.transpose();
    }
    let cov = (centered.transpose() * &centered) / (t - 1) as f64;
    let eps = epsilon.unwrap_or(1e-8 * cov.trace() / n as f64);
    let sigma = cov + Matrix::identity(n, n) * eps;
    Ok(Moments { mu, sigma, epsilon: eps })
}

/// `a0 = −μ`, uncertainty `{ξ : ξᵀ Σ⁻¹ ξ ≤ 1}` and `φ = ½ xᵀ Σ x`.
pub fn build_portfolio_instance(m: &Moments, region: FeasibleRegion) -> Result<ProblemInstance> {
    let v = GaugeSet::ellipsoid_from_polar(m.sigma.clone())?;
    ProblemInstance::new(-&m.mu, region, v, PostComposition::HalfSquare)
}

/// Whether a frontier is evaluated on the data it was built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleTag {
    InSample,
    OutOfSample,
}

impl SampleTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleTag::InSample => "in_sample",
            SampleTag::OutOfSample => "out_of_sample",
        }
    }
}

/// A portfolio with its returns under some moments.
#[derive(Clone, Debug, Serialize)]
pub struct FrontierPoint {
    pub k: usize,
    #[serde(serialize_with = "ser_f64")]
    pub omega: f64,
    #[serde(serialize_with = "ser_f64")]
    pub r: f64,
    pub x: Vec<f64>,
    pub nominal_return: f64,
    /// `⟨μ, x⟩ − r sqrt(xᵀ Σ x)`.
    #[serde(serialize_with = "ser_f64")]
    pub worst_case_return: f64,
    /// `sqrt(xᵀ Σ x)`.
    pub volatility: f64,
    pub tag: SampleTag,
}

fn frontier_point(k: usize, omega: f64, r: f64, x: &[f64], m: &Moments, v: &GaugeSet, tag: SampleTag) -> Result<FrontierPoint> {
    let xv = Vector::from_column_slice(x);
    let nominal = m.mu.dot(&xv);
    let vol = v.polar_gauge_norm(&xv)?;
    let worst = if vol == 0.0 { nominal } else { nominal - r * vol };
    Ok(FrontierPoint { k, omega, r, x: x.to_vec(), nominal_return: nominal, worst_case_return: worst, volatility: vol, tag })
}

/// Nominal and worst-case returns of every path point under `m_eval`, at the point's radius.
pub fn evaluate_frontier(path: &TracedPath, m_eval: &Moments, tag: SampleTag) -> Result<Vec<FrontierPoint>> {
    let n = m_eval.mu.len();
    if path.anchor.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: path.anchor.len() });
    }
    let v = GaugeSet::ellipsoid_from_polar(m_eval.sigma.clone())?;
    parallel::map(&path.points, |p| frontier_point(p.k, p.omega, p.radius, &p.x, m_eval, &v, tag)).into_iter().collect()
}

/// Two-Fund portfolios `θ x_R + (1 − θ) x_far`, one per path point, with `θ` chosen to match
/// the point's in-sample nominal return and evaluated at the point's radius.
pub fn two_fund_frontier(path: &TracedPath, x_far: &Vector, m_build: &Moments, m_eval: &Moments, tag: SampleTag) -> Result<Vec<FrontierPoint>> {
    let x_r = path.anchor_point();
    if x_far.len() != x_r.len() || m_build.mu.len() != x_r.len() {
        return Err(Error::DimensionMismatch { expected: x_r.len(), got: x_far.len() });
    }
    let v = GaugeSet::ellipsoid_from_polar(m_eval.sigma.clone())?;
    let (lo, hi) = (m_build.mu.dot(&x_r), m_build.mu.dot(x_far));
    path.points
        .iter()
        .map(|p| {
            let target = m_build.mu.dot(&p.point());
            let theta = if hi == lo { 1.0 } else { ((hi - target) / (hi - lo)).clamp(0.0, 1.0) };
            let x = &x_r * theta + x_far * (1.0 - theta);
            frontier_point(p.k, p.omega, p.radius, x.as_slice(), m_eval, &v, tag)
        })
        .collect()
}

/// One row per point: `k, ω, r, nominal, worst_case, sample_tag, weights_json`.
pub fn write_frontier_csv<W: Write>(points: &[FrontierPoint], out: W) -> Result<()> {
    let err = |e: csv::Error| Error::Data(format!("write failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "omega", "r", "nominal", "worst_case", "sample_tag", "weights_json"]).map_err(err)?;
    for p in points {
        let weights = serde_json::to_string(&p.x).map_err(|e| Error::Data(format!("write failed: {e}")))?;
        w.write_record([
            p.k.to_string(),
            fmt_num(p.omega),
            fmt_num(p.r),
            fmt_num(p.nominal_return),
            fmt_num(p.worst_case_return),
            p.tag.as_str().to_string(),
            weights,
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| Error::Data(format!("write failed: {e}")))
}

/// Largest per-point differences between two frontiers sampled at the same points.
/// Points with a non-finite worst case on either side are compared on weights and nominal only.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct FrontierDeviation {
    pub nominal: f64,
    pub worst_case: f64,
    pub weights: f64,
}

pub fn frontier_deviation(a: &[FrontierPoint], b: &[FrontierPoint]) -> Result<FrontierDeviation> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!("frontiers have {} and {} points", a.len(), b.len())));
    }
    let mut d = FrontierDeviation::default();
    for (p, q) in a.iter().zip(b) {
        d.nominal = d.nominal.max((p.nominal_return - q.nominal_return).abs());
        if p.worst_case_return.is_finite() && q.worst_case_return.is_finite() {
            d.worst_case = d.worst_case.max((p.worst_case_return - q.worst_case_return).abs());
        }
        for (u, v) in p.x.iter().zip(&q.x) {
            d.weights = d.weights.max((u - v).abs());
        }
    }
    Ok(d)
}

/// Feasible sets used by the experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PortfolioRegion {
    /// Fully invested, short sales allowed.
    Hyperplane,
    /// Fully invested, long only.
    Simplex,
    /// Fully invested with `0 ≤ x_i ≤ upper`.
    Box { upper: f64 },
}

impl PortfolioRegion {
    pub fn build(self, n: usize) -> Result<FeasibleRegion> {
        match self {
            PortfolioRegion::Hyperplane => FeasibleRegion::hyperplane(Vector::from_element(n, 1.0), 1.0),
            PortfolioRegion::Simplex => FeasibleRegion::simplex(n),
            PortfolioRegion::Box { upper } => FeasibleRegion::budget_box(Vector::zeros(n), Vector::from_element(n, upper)),
        }
    }
}

/// Settings of a portfolio run.
#[derive(Clone, Debug)]
pub struct PortfolioConfig {
    pub region: PortfolioRegion,
    /// Fraction of rows, from the start, used to build the instance.
    pub train_fraction: f64,
    pub epsilon: Option<f64>,
    pub schedule: StepSchedule,
    pub stop: StopRule,
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        Self { region: PortfolioRegion::Simplex, train_fraction: 0.8, epsilon: None, schedule: StepSchedule::default(), stop: StopRule::default() }
    }
}

/// Frontiers of one experiment, in and out of sample.
#[derive(Clone, Debug, Serialize)]
pub struct Frontiers {
    pub proximal: Vec<FrontierPoint>,
    pub reference: Vec<FrontierPoint>,
    pub two_fund: Vec<FrontierPoint>,
}

/// Outcome of a portfolio run.
#[derive(Clone, Debug, Serialize)]
pub struct PortfolioReport {
    pub region: PortfolioRegion,
    pub assets: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub dropped_rows: usize,
    pub monotone: bool,
    /// Whether the minimum-variance portfolio of the region equals that of the budget hyperplane.
    pub anchors_equal: bool,
    /// Proximal against reference frontier, in sample.
    pub proximal_vs_reference: FrontierDeviation,
    /// Proximal against Two-Fund frontier, in sample.
    pub proximal_vs_two_fund: FrontierDeviation,
    /// Central-versus-robust divergence bound with its observed maximum on the path's grid.
    pub divergence_bound: BoundReport,
    pub in_sample: Frontiers,
    pub out_of_sample: Frontiers,
    /// Proximal path in sample, as traced.
    #[serde(skip)]
    pub path: Option<TracedPath>,
}

/// Builds on the first part of `table`, traces the proximal and reference paths, forms the
/// Two-Fund baseline and evaluates everything in and out of sample.
///
/// The Two-Fund far end is the maximum-return portfolio when it exists and the last proximal
/// point otherwise.
pub fn run_portfolio_experiment(table: &ReturnsTable, config: &PortfolioConfig) -> Result<PortfolioReport> {
    let (train, test) = table.split(config.train_fraction)?;
    let m_in = estimate_moments(&train, config.epsilon)?;
    let m_out = estimate_moments(&test, config.epsilon)?;
    let inst = build_portfolio_instance(&m_in, config.region.build(table.assets_len())?)?;
    let path = trace_proximal_path(&inst, &config.schedule, &config.stop)?;
    let reference = trace_reference_robust_path(&inst, &path.omegas())?;
    if reference.points.len() != path.points.len() {
        return Err(Error::NonConvergence { iterations: reference.points.len(), residual: f64::NAN });
    }
    let x_far = match solve_linear(&inst) {
        Ok(r) => r.point(),
        Err(Error::Unbounded) => path.points.last().map(|p| p.point()).unwrap_or_else(|| path.anchor_point()),
        Err(e) => return Err(e),
    };
    let finite: Vec<f64> = path.omegas().into_iter().filter(|w| w.is_finite()).collect();
    let divergence_bound = theorem2_check(&inst, &finite)?.report;
    let x_r = robust_anchor(&inst)?;
    let hull = FeasibleRegion::hyperplane(Vector::from_element(table.assets_len(), 1.0), 1.0)?;
    let x_h = robust_anchor(&ProblemInstance::with_generator(inst.a0().clone(), hull, inst.phi().clone())?)?;
    let anchors_equal = (&x_r - &x_h).amax() <= 1e-9 * (1.0 + x_h.amax());

    let frontiers = |m: &Moments, tag| -> Result<Frontiers> {
        Ok(Frontiers {
            proximal: evaluate_frontier(&path, m, tag)?,
            reference: evaluate_frontier(&reference, m, tag)?,
            two_fund: two_fund_frontier(&path, &x_far, &m_in, m, tag)?,
        })
    };
    let in_sample = frontiers(&m_in, SampleTag::InSample)?;
    let out_of_sample = frontiers(&m_out, SampleTag::OutOfSample)?;
    Ok(PortfolioReport {
        region: config.region,
        assets: table.assets.clone(),
        train_rows: train.periods(),
        test_rows: test.periods(),
        dropped_rows: table.dropped_rows,
        monotone: path.monotone,
        anchors_equal,
        proximal_vs_reference: frontier_deviation(&in_sample.proximal, &in_sample.reference)?,
        proximal_vs_two_fund: frontier_deviation(&in_sample.proximal, &in_sample.two_fund)?,
        divergence_bound,
        in_sample,
        out_of_sample,
        path: Some(path),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn table(rows: &[&[f64]]) -> ReturnsTable {
        let n = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        ReturnsTable {
            assets: (0..n).map(|i| format!("a{i}")).collect(),
            dates: (0..rows.len()).map(|t| t.to_string()).collect(),
            returns: Matrix::from_row_slice(rows.len(), n, &flat),
            dropped_rows: 0,
        }
    }

    #[test]
    fn parse_fixture_and_drop_rule() {
        let text = "date,a,b,c\n1,0.1,0.2,0.3\n2,0.0,0.1,-0.1\n3,0.2,,0.1\n4,0.1,0.1,0.1\n5,0.3,0.0,0.0\n6,0.1,0.2,0.0\n";
        let t = parse_returns(text.as_bytes()).unwrap();
        assert_eq!((t.periods(), t.assets_len(), t.dropped_rows), (5, 3, 1));
        assert_eq!(t.dates[2], "4");
        assert!(parse_returns("".as_bytes()).is_err());
        assert!(parse_returns("date,a\n1,0.1\n".as_bytes()).is_err());
        assert!(parse_returns("date,a\n1,x\n2,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn antithetic_covariance() {
        // columns are negatives of each other; mean 0, variance (1+1+4+4)/3
        let t = table(&[&[1.0, -1.0], &[-1.0, 1.0], &[2.0, -2.0], &[-2.0, 2.0]]);
        let m = estimate_moments(&t, Some(0.0)).unwrap();
        assert_relative_eq!(m.sigma[(0, 0)], 10.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(m.sigma[(0, 1)], -10.0 / 3.0, epsilon = 1e-14);
        assert!(build_portfolio_instance(&m, FeasibleRegion::simplex(2).unwrap()).is_err());
    }

    #[test]
    fn constant_returns_give_scaled_identity() {
        let t = table(&[&[0.1, 0.2], &[0.1, 0.2], &[0.1, 0.2]]);
        let m = estimate_moments(&t, Some(0.5)).unwrap();
        assert_relative_eq!(m.sigma, Matrix::identity(2, 2) * 0.5, epsilon = 1e-15);
        assert_relative_eq!(m.mu, Vector::from_column_slice(&[0.1, 0.2]), epsilon = 1e-15);
    }

    #[test]
    fn min_variance_anchors() {
        let m = Moments { mu: Vector::from_column_slice(&[0.1, 0.2]), sigma: Matrix::from_diagonal(&Vector::from_column_slice(&[1.0, 4.0])), epsilon: 0.0 };
        let inst = build_portfolio_instance(&m, PortfolioRegion::Hyperplane.build(2).unwrap()).unwrap();
        let x = robust_anchor(&inst).unwrap();
        assert_relative_eq!(x, Vector::from_column_slice(&[0.8, 0.2]), epsilon = 1e-12);
        let s = build_portfolio_instance(&m, PortfolioRegion::Simplex.build(2).unwrap()).unwrap();
        assert_relative_eq!(solve_linear(&s).unwrap().point(), Vector::from_column_slice(&[0.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn synthetic_fixture_is_deterministic_and_anchored() {
        let a = synthetic_returns(SYNTHETIC_SEED, 10, 500).unwrap();
        let b = synthetic_returns(SYNTHETIC_SEED, 10, 500).unwrap();
        assert_eq!(a.returns, b.returns);
        let (train, _) = a.split(0.8).unwrap();
        let m = estimate_moments(&train, None).unwrap();
        let w = m.sigma.clone().cholesky().unwrap().solve(&Vector::from_element(10, 1.0));
        assert!(w.iter().all(|&v| v > 0.0), "{w}");
    }

    #[test]
    fn csv_round_trip() {
        let t = synthetic_returns(1, 3, 6).unwrap();
        let mut buf = Vec::new();
        write_returns_csv(&t, &mut buf).unwrap();
        let back = parse_returns(buf.as_slice()).unwrap();
        assert_eq!(back.returns, t.returns);
        assert_eq!(back.assets, t.assets);
    }
}
