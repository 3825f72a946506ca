//! Tracing the proximal, central and reference robust paths.
//!
//! Points are indexed by `ω`, the inverse accumulated step: the proximal iterate after steps
//! `λ_0, …, λ_{k−1}` carries `ω_k = (Σ_{j<k} λ_j⁻¹)⁻¹`. Every path starts at `ω = ∞`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, Vector};
use crate::parallel;
use crate::region::{FaceSignature, FACE_TOL};
use crate::solve::{
    central_point, proximal_step, radius_for, robust_anchor, solve_linear, solve_regularized, ProblemInstance,
    SolveReport,
};

/// Which family of points a path samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Proximal,
    Central,
    Reference,
}

/// One point of a traced path.
#[derive(Clone, Debug, Serialize)]
pub struct PathPoint {
    pub k: usize,
    #[serde(serialize_with = "crate::output::ser_f64")]
    pub omega: f64,
    /// Uncertainty radius certified for this point; `0` with `radius_degenerate` at the origin.
    #[serde(serialize_with = "crate::output::ser_f64")]
    pub radius: f64,
    pub radius_degenerate: bool,
    /// Step parameter that produced this point, for proximal paths.
    pub lambda: Option<f64>,
    pub x: Vec<f64>,
    pub nominal: f64,
    pub phi: f64,
    pub face: FaceSignature,
    pub face_ambiguous: bool,
    pub vi_residual: f64,
}

impl PathPoint {
    pub fn point(&self) -> Vector {
        Vector::from_column_slice(&self.x)
    }
}

/// How a trace ended.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "detail")]
pub enum PathStatus {
    /// The schedule or grid was exhausted.
    Complete,
    /// The nominal gap to the linear-program solution fell below the stop tolerance.
    ReachedTarget,
    /// The point budget ran out before the target was reached.
    Truncated,
    /// A subproblem failed; the points before it are valid.
    Partial(String),
}

/// A sampled path with its provenance.
#[derive(Clone, Debug, Serialize)]
pub struct TracedPath {
    pub kind: PathKind,
    pub points: Vec<PathPoint>,
    /// SHA-256 of the instance data.
    pub fingerprint: String,
    /// Whether the active constraint sets only grow along the path.
    pub monotone: bool,
    /// Starting point: `x_R` for proximal and reference paths, `x0` for central paths.
    pub anchor: Vec<f64>,
    pub status: PathStatus,
}

impl TracedPath {
    pub fn omegas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.omega).collect()
    }

    pub fn anchor_point(&self) -> Vector {
        Vector::from_column_slice(&self.anchor)
    }
}

/// Step parameters `λ_k` for the proximal method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum StepSchedule {
    /// `λ_k = λ`.
    Constant { lambda: f64, steps: usize },
    /// `λ_k = λ_0 (k + 1)`, so `Σ λ_k⁻¹` diverges like the harmonic series.
    Harmonic { lambda0: f64, steps: usize },
    /// Steps chosen so that `ω_k` is log-uniform from `omega_max` down to `omega_min`.
    /// Missing endpoints are chosen from the instance.
    Geometric {
        #[serde(default)]
        omega_max: Option<f64>,
        #[serde(default)]
        omega_min: Option<f64>,
        #[serde(default = "default_points")]
        points: usize,
    },
}

fn default_points() -> usize {
    100
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Geometric { omega_max: None, omega_min: None, points: 100 }
    }
}

/// When to stop tracing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopRule {
    /// Stop once `⟨a0, x_k − x_E⟩ ≤ tolerance · scale`.
    pub tolerance: f64,
    pub max_points: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_points: 10_000 }
    }
}

/// `ω_k = (Σ_{j<k} λ_j⁻¹)⁻¹` for `k = 1, …, K`.
pub fn accumulate_omega(lambdas: &[f64]) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("step parameters must be positive and finite, got {l}")));
        }
        acc += 1.0 / l;
        out.push(1.0 / acc);
    }
    Ok(out)
}

/// Steps `λ_k` whose accumulated parameters hit the decreasing targets `omegas` exactly.
pub fn steps_for_omegas(omegas: &[f64]) -> Result<Vec<f64>> {
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(omegas.len());
    for &w in omegas {
        let u = 1.0 / w;
        if !(w > 0.0 && w.is_finite() && u > prev) {
            return Err(Error::InvalidArgument("omega targets must be positive, finite and strictly decreasing".into()));
        }
        out.push(1.0 / (u - prev));
        prev = u;
    }
    Ok(out)
}

/// `points` log-uniform values from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Anchors shared by the tracers: `x_R`, and `x_E` when the linear program is bounded.
struct Anchors {
    x_r: Vector,
    x_e: Option<Vector>,
    scale: f64,
}

fn anchors(inst: &ProblemInstance) -> Result<Anchors> {
    let x_r = robust_anchor(inst)?;
    let x_e = match solve_linear(inst) {
        Ok(r) => Some(r.point()),
        Err(Error::Unbounded) => None,
        Err(e) => return Err(e),
    };
    let mut scale = inst.objective_scale(&x_r);
    if let Some(e) = &x_e {
        scale = scale.max(inst.objective_scale(e));
    }
    Ok(Anchors { x_r, x_e, scale })
}

/// Approximately the largest `ω` where `pred` holds, for a predicate that holds for all small
/// `ω` and fails for large ones.
fn search_omega(start: f64, pred: impl Fn(f64) -> Result<bool>) -> Result<f64> {
    let mut lo = start;
    let mut hi = start;
    if pred(start)? {
        while pred(hi)? {
            lo = hi;
            hi *= 10.0;
            if hi > start * 1e30 {
                return Ok(lo);
            }
        }
    } else {
        while !pred(lo)? {
            hi = lo;
            lo /= 10.0;
            if lo < start * 1e-30 {
                return Ok(lo);
            }
        }
    }
    for _ in 0..30 {
        let mid = (lo * hi).sqrt();
        if pred(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Resolves automatic endpoints of a geometric schedule into explicit `(ω_max, ω_min)`.
fn geometric_range(inst: &ProblemInstance, a: &Anchors, omega_max: Option<f64>, omega_min: Option<f64>, tol: f64) -> Result<(f64, f64)> {
    let phi = inst.phi();
    let start = inst.a0().norm().max(f64::MIN_POSITIVE);
    let span = match &a.x_e {
        Some(e) => phi.divergence_unchecked(e, &a.x_r),
        None => phi.value_unchecked(&a.x_r).max(1.0),
    };
    let hi = match omega_max {
        Some(w) => w,
        None if span == 0.0 => 1.0,
        None => {
            // first step moves a thousandth of the way in divergence
            let target = 1e-3 * span;
            search_omega(start, |w| {
                let x = solve_regularized(inst, w)?.point();
                Ok(phi.divergence_unchecked(&x, &a.x_r) > target)
            })?
        }
    };
    let lo = match (omega_min, &a.x_e) {
        (Some(w), _) => w,
        (None, None) => hi * 1e-6,
        (None, Some(e)) => {
            let target = inst.nominal(e) + tol * a.scale;
            let w = search_omega(hi, |w| Ok(inst.nominal(&solve_regularized(inst, w)?.point()) <= target))?;
            (0.5 * w).min(hi * 0.5)
        }
    };
    if !(hi > lo && lo > 0.0 && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid omega range [{lo}, {hi}]")));
    }
    Ok((hi, lo))
}

/// Step parameters for `schedule`, resolved against the instance.
pub fn resolve_schedule(inst: &ProblemInstance, schedule: &StepSchedule, stop: &StopRule) -> Result<Vec<f64>> {
    let a = anchors(inst)?;
    resolve_with(inst, &a, schedule, stop)
}

fn resolve_with(inst: &ProblemInstance, a: &Anchors, schedule: &StepSchedule, stop: &StopRule) -> Result<Vec<f64>> {
    let cap = stop.max_points.saturating_sub(1);
    let positive = |l: f64| {
        if l > 0.0 && l.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("step parameter must be positive and finite, got {l}")))
        }
    };
    Ok(match *schedule {
        StepSchedule::Constant { lambda, steps } => {
            positive(lambda)?;
            vec![lambda; steps.min(cap)]
        }
        StepSchedule::Harmonic { lambda0, steps } => {
            positive(lambda0)?;
            (0..steps.min(cap)).map(|k| lambda0 * (k + 1) as f64).collect()
        }
        StepSchedule::Geometric { omega_max, omega_min, points } => {
            let (hi, lo) = geometric_range(inst, a, omega_max, omega_min, stop.tolerance)?;
            steps_for_omegas(&log_grid(hi, lo, points.min(cap).max(1)))?
        }
    })
}

fn make_point(inst: &ProblemInstance, k: usize, omega: f64, lambda: Option<f64>, rep: &SolveReport) -> Result<PathPoint> {
    let x = rep.point();
    let region = inst.region();
    let radius = radius_for(inst, omega, &x);
    let degenerate = omega.is_finite() && inst.phi().gauge().polar().value(&x) == 0.0;
    Ok(PathPoint {
        k,
        omega,
        radius,
        radius_degenerate: degenerate,
        lambda,
        nominal: inst.nominal(&x),
        phi: inst.phi().value_unchecked(&x),
        face: region.face_signature(&x, FACE_TOL)?,
        face_ambiguous: region.face_is_ambiguous(&x, FACE_TOL),
        vi_residual: rep.vi_residual,
        x: rep.x.clone(),
    })
}

fn anchor_report(x: &Vector) -> SolveReport {
    SolveReport { x: x.iter().copied().collect(), objective: 0.0, vi_residual: 0.0, iterations: 0, converged: true }
}

/// Whether the active sets are nested along the path.
pub fn check_monotone(path: &TracedPath) -> bool {
    path.points.windows(2).all(|w| w[0].face.is_subset_of(&w[1].face))
}

fn finish(inst: &ProblemInstance, kind: PathKind, points: Vec<PathPoint>, anchor: &Vector, status: PathStatus) -> TracedPath {
    let mut path = TracedPath {
        kind,
        points,
        fingerprint: inst.fingerprint(),
        monotone: false,
        anchor: anchor.iter().copied().collect(),
        status,
    };
    path.monotone = check_monotone(&path);
    path
}

/// The proximal point path `x_{k+1} = argmin ⟨a0, x⟩ + λ_k D_φ(x, x_k)` from `x_0 = x_R`.
pub fn trace_proximal_path(inst: &ProblemInstance, schedule: &StepSchedule, stop: &StopRule) -> Result<TracedPath> {
    let a = anchors(inst)?;
    let lambdas = resolve_with(inst, &a, schedule, stop)?;
    let x_r = a.x_r.clone();
    proximal_from(inst, &a, &x_r, &lambdas, stop)
}

/// The proximal point path from an arbitrary feasible `x0` with explicit steps.
pub fn trace_proximal_path_from(inst: &ProblemInstance, x0: &Vector, lambdas: &[f64], stop: &StopRule) -> Result<TracedPath> {
    if !inst.region().contains(x0, 1e-9)? {
        return Err(Error::InvalidArgument("starting point is not feasible".into()));
    }
    for &l in lambdas {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("step parameter must be positive and finite, got {l}")));
        }
    }
    let a = anchors(inst)?;
    proximal_from(inst, &a, x0, lambdas, stop)
}

fn proximal_from(inst: &ProblemInstance, a: &Anchors, x0: &Vector, lambdas: &[f64], stop: &StopRule) -> Result<TracedPath> {
    let target = a.x_e.as_ref().map(|e| inst.nominal(e) + stop.tolerance * a.scale);
    let mut points = vec![make_point(inst, 0, f64::INFINITY, None, &anchor_report(x0))?];
    let mut x = x0.clone();
    let mut upsilon = 0.0;
    let mut status = PathStatus::Complete;
    for (k, &lambda) in lambdas.iter().take(stop.max_points.saturating_sub(1)).enumerate() {
        let rep = match proximal_step(inst, &x, lambda) {
            Ok(r) => r,
            Err(e) => {
                status = PathStatus::Partial(e.to_string());
                break;
            }
        };
        upsilon += 1.0 / lambda;
        let point = make_point(inst, k + 1, 1.0 / upsilon, Some(lambda), &rep)?;
        x = rep.point();
        let reached = target.is_some_and(|t| point.nominal <= t);
        points.push(point);
        if reached {
            status = PathStatus::ReachedTarget;
            break;
        }
    }
    if status == PathStatus::Complete && points.len() >= stop.max_points && target.is_some() {
        status = PathStatus::Truncated;
    }
    Ok(finish(inst, PathKind::Proximal, points, x0, status))
}

fn check_grid(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(Error::InvalidArgument("omega grid is empty".into()));
    }
    for w in omegas.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::InvalidArgument("omega grid must be strictly decreasing".into()));
        }
    }
    if !(omegas[omegas.len() - 1] > 0.0) {
        return Err(Error::InvalidArgument("omega grid must be positive".into()));
    }
    Ok(())
}

fn trace_grid(
    inst: &ProblemInstance,
    kind: PathKind,
    omegas: &[f64],
    anchor: &Vector,
    solve: impl Fn(f64) -> Result<SolveReport> + Sync + Send,
) -> Result<TracedPath> {
    check_grid(omegas)?;
    let reports = parallel::map(omegas, |&w| solve(w));
    let mut points = Vec::with_capacity(omegas.len());
    let mut status = PathStatus::Complete;
    for (k, (rep, &w)) in reports.into_iter().zip(omegas).enumerate() {
        match rep {
            Ok(r) => points.push(make_point(inst, k, w, None, &r)?),
            Err(e) if k == 0 => return Err(e),
            Err(e) => {
                status = PathStatus::Partial(e.to_string());
                break;
            }
        }
    }
    Ok(finish(inst, kind, points, anchor, status))
}

/// `x_R'(ω)` on a decreasing grid; a leading `∞` gives `x_R`.
pub fn trace_reference_robust_path(inst: &ProblemInstance, omegas: &[f64]) -> Result<TracedPath> {
    let x_r = robust_anchor(inst)?;
    trace_grid(inst, PathKind::Reference, omegas, &x_r, |w| solve_regularized(inst, w))
}

/// `x_CP(ω) = argmin ⟨a0, x⟩ + ω D_φ(x, x0)` on a decreasing grid.
pub fn trace_central_path(inst: &ProblemInstance, omegas: &[f64], x0: &Vector) -> Result<TracedPath> {
    check_dim(inst.dim(), x0)?;
    trace_grid(inst, PathKind::Central, omegas, x0, |w| central_point(inst, w, x0))
}

/// How points of two paths are paired by [`compare_paths`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Matching {
    /// Pair each point of `a` with the second path's point at the same `ω`, re-solving when
    /// the second path is a reference or central path.
    ByOmega,
    /// Pair each point of `a` with the closest point of the second path in divergence,
    /// refined along the second path when it can be re-solved.
    Nearest,
}

/// The second path's point at `ω`, when it can be evaluated off-grid.
fn resolve_on(inst: &ProblemInstance, b: &TracedPath, omega: f64) -> Result<Option<Vector>> {
    Ok(match b.kind {
        PathKind::Reference => Some(solve_regularized(inst, omega)?.point()),
        PathKind::Central => Some(central_point(inst, omega, &b.anchor_point())?.point()),
        PathKind::Proximal => b
            .points
            .iter()
            .find(|p| p.omega == omega || (p.omega - omega).abs() <= 1e-12 * omega)
            .map(PathPoint::point),
    })
}

/// `max_i D_φ(a_i, b(a_i))` under the chosen matching.
pub fn compare_paths(inst: &ProblemInstance, a: &TracedPath, b: &TracedPath, matching: Matching) -> Result<f64> {
    if a.fingerprint != b.fingerprint || a.fingerprint != inst.fingerprint() {
        return Err(Error::InvalidArgument("paths were traced on different instances".into()));
    }
    let phi = inst.phi();
    let gaps = parallel::map(&a.points, |p| -> Result<f64> {
        let x = p.point();
        match matching {
            Matching::ByOmega => match resolve_on(inst, b, p.omega)? {
                Some(y) => Ok(phi.divergence_unchecked(&x, &y)),
                None => Err(Error::InvalidArgument(format!("no point at omega {} on the second path", p.omega))),
            },
            Matching::Nearest => nearest_gap(inst, &x, b),
        }
    });
    gaps.into_iter().try_fold(0.0_f64, |m, g| Ok(m.max(g?)))
}

fn nearest_gap(inst: &ProblemInstance, x: &Vector, b: &TracedPath) -> Result<f64> {
    let phi = inst.phi();
    let (j, best) = b
        .points
        .iter()
        .enumerate()
        .map(|(j, q)| (j, phi.divergence_unchecked(x, &q.point())))
        .min_by(|l, r| l.1.total_cmp(&r.1))
        .ok_or_else(|| Error::InvalidArgument("second path is empty".into()))?;
    if b.kind == PathKind::Proximal || best == 0.0 {
        return Ok(best);
    }
    // golden-section search in log ω between the neighbours of the grid minimizer
    let w = |i: usize| {
        let v = b.points[i].omega;
        if v.is_finite() { v } else { b.points.get(1).map_or(1.0, |p| p.omega) * 1e6 }
    };
    let hi = w(j.saturating_sub(1)).max(w(j));
    let lo = if j + 1 < b.points.len() { w(j + 1) } else { w(j) * 0.5 };
    let (mut a_, mut b_) = (lo.ln(), hi.ln());
    let f = |t: f64| -> Result<f64> {
        Ok(resolve_on(inst, b, t.exp())?.map_or(f64::INFINITY, |y| phi.divergence_unchecked(x, &y)))
    };
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b_ - ratio * (b_ - a_);
    let mut d = a_ + ratio * (b_ - a_);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut found = best.min(fc).min(fd);
    for _ in 0..60 {
        if fc < fd {
            b_ = d;
            d = c;
            fd = fc;
            c = b_ - ratio * (b_ - a_);
            fc = f(c)?;
        } else {
            a_ = c;
            c = d;
            fc = fd;
            d = a_ + ratio * (b_ - a_);
            fd = f(d)?;
        }
        found = found.min(fc).min(fd);
        if (b_ - a_).abs() < 1e-13 {
            break;
        }
    }
    Ok(found)
}
