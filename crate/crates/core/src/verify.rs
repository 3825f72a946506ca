//! Numerical checks of the path identities and bounds on a single instance.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::bounds::{theorem2_bound, theorem2_check, theorem3_bound};
use crate::error::{Error, Result};
use crate::gauge::{kappa_bound, DistanceGenerator, GaugeKind};
use crate::linalg::{inf_norm, Vector};
use crate::path::{resolve_schedule, trace_central_path, trace_proximal_path, accumulate_omega, compare_paths, log_grid, Matching, StepSchedule, StopRule, TracedPath};
use crate::region::{bregman_project, project_affine_hull, FeasibleRegion};
use crate::solve::{central_point, robust_anchor, solve_regularized, worst_case_value, ProblemInstance};

/// Identity or bound to check.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    /// Central path from `x_R` against the robust path: `D ≤ κ² D(x_R, x_A)`.
    Thm2,
    /// Per-face proximal-versus-central bound.
    Thm3,
    /// Proximal path equals the robust path under anchor equality and monotonicity.
    Thm4,
    /// First proximal point equals the central point at `ω = λ_0`.
    Prop1,
    /// Proximal iterates lie on the central path for polar-matched balls.
    Prop2,
    /// `Π_X = Π_X ∘ Π_{Aff X}`.
    Lemma3,
    /// Closed-form worst case against a sampled maximum over the uncertainty boundary.
    Lemma4,
    /// `D(Πx, Πy) ≤ κ D(x, y)`.
    Kappa,
}

impl Check {
    pub const ALL: [Check; 8] = [Check::Thm2, Check::Thm3, Check::Thm4, Check::Prop1, Check::Prop2, Check::Lemma3, Check::Lemma4, Check::Kappa];

    pub fn as_str(self) -> &'static str {
        match self {
            Check::Thm2 => "thm2",
            Check::Thm3 => "thm3",
            Check::Thm4 => "thm4",
            Check::Prop1 => "prop1",
            Check::Prop2 => "prop2",
            Check::Lemma3 => "lemma3",
            Check::Lemma4 => "lemma4",
            Check::Kappa => "kappa",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Check {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Check::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown check {s:?}; expected one of thm2, thm3, thm4, prop1, prop2, lemma3, lemma4, kappa")))
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub check: Check,
    /// False when the instance does not meet the hypotheses; such checks pass vacuously.
    pub applicable: bool,
    pub bound: Option<f64>,
    pub observed: f64,
    pub pass: bool,
    pub note: String,
}

/// Sample sizes, tolerances and path settings for [`run_check`].
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub schedule: StepSchedule,
    pub stop: StopRule,
    pub seed: u64,
    pub lemma3_samples: usize,
    pub lemma4_cases: usize,
    pub lemma4_samples: usize,
    pub kappa_pairs: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            schedule: StepSchedule::default(),
            stop: StopRule::default(),
            seed: 0,
            lemma3_samples: 1000,
            lemma4_cases: 100,
            lemma4_samples: 100_000,
            kappa_pairs: 10_000,
        }
    }
}

/// Tolerance of the path-equality checks.
pub const PATH_TOL: f64 = 1e-6;
/// Tolerance of the first-step identity.
pub const PROP1_TOL: f64 = 1e-8;
/// Tolerance of the projection composition identity.
pub const LEMMA3_TOL: f64 = 1e-8;
/// Largest accepted relative gap of a sampled worst case.
pub const LEMMA4_GAP: f64 = 1e-3;
/// Relative slack on the expansiveness bound.
pub const KAPPA_SLACK: f64 = 1e-6;

/// `‖Π_X(y) − Π_X(Π_{Aff X}(y))‖∞ / (1 + ‖Π_X(y)‖∞)`.
pub fn lemma3_gap(region: &FeasibleRegion, phi: &DistanceGenerator, y: &Vector) -> Result<f64> {
    let direct = bregman_project(region, phi, y)?;
    let composed = bregman_project(region, phi, &project_affine_hull(region, phi, y)?)?;
    Ok(inf_norm(&(&direct - &composed)) / (1.0 + inf_norm(&direct)))
}

/// `max ⟨a0 + r ξ, x⟩` over `samples` points `ξ` on the boundary of `V`, from Gaussian directions.
pub fn sampled_worst_case(inst: &ProblemInstance, x: &Vector, r: f64, samples: usize, rng: &mut impl Rng) -> Result<f64> {
    let v = inst.uncertainty();
    let n = inst.dim();
    // for an ellipsoid {ξ : ξᵀ A ξ ≤ 1}, ξ = L⁻ᵀ u / ‖u‖ with A = L Lᵀ is uniform in whitened coordinates
    let whiten = match v.kind() {
        GaugeKind::Ellipsoid { matrix } => {
            let l = matrix.clone().cholesky().ok_or_else(|| Error::InvalidShape("ellipsoid matrix is not positive definite".into()))?;
            Some(l.l().transpose().try_inverse().ok_or_else(|| Error::InvalidShape("singular ellipsoid factor".into()))?)
        }
        GaugeKind::LpBall { .. } => None,
    };
    let mut best = f64::NEG_INFINITY;
    let mut u = Vector::zeros(n);
    for _ in 0..samples {
        u.iter_mut().for_each(|c| *c = rng.sample(StandardNormal));
        let xi = match &whiten {
            Some(w) => w * &u,
            None => u.clone(),
        };
        let s = v.gauge_norm(&xi)?;
        if s > 0.0 {
            best = best.max(xi.dot(x) / s);
        }
    }
    Ok(inst.nominal(x) + r * best)
}

/// `D(Πx, Πy) / (κ D(x, y))`, or `None` when `φ` has no finite `κ` or `x = y`.
pub fn kappa_ratio(region: &FeasibleRegion, phi: &DistanceGenerator, x: &Vector, y: &Vector) -> Result<Option<f64>> {
    let Some(s) = phi.smoothness() else { return Ok(None) };
    let d = phi.divergence(x, y)?;
    if d == 0.0 {
        return Ok(None);
    }
    let px = bregman_project(region, phi, x)?;
    let py = bregman_project(region, phi, y)?;
    Ok(Some(phi.divergence_unchecked(&px, &py) / (kappa_bound(&s) * d)))
}

fn gaussian(rng: &mut ChaCha8Rng, center: &Vector, spread: f64) -> Vector {
    Vector::from_fn(center.len(), |i, _| center[i] + spread * rng.sample::<f64, _>(StandardNormal))
}

fn report(check: Check, applicable: bool, bound: Option<f64>, observed: f64, pass: bool, note: impl Into<String>) -> CheckReport {
    CheckReport { check, applicable, bound, observed, pass, note: note.into() }
}

/// Runs one check; every check is deterministic given `opts.seed`.
pub fn run_check(inst: &ProblemInstance, check: Check, opts: &VerifyOptions) -> Result<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (check as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let x_r = robust_anchor(inst)?;
    let spread = 1.0 + inf_norm(&x_r);
    let phi = inst.phi();
    let region = inst.region();
    match check {
        Check::Thm2 => {
            let lambdas = resolve_schedule(inst, &opts.schedule, &opts.stop)?;
            let omegas = accumulate_omega(&lambdas)?;
            let t = theorem2_check(inst, &omegas)?;
            let r = t.report;
            let observed = r.observed_max_gap.unwrap_or(0.0);
            match r.bound {
                None => Ok(report(check, false, None, observed, true, "distance generator is not quadratic; no finite kappa")),
                Some(b) => {
                    let pass = observed <= b * (1.0 + 1e-9) + 1e-12;
                    let ratio = if b > 0.0 { observed / b } else { 0.0 };
                    Ok(report(check, true, Some(b), observed, pass, format!("anchor gap {:e}, kappa {:e}, observed/bound {ratio:.9}", r.anchor_gap, r.kappa.unwrap_or(f64::NAN))))
                }
            }
        }
        Check::Thm3 => {
            if phi.smoothness().is_none() {
                return Ok(report(check, false, None, 0.0, true, "distance generator is not quadratic; no finite kappa"));
            }
            let prox = trace_proximal_path(inst, &opts.schedule, &opts.stop)?;
            let central = trace_central_path(inst, &prox.omegas(), &x_r)?;
            let t = theorem3_bound(inst, &prox, &central)?;
            let worst = t.faces.iter().filter(|f| f.checked > 0).map(|f| f.observed - f.bound).fold(f64::NEG_INFINITY, f64::max);
            let checked: usize = t.faces.iter().map(|f| f.checked).sum();
            Ok(report(
                check,
                true,
                None,
                t.max_observed,
                t.pass,
                format!("{} faces, {checked} points compared, largest excess over the per-face bound {worst:e}", t.faces.len()),
            ))
        }
        Check::Thm4 => {
            let equal = theorem2_bound(inst)?.anchors_equal(1e-9);
            let prox = trace_proximal_path(inst, &opts.schedule, &opts.stop)?;
            let observed = max_gap_to_robust(inst, &prox)?;
            if !(equal && prox.monotone) {
                let why = if !equal { "anchors differ" } else { "proximal path is not monotone" };
                return Ok(report(check, false, Some(PATH_TOL), observed, true, format!("{why}; no equality claimed")));
            }
            Ok(report(check, true, Some(PATH_TOL), observed, observed <= PATH_TOL, format!("{} points, max-norm gap", prox.points.len())))
        }
        Check::Prop1 => {
            let lambdas = resolve_schedule(inst, &opts.schedule, &opts.stop)?;
            let Some(&l0) = lambdas.first() else {
                return Ok(report(check, false, Some(PROP1_TOL), 0.0, true, "empty schedule"));
            };
            let x1 = crate::solve::proximal_step(inst, &x_r, l0)?.point();
            let c = central_point(inst, l0, &x_r)?.point();
            let observed = inf_norm(&(&x1 - &c)) / (1.0 + inf_norm(&c));
            Ok(report(check, true, Some(PROP1_TOL), observed, observed <= PROP1_TOL, format!("lambda_0 = {l0:e}")))
        }
        Check::Prop2 => {
            let prox = trace_proximal_path(inst, &opts.schedule, &opts.stop)?;
            let finite: Vec<f64> = prox.omegas().into_iter().filter(|w| w.is_finite()).collect();
            let (hi, lo) = match (finite.first(), finite.last()) {
                (Some(&h), Some(&l)) => (h * 10.0, l * 0.1),
                _ => return Ok(report(check, false, Some(PATH_TOL), 0.0, true, "no proximal steps")),
            };
            let mut grid = vec![f64::INFINITY];
            grid.extend(log_grid(hi, lo, 400));
            let central = trace_central_path(inst, &grid, &x_r)?;
            let observed = compare_paths(inst, &prox, &central, Matching::Nearest)?;
            let matched = region.is_polar_ball_of(phi);
            if !matched {
                return Ok(report(check, false, Some(PATH_TOL), observed, true, "region is not a level set of the polar gauge"));
            }
            Ok(report(check, true, Some(PATH_TOL), observed, observed <= PATH_TOL, "nearest-match divergence to the central path from x_R"))
        }
        Check::Lemma3 => {
            let mut observed = 0.0_f64;
            for _ in 0..opts.lemma3_samples {
                let y = gaussian(&mut rng, &x_r, spread);
                observed = observed.max(lemma3_gap(region, phi, &y)?);
            }
            Ok(report(check, true, Some(LEMMA3_TOL), observed, observed <= LEMMA3_TOL, format!("{} samples", opts.lemma3_samples)))
        }
        Check::Lemma4 => {
            let mut worst_gap = 0.0_f64;
            let mut over = 0.0_f64;
            for _ in 0..opts.lemma4_cases {
                let x = gaussian(&mut rng, &x_r, spread);
                let r = rng.gen_range(0.1..2.0);
                let closed = worst_case_value(inst, &x, r)?;
                let sampled = sampled_worst_case(inst, &x, r, opts.lemma4_samples, &mut rng)?;
                let spreadv = r * inst.uncertainty().polar_gauge_norm(&x)?;
                if spreadv > 0.0 {
                    worst_gap = worst_gap.max((closed - sampled) / spreadv);
                    over = over.max((sampled - closed) / spreadv);
                }
            }
            let pass = over <= 1e-12 && worst_gap <= LEMMA4_GAP;
            Ok(report(
                check,
                true,
                Some(LEMMA4_GAP),
                worst_gap,
                pass,
                format!("{} cases of {} boundary samples; largest excess of a sample over the closed form {over:e}", opts.lemma4_cases, opts.lemma4_samples),
            ))
        }
        Check::Kappa => {
            let Some(s) = phi.smoothness() else {
                return Ok(report(check, false, None, 0.0, true, "distance generator is not quadratic; no finite kappa"));
            };
            let mut observed = 0.0_f64;
            for _ in 0..opts.kappa_pairs {
                let x = gaussian(&mut rng, &x_r, spread);
                let y = gaussian(&mut rng, &x_r, spread);
                if let Some(q) = kappa_ratio(region, phi, &x, &y)? {
                    observed = observed.max(q);
                }
            }
            let bound = 1.0 + KAPPA_SLACK;
            Ok(report(check, true, Some(bound), observed, observed <= bound, format!("kappa {:e}; observed is the largest ratio to the bound over {} pairs", kappa_bound(&s), opts.kappa_pairs)))
        }
    }
}

/// `max_k ‖x_k − x_R'(ω_k)‖∞` over the points of `path`.
pub fn max_gap_to_robust(inst: &ProblemInstance, path: &TracedPath) -> Result<f64> {
    let mut gap = 0.0_f64;
    for p in &path.points {
        let y = solve_regularized(inst, p.omega)?.point();
        gap = gap.max(inf_norm(&(p.point() - y)));
    }
    Ok(gap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{GaugeSet, PostComposition};
    use crate::linalg::Matrix;

    fn simplex3() -> ProblemInstance {
        ProblemInstance::new(Vector::from_column_slice(&[0.3, -0.1, 0.5]), FeasibleRegion::simplex(3).unwrap(), GaugeSet::euclidean(3).unwrap(), PostComposition::HalfSquare).unwrap()
    }

    fn opts() -> VerifyOptions {
        VerifyOptions { lemma3_samples: 50, lemma4_cases: 5, lemma4_samples: 20_000, kappa_pairs: 50, ..Default::default() }
    }

    #[test]
    fn parse_names() {
        for c in Check::ALL {
            assert_eq!(c.as_str().parse::<Check>().unwrap(), c);
        }
        assert!("thm9".parse::<Check>().is_err());
    }

    #[test]
    fn simplex_checks_pass() {
        let inst = simplex3();
        for c in Check::ALL {
            let r = run_check(&inst, c, &opts()).unwrap();
            assert!(r.pass, "{c}: {r:?}");
        }
        let r = run_check(&inst, Check::Thm4, &opts()).unwrap();
        assert!(r.applicable);
    }

    #[test]
    fn sharpness_ratio_reaches_one() {
        let region = FeasibleRegion::eq_box(
            Matrix::from_row_slice(1, 2, &[1.0, 2.0]),
            Vector::from_column_slice(&[2.0]),
            Vector::from_column_slice(&[0.5, 0.0]),
            Vector::from_column_slice(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        let inst = ProblemInstance::new(Vector::from_column_slice(&[-1.0, 1.0]), region, GaugeSet::euclidean(2).unwrap(), PostComposition::HalfSquare).unwrap();
        let r = run_check(&inst, Check::Thm2, &opts()).unwrap();
        assert!(r.pass);
        assert!(r.observed >= r.bound.unwrap() * (1.0 - 1e-6), "{r:?}");
    }
}
