//! Problem instances and the subproblems along the three paths: the nominal linear program,
//! the regularized problem, the radius-penalized robust counterpart, proximal steps and
//! central points.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gauge::{DistanceGenerator, GaugeKind, GaugeSet, PostComposition};
use crate::linalg::{check_dim, check_finite, inf_norm, lstsq, Matrix, Vector};
use crate::qp::{euclidean_projection, lp_face};
use crate::region::{project_dual, DualProjection, FeasibleRegion, RegionKind};
use crate::smooth::{minimize_free, minimize_poly, Minimum, Objective};

/// The robust counterpart data: nominal cost `a0`, region, uncertainty shape `V`, and the
/// generator `φ = g ∘ ‖·‖_{V°}`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    a0: Vector,
    region: FeasibleRegion,
    phi: DistanceGenerator,
}

/// Outcome of one subproblem solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Natural residual `‖x − Π_X(x − F(x))‖∞` of the optimality condition.
    pub vi_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn point(&self) -> Vector {
        Vector::from_column_slice(&self.x)
    }
}

impl ProblemInstance {
    pub fn new(a0: Vector, region: FeasibleRegion, uncertainty: GaugeSet, g: PostComposition) -> Result<Self> {
        Self::with_generator(a0, region, DistanceGenerator::new(uncertainty, g)?)
    }

    pub fn with_generator(a0: Vector, region: FeasibleRegion, phi: DistanceGenerator) -> Result<Self> {
        check_dim(region.dim(), &a0)?;
        check_dim(phi.dim(), &a0)?;
        check_finite("a0", &a0)?;
        Ok(Self { a0, region, phi })
    }

    pub fn a0(&self) -> &Vector {
        &self.a0
    }

    pub fn region(&self) -> &FeasibleRegion {
        &self.region
    }

    pub fn phi(&self) -> &DistanceGenerator {
        &self.phi
    }

    pub fn uncertainty(&self) -> &GaugeSet {
        self.phi.gauge()
    }

    pub fn dim(&self) -> usize {
        self.a0.len()
    }

    pub fn nominal(&self, x: &Vector) -> f64 {
        self.a0.dot(x)
    }

    /// Scale used to make objective tolerances relative.
    pub(crate) fn objective_scale(&self, x: &Vector) -> f64 {
        1.0_f64.max(self.a0.norm() * x.norm())
    }

    /// SHA-256 over a canonical rendering of the instance data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |tag: &str, xs: &[f64]| {
            h.update(tag.as_bytes());
            for x in xs {
                h.update(x.to_bits().to_le_bytes());
            }
        };
        put("a0", self.a0.as_slice());
        match self.region.kind() {
            RegionKind::Hyperplane { normal, offset } => {
                put("hyperplane", normal.as_slice());
                put("offset", &[*offset]);
            }
            RegionKind::AffineSubspace { a, b } => {
                put("affine", a.transpose().as_slice());
                put("b", b.as_slice());
            }
            RegionKind::EqBoxPolyhedron { a, b, lb, ub } => {
                put("eq_box", a.transpose().as_slice());
                put("b", b.as_slice());
                put("lb", lb.as_slice());
                put("ub", ub.as_slice());
            }
            RegionKind::NormBall { gauge, level } => {
                put_gauge(&mut put, gauge);
                put("level", &[*level]);
            }
        }
        put_gauge(&mut put, self.phi.gauge());
        match self.phi.post() {
            PostComposition::HalfSquare => put("half_square", &[]),
            PostComposition::PowerMean { s } => put("power_mean", &[s]),
        }
        hex::encode(h.finalize())
    }
}

fn put_gauge(put: &mut impl FnMut(&str, &[f64]), g: &GaugeSet) {
    match g.kind() {
        GaugeKind::LpBall { p } => put("lp", &[*p, g.dim() as f64]),
        GaugeKind::Ellipsoid { matrix } => put("ellipsoid", matrix.transpose().as_slice()),
    }
}

/// Euclidean natural residual of the problem `min φ(x) − ⟨θ, x⟩` over the region.
fn natural_residual(inst: &ProblemInstance, x: &Vector, grad: &Vector) -> Result<f64> {
    let euclid = DistanceGenerator::euclidean(inst.dim())?;
    let step = x - grad;
    let p = project_dual(&inst.region, &euclid, &step, Some(x))?.x;
    Ok(inf_norm(&(x - p)))
}

fn report(inst: &ProblemInstance, m: Minimum, theta: &Vector, objective: f64) -> Result<SolveReport> {
    let grad = inst.phi.grad_unchecked(&m.x) - theta;
    let vi_residual = natural_residual(inst, &m.x, &grad)?;
    Ok(SolveReport { objective, vi_residual, iterations: m.iterations, converged: m.converged, x: m.x.iter().copied().collect() })
}

fn check_point(inst: &ProblemInstance, x: &Vector, what: &'static str) -> Result<()> {
    check_dim(inst.dim(), x)?;
    check_finite(what, x)
}

/// Minimizer of `φ(x) − ⟨θ, x⟩` over the region, i.e. the projection of `∇φ*(θ)`.
pub(crate) fn project_theta(inst: &ProblemInstance, theta: &Vector) -> Result<Minimum> {
    project_dual(&inst.region, &inst.phi, theta, None)
}

/// `x_R = Π_X(0)`, the regularized solution at `ω = ∞`.
pub fn robust_anchor(inst: &ProblemInstance) -> Result<Vector> {
    Ok(project_theta(inst, &Vector::zeros(inst.dim()))?.x)
}

/// `x_R'(ω) = argmin_{x ∈ X} ⟨a0, x⟩ + ω φ(x)`; `ω = ∞` gives `x_R`.
pub fn solve_regularized(inst: &ProblemInstance, omega: f64) -> Result<SolveReport> {
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let theta = if omega.is_infinite() { Vector::zeros(inst.dim()) } else { -&inst.a0 / omega };
    let m = project_theta(inst, &theta)?;
    let phi = inst.phi.value_unchecked(&m.x);
    let objective = if omega.is_infinite() { phi } else { inst.nominal(&m.x) + omega * phi };
    report(inst, m, &theta, objective)
}

/// The minimizer of `⟨a0, x⟩` over the region with least `φ`.
pub fn solve_linear(inst: &ProblemInstance) -> Result<SolveReport> {
    let n = inst.dim();
    let a0 = &inst.a0;
    let done = |x: Vector, iterations: usize| -> Result<SolveReport> {
        let objective = inst.nominal(&x);
        Ok(SolveReport { objective, vi_residual: 0.0, iterations, converged: true, x: x.iter().copied().collect() })
    };
    match (inst.region.kind(), inst.region.polyhedron()) {
        (RegionKind::NormBall { gauge, level }, _) => {
            if inf_norm(a0) == 0.0 {
                return done(robust_anchor(inst)?, 1);
            }
            done(gauge.polar().grad(a0) * (-level), 1)
        }
        (RegionKind::Hyperplane { .. } | RegionKind::AffineSubspace { .. }, Some(p)) => {
            // bounded only when a0 lies in the row space, and then every point is optimal
            let scale = a0.norm();
            if scale > 0.0 {
                let coef = lstsq(&p.a.transpose(), a0).unwrap_or_else(|| Vector::zeros(p.a.nrows()));
                if (p.a.transpose() * coef - a0).norm() > 1e-10 * scale {
                    return Err(Error::Unbounded);
                }
            }
            done(robust_anchor(inst)?, 1)
        }
        (RegionKind::EqBoxPolyhedron { .. }, Some(p)) => {
            if inf_norm(a0) == 0.0 {
                return done(robust_anchor(inst)?, 1);
            }
            let xr = robust_anchor(inst)?;
            let omega0 = a0.norm() / inst.phi.grad_unchecked(&xr).norm().max(1.0);
            let prox = |theta: &Vector| Ok(project_theta(inst, theta)?.x);
            let (x, lo, hi) = lp_face(p, a0, omega0, &prox)?;
            // least-φ point of the optimal face, computed without the large dual shift
            let fixed: Vec<(usize, f64)> = lo.iter().map(|&i| (i, p.lb[i])).chain(hi.iter().map(|&i| (i, p.ub[i]))).collect();
            let face = p.with_fixed(&fixed);
            let obj = DualProjection { phi: &inst.phi, theta: Vector::zeros(n) };
            let polished = match minimize_poly(&obj, &face, Some(&x)) {
                Ok(m) if p.violation(&m.x) <= 1e-10 * (1.0 + inf_norm(&m.x)) => m.x,
                _ => x,
            };
            let mut polished = polished;
            for i in 0..n {
                polished[i] = polished[i].clamp(p.lb[i], p.ub[i]);
            }
            done(polished, 1)
        }
        _ => unreachable!("polyhedral kinds carry constraints"),
    }
}

/// `⟨a0, x⟩ + r ‖x‖_{V°}`.
struct RadiusPenalized<'a> {
    inst: &'a ProblemInstance,
    r: f64,
}

impl Objective for RadiusPenalized<'_> {
    fn value(&self, x: &Vector) -> f64 {
        self.inst.nominal(x) + self.r * self.inst.phi.gauge().polar().value(x)
    }
    fn grad(&self, x: &Vector) -> Vector {
        &self.inst.a0 + self.inst.phi.gauge().polar().grad(x) * self.r
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        let mut h = self.inst.phi.gauge().polar().hessian(x) * self.r;
        // the norm is flat along rays; a proximal floor keeps the model well conditioned
        let floor = 1e-7 * h.diagonal().amax().max(self.inst.a0.norm()).max(f64::MIN_POSITIVE);
        for i in 0..h.nrows() {
            h[(i, i)] += floor;
        }
        h
    }
}

/// `RadiusPenalized + ½‖x‖_W²`, whose minimizer points along the best direction on the sphere.
struct SphereDirection<'a> {
    base: RadiusPenalized<'a>,
    ball: &'a GaugeSet,
}

impl Objective for SphereDirection<'_> {
    fn value(&self, x: &Vector) -> f64 {
        let t = self.ball.gauge().value(x);
        self.base.value(x) + 0.5 * t * t
    }
    fn grad(&self, x: &Vector) -> Vector {
        let t = self.ball.gauge().value(x);
        self.base.grad(x) + self.ball.gauge().grad(x) * t
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        let norm = self.ball.gauge();
        let t = norm.value(x);
        let g = norm.grad(x);
        self.base.hessian(x) + &g * g.transpose() + norm.hessian(x) * t
    }
}

/// Minimizer of the robust counterpart `⟨a0, x⟩ + r ‖x‖_{V°}` over the region.
pub fn solve_rc_dual(inst: &ProblemInstance, r: f64) -> Result<SolveReport> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("radius must be finite and nonnegative, got {r}")));
    }
    if r == 0.0 {
        return solve_linear(inst);
    }
    let n = inst.dim();
    let obj = RadiusPenalized { inst, r };
    let finish = |x: Vector, iterations: usize, converged: bool| {
        let objective = obj.value(&x);
        SolveReport { objective, vi_residual: f64::NAN, iterations, converged, x: x.iter().copied().collect() }
    };
    match (inst.region.kind(), inst.region.polyhedron()) {
        (RegionKind::NormBall { gauge, level }, _) => {
            if inst.phi.gauge().gauge().value(&inst.a0) <= r {
                return Ok(finish(Vector::zeros(n), 1, true));
            }
            let dir = SphereDirection { base: RadiusPenalized { inst, r }, ball: gauge };
            let start = gauge.polar().grad(&inst.a0) * (-1.0);
            let m = minimize_free(&dir, &start)?;
            let t = gauge.gauge().value(&m.x);
            Ok(finish(m.x * (level / t), m.iterations, m.converged))
        }
        (_, Some(p)) => {
            let start = euclidean_projection(p, &(-&inst.a0 / inst.a0.norm().max(f64::MIN_POSITIVE)))?;
            let m = minimize_poly(&obj, p, Some(&start))?;
            let mut best = (m.x, m.iterations, m.converged);
            // the objective is positively homogeneous: when it is nonnegative, 0 is optimal if feasible
            if obj.value(&best.0) >= 0.0 && p.violation(&Vector::zeros(n)) == 0.0 {
                best.0 = Vector::zeros(n);
            }
            if inf_norm(&best.0) > 1e10 * (1.0 + inf_norm(&start)) {
                return Err(Error::Unbounded);
            }
            Ok(finish(best.0, best.1, best.2))
        }
        _ => unreachable!("polyhedral kinds carry constraints"),
    }
}

fn check_step(x_k: &Vector, lambda: f64, inst: &ProblemInstance) -> Result<()> {
    check_point(inst, x_k, "x_k")?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("step parameter must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// `argmin_{x ∈ X} ⟨a0, x⟩ + λ D_φ(x, x_k)`, computed as `Π_X(∇φ*(∇φ(x_k) − a0/λ))`.
pub fn proximal_step(inst: &ProblemInstance, x_k: &Vector, lambda: f64) -> Result<SolveReport> {
    check_step(x_k, lambda, inst)?;
    let theta = inst.phi.grad_unchecked(x_k) - &inst.a0 / lambda;
    let m = project_dual(&inst.region, &inst.phi, &theta, Some(x_k))?;
    let objective = inst.nominal(&m.x) + lambda * inst.phi.divergence_unchecked(&m.x, x_k);
    report(inst, m, &theta, objective)
}

/// `⟨a0, x⟩ + λ D_φ(x, x_k)` minimized directly in the primal.
struct DirectProximal<'a> {
    inst: &'a ProblemInstance,
    x_k: &'a Vector,
    grad_k: Vector,
    lambda: f64,
}

impl Objective for DirectProximal<'_> {
    fn value(&self, x: &Vector) -> f64 {
        self.inst.nominal(x) + self.lambda * self.inst.phi.divergence_unchecked(x, self.x_k)
    }
    fn grad(&self, x: &Vector) -> Vector {
        &self.inst.a0 + (self.inst.phi.grad_unchecked(x) - &self.grad_k) * self.lambda
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        self.inst.phi.hessian_unchecked(x) * self.lambda
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        let m = self.inst.phi.quadratic_matrix()?;
        Some((m * self.lambda, &self.inst.a0 - m * self.x_k * self.lambda))
    }
}

/// The proximal step by primal minimization rather than through the dual map. Used to
/// cross-check [`proximal_step`]; norm balls fall back to the dual route.
pub fn proximal_step_direct(inst: &ProblemInstance, x_k: &Vector, lambda: f64) -> Result<SolveReport> {
    check_step(x_k, lambda, inst)?;
    let Some(p) = inst.region.polyhedron() else {
        return proximal_step(inst, x_k, lambda);
    };
    let grad_k = inst.phi.grad_unchecked(x_k);
    let obj = DirectProximal { inst, x_k, grad_k: grad_k.clone(), lambda };
    let m = minimize_poly(&obj, p, Some(x_k))?;
    let objective = obj.value(&m.x);
    let theta = grad_k - &inst.a0 / lambda;
    report(inst, m, &theta, objective)
}

/// `x_CP(ω) = argmin_{x ∈ X} ⟨a0, x⟩ + ω D_φ(x, x0)`; `ω = ∞` gives the projection of `x0`.
pub fn central_point(inst: &ProblemInstance, omega: f64, x0: &Vector) -> Result<SolveReport> {
    check_point(inst, x0, "x0")?;
    if !(omega > 0.0) {
        return Err(Error::InvalidArgument(format!("omega must be positive, got {omega}")));
    }
    let mut theta = inst.phi.grad_unchecked(x0);
    if omega.is_finite() {
        theta -= &inst.a0 / omega;
    }
    let m = project_dual(&inst.region, &inst.phi, &theta, Some(x0))?;
    let d = inst.phi.divergence_unchecked(&m.x, x0);
    let objective = if omega.is_finite() { inst.nominal(&m.x) + omega * d } else { d };
    report(inst, m, &theta, objective)
}

/// `max_{a ∈ a0 + rV} ⟨a, x⟩ = ⟨a0, x⟩ + r ‖x‖_{V°}`.
pub fn worst_case_value(inst: &ProblemInstance, x: &Vector, r: f64) -> Result<f64> {
    check_point(inst, x, "x")?;
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be nonnegative, got {r}")));
    }
    let t = inst.phi.gauge().polar().value(x);
    if t == 0.0 {
        return Ok(inst.nominal(x));
    }
    Ok(inst.nominal(x) + r * t)
}

/// Radius at which `x = x_R'(ω)` solves the robust counterpart: `r = ω g'(‖x‖_{V°})`.
pub fn radius_for(inst: &ProblemInstance, omega: f64, x: &Vector) -> f64 {
    let t = inst.phi.gauge().polar().value(x);
    if omega.is_infinite() {
        return if t == 0.0 { 0.0 } else { f64::INFINITY };
    }
    omega * inst.phi.post().d1(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn euclid(a0: &[f64], region: FeasibleRegion) -> ProblemInstance {
        let n = a0.len();
        ProblemInstance::new(v(a0), region, GaugeSet::euclidean(n).unwrap(), PostComposition::HalfSquare).unwrap()
    }

    /// `{x1 + 2 x2 = 2, x1 ≥ 0.5, x2 ≥ 0}` with `a0 = (−1, 1)`.
    fn sharpness() -> ProblemInstance {
        let region = FeasibleRegion::eq_box(
            Matrix::from_row_slice(1, 2, &[1.0, 2.0]),
            v(&[2.0]),
            v(&[0.5, 0.0]),
            v(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        euclid(&[-1.0, 1.0], region)
    }

    #[test]
    fn linear_examples() {
        let s = euclid(&[3.0, 1.0, 2.0], FeasibleRegion::simplex(3).unwrap());
        assert_relative_eq!(solve_linear(&s).unwrap().point(), v(&[0.0, 1.0, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(solve_linear(&sharpness()).unwrap().point(), v(&[2.0, 0.0]), epsilon = 1e-14);
        let ball = euclid(&[0.0, -1.0], FeasibleRegion::norm_ball(GaugeSet::euclidean(2).unwrap(), 1.0).unwrap());
        assert_relative_eq!(solve_linear(&ball).unwrap().point(), v(&[0.0, 1.0]), epsilon = 1e-15);
    }

    #[test]
    fn linear_ties_pick_least_phi() {
        // the whole face x1 + x2 = 1 of the simplex is optimal for a0 = (1, 1, 2)
        let s = euclid(&[1.0, 1.0, 2.0], FeasibleRegion::simplex(3).unwrap());
        assert_relative_eq!(solve_linear(&s).unwrap().point(), v(&[0.5, 0.5, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn linear_unbounded() {
        let h = euclid(&[1.0, 0.0], FeasibleRegion::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap());
        assert_eq!(solve_linear(&h).unwrap_err(), Error::Unbounded);
        let free = FeasibleRegion::eq_box(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[1.0]),
            v(&[0.0, f64::NEG_INFINITY]),
            v(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        assert_eq!(solve_linear(&euclid(&[0.0, 1.0], free.clone())).unwrap_err(), Error::Unbounded);
        assert_relative_eq!(solve_linear(&euclid(&[1.0, 0.0], free)).unwrap().point(), v(&[0.0, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn regularized_examples() {
        let inst = sharpness();
        let r = solve_regularized(&inst, 1.0).unwrap();
        assert_relative_eq!(r.point(), v(&[1.6, 0.2]), epsilon = 1e-14);
        assert!(r.vi_residual < 1e-12);
        let xr = solve_regularized(&inst, f64::INFINITY).unwrap().point();
        assert_relative_eq!(xr, v(&[0.5, 0.75]), epsilon = 1e-14);
        assert!(solve_regularized(&inst, 0.0).is_err());
    }

    #[test]
    fn proximal_and_central_examples() {
        let h = euclid(&[1.0, 0.0], FeasibleRegion::hyperplane(v(&[1.0, 1.0]), 1.0).unwrap());
        let x1 = proximal_step(&h, &v(&[0.5, 0.5]), 1.0).unwrap();
        assert_relative_eq!(x1.point(), v(&[0.0, 1.0]), epsilon = 1e-15);
        let direct = proximal_step_direct(&h, &v(&[0.5, 0.5]), 1.0).unwrap();
        assert_relative_eq!(direct.point(), v(&[0.0, 1.0]), epsilon = 1e-14);
        let inst = sharpness();
        let c = central_point(&inst, 1.0, &v(&[0.5, 0.75])).unwrap();
        assert_relative_eq!(c.point(), v(&[1.7, 0.15]), epsilon = 1e-14);
    }

    #[test]
    fn rc_dual_matches_radius_map() {
        let inst = sharpness();
        let x = solve_regularized(&inst, 1.0).unwrap().point();
        let r = radius_for(&inst, 1.0, &x);
        let rc = solve_rc_dual(&inst, r).unwrap();
        assert_relative_eq!(rc.point(), x, epsilon = 1e-7);
        assert_relative_eq!(rc.objective, worst_case_value(&inst, &x, r).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn rc_dual_zero_when_radius_dominates() {
        let ball = euclid(&[0.3, -0.4], FeasibleRegion::norm_ball(GaugeSet::euclidean(2).unwrap(), 2.0).unwrap());
        assert_eq!(solve_rc_dual(&ball, 0.6).unwrap().point(), v(&[0.0, 0.0]));
        let x = solve_rc_dual(&ball, 0.4).unwrap().point();
        assert_relative_eq!(x, v(&[-1.2, 1.6]), epsilon = 1e-9);
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        assert_eq!(sharpness().fingerprint(), sharpness().fingerprint());
        let other = euclid(&[-1.0, 1.5], FeasibleRegion::hyperplane(v(&[1.0, 2.0]), 2.0).unwrap());
        assert_ne!(sharpness().fingerprint(), other.fingerprint());
    }
}
