//! Feasible regions, their faces, and Bregman projections onto them.

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::gauge::{DistanceGenerator, GaugeSet, Norm, ORIGIN_TOL};
use crate::linalg::{check_dim, check_finite, inf_norm, Matrix, Vector};
use crate::qp::{euclidean_projection, lp_face, Polyhedron};
use crate::smooth::{minimize_free, minimize_poly, Minimum, Objective};

/// Default slack below which a bound counts as active.
pub const FACE_TOL: f64 = 1e-7;

/// The geometry of a feasible region.
#[derive(Clone, Debug)]
pub enum RegionKind {
    /// `{x : ⟨normal, x⟩ = offset}`.
    Hyperplane { normal: Vector, offset: f64 },
    /// `{x : A x = b}`.
    AffineSubspace { a: Matrix, b: Vector },
    /// `{x : A x = b, lb ≤ x ≤ ub}`; bounds may be infinite.
    EqBoxPolyhedron { a: Matrix, b: Vector, lb: Vector, ub: Vector },
    /// `{x : ‖x‖_W ≤ level}` for the gauge of `W`.
    NormBall { gauge: GaugeSet, level: f64 },
}

/// A closed convex feasible set. Immutable once built.
#[derive(Clone, Debug)]
pub struct FeasibleRegion {
    kind: RegionKind,
    dim: usize,
    poly: Option<Polyhedron>,
    hull: OnceLock<std::result::Result<Hull, Error>>,
}

#[derive(Clone, Debug)]
struct Hull {
    equalities: Polyhedron,
    /// The region with implicitly pinned coordinates made explicit, when any are pinned.
    pinned: Option<Polyhedron>,
}

/// Active bounds at a point, or whether it lies on the boundary of a norm ball.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub struct FaceSignature {
    pub active_lower: Vec<usize>,
    pub active_upper: Vec<usize>,
    pub on_gauge_boundary: bool,
}

impl FaceSignature {
    /// Whether every constraint active in `self` is active in `other`.
    pub fn is_subset_of(&self, other: &FaceSignature) -> bool {
        self.active_lower.iter().all(|i| other.active_lower.contains(i))
            && self.active_upper.iter().all(|i| other.active_upper.contains(i))
            && (!self.on_gauge_boundary || other.on_gauge_boundary)
    }
}

impl fmt::Display for FaceSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[usize]| v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ");
        write!(f, "L[{}] U[{}]", join(&self.active_lower), join(&self.active_upper))?;
        if self.on_gauge_boundary {
            write!(f, " B")?;
        }
        Ok(())
    }
}

fn free_bounds(n: usize) -> (Vector, Vector) {
    (Vector::from_element(n, f64::NEG_INFINITY), Vector::from_element(n, f64::INFINITY))
}

impl FeasibleRegion {
    fn build(kind: RegionKind, dim: usize, poly: Option<Polyhedron>) -> Result<Self> {
        let region = Self { kind, dim, poly, hull: OnceLock::new() };
        if let Some(p) = &region.poly {
            if p.has_bounds() {
                euclidean_projection(p, &Vector::zeros(dim)).map_err(|e| match e {
                    Error::Infeasible => Error::Infeasible,
                    other => other,
                })?;
            }
        }
        Ok(region)
    }

    pub fn hyperplane(normal: Vector, offset: f64) -> Result<Self> {
        check_finite("hyperplane normal", &normal)?;
        if normal.is_empty() || inf_norm(&normal) == 0.0 || !offset.is_finite() {
            return Err(Error::InvalidRegion("hyperplane needs a nonzero normal and finite offset".into()));
        }
        let n = normal.len();
        let (lb, ub) = free_bounds(n);
        let poly = Polyhedron::new(Matrix::from_row_slice(1, n, normal.as_slice()), Vector::from_element(1, offset), lb, ub)?;
        Self::build(RegionKind::Hyperplane { normal, offset }, n, Some(poly))
    }

    pub fn affine(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(Error::InvalidRegion("affine subspace needs at least one equation".into()));
        }
        let n = a.ncols();
        let (lb, ub) = free_bounds(n);
        let poly = Polyhedron::new(a.clone(), b.clone(), lb, ub)?;
        if poly.a.nrows() == 0 {
            return Err(Error::InvalidRegion("affine subspace equations are all zero".into()));
        }
        Self::build(RegionKind::AffineSubspace { a, b }, n, Some(poly))
    }

    pub fn eq_box(a: Matrix, b: Vector, lb: Vector, ub: Vector) -> Result<Self> {
        if lb.is_empty() {
            return Err(Error::InvalidRegion("dimension must be positive".into()));
        }
        let n = lb.len();
        let poly = Polyhedron::new(a.clone(), b.clone(), lb.clone(), ub.clone())?;
        Self::build(RegionKind::EqBoxPolyhedron { a, b, lb, ub }, n, Some(poly))
    }

    /// `{x ≥ 0 : Σ x_i = 1}`.
    pub fn simplex(n: usize) -> Result<Self> {
        Self::eq_box(
            Matrix::from_element(1, n, 1.0),
            Vector::from_element(1, 1.0),
            Vector::zeros(n),
            Vector::from_element(n, f64::INFINITY),
        )
    }

    /// `{x : Σ x_i = 1, lb ≤ x ≤ ub}`.
    pub fn budget_box(lb: Vector, ub: Vector) -> Result<Self> {
        let n = lb.len();
        Self::eq_box(Matrix::from_element(1, n, 1.0), Vector::from_element(1, 1.0), lb, ub)
    }

    pub fn norm_ball(gauge: GaugeSet, level: f64) -> Result<Self> {
        if !(level > 0.0 && level.is_finite()) {
            return Err(Error::InvalidRegion(format!("ball level must be positive and finite, got {level}")));
        }
        let n = gauge.dim();
        Self::build(RegionKind::NormBall { gauge, level }, n, None)
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_polyhedral(&self) -> bool {
        self.poly.is_some()
    }

    pub(crate) fn polyhedron(&self) -> Option<&Polyhedron> {
        self.poly.as_ref()
    }

    /// Membership up to a tolerance relative to the magnitude of the data.
    pub fn contains(&self, x: &Vector, tol: f64) -> Result<bool> {
        check_dim(self.dim, x)?;
        check_finite("contains", x)?;
        let scale = 1.0 + inf_norm(x);
        Ok(match (&self.kind, &self.poly) {
            (RegionKind::NormBall { gauge, level }, _) => gauge.gauge().value(x) <= level * (1.0 + tol),
            (_, Some(p)) => {
                let eq_ok = (0..p.a.nrows()).all(|i| {
                    let row = p.a.row(i);
                    (row.transpose().dot(x) - p.b[i]).abs() <= tol * row.norm() * scale
                });
                eq_ok && (0..self.dim).all(|i| x[i] >= p.lb[i] - tol * scale && x[i] <= p.ub[i] + tol * scale)
            }
            _ => unreachable!("polyhedral kinds carry constraints"),
        })
    }

    /// Active constraints at `x` with slack at most `tol`.
    pub fn face_signature(&self, x: &Vector, tol: f64) -> Result<FaceSignature> {
        check_dim(self.dim, x)?;
        check_finite("face_signature", x)?;
        Ok(match (&self.kind, &self.poly) {
            (RegionKind::NormBall { gauge, level }, _) => FaceSignature {
                on_gauge_boundary: (gauge.gauge().value(x) - level).abs() <= tol * level,
                ..FaceSignature::default()
            },
            (_, Some(p)) => {
                let mut sig = FaceSignature::default();
                for i in 0..self.dim {
                    if p.lb[i].is_finite() && x[i] - p.lb[i] <= tol {
                        sig.active_lower.push(i);
                    }
                    if p.ub[i].is_finite() && p.ub[i] - x[i] <= tol {
                        sig.active_upper.push(i);
                    }
                }
                sig
            }
            _ => unreachable!("polyhedral kinds carry constraints"),
        })
    }

    /// Whether the region is a level set of `φ`'s polar gauge, `{x : ‖x‖_{V°} ≤ l}`.
    pub fn is_polar_ball_of(&self, phi: &DistanceGenerator) -> bool {
        match &self.kind {
            RegionKind::NormBall { gauge, .. } => gauge.dim() == phi.dim() && gauge.gauge().same_as(phi.gauge().polar()),
            _ => false,
        }
    }

    /// Whether some slack sits within two decades of `tol`, where classification is fragile.
    pub fn face_is_ambiguous(&self, x: &Vector, tol: f64) -> bool {
        let near = |s: f64| s > tol / 10.0 && s <= tol * 10.0;
        match (&self.kind, &self.poly) {
            (RegionKind::NormBall { gauge, level }, _) => near((gauge.gauge().value(x) - level).abs() / level),
            (_, Some(p)) => (0..self.dim).any(|i| {
                (p.lb[i].is_finite() && near(x[i] - p.lb[i])) || (p.ub[i].is_finite() && near(p.ub[i] - x[i]))
            }),
            _ => false,
        }
    }

    /// The affine hull as equality constraints, including implicit equalities from the bounds.
    pub(crate) fn affine_hull(&self) -> Result<Option<&Polyhedron>> {
        Ok(self.hull()?.map(|h| &h.equalities))
    }

    /// The polyhedron with implicitly pinned coordinates turned into explicit equalities.
    /// Solving over it keeps constraint qualification, which the raw bounds lose.
    fn pinned(&self) -> Result<Option<&Polyhedron>> {
        Ok(self.hull()?.and_then(|h| h.pinned.as_ref()))
    }

    fn hull(&self) -> Result<Option<&Hull>> {
        let Some(p) = &self.poly else { return Ok(None) };
        self.hull.get_or_init(|| implicit_hull(p)).as_ref().map(Some).map_err(Clone::clone)
    }
}

/// Detects bounds that hold with equality on the whole region.
fn implicit_hull(p: &Polyhedron) -> Result<Hull> {
    let n = p.dim();
    let (lb, ub) = free_bounds(n);
    if !p.has_bounds() {
        return Ok(Hull { equalities: Polyhedron { a: p.a.clone(), b: p.b.clone(), lb, ub }, pinned: None });
    }
    let euclid = |theta: &Vector| euclidean_projection(p, theta);
    let mut loose_lo = vec![false; n];
    let mut loose_hi = vec![false; n];
    let seen = |x: &Vector, lo: &mut Vec<bool>, hi: &mut Vec<bool>| {
        for i in 0..n {
            if x[i] - p.lb[i] > 1e-9 * (1.0 + p.lb[i].abs()) {
                lo[i] = true;
            }
            if p.ub[i] - x[i] > 1e-9 * (1.0 + p.ub[i].abs()) {
                hi[i] = true;
            }
        }
    };
    seen(&euclid(&Vector::zeros(n))?, &mut loose_lo, &mut loose_hi);
    let mut fixed = Vec::new();
    for i in 0..n {
        for upper in [false, true] {
            let (bound, loose) = if upper { (p.ub[i], loose_hi[i]) } else { (p.lb[i], loose_lo[i]) };
            if !bound.is_finite() || loose {
                continue;
            }
            if p.lb[i] == p.ub[i] {
                fixed.push((i, bound));
                break;
            }
            // push x_i away from the bound as far as the region allows
            let mut c = Vector::zeros(n);
            c[i] = if upper { 1.0 } else { -1.0 };
            match lp_face(p, &c, 1.0, &euclid) {
                Ok((x, _, _)) => {
                    seen(&x, &mut loose_lo, &mut loose_hi);
                    let still = if upper { loose_hi[i] } else { loose_lo[i] };
                    if !still {
                        fixed.push((i, bound));
                    }
                }
                Err(Error::Unbounded) => {}
                Err(e) => return Err(e),
            }
        }
    }
    let with = p.with_fixed(&fixed);
    let equalities = Polyhedron { a: with.a.clone(), b: with.b.clone(), lb, ub };
    Ok(Hull { equalities, pinned: (!fixed.is_empty()).then_some(with) })
}

/// `φ(x) − ⟨θ, x⟩`, whose minimizer over a region is the projection of `∇φ*(θ)`.
pub(crate) struct DualProjection<'a> {
    pub phi: &'a DistanceGenerator,
    pub theta: Vector,
}

impl Objective for DualProjection<'_> {
    fn value(&self, x: &Vector) -> f64 {
        self.phi.value_unchecked(x) - self.theta.dot(x)
    }
    fn grad(&self, x: &Vector) -> Vector {
        self.phi.grad_unchecked(x) - &self.theta
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        self.phi.hessian_unchecked(x)
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        self.phi.quadratic_matrix().map(|m| (m.clone(), -&self.theta))
    }
}

/// Negated dual of projecting `∇φ*(θ)` onto `{A x = b}`, in the multiplier `ν`.
struct AffineDual<'a> {
    phi: &'a DistanceGenerator,
    theta: &'a Vector,
    poly: &'a Polyhedron,
}

impl AffineDual<'_> {
    fn shifted(&self, nu: &Vector) -> Vector {
        self.theta + self.poly.a.transpose() * nu
    }
}

impl Objective for AffineDual<'_> {
    fn value(&self, nu: &Vector) -> f64 {
        let y = self.shifted(nu);
        self.phi.g_conj_value(&y) - self.poly.b.dot(nu)
    }
    fn grad(&self, nu: &Vector) -> Vector {
        &self.poly.a * self.phi.grad_conj_unchecked(&self.shifted(nu)) - &self.poly.b
    }
    fn hessian(&self, nu: &Vector) -> Matrix {
        let h = self.phi.conj_hessian_unchecked(&self.shifted(nu));
        &self.poly.a * h * self.poly.a.transpose()
    }
}

impl DistanceGenerator {
    pub(crate) fn g_conj_value(&self, y: &Vector) -> f64 {
        self.post().conj_value(self.gauge().gauge().value(y))
    }
}

/// Projection of `∇φ*(θ)` onto `{A x = b}` computed through the dual multiplier.
fn affine_dual_projection(phi: &DistanceGenerator, theta: &Vector, poly: &Polyhedron) -> Result<Vector> {
    let m = poly.a.nrows();
    if m == 0 {
        return Ok(phi.grad_conj_unchecked(theta));
    }
    if phi.quadratic_matrix().is_some() {
        // ∇φ* is the linear map P; solve (A P Aᵀ) ν = b − A P θ
        let n = phi.dim();
        let p = Matrix::from_columns(&(0..n).map(|j| phi.grad_conj_unchecked(&Vector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 }))).collect::<Vec<_>>());
        let apa = &poly.a * &p * poly.a.transpose();
        let rhs = &poly.b - &poly.a * &p * theta;
        let nu = apa
            .cholesky()
            .ok_or_else(|| Error::InvalidRegion("equality rows are dependent".into()))?
            .solve(&rhs);
        return Ok(&p * (theta + poly.a.transpose() * nu));
    }
    let dual = AffineDual { phi, theta, poly };
    let min = minimize_free(&dual, &Vector::zeros(m))?;
    Ok(phi.grad_conj_unchecked(&dual.shifted(&min.x)))
}

/// Sort-threshold projection onto `{x ≥ 0 : Σ x_i = mass}`.
pub(crate) fn simplex_projection(y: &Vector, mass: f64) -> Vector {
    let mut u: Vec<f64> = y.iter().copied().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut tau = 0.0;
    for (j, uj) in u.iter().enumerate() {
        acc += uj;
        let t = (acc - mass) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    y.map(|v| (v - tau).max(0.0))
}

fn standard_simplex_mass(p: &Polyhedron) -> Option<f64> {
    if p.a.nrows() != 1 {
        return None;
    }
    let alpha = p.a[(0, 0)];
    let uniform = alpha > 0.0 && p.a.iter().all(|&v| v == alpha);
    let bounds = p.lb.iter().all(|&v| v == 0.0) && p.ub.iter().all(|&v| v == f64::INFINITY);
    (uniform && bounds).then(|| p.b[0] / alpha)
}

impl Norm {
    fn same_as(&self, other: &Norm) -> bool {
        match (self, other) {
            (Norm::Lr(a), Norm::Lr(b)) => (a - b).abs() <= 1e-12 * a.abs(),
            (Norm::Quad(a), Norm::Quad(b)) => (a - b).amax() <= 1e-12 * a.amax(),
            _ => false,
        }
    }
}

/// Minimizer of `φ(x) − ⟨θ, x⟩` over the region.
pub(crate) fn project_dual(region: &FeasibleRegion, phi: &DistanceGenerator, theta: &Vector, start: Option<&Vector>) -> Result<Minimum> {
    let done = |x: Vector| Ok(Minimum { x, iterations: 1, converged: true });
    match (&region.kind, &region.poly) {
        (RegionKind::NormBall { gauge, level }, _) => ball_projection(phi, gauge, *level, theta),
        (RegionKind::Hyperplane { .. } | RegionKind::AffineSubspace { .. }, Some(p)) => {
            done(affine_dual_projection(phi, theta, p)?)
        }
        (RegionKind::EqBoxPolyhedron { .. }, Some(p)) => {
            if phi.is_euclidean() {
                if let Some(mass) = standard_simplex_mass(p) {
                    return done(simplex_projection(theta, mass));
                }
                if p.a.nrows() == 0 {
                    return done(Vector::from_fn(theta.len(), |i, _| theta[i].clamp(p.lb[i], p.ub[i])));
                }
            }
            let p = region.pinned()?.unwrap_or(p);
            let obj = DualProjection { phi, theta: theta.clone() };
            let guess = match start {
                Some(s) => s.clone(),
                None => phi.grad_conj_unchecked(theta),
            };
            minimize_poly(&obj, p, Some(&guess))
        }
        _ => unreachable!("polyhedral kinds carry constraints"),
    }
}

/// `φ(x) − ⟨θ, x⟩ + (ν/2)‖x‖_W²`.
struct BallPenalty<'a> {
    phi: &'a DistanceGenerator,
    theta: &'a Vector,
    ball: &'a Norm,
    nu: f64,
}

impl Objective for BallPenalty<'_> {
    fn value(&self, x: &Vector) -> f64 {
        let t = self.ball.value(x);
        self.phi.value_unchecked(x) - self.theta.dot(x) + 0.5 * self.nu * t * t
    }
    fn grad(&self, x: &Vector) -> Vector {
        let t = self.ball.value(x);
        self.phi.grad_unchecked(x) - self.theta + self.ball.grad(x) * (self.nu * t)
    }
    fn hessian(&self, x: &Vector) -> Matrix {
        let t = self.ball.value(x);
        let g = self.ball.grad(x);
        let mut h = self.phi.hessian_unchecked(x) + &g * g.transpose() * self.nu;
        if t >= ORIGIN_TOL {
            h += self.ball.hessian(x) * (self.nu * t);
        }
        h
    }
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        let m = self.phi.quadratic_matrix()?;
        let b = self.ball.quadratic_matrix(self.theta.len())?;
        Some((m + b * self.nu, -self.theta))
    }
}

fn ball_projection(phi: &DistanceGenerator, gauge: &GaugeSet, level: f64, theta: &Vector) -> Result<Minimum> {
    let ball = gauge.gauge();
    let free = phi.grad_conj_unchecked(theta);
    let done = |x: Vector, iterations: usize| Ok(Minimum { x, iterations, converged: true });
    if ball.value(&free) <= level {
        return done(free, 1);
    }
    if ball.same_as(phi.gauge().polar()) {
        // matched pair: the projection rescales θ so that g'(level) is attained
        let t = phi.post().d1(level) / phi.gauge().gauge().value(theta);
        return done(phi.grad_conj_unchecked(&(theta * t)), 1);
    }
    let solve = |nu: f64, start: &Vector| -> Result<Vector> {
        let obj = BallPenalty { phi, theta, ball, nu };
        Ok(minimize_free(&obj, start)?.x)
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut x = solve(hi, &free)?;
    let mut its = 1;
    while ball.value(&x) > level {
        lo = hi;
        hi *= 4.0;
        x = solve(hi, &x)?;
        its += 1;
        if its > 400 {
            return Err(Error::NonConvergence { iterations: its, residual: ball.value(&x) - level });
        }
    }
    let mut best = x;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let xm = solve(mid, &best)?;
        its += 1;
        let r = ball.value(&xm);
        if r > level {
            lo = mid;
        } else {
            hi = mid;
            best = xm;
        }
        if (r - level).abs() <= 1e-15 * level || hi - lo <= 1e-16 * hi {
            break;
        }
    }
    // land exactly on the sphere
    let r = ball.value(&best);
    done(best * (level / r), its)
}

/// Bregman projection `argmin_{x ∈ X} D_φ(x, y)`.
pub fn bregman_project(region: &FeasibleRegion, phi: &DistanceGenerator, y: &Vector) -> Result<Vector> {
    check_dim(region.dim, y)?;
    check_dim(phi.dim(), y)?;
    check_finite("bregman_project", y)?;
    Ok(project_dual(region, phi, &phi.grad_unchecked(y), Some(y))?.x)
}

/// Bregman projection onto the affine hull of the region.
pub fn project_affine_hull(region: &FeasibleRegion, phi: &DistanceGenerator, y: &Vector) -> Result<Vector> {
    check_dim(region.dim, y)?;
    check_dim(phi.dim(), y)?;
    check_finite("project_affine_hull", y)?;
    match region.affine_hull()? {
        None => Ok(y.clone()),
        Some(h) => affine_dual_projection(phi, &phi.grad_unchecked(y), h),
    }
}

/// Projection of the dual point `θ` onto the affine hull: `Π_Aff(∇φ*(θ))`.
pub(crate) fn project_affine_hull_dual(region: &FeasibleRegion, phi: &DistanceGenerator, theta: &Vector) -> Result<Vector> {
    match region.affine_hull()? {
        None => Ok(phi.grad_conj_unchecked(theta)),
        Some(h) => affine_dual_projection(phi, theta, h),
    }
}
