//! Gauge sets, their polar norms, and the distance generating functions built on them.
//!
//! A [`GaugeSet`] `V` is a compact convex symmetric body with `0` in its interior. Its gauge
//! `‖·‖_V` and polar gauge `‖·‖_{V°}` are dual norms. A [`DistanceGenerator`] is the function
//! `φ(x) = g(‖x‖_{V°})` for a [`PostComposition`] `g`; its convex conjugate is
//! `φ*(y) = g*(‖y‖_V)`, so both gradient maps have closed forms.

use crate::error::{Error, Result};
use crate::linalg::{check_dim, check_finite, is_identity, Matrix, SpdFactor, Vector};

/// Norm magnitudes below this are treated as the origin when differentiating.
pub const ORIGIN_TOL: f64 = 1e-14;

/// The shape of a gauge set.
#[derive(Clone, Debug, PartialEq)]
pub enum GaugeKind {
    /// `{x : ‖x‖_p ≤ 1}` with `1 < p < ∞`.
    LpBall { p: f64 },
    /// `{x : xᵀ A x ≤ 1}` with `A` symmetric positive definite.
    Ellipsoid { matrix: Matrix },
}

#[derive(Clone, Debug)]
pub(crate) enum Norm {
    Lr(f64),
    Quad(Matrix),
}

impl Norm {
    pub(crate) fn value(&self, x: &Vector) -> f64 {
        match self {
            Norm::Lr(r) => {
                let m = x.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
                if m == 0.0 {
                    return 0.0;
                }
                if *r == 2.0 {
                    return x.norm();
                }
                let s: f64 = x.iter().map(|v| (v.abs() / m).powf(*r)).sum();
                m * s.powf(1.0 / r)
            }
            Norm::Quad(m) => x.dot(&(m * x)).max(0.0).sqrt(),
        }
    }

    /// Gradient away from the origin; `t` is the norm of `x`.
    fn grad_at(&self, x: &Vector, t: f64) -> Vector {
        match self {
            Norm::Lr(r) => x.map(|v| v.signum() * (v.abs() / t).powf(r - 1.0)),
            Norm::Quad(m) => m * x / t,
        }
    }

    fn hessian_at(&self, x: &Vector, t: f64) -> Matrix {
        let n = x.len();
        match self {
            Norm::Lr(r) => {
                let g = self.grad_at(x, t);
                let floor = 1e-9;
                let d = Vector::from_fn(n, |i, _| {
                    let u = (x[i].abs() / t).max(if *r < 2.0 { floor } else { 0.0 });
                    u.powf(r - 2.0)
                });
                (Matrix::from_diagonal(&d) - &g * g.transpose()) * ((r - 1.0) / t)
            }
            Norm::Quad(m) => {
                let mx = m * x;
                (m - &mx * mx.transpose() / (t * t)) / t
            }
        }
    }

    /// Gradient of the norm; at the origin the zero subgradient is returned.
    pub(crate) fn grad(&self, x: &Vector) -> Vector {
        let t = self.value(x);
        if t < ORIGIN_TOL {
            Vector::zeros(x.len())
        } else {
            self.grad_at(x, t)
        }
    }

    pub(crate) fn hessian(&self, x: &Vector) -> Matrix {
        let t = self.value(x);
        if t < ORIGIN_TOL {
            Matrix::identity(x.len(), x.len()) / ORIGIN_TOL
        } else {
            self.hessian_at(x, t)
        }
    }

    pub(crate) fn quadratic_matrix(&self, n: usize) -> Option<Matrix> {
        match self {
            Norm::Lr(r) if *r == 2.0 => Some(Matrix::identity(n, n)),
            Norm::Lr(_) => None,
            Norm::Quad(m) => Some(m.clone()),
        }
    }
}

/// A symmetric gauge set together with its cached gauge and polar norms.
#[derive(Clone, Debug)]
pub struct GaugeSet {
    dim: usize,
    kind: GaugeKind,
    gauge: Norm,
    polar: Norm,
    spectrum: (f64, f64),
}

impl GaugeSet {
    /// The unit `p`-norm ball in `dim` dimensions.
    pub fn lp_ball(p: f64, dim: usize) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidShape(format!("p must lie in (1, inf), got {p}")));
        }
        if dim == 0 {
            return Err(Error::InvalidShape("dimension must be positive".into()));
        }
        let q = if p == 2.0 { 2.0 } else { p / (p - 1.0) };
        Ok(Self { dim, kind: GaugeKind::LpBall { p }, gauge: Norm::Lr(p), polar: Norm::Lr(q), spectrum: (1.0, 1.0) })
    }

    /// The Euclidean unit ball.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::lp_ball(2.0, dim)
    }

    /// The ellipsoid `{x : xᵀ A x ≤ 1}`.
    pub fn ellipsoid(a: Matrix) -> Result<Self> {
        let f = SpdFactor::new(&a, "ellipsoid matrix")?;
        Ok(Self::from_factor(f.matrix, f.inverse, f.min_eig, f.max_eig))
    }

    /// The ellipsoid whose polar norm is `sqrt(xᵀ B x)`, i.e. `{x : xᵀ B⁻¹ x ≤ 1}`.
    pub fn ellipsoid_from_polar(b: Matrix) -> Result<Self> {
        let f = SpdFactor::new(&b, "polar ellipsoid matrix")?;
        Ok(Self::from_factor(f.inverse, f.matrix, 1.0 / f.max_eig, 1.0 / f.min_eig))
    }

    fn from_factor(a: Matrix, a_inv: Matrix, min_eig: f64, max_eig: f64) -> Self {
        Self {
            dim: a.nrows(),
            kind: GaugeKind::Ellipsoid { matrix: a.clone() },
            gauge: Norm::Quad(a),
            polar: Norm::Quad(a_inv),
            spectrum: (min_eig, max_eig),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &GaugeKind {
        &self.kind
    }

    /// `‖x‖_V`.
    pub fn gauge_norm(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x)?;
        check_finite("gauge_norm", x)?;
        Ok(self.gauge.value(x))
    }

    /// `‖x‖_{V°}`.
    pub fn polar_gauge_norm(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim, x)?;
        check_finite("polar_gauge_norm", x)?;
        Ok(self.polar.value(x))
    }

    pub(crate) fn gauge(&self) -> &Norm {
        &self.gauge
    }

    pub(crate) fn polar(&self) -> &Norm {
        &self.polar
    }

    /// Matrix of the polar norm when it is a quadratic form.
    pub(crate) fn polar_matrix(&self) -> Option<Matrix> {
        self.polar.quadratic_matrix(self.dim)
    }

    /// True when both sets describe the same body.
    pub fn same_shape(&self, other: &GaugeSet) -> bool {
        self.dim == other.dim && self.kind == other.kind
    }
}

/// `‖x‖_V`.
pub fn gauge_norm(v: &GaugeSet, x: &Vector) -> Result<f64> {
    v.gauge_norm(x)
}

/// `‖x‖_{V°}`.
pub fn polar_gauge_norm(v: &GaugeSet, x: &Vector) -> Result<f64> {
    v.polar_gauge_norm(x)
}

/// The outer function `g` in `φ = g ∘ ‖·‖_{V°}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PostComposition {
    /// `g(t) = t²/2`.
    HalfSquare,
    /// `g(t) = t^s / s` with `1 < s ≤ 4`.
    PowerMean { s: f64 },
}

impl PostComposition {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PostComposition::HalfSquare => Ok(()),
            PostComposition::PowerMean { s } if s > 1.0 && s <= 4.0 => Ok(()),
            PostComposition::PowerMean { s } => {
                Err(Error::InvalidPostComposition(format!("exponent s must lie in (1, 4], got {s}")))
            }
        }
    }

    fn exponent(&self) -> f64 {
        match *self {
            PostComposition::HalfSquare => 2.0,
            PostComposition::PowerMean { s } => s,
        }
    }

    fn conj_exponent(&self) -> f64 {
        let s = self.exponent();
        s / (s - 1.0)
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = self.exponent();
        if s == 2.0 { 0.5 * t * t } else { t.powf(s) / s }
    }

    pub fn d1(&self, t: f64) -> f64 {
        let s = self.exponent();
        if s == 2.0 { t } else { t.powf(s - 1.0) }
    }

    pub fn d2(&self, t: f64) -> f64 {
        let s = self.exponent();
        if s == 2.0 { 1.0 } else { (s - 1.0) * t.powf(s - 2.0) }
    }

    pub fn conj_value(&self, u: f64) -> f64 {
        let c = self.conj_exponent();
        if c == 2.0 { 0.5 * u * u } else { u.powf(c) / c }
    }

    /// Derivative of the conjugate, the inverse of `g'`.
    pub fn conj_d1(&self, u: f64) -> f64 {
        let c = self.conj_exponent();
        if c == 2.0 { u } else { u.powf(c - 1.0) }
    }

    pub fn conj_d2(&self, u: f64) -> f64 {
        let c = self.conj_exponent();
        if c == 2.0 { 1.0 } else { (c - 1.0) * u.powf(c - 2.0) }
    }
}

/// Smoothness and strong convexity moduli of a distance generating function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DgfSmoothness {
    pub l: f64,
    pub mu: f64,
}

impl DgfSmoothness {
    pub fn new(l: f64, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && l >= mu && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("need 0 < mu <= L < inf, got L={l}, mu={mu}")));
        }
        Ok(Self { l, mu })
    }
}

/// Expansiveness constant `(L/μ)³` of Bregman projections.
pub fn kappa_bound(s: &DgfSmoothness) -> f64 {
    (s.l / s.mu).powi(3)
}

/// `φ(x) = g(‖x‖_{V°})`.
#[derive(Clone, Debug)]
pub struct DistanceGenerator {
    gauge: GaugeSet,
    g: PostComposition,
    quad: Option<Matrix>,
}

impl DistanceGenerator {
    pub fn new(gauge: GaugeSet, g: PostComposition) -> Result<Self> {
        g.validate()?;
        let quad = match g {
            PostComposition::HalfSquare => gauge.polar_matrix(),
            PostComposition::PowerMean { s } if s == 2.0 => gauge.polar_matrix(),
            PostComposition::PowerMean { .. } => None,
        };
        Ok(Self { gauge, g, quad })
    }

    /// `φ(x) = ½‖x‖₂²`.
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(GaugeSet::euclidean(dim)?, PostComposition::HalfSquare)
    }

    pub fn dim(&self) -> usize {
        self.gauge.dim()
    }

    pub fn gauge(&self) -> &GaugeSet {
        &self.gauge
    }

    pub fn post(&self) -> PostComposition {
        self.g
    }

    /// `M` such that `φ(x) = ½ xᵀ M x`, when φ is quadratic.
    pub fn quadratic_matrix(&self) -> Option<&Matrix> {
        self.quad.as_ref()
    }

    pub fn is_euclidean(&self) -> bool {
        self.quad.as_ref().is_some_and(is_identity)
    }

    pub fn value(&self, x: &Vector) -> Result<f64> {
        check_dim(self.dim(), x)?;
        check_finite("dgf_value", x)?;
        Ok(self.value_unchecked(x))
    }

    pub fn grad(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x)?;
        check_finite("dgf_grad", x)?;
        Ok(self.grad_unchecked(x))
    }

    /// `∇φ*(y)`, the inverse of [`DistanceGenerator::grad`].
    pub fn grad_conj(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.dim(), y)?;
        check_finite("dgf_grad_conj", y)?;
        Ok(self.grad_conj_unchecked(y))
    }

    pub fn conj_value(&self, y: &Vector) -> Result<f64> {
        check_dim(self.dim(), y)?;
        check_finite("dgf_conj_value", y)?;
        Ok(self.g.conj_value(self.gauge.gauge().value(y)))
    }

    pub fn divergence(&self, x: &Vector, y: &Vector) -> Result<f64> {
        check_dim(self.dim(), x)?;
        check_dim(self.dim(), y)?;
        check_finite("bregman_divergence", x)?;
        check_finite("bregman_divergence", y)?;
        Ok(self.divergence_unchecked(x, y))
    }

    /// Moduli of smoothness and strong convexity with respect to `‖·‖₂`, for quadratic φ.
    pub fn smoothness(&self) -> Option<DgfSmoothness> {
        self.quad.as_ref()?;
        let (lo, hi) = self.gauge.spectrum;
        // quadratic φ has M equal to the polar matrix; its spectrum is the reciprocal of the gauge's
        match self.gauge.kind() {
            GaugeKind::LpBall { .. } => DgfSmoothness::new(1.0, 1.0).ok(),
            GaugeKind::Ellipsoid { .. } => DgfSmoothness::new(1.0 / lo, 1.0 / hi).ok(),
        }
    }

    pub(crate) fn value_unchecked(&self, x: &Vector) -> f64 {
        match &self.quad {
            Some(m) => 0.5 * x.dot(&(m * x)),
            None => self.g.value(self.gauge.polar().value(x)),
        }
    }

    pub(crate) fn grad_unchecked(&self, x: &Vector) -> Vector {
        if let Some(m) = &self.quad {
            return m * x;
        }
        let norm = self.gauge.polar();
        let t = norm.value(x);
        if t < ORIGIN_TOL {
            return Vector::zeros(x.len());
        }
        norm.grad_at(x, t) * self.g.d1(t)
    }

    pub(crate) fn grad_conj_unchecked(&self, y: &Vector) -> Vector {
        let norm = self.gauge.gauge();
        if let Some(m) = &self.quad {
            if let Norm::Quad(inv) = norm {
                return inv * y;
            }
            return m.clone().lu().solve(y).unwrap_or_else(|| y.clone());
        }
        let u = norm.value(y);
        if u < ORIGIN_TOL {
            return Vector::zeros(y.len());
        }
        norm.grad_at(y, u) * self.g.conj_d1(u)
    }

    pub(crate) fn hessian_unchecked(&self, x: &Vector) -> Matrix {
        if let Some(m) = &self.quad {
            return m.clone();
        }
        composed_hessian(self.gauge.polar(), x, |t| self.g.d1(t), |t| self.g.d2(t))
    }

    pub(crate) fn conj_hessian_unchecked(&self, y: &Vector) -> Matrix {
        composed_hessian(self.gauge.gauge(), y, |u| self.g.conj_d1(u), |u| self.g.conj_d2(u))
    }

    pub(crate) fn divergence_unchecked(&self, x: &Vector, y: &Vector) -> f64 {
        if let Some(m) = &self.quad {
            let d = x - y;
            return 0.5 * d.dot(&(m * &d));
        }
        let v = self.value_unchecked(x) - self.value_unchecked(y) - self.grad_unchecked(y).dot(&(x - y));
        v.max(0.0)
    }
}

/// Hessian of `h(‖x‖)` for an outer function with derivatives `d1`, `d2`.
fn composed_hessian(norm: &Norm, x: &Vector, d1: impl Fn(f64) -> f64, d2: impl Fn(f64) -> f64) -> Matrix {
    let n = x.len();
    let mut t = norm.value(x);
    let mut at = x.clone();
    if t < ORIGIN_TOL {
        at = Vector::from_element(n, 1.0);
        let unit = norm.value(&at);
        at *= 1e-8 / unit;
        t = 1e-8;
    }
    let g = norm.grad_at(&at, t);
    let mut h = &g * g.transpose() * d2(t) + norm.hessian_at(&at, t) * d1(t);
    // keep the model strictly convex where the norm is flat along rays
    let floor = 1e-12 * h.diagonal().abs().max().max(f64::MIN_POSITIVE);
    for i in 0..n {
        h[(i, i)] += floor;
    }
    h
}

/// `φ(x)`.
pub fn dgf_value(phi: &DistanceGenerator, x: &Vector) -> Result<f64> {
    phi.value(x)
}

/// `∇φ(x)`.
pub fn dgf_grad(phi: &DistanceGenerator, x: &Vector) -> Result<Vector> {
    phi.grad(x)
}

/// `∇φ*(y)`.
pub fn dgf_grad_conj(phi: &DistanceGenerator, y: &Vector) -> Result<Vector> {
    phi.grad_conj(y)
}

/// `D_φ(x, y) = φ(x) − φ(y) − ⟨∇φ(y), x − y⟩`.
pub fn bregman_divergence(phi: &DistanceGenerator, x: &Vector, y: &Vector) -> Result<f64> {
    phi.divergence(x, y)
}
