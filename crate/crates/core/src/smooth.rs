//! Minimization of smooth convex objectives over polyhedra by sequential quadratic programming,
//! and unconstrained damped Newton.

use crate::error::{Error, Result};
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::qp::{euclidean_projection, solve_qp, Polyhedron};

const MAX_ITER: usize = 500;
const STEP_TOL: f64 = 1e-14;
/// Relative step size below which SQP takes full steps without a line search.
const NEWTON_ZONE: f64 = 1e-6;

pub(crate) trait Objective {
    fn value(&self, x: &Vector) -> f64;
    fn grad(&self, x: &Vector) -> Vector;
    fn hessian(&self, x: &Vector) -> Matrix;
    /// `(H, c)` with objective `½ xᵀ H x + cᵀ x + const`, when exact.
    fn quadratic(&self) -> Option<(Matrix, Vector)> {
        None
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Minimum {
    pub x: Vector,
    pub iterations: usize,
    pub converged: bool,
}

fn regularize(mut h: Matrix) -> Matrix {
    let n = h.nrows();
    h = (&h + h.transpose()) * 0.5;
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        h[(i, i)] += 1e-8 * scale;
    }
    h
}

/// Step length along `d` from `x`: Armijo backtracking, then bisection on the directional
/// derivative when backtracking stalls. Feasible segments stay feasible for `t ∈ [0, 1]`.
fn line_search(obj: &dyn Objective, x: &Vector, d: &Vector, f0: f64, slope: f64) -> f64 {
    let mut t = 1.0;
    for _ in 0..40 {
        let ft = obj.value(&(x + d * t));
        if ft <= f0 + 1e-4 * t * slope {
            return t;
        }
        t *= 0.5;
    }
    // convex along the segment: locate the sign change of the derivative
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let dd = obj.grad(&(x + d * mid)).dot(d);
        if dd < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tm = 0.5 * (lo + hi);
    if obj.value(&(x + d * tm)) <= f0 { tm } else { 0.0 }
}

/// Minimizes `obj` over `poly`, starting from `start` when provided.
pub(crate) fn minimize_poly(obj: &dyn Objective, poly: &Polyhedron, start: Option<&Vector>) -> Result<Minimum> {
    if let Some((h, c)) = obj.quadratic() {
        let sol = solve_qp(&regularize_exact(h), &c, poly)?;
        return Ok(Minimum { x: sol.x, iterations: 1, converged: true });
    }
    let n = poly.dim();
    let mut x = match start {
        Some(s) if poly.violation(s) <= 1e-12 * (1.0 + inf_norm(s)) => s.clone(),
        Some(s) => euclidean_projection(poly, s)?,
        None => euclidean_projection(poly, &Vector::zeros(n))?,
    };
    let mut fx = obj.value(&x);
    let mut last_step = f64::INFINITY;
    for it in 1..=MAX_ITER {
        let g = obj.grad(&x);
        let h = regularize(obj.hessian(&x));
        // solve for the step itself; forming z − x would cancel most digits near the optimum
        let d = solve_qp(&h, &g, &shifted(poly, &x))?.x;
        let scale = 1.0 + inf_norm(&x);
        if inf_norm(&d) <= STEP_TOL * scale {
            return Ok(Minimum { x, iterations: it, converged: true });
        }
        let step = inf_norm(&d);
        let t = if step <= NEWTON_ZONE * scale {
            // inside the local zone full steps converge quadratically; the slope and value
            // tests are dominated by roundoff here, so stop once steps stop contracting
            if step >= 0.9 * last_step {
                return Ok(Minimum { x, iterations: it, converged: step <= 1e-8 * scale });
            }
            // an ill-conditioned model can still point uphill; the value test catches it at
            // this scale, and `vi_residual` on the report measures what is left
            if obj.value(&(&x + &d)) > fx + 1e-11 * (1.0 + fx.abs()) {
                return Ok(Minimum { x, iterations: it, converged: true });
            }
            1.0
        } else {
            let slope = g.dot(&d);
            if slope >= 0.0 {
                return Ok(Minimum { x, iterations: it, converged: false });
            }
            let t = line_search(obj, &x, &d, fx, slope);
            if t == 0.0 {
                return Ok(Minimum { x, iterations: it, converged: false });
            }
            t
        };
        last_step = step;
        let mut next = &x + &d * t;
        for i in 0..n {
            next[i] = next[i].clamp(poly.lb[i], poly.ub[i]);
        }
        let moved = inf_norm(&(&next - &x));
        x = next;
        fx = obj.value(&x);
        if moved <= STEP_TOL * scale {
            return Ok(Minimum { x, iterations: it, converged: true });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, residual: f64::NAN })
}

/// `poly − x`, the constraints on a step taken from `x`.
fn shifted(poly: &Polyhedron, x: &Vector) -> Polyhedron {
    let b = if poly.a.nrows() > 0 { &poly.b - &poly.a * x } else { poly.b.clone() };
    Polyhedron { a: poly.a.clone(), b, lb: &poly.lb - x, ub: &poly.ub - x }
}

fn regularize_exact(h: Matrix) -> Matrix {
    (&h + h.transpose()) * 0.5
}

/// Unconstrained damped Newton from `start`.
pub(crate) fn minimize_free(obj: &dyn Objective, start: &Vector) -> Result<Minimum> {
    if let Some((h, c)) = obj.quadratic() {
        let x = regularize_exact(h)
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("quadratic model is not positive definite".into()))?
            .solve(&(-c));
        return Ok(Minimum { x, iterations: 1, converged: true });
    }
    let mut x = start.clone();
    let mut fx = obj.value(&x);
    for it in 1..=MAX_ITER {
        let g = obj.grad(&x);
        let mut h = regularize(obj.hessian(&x));
        let d = loop {
            if let Some(ch) = h.clone().cholesky() {
                break ch.solve(&(-&g));
            }
            let bump = 1e-8 * h.diagonal().amax().max(1.0);
            for i in 0..h.nrows() {
                h[(i, i)] += bump;
            }
        };
        let scale = 1.0 + inf_norm(&x);
        if inf_norm(&d) <= STEP_TOL * scale {
            return Ok(Minimum { x, iterations: it, converged: true });
        }
        let slope = g.dot(&d);
        if slope >= 0.0 {
            return Ok(Minimum { x, iterations: it, converged: inf_norm(&d) <= 1e-8 * scale });
        }
        let t = line_search(obj, &x, &d, fx, slope);
        if t == 0.0 {
            return Ok(Minimum { x, iterations: it, converged: inf_norm(&d) <= 1e-8 * scale });
        }
        let step = &d * t;
        x += &step;
        fx = obj.value(&x);
        if inf_norm(&step) <= STEP_TOL * scale {
            return Ok(Minimum { x, iterations: it, converged: true });
        }
    }
    Err(Error::NonConvergence { iterations: MAX_ITER, residual: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// `Σ (x_i − t_i)⁴ + ½‖x‖²`.
    struct Quartic(Vector);

    impl Objective for Quartic {
        fn value(&self, x: &Vector) -> f64 {
            (x - &self.0).map(|v| v.powi(4)).sum() + 0.5 * x.norm_squared()
        }
        fn grad(&self, x: &Vector) -> Vector {
            (x - &self.0).map(|v| 4.0 * v.powi(3)) + x
        }
        fn hessian(&self, x: &Vector) -> Matrix {
            Matrix::from_diagonal(&(x - &self.0).map(|v| 12.0 * v * v + 1.0))
        }
    }

    #[test]
    fn sqp_matches_one_dimensional_root() {
        // on the simplex in 2D with x = (u, 1-u) the optimum solves a cubic
        let obj = Quartic(Vector::from_column_slice(&[0.9, 0.6]));
        let poly = Polyhedron::new(
            Matrix::from_element(1, 2, 1.0),
            Vector::from_element(1, 1.0),
            Vector::zeros(2),
            Vector::from_element(2, f64::INFINITY),
        )
        .unwrap();
        let m = minimize_poly(&obj, &poly, None).unwrap();
        assert!(m.converged);
        let u = m.x[0];
        let deriv = 4.0 * (u - 0.9).powi(3) + u - 4.0 * (0.4 - u).powi(3) - (1.0 - u);
        assert!(u > 0.0 && u < 1.0);
        assert!(deriv.abs() < 1e-10);
        assert_relative_eq!(m.x.sum(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn newton_finds_stationary_point() {
        let obj = Quartic(Vector::from_column_slice(&[1.0, -3.0, 0.5]));
        let m = minimize_free(&obj, &Vector::zeros(3)).unwrap();
        assert!(obj.grad(&m.x).amax() < 1e-10);
    }
}
