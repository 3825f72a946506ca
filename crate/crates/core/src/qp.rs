//! Dense strictly convex quadratic programs over `{Ax = b, lb ≤ x ≤ ub}`, backed by the
//! Goldfarb–Idnani dual active-set method, plus the cone projections used to certify
//! linear-programming optimality and unboundedness.

use crate::error::{Error, Result};
use crate::linalg::{independent_rows, inf_norm, select_rows, Matrix, Vector};

/// Slack below which an inequality counts as tight when certifying.
pub(crate) const TIGHT_TOL: f64 = 1e-9;

/// `{x : A x = b, lb ≤ x ≤ ub}` with independent equality rows.
#[derive(Clone, Debug)]
pub(crate) struct Polyhedron {
    pub a: Matrix,
    pub b: Vector,
    pub lb: Vector,
    pub ub: Vector,
}

/// A constraint that is active at a QP solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Active {
    Eq(usize),
    Lower(usize),
    Upper(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct QpSolution {
    pub x: Vector,
}

impl Polyhedron {
    /// Builds the polyhedron, dropping dependent equality rows and rejecting inconsistent ones.
    pub fn new(a: Matrix, b: Vector, lb: Vector, ub: Vector) -> Result<Self> {
        let n = lb.len();
        if ub.len() != n || a.ncols() != n || a.nrows() != b.len() {
            return Err(Error::InvalidRegion("inconsistent constraint dimensions".into()));
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidRegion("equality data must be finite".into()));
        }
        for i in 0..n {
            if lb[i].is_nan() || ub[i].is_nan() || lb[i] == f64::INFINITY || ub[i] == f64::NEG_INFINITY {
                return Err(Error::InvalidRegion(format!("invalid bounds at index {i}")));
            }
            if lb[i] > ub[i] {
                return Err(Error::Infeasible);
            }
        }
        let keep = independent_rows(&a, 1e-12);
        if keep.len() < a.nrows() {
            let ar = select_rows(&a, &keep);
            let br = Vector::from_fn(keep.len(), |i, _| b[keep[i]]);
            // dropped rows must be implied by the kept ones
            if let Some(x) = crate::linalg::lstsq(&ar, &br) {
                let resid = &a * &x - &b;
                let scale = 1.0 + b.amax();
                if resid.amax() > 1e-9 * scale {
                    return Err(Error::Infeasible);
                }
            }
            return Ok(Self { a: ar, b: br, lb, ub });
        }
        Ok(Self { a, b, lb, ub })
    }

    pub fn dim(&self) -> usize {
        self.lb.len()
    }

    pub fn has_bounds(&self) -> bool {
        self.lb.iter().any(|v| v.is_finite()) || self.ub.iter().any(|v| v.is_finite())
    }

    /// Equality rows for fixed coordinates appended to `A`.
    pub fn with_fixed(&self, fixed: &[(usize, f64)]) -> Self {
        let n = self.dim();
        let m = self.a.nrows();
        let mut a = Matrix::zeros(m + fixed.len(), n);
        a.rows_mut(0, m).copy_from(&self.a);
        let mut b = Vector::zeros(m + fixed.len());
        b.rows_mut(0, m).copy_from(&self.b);
        let mut lb = self.lb.clone();
        let mut ub = self.ub.clone();
        for (k, &(i, v)) in fixed.iter().enumerate() {
            a[(m + k, i)] = 1.0;
            b[m + k] = v;
            lb[i] = f64::NEG_INFINITY;
            ub[i] = f64::INFINITY;
        }
        let keep = independent_rows(&a, 1e-12);
        Self { a: select_rows(&a, &keep), b: Vector::from_fn(keep.len(), |i, _| b[keep[i]]), lb, ub }
    }

    /// Max constraint violation of `x`.
    pub fn violation(&self, x: &Vector) -> f64 {
        let mut v = 0.0_f64;
        if self.a.nrows() > 0 {
            v = (&self.a * x - &self.b).amax();
        }
        for i in 0..self.dim() {
            v = v.max(self.lb[i] - x[i]).max(x[i] - self.ub[i]);
        }
        v
    }

    /// Coordinates whose lower and upper bounds are tight at `x`.
    pub fn tight(&self, x: &Vector, tol: f64) -> (Vec<usize>, Vec<usize>) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        for i in 0..self.dim() {
            if self.lb[i].is_finite() && x[i] - self.lb[i] <= tol * (1.0 + self.lb[i].abs()) {
                lo.push(i);
            }
            if self.ub[i].is_finite() && self.ub[i] - x[i] <= tol * (1.0 + self.ub[i].abs()) {
                hi.push(i);
            }
        }
        (lo, hi)
    }
}

/// Minimizes `½ xᵀ H x + cᵀ x` over `poly`. `H` must be symmetric positive definite.
///
/// Degenerate vertices can make the dual active-set method report infeasibility from roundoff;
/// one retry with bounds widened by a few ulps separates that from genuine emptiness.
pub(crate) fn solve_qp(h: &Matrix, c: &Vector, poly: &Polyhedron) -> Result<QpSolution> {
    match solve_qp_once(h, c, poly) {
        Err(Error::Infeasible) => {
            let widen = |v: f64, s: f64| if v.is_finite() { v + s * 1e-13 * (1.0 + v.abs()) } else { v };
            let relaxed = Polyhedron {
                a: poly.a.clone(),
                b: poly.b.clone(),
                lb: poly.lb.map(|v| widen(v, -1.0)),
                ub: poly.ub.map(|v| widen(v, 1.0)),
            };
            let mut sol = solve_qp_once(h, c, &relaxed)?;
            for i in 0..poly.dim() {
                sol.x[i] = sol.x[i].clamp(poly.lb[i], poly.ub[i]);
            }
            Ok(sol)
        }
        other => other,
    }
}

fn solve_qp_once(h: &Matrix, c: &Vector, poly: &Polyhedron) -> Result<QpSolution> {
    let n = poly.dim();
    let mut rows: Vec<(Vec<f64>, f64, Active)> = Vec::new();
    for i in 0..poly.a.nrows() {
        rows.push((poly.a.row(i).iter().copied().collect(), poly.b[i], Active::Eq(i)));
    }
    let mut fixed = Vec::new();
    for i in 0..n {
        if poly.lb[i] == poly.ub[i] {
            fixed.push(i);
        }
    }
    let mut extra_eq = Vec::new();
    for &i in &fixed {
        let mut r = vec![0.0; n];
        r[i] = 1.0;
        extra_eq.push((r, poly.lb[i], Active::Lower(i)));
    }
    // a fixed coordinate that repeats an equality row would make the system singular
    let mut eq_rows: Vec<(Vec<f64>, f64, Active)> = rows;
    eq_rows.extend(extra_eq);
    let eq_mat = Matrix::from_fn(eq_rows.len(), n, |i, j| eq_rows[i].0[j]);
    let keep = independent_rows(&eq_mat, 1e-12);
    let mut all: Vec<(Vec<f64>, f64, Active)> = keep.iter().map(|&k| eq_rows[k].clone()).collect();
    let meq = all.len();
    for i in 0..n {
        if poly.lb[i] == poly.ub[i] {
            continue;
        }
        if poly.ub[i].is_finite() {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            all.push((r, poly.ub[i], Active::Upper(i)));
        }
        if poly.lb[i].is_finite() {
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            all.push((r, -poly.lb[i], Active::Lower(i)));
        }
    }
    let mut q: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            q.push(0.5 * (h[(i, j)] + h[(j, i)]));
        }
    }
    let amat: Vec<f64> = all.iter().flat_map(|r| r.0.iter().copied()).collect();
    let bvec: Vec<f64> = all.iter().map(|r| r.1).collect();
    let sol = quadprog::solve_qp(&mut q, c.as_slice(), &amat, &bvec, meq, false).map_err(|e| match e {
        quadprog::Error::Infeasible => Error::Infeasible,
        quadprog::Error::NotPositiveDefinite => {
            Error::InvalidArgument("quadratic model is not positive definite".into())
        }
        other => Error::InvalidArgument(other.to_string()),
    })?;
    let mut x = Vector::from_vec(sol.sol);
    for i in 0..n {
        x[i] = x[i].clamp(poly.lb[i], poly.ub[i]);
    }
    if let Some(p) = polish(h, c, poly, &x) {
        x = p;
    }
    Ok(QpSolution { x })
}

/// Re-solves the KKT system on the active set suggested by the dual solver and keeps the
/// result only if it is primal and dual feasible. With an ill-conditioned `h` the dual method
/// starts from a huge unconstrained minimizer and ends with errors far above roundoff, both in
/// the equality rows and in which bounds it reports active.
fn polish(h: &Matrix, c: &Vector, poly: &Polyhedron, x: &Vector) -> Option<Vector> {
    let scale = 1.0 + inf_norm(x);
    [1e-10, 1e-6].into_iter().find_map(|tol| polish_with(h, c, poly, x, tol * scale))
}

fn polish_with(h: &Matrix, c: &Vector, poly: &Polyhedron, x: &Vector, tol: f64) -> Option<Vector> {
    let n = poly.dim();
    // (index, bound, is_lower)
    let pinned: Vec<(usize, f64, bool)> = (0..n)
        .filter_map(|i| {
            if poly.lb[i].is_finite() && x[i] - poly.lb[i] <= tol {
                Some((i, poly.lb[i], true))
            } else if poly.ub[i].is_finite() && poly.ub[i] - x[i] <= tol {
                Some((i, poly.ub[i], false))
            } else {
                None
            }
        })
        .collect();
    let free: Vec<usize> = (0..n).filter(|i| !pinned.iter().any(|p| p.0 == *i)).collect();
    let (nf, m) = (free.len(), poly.a.nrows());
    let mut y = Vector::zeros(n);
    for &(i, v, _) in &pinned {
        y[i] = v;
    }
    let mut mu = Vector::zeros(m);
    if nf > 0 {
        let grad0 = h * &y + c;
        let resid0 = if m > 0 { &poly.b - &poly.a * &y } else { Vector::zeros(0) };
        let mut k = Matrix::zeros(nf + m, nf + m);
        let mut rhs = Vector::zeros(nf + m);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                k[(a, b)] = 0.5 * (h[(i, j)] + h[(j, i)]);
            }
            for r in 0..m {
                k[(a, nf + r)] = poly.a[(r, i)];
                k[(nf + r, a)] = poly.a[(r, i)];
            }
            rhs[a] = -grad0[i];
        }
        for r in 0..m {
            rhs[nf + r] = resid0[r];
        }
        // equality rows made dependent by the pinned bounds leave K singular; least squares
        // through the SVD absorbs them, but its cutoff would also drop a small-scale Hessian
        let sol = match k.clone().full_piv_lu().solve(&rhs) {
            Some(sol) => sol,
            None => {
                let eps = 1e-14 * k.amax();
                k.svd(true, true).solve(&rhs, eps).ok()?
            }
        };
        for (a, &i) in free.iter().enumerate() {
            y[i] = sol[a];
        }
        mu = sol.rows(nf, m).into_owned();
    }
    let scale = 1.0 + inf_norm(x);
    if poly.violation(&y) > 1e-12 * scale {
        return None;
    }
    // stationarity of the Lagrangian leaves the bound multipliers on the pinned coordinates
    let mut s = h * &y + c;
    if m > 0 {
        s += poly.a.transpose() * &mu;
    }
    let slack = 1e-9 * inf_norm(&(h * &y + c)).max(inf_norm(c)).max(f64::MIN_POSITIVE);
    let dual_ok = pinned.iter().all(|&(i, _, lower)| if lower { s[i] >= -slack } else { s[i] <= slack });
    let stationary = free.iter().all(|&i| s[i].abs() <= slack);
    if !(dual_ok && stationary) {
        return None;
    }
    for i in 0..n {
        y[i] = y[i].clamp(poly.lb[i], poly.ub[i]);
    }
    Some(y)
}

/// Euclidean projection onto `poly`.
pub(crate) fn euclidean_projection(poly: &Polyhedron, y: &Vector) -> Result<Vector> {
    let n = poly.dim();
    Ok(solve_qp(&Matrix::identity(n, n), &(-y), poly)?.x)
}

/// Euclidean projection of `v` onto the cone `{d : A d = 0, d_i ≥ 0 (i ∈ lo), d_i ≤ 0 (i ∈ hi)}`.
pub(crate) fn cone_projection(poly: &Polyhedron, lo: &[usize], hi: &[usize], v: &Vector) -> Result<Vector> {
    let n = poly.dim();
    let mut lb = Vector::from_element(n, f64::NEG_INFINITY);
    let mut ub = Vector::from_element(n, f64::INFINITY);
    for &i in lo {
        lb[i] = 0.0;
    }
    for &i in hi {
        ub[i] = 0.0;
    }
    let cone = Polyhedron { a: poly.a.clone(), b: Vector::zeros(poly.a.nrows()), lb, ub };
    euclidean_projection(&cone, v)
}

/// Whether `cᵀx` is unbounded below on `poly`, via the projection of `−c` on the recession cone.
pub(crate) fn lp_unbounded(poly: &Polyhedron, c: &Vector) -> Result<bool> {
    let n = poly.dim();
    let lo: Vec<usize> = (0..n).filter(|&i| poly.lb[i].is_finite()).collect();
    let hi: Vec<usize> = (0..n).filter(|&i| poly.ub[i].is_finite()).collect();
    let d = cone_projection(poly, &lo, &hi, &(-c))?;
    Ok(d.norm() > 1e-9 * c.norm().max(f64::MIN_POSITIVE))
}

/// Whether `x` minimizes `cᵀx` over `poly`: `−c` lies in the normal cone at `x`.
pub(crate) fn lp_optimal_at(poly: &Polyhedron, c: &Vector, x: &Vector) -> Result<Option<(Vec<usize>, Vec<usize>)>> {
    let (lo, hi) = poly.tight(x, TIGHT_TOL);
    let d = cone_projection(poly, &lo, &hi, &(-c))?;
    if d.norm() <= 1e-9 * c.norm().max(f64::MIN_POSITIVE) {
        Ok(Some((lo, hi)))
    } else {
        Ok(None)
    }
}

/// The face of `poly` where `cᵀx` is minimal, found along the regularization path
/// `x(ω) = prox(−c/ω)` as `ω` decreases from `omega0`.
///
/// Returns the first certified iterate and the bounds tight there. Errors with
/// [`Error::Unbounded`] when no minimizer exists.
pub(crate) fn lp_face(
    poly: &Polyhedron,
    c: &Vector,
    omega0: f64,
    prox: &dyn Fn(&Vector) -> Result<Vector>,
) -> Result<(Vector, Vec<usize>, Vec<usize>)> {
    if lp_unbounded(poly, c)? {
        return Err(Error::Unbounded);
    }
    let mut omega = omega0;
    for _ in 0..120 {
        let x = prox(&(-c / omega))?;
        if let Some((lo, hi)) = lp_optimal_at(poly, c, &x)? {
            return Ok((x, lo, hi));
        }
        omega *= 0.25;
    }
    Err(Error::NonConvergence { iterations: 120, residual: f64::NAN })
}
