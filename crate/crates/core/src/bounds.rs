//! Divergence bounds between the central, robust and proximal paths.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauge::kappa_bound;
use crate::linalg::Vector;
use crate::parallel;
use crate::path::{PathKind, TracedPath};
use crate::region::{project_affine_hull_dual, FaceSignature, FACE_TOL};
use crate::solve::{central_point, robust_anchor, solve_regularized, ProblemInstance};

/// Anchor gap between `x_R = Π_X(0)` and `x_A = Π_{Aff X}(0)`, and the bound it implies on
/// the divergence between the central path from `x_R` and the robust path.
#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    /// `(L/μ)³`, when φ is quadratic.
    pub kappa: Option<f64>,
    pub x_robust: Vec<f64>,
    pub x_affine: Vec<f64>,
    /// `D_φ(x_R, x_A)`.
    pub anchor_gap: f64,
    /// `D_φ(x_A, x_R)`.
    pub anchor_gap_reverse: f64,
    /// `κ² D_φ(x_R, x_A)`, bounding `D_φ(x_CP(ω), x_R'(ω))`.
    pub bound: Option<f64>,
    /// `κ² D_φ(x_A, x_R)`, bounding `D_φ(x_R'(ω), x_CP(ω))`.
    pub bound_reverse: Option<f64>,
    /// `max_ω D_φ(x_CP(ω), x_R'(ω))` over the checked grid.
    pub observed_max_gap: Option<f64>,
    pub observed_max_gap_reverse: Option<f64>,
}

impl BoundReport {
    /// Whether the anchors coincide, in which case the central and robust paths agree.
    pub fn anchors_equal(&self, tol: f64) -> bool {
        let d = self.x_robust.iter().zip(&self.x_affine).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        d <= tol * (1.0 + self.x_robust.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
    }
}

/// Anchor gap and the central-to-robust divergence bound.
pub fn theorem2_bound(inst: &ProblemInstance) -> Result<BoundReport> {
    let phi = inst.phi();
    let x_r = robust_anchor(inst)?;
    let x_a = project_affine_hull_dual(inst.region(), phi, &Vector::zeros(inst.dim()))?;
    let gap = phi.divergence_unchecked(&x_r, &x_a);
    let gap_rev = phi.divergence_unchecked(&x_a, &x_r);
    let kappa = phi.smoothness().map(|s| kappa_bound(&s));
    Ok(BoundReport {
        kappa,
        x_robust: x_r.iter().copied().collect(),
        x_affine: x_a.iter().copied().collect(),
        anchor_gap: gap,
        anchor_gap_reverse: gap_rev,
        bound: kappa.map(|k| k * k * gap),
        bound_reverse: kappa.map(|k| k * k * gap_rev),
        observed_max_gap: None,
        observed_max_gap_reverse: None,
    })
}

/// Per-`ω` divergences between the central path from `x_R` and the robust path.
#[derive(Clone, Debug, Serialize)]
pub struct Theorem2Trace {
    pub report: BoundReport,
    pub omegas: Vec<f64>,
    pub gaps: Vec<f64>,
    pub gaps_reverse: Vec<f64>,
}

/// [`theorem2_bound`] with the observed divergences on `omegas` filled in.
pub fn theorem2_check(inst: &ProblemInstance, omegas: &[f64]) -> Result<Theorem2Trace> {
    let mut report = theorem2_bound(inst)?;
    let x_r = Vector::from_column_slice(&report.x_robust);
    let phi = inst.phi();
    let pairs = parallel::map(omegas, |&w| -> Result<(f64, f64)> {
        let c = central_point(inst, w, &x_r)?.point();
        let r = solve_regularized(inst, w)?.point();
        Ok((phi.divergence_unchecked(&c, &r), phi.divergence_unchecked(&r, &c)))
    });
    let mut gaps = Vec::with_capacity(omegas.len());
    let mut gaps_reverse = Vec::with_capacity(omegas.len());
    for p in pairs {
        let (g, gr) = p?;
        gaps.push(g);
        gaps_reverse.push(gr);
    }
    report.observed_max_gap = Some(gaps.iter().copied().fold(0.0, f64::max));
    report.observed_max_gap_reverse = Some(gaps_reverse.iter().copied().fold(0.0, f64::max));
    Ok(Theorem2Trace { report, omegas: omegas.to_vec(), gaps, gaps_reverse })
}

/// Comparison of the proximal and central paths on one face.
#[derive(Clone, Debug, Serialize)]
pub struct FaceBound {
    pub face: FaceSignature,
    /// First and last proximal iterates on the face.
    pub k_lo: usize,
    pub k_hi: usize,
    /// Inverse parameter where the central path enters the face; `None` if it never does.
    pub upsilon_lo: Option<f64>,
    /// `κ D_φ(x_CP(1/υ_lo), x_{k_lo})`.
    pub bound: f64,
    /// `max_k D_φ(x_k, x_CP(1/υ_k))` over iterates whose aligned central point shares the face.
    pub observed: f64,
    pub checked: usize,
    /// Iterates whose aligned central point has already left the face.
    pub skipped: usize,
    pub pass: bool,
}

/// Face-by-face bound on the divergence between proximal iterates and the central path.
#[derive(Clone, Debug, Serialize)]
pub struct Theorem3Report {
    pub kappa: f64,
    pub faces: Vec<FaceBound>,
    pub max_observed: f64,
    pub pass: bool,
}

/// Slack added to each per-face bound when deciding `pass`.
pub const THEOREM3_SLACK: f64 = 1e-8;

/// Per-face bounds `D_φ(x_k, x_CP(1/υ_k)) ≤ κ D_φ(x_CP(1/υ_lo), x_{k_lo})`, where
/// `υ_k = υ_lo + Σ_{j=k_lo}^{k−1} λ_j⁻¹` re-aligns the proximal clock at each face entry.
pub fn theorem3_bound(inst: &ProblemInstance, proximal: &TracedPath, central: &TracedPath) -> Result<Theorem3Report> {
    if proximal.kind != PathKind::Proximal || central.kind != PathKind::Central {
        return Err(Error::InvalidArgument("expected a proximal and a central path".into()));
    }
    if proximal.fingerprint != inst.fingerprint() || central.fingerprint != inst.fingerprint() {
        return Err(Error::InvalidArgument("paths were traced on a different instance".into()));
    }
    let kappa = inst
        .phi()
        .smoothness()
        .map(|s| kappa_bound(&s))
        .ok_or_else(|| Error::InvalidArgument("the face bound needs a quadratic distance generator".into()))?;
    let phi = inst.phi();
    let x0 = central.anchor_point();
    let region = inst.region();
    let cp = |upsilon: f64| -> Result<Vector> {
        let w = if upsilon == 0.0 { f64::INFINITY } else { 1.0 / upsilon };
        Ok(central_point(inst, w, &x0)?.point())
    };
    let central_ups: Vec<f64> = central.points.iter().map(|p| if p.omega.is_infinite() { 0.0 } else { 1.0 / p.omega }).collect();

    let pts = &proximal.points;
    let mut faces = Vec::new();
    let mut start = 0;
    while start < pts.len() {
        let face = pts[start].face.clone();
        let mut end = start;
        while end + 1 < pts.len() && pts[end + 1].face == face {
            end += 1;
        }
        faces.push((face, start, end));
        start = end + 1;
    }

    let mut out = Vec::with_capacity(faces.len());
    for (face, k_lo, k_hi) in faces {
        let entry = central.points.iter().position(|p| p.face == face);
        let Some(j) = entry else {
            out.push(FaceBound { face, k_lo, k_hi, upsilon_lo: None, bound: f64::NAN, observed: f64::NAN, checked: 0, skipped: k_hi - k_lo + 1, pass: true });
            continue;
        };
        let upsilon_lo = if j == 0 {
            central_ups[0]
        } else {
            let (mut lo, mut hi) = (central_ups[j - 1], central_ups[j]);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if region.face_signature(&cp(mid)?, FACE_TOL)? == face {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        let x_lo = cp(upsilon_lo)?;
        let bound = kappa * phi.divergence_unchecked(&x_lo, &pts[k_lo].point());
        let mut upsilon = upsilon_lo;
        let mut aligned = Vec::with_capacity(k_hi - k_lo + 1);
        for k in k_lo..=k_hi {
            if k > k_lo {
                let lambda = pts[k].lambda.ok_or_else(|| Error::InvalidArgument("proximal point without a step".into()))?;
                upsilon += 1.0 / lambda;
            }
            aligned.push((k, upsilon));
        }
        let gaps = parallel::map(&aligned, |&(k, u)| -> Result<Option<f64>> {
            let c = cp(u)?;
            if region.face_signature(&c, FACE_TOL)? != face {
                return Ok(None);
            }
            Ok(Some(phi.divergence_unchecked(&pts[k].point(), &c)))
        });
        let mut observed = 0.0_f64;
        let mut checked = 0;
        let mut skipped = 0;
        for g in gaps {
            match g? {
                Some(v) => {
                    observed = observed.max(v);
                    checked += 1;
                }
                None => skipped += 1,
            }
        }
        let pass = observed <= bound + THEOREM3_SLACK;
        out.push(FaceBound { face, k_lo, k_hi, upsilon_lo: Some(upsilon_lo), bound, observed, checked, skipped, pass });
    }
    let max_observed = out.iter().filter(|f| f.checked > 0).map(|f| f.observed).fold(0.0, f64::max);
    let pass = out.iter().all(|f| f.pass);
    Ok(Theorem3Report { kappa, faces: out, max_observed, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauge::{GaugeSet, PostComposition};
    use crate::linalg::Matrix;
    use crate::region::FeasibleRegion;
    use approx::assert_relative_eq;

    fn sharpness() -> ProblemInstance {
        let region = FeasibleRegion::eq_box(
            Matrix::from_row_slice(1, 2, &[1.0, 2.0]),
            Vector::from_column_slice(&[2.0]),
            Vector::from_column_slice(&[0.5, 0.0]),
            Vector::from_column_slice(&[f64::INFINITY, f64::INFINITY]),
        )
        .unwrap();
        ProblemInstance::new(Vector::from_column_slice(&[-1.0, 1.0]), region, GaugeSet::euclidean(2).unwrap(), PostComposition::HalfSquare).unwrap()
    }

    #[test]
    fn sharpness_anchor_gap() {
        let r = theorem2_bound(&sharpness()).unwrap();
        // x_R = (0.5, 0.75), x_A = (0.4, 0.8)
        assert_relative_eq!(r.anchor_gap, 0.00625, epsilon = 1e-15);
        assert_relative_eq!(r.bound.unwrap(), 0.00625, epsilon = 1e-15);
        assert!(!r.anchors_equal(1e-12));
    }

    #[test]
    fn sharpness_gap_is_constant_on_shared_interior() {
        let omegas = [1.0, 2.0, 5.0, 11.0];
        let t = theorem2_check(&sharpness(), &omegas).unwrap();
        for g in &t.gaps {
            assert_relative_eq!(*g, 0.00625, epsilon = 1e-12);
        }
    }
}
