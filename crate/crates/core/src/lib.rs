//! Robust, central and proximal solution paths for linear objectives over convex regions
//! under gauge-set uncertainty.
//!
//! The robust counterpart `min_{x ∈ X} max_{a ∈ a0 + rV} ⟨a, x⟩` is solved for all radii `r`
//! at once by tracing `x_R'(ω) = argmin_X ⟨a0, x⟩ + ω φ(x)` with `φ = g ∘ ‖·‖_{V°}`, either
//! directly or with Bregman proximal steps.

pub mod bounds;
pub mod error;
pub mod gauge;
pub mod linalg;
pub mod output;
mod parallel;
pub mod path;
pub mod portfolio;
mod qp;
pub mod region;
mod smooth;
pub mod solve;
pub mod verify;

pub use bounds::{theorem2_bound, theorem2_check, theorem3_bound, BoundReport, FaceBound, Theorem2Trace, Theorem3Report};
pub use error::{Error, Result};
pub use gauge::{
    bregman_divergence, dgf_grad, dgf_grad_conj, dgf_value, gauge_norm, kappa_bound, polar_gauge_norm, DgfSmoothness,
    DistanceGenerator, GaugeKind, GaugeSet, PostComposition,
};
pub use linalg::{Matrix, Vector};
pub use parallel::THREADS_ENV;
pub use path::{
    accumulate_omega, check_monotone, compare_paths, log_grid, resolve_schedule, trace_central_path, trace_proximal_path,
    trace_proximal_path_from, trace_reference_robust_path, Matching, PathKind, PathPoint, PathStatus, StepSchedule, StopRule,
    TracedPath,
};
pub use region::{bregman_project, project_affine_hull, FaceSignature, FeasibleRegion, RegionKind, FACE_TOL};
pub use solve::{
    central_point, proximal_step, proximal_step_direct, radius_for, robust_anchor, solve_linear, solve_rc_dual,
    solve_regularized, worst_case_value, ProblemInstance, SolveReport,
};
