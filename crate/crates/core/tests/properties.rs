use proptest::prelude::*;

use robustpath::verify::{kappa_ratio, lemma3_gap};
use robustpath::{
    bregman_divergence, bregman_project, log_grid, trace_reference_robust_path, worst_case_value, DistanceGenerator, FeasibleRegion,
    GaugeSet, Matrix, PostComposition, ProblemInstance, Vector,
};

fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Coordinates bounded away from zero, where every generator here is twice differentiable.
fn away_from_zero(n: usize) -> impl Strategy<Value = Vector> {
    prop::collection::vec((0.2f64..2.0, any::<bool>()), n).prop_map(|v| Vector::from_iterator(v.len(), v.into_iter().map(|(m, s)| if s { m } else { -m })))
}

fn vector(n: usize, scale: f64) -> impl Strategy<Value = Vector> {
    prop::collection::vec(-scale..scale, n).prop_map(Vector::from_vec)
}

/// SPD matrix `B Bᵀ + I` from a bounded random factor.
fn spd(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1.0f64..1.0, n * n).prop_map(move |v| {
        let b = Matrix::from_vec(n, n, v);
        &b * b.transpose() + Matrix::identity(n, n)
    })
}

fn shape(n: usize) -> impl Strategy<Value = GaugeSet> {
    prop_oneof![
        prop::sample::select(vec![1.5, 2.0, 2.5, 3.0]).prop_map(move |p| GaugeSet::lp_ball(p, n).unwrap()),
        spd(n).prop_map(|a| GaugeSet::ellipsoid(a).unwrap()),
    ]
}

fn post() -> impl Strategy<Value = PostComposition> {
    prop_oneof![
        Just(PostComposition::HalfSquare),
        Just(PostComposition::PowerMean { s: 1.5 }),
        Just(PostComposition::PowerMean { s: 3.0 }),
    ]
}

fn generator(n: usize) -> impl Strategy<Value = DistanceGenerator> {
    (shape(n), post()).prop_map(|(v, g)| DistanceGenerator::new(v, g).unwrap())
}

fn quadratic_generator(n: usize) -> impl Strategy<Value = DistanceGenerator> {
    prop_oneof![
        Just(DistanceGenerator::euclidean(n).unwrap()),
        spd(n).prop_map(|a| DistanceGenerator::new(GaugeSet::ellipsoid(a).unwrap(), PostComposition::HalfSquare).unwrap()),
    ]
}

fn region(n: usize) -> impl Strategy<Value = FeasibleRegion> {
    prop_oneof![
        Just(FeasibleRegion::simplex(n).unwrap()),
        (1.0 / n as f64 + 0.05..1.0).prop_map(move |u| FeasibleRegion::budget_box(Vector::zeros(n), Vector::from_element(n, u)).unwrap()),
        (vector(n, 1.0), -1.0f64..1.0)
            .prop_filter("nonzero normal", |(a, _)| a.norm() > 0.1)
            .prop_map(|(a, b)| FeasibleRegion::hyperplane(a, b).unwrap()),
        (1.5f64..3.0, 0.5f64..2.0).prop_map(move |(p, l)| FeasibleRegion::norm_ball(GaugeSet::lp_ball(p, n).unwrap(), l).unwrap()),
    ]
}

fn fd_gradient(f: impl Fn(&Vector) -> f64, x: &Vector) -> Vector {
    Vector::from_fn(x.len(), |i, _| {
        let h = 1e-5 * (1.0 + x[i].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[i] += h;
        xm[i] -= h;
        (f(&xp) - f(&xm)) / (2.0 * h)
    })
}

fn with_dim<T: std::fmt::Debug>(f: impl Fn(usize) -> BoxedStrategy<T>) -> impl Strategy<Value = T> {
    (2usize..=5).prop_flat_map(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn gradients_match_finite_differences((phi, x) in with_dim(|n| (generator(n), away_from_zero(n)).boxed())) {
        let g = phi.grad(&x).unwrap();
        let fd = fd_gradient(|z| phi.value(z).unwrap(), &x);
        prop_assert!(inf_norm(&(&fd - &g)) <= 1e-6 * inf_norm(&g).max(1.0));
        let gc = phi.grad_conj(&g).unwrap();
        let fdc = fd_gradient(|z| phi.conj_value(z).unwrap(), &g);
        prop_assert!(inf_norm(&(&fdc - &gc)) <= 1e-6 * inf_norm(&gc).max(1.0));
    }

    #[test]
    fn conjugate_gradient_inverts_gradient((phi, x) in with_dim(|n| (generator(n), away_from_zero(n)).boxed())) {
        let back = phi.grad_conj(&phi.grad(&x).unwrap()).unwrap();
        prop_assert!(inf_norm(&(&back - &x)) <= 1e-9 * inf_norm(&x));
    }

    #[test]
    fn divergence_is_nonnegative_and_vanishes_on_the_diagonal(
        (phi, x, y) in with_dim(|n| (generator(n), vector(n, 3.0), vector(n, 3.0)).boxed())
    ) {
        let d = bregman_divergence(&phi, &x, &y).unwrap();
        let scale = phi.value(&x).unwrap().abs() + phi.value(&y).unwrap().abs() + 1.0;
        prop_assert!(d >= -1e-12 * scale);
        prop_assert!(bregman_divergence(&phi, &x, &x).unwrap().abs() <= 1e-12 * scale);
    }

    #[test]
    fn projection_satisfies_the_variational_inequality(
        (region, phi, y, w) in with_dim(|n| (region(n), generator(n), vector(n, 2.0), vector(n, 2.0)).boxed())
    ) {
        // ⟨∇φ(y) − ∇φ(P y), z − P y⟩ ≤ 0 for every feasible z
        let p = bregman_project(&region, &phi, &y).unwrap();
        let z = bregman_project(&region, &DistanceGenerator::euclidean(region.dim()).unwrap(), &w).unwrap();
        let lhs = (phi.grad(&y).unwrap() - phi.grad(&p).unwrap()).dot(&(&z - &p));
        let scale = (1.0 + inf_norm(&phi.grad(&y).unwrap())) * (1.0 + inf_norm(&z) + inf_norm(&p));
        prop_assert!(lhs <= 1e-7 * scale, "lhs {lhs}");
    }

    #[test]
    fn projecting_through_the_affine_hull_changes_nothing(
        (region, phi, y) in with_dim(|n| (region(n), generator(n), vector(n, 2.0)).boxed())
    ) {
        prop_assert!(lemma3_gap(&region, &phi, &y).unwrap() <= 1e-8);
    }

    #[test]
    fn worst_case_dominates_every_boundary_scenario(
        (v, a0, x, u, r) in with_dim(|n| (shape(n), vector(n, 1.0), vector(n, 2.0), vector(n, 1.0), 0.1f64..2.0).boxed())
    ) {
        prop_assume!(u.norm() > 1e-3);
        let n = a0.len();
        let s = v.gauge_norm(&u).unwrap();
        let inst = ProblemInstance::new(a0.clone(), FeasibleRegion::simplex(n).unwrap(), v, PostComposition::HalfSquare).unwrap();
        let closed = worst_case_value(&inst, &x, r).unwrap();
        let scenario = (&a0 + &u * (r / s)).dot(&x);
        prop_assert!(scenario <= closed + 1e-12 * (1.0 + closed.abs()));
    }

    #[test]
    fn projection_is_kappa_expansive(
        (region, phi, x, y) in with_dim(|n| (region(n), quadratic_generator(n), vector(n, 2.0), vector(n, 2.0)).boxed())
    ) {
        if let Some(q) = kappa_ratio(&region, &phi, &x, &y).unwrap() {
            prop_assert!(q <= 1.0 + 1e-6, "ratio {q}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn robust_frontier_trades_nominal_value_for_robustness(
        (region, v, a0) in with_dim(|n| (region(n), shape(n), vector(n, 1.0)).boxed())
    ) {
        // as ω falls the nominal value cannot rise and φ cannot fall
        let inst = ProblemInstance::new(a0.clone(), region, v, PostComposition::HalfSquare).unwrap();
        let path = trace_reference_robust_path(&inst, &log_grid(100.0, 0.01, 30)).unwrap();
        let pts: Vec<Vector> = path.points.iter().map(|p| p.point()).collect();
        for w in pts.windows(2) {
            let (f0, f1) = (a0.dot(&w[0]), a0.dot(&w[1]));
            prop_assert!(f1 <= f0 + 1e-7 * (1.0 + f0.abs()), "nominal {f0} -> {f1}");
            let (p0, p1) = (inst.phi().value(&w[0]).unwrap(), inst.phi().value(&w[1]).unwrap());
            prop_assert!(p1 >= p0 - 1e-7 * (1.0 + p0.abs()), "phi {p0} -> {p1}");
        }
    }
}
