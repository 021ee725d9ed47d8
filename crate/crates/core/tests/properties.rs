use proptest::prelude::*;
use relu_minres::analysis::{fine_relu_gap, oracle_residual, FineTestSpace};
use relu_minres::assembly::{assemble_b_vector, bilinear_form, gram_matrix_v, v_inner, LoadFunctional};
use relu_minres::minres::{minimize_residual, solve_coeffs_given_breaks, InnerConfig};
use relu_minres::model::{
    build_uniform_mesh, eval_relu, Domain1D, ProblemData, ReluResidual, SourceTerm, TrialFunction, TrialSpace,
};
use relu_minres::quadrature::{composite, GaussRule};
use relu_minres::uzawa::{run_uzawa, UzawaConfig};

fn knots_strategy(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.02f64..=1.0, 1..=max).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 0.01);
        v
    })
}

fn relu(knots: &[f64], coeffs: &[f64]) -> ReluResidual {
    ReluResidual::new(Domain1D::unit(), knots.to_vec(), coeffs[..knots.len()].to_vec(), None).unwrap()
}

fn trial(n: usize, p: usize, coeffs: &[f64]) -> TrialFunction {
    let space = TrialSpace::new(build_uniform_mesh(&Domain1D::unit(), n).unwrap(), p);
    let c = (0..space.dim()).map(|i| coeffs[i % coeffs.len()]).collect();
    TrialFunction::new(space, c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn b_vector_matches_brute_force_quadrature(
        knots in knots_strategy(6),
        c in prop::collection::vec(-2.0f64..2.0, 6),
        n in 1usize..5,
        p in 0usize..3,
        beta in 0.1f64..2.0,
        gamma in 0.0f64..2.0,
    ) {
        let v = relu(&knots, &c);
        let space = TrialSpace::new(build_uniform_mesh(&Domain1D::unit(), n).unwrap(), p);
        let g = assemble_b_vector(&space, &v, beta, gamma);
        let rule = GaussRule::new(6);
        let mut basis = vec![0.0; space.local_dim()];
        for k in 0..n {
            let (lo, hi) = space.mesh.element(k);
            // split at the knots so the reference is exact too
            let mut pts = vec![lo, hi];
            pts.extend(knots.iter().copied().filter(|&t| t > lo && t < hi));
            pts.sort_by(f64::total_cmp);
            for i in 0..space.local_dim() {
                let reference: f64 = pts.windows(2).map(|w| composite(&rule, w[0], w[1], 8, |x| {
                    space.local_basis((x - lo) / (hi - lo), &mut basis);
                    basis[i] * (gamma * v.value_unchecked(x) - beta * v.derivative_unchecked(x))
                })).sum();
                prop_assert!((g[k * space.local_dim() + i] - reference).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_form_is_bilinear(
        knots in knots_strategy(4),
        c1 in prop::collection::vec(-2.0f64..2.0, 4),
        c2 in prop::collection::vec(-2.0f64..2.0, 4),
        u1 in prop::collection::vec(-1.0f64..1.0, 3),
        u2 in prop::collection::vec(-1.0f64..1.0, 3),
        a in -3.0f64..3.0,
    ) {
        let (beta, gamma) = (0.8, 0.6);
        let (v1, v2) = (relu(&knots, &c1), relu(&knots, &c2));
        let (w1, w2) = (trial(3, 0, &u1), trial(3, 0, &u2));
        let w = TrialFunction::new(w1.space.clone(), w1.coeffs.iter().zip(&w2.coeffs).map(|(x, y)| x + a * y).collect()).unwrap();
        let lhs = bilinear_form(&w, &v1, beta, gamma);
        let rhs = bilinear_form(&w1, &v1, beta, gamma) + a * bilinear_form(&w2, &v1, beta, gamma);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        let v = v1.add(&v2.scaled(a)).unwrap();
        let lhs = bilinear_form(&w1, &v, beta, gamma);
        let rhs = bilinear_form(&w1, &v1, beta, gamma) + a * bilinear_form(&w1, &v2, beta, gamma);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn gram_matches_quadrature_and_is_positive(
        knots in knots_strategy(6),
        c in prop::collection::vec(-2.0f64..2.0, 6),
        beta in 0.05f64..2.0,
    ) {
        let g = gram_matrix_v(&knots, false, beta, &Domain1D::unit()).unwrap();
        let v = relu(&knots, &c);
        let cv = nalgebra::DVector::from_column_slice(&c[..knots.len()]);
        let q = cv.dot(&(&g * &cv));
        prop_assert!((q - v_inner(&v, &v, beta)).abs() < 1e-12 * (1.0 + q));
        prop_assert!(g.clone().symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn relu_functions_are_lipschitz(
        knots in knots_strategy(6),
        c in prop::collection::vec(-2.0f64..2.0, 6),
        x in 0.0f64..=1.0,
        y in 0.0f64..=1.0,
    ) {
        let v = relu(&knots, &c);
        let lip: f64 = v.coeffs().iter().map(|c| c.abs()).sum();
        let d = (eval_relu(&v, x).unwrap() - eval_relu(&v, y).unwrap()).abs();
        prop_assert!(d <= lip * (x - y).abs() + 1e-14);
    }

    #[test]
    fn moments_match_quadrature_for_piecewise_sources(
        b in 0.1f64..0.9,
        v0 in -2.0f64..2.0,
        v1 in -2.0f64..2.0,
        s in 0.0f64..1.0,
        t in 0.0f64..1.0,
    ) {
        let data = ProblemData::new(
            Domain1D::unit(), 1.0, 0.0,
            SourceTerm::PiecewiseConstant { breaks: vec![b], values: vec![v0, v1] }, 0.0,
        ).unwrap();
        let (s, t) = (s.min(t), s.max(t));
        let load = LoadFunctional::new(&data);
        let rule = GaussRule::new(4);
        let f = |x: f64| if x <= b { v0 } else { v1 };
        let mut pts = vec![s, t];
        if b > s && b < t { pts.insert(1, b); }
        let reference: f64 = pts.windows(2).map(|w| rule.integrate(w[0], w[1], |x| f(x) * (x - s))).sum();
        let got = load.integrate_linear(s, t, 0.0, t - s);
        prop_assert!((got - reference).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// On fixed knots the inner solution is the best approximation of the
    /// fine-space representer among members of the span.
    #[test]
    fn residual_is_quasi_optimal_on_fixed_knots(
        picks in prop::collection::btree_set(1usize..=48, 1..6),
        u in prop::collection::vec(-1.0f64..1.0, 3),
        pert in prop::collection::vec(-0.5f64..0.5, 6),
    ) {
        let data = ProblemData::new(Domain1D::unit(), 1.0, 0.3, SourceTerm::dirac(0.5), 0.0).unwrap();
        let u_h = trial(3, 0, &u);
        let fine = FineTestSpace::new(&u_h.space, 16, &data).unwrap();
        let knots: Vec<f64> = picks.iter().map(|&i| fine.nodes()[i]).collect();
        let sol = solve_coeffs_given_breaks(&knots, &u_h, &data, false).unwrap();
        let coeffs = sol.coeffs.as_slice().to_vec();
        let r_n = relu(&knots, &coeffs);
        let rbar = oracle_residual(&u_h, &fine);
        let best = fine_relu_gap(&rbar, &r_n, data.beta);
        let other: Vec<f64> = coeffs.iter().zip(&pert).map(|(c, d)| c + d).collect();
        let v = relu(&knots, &other);
        prop_assert!(best <= fine_relu_gap(&rbar, &v, data.beta) + 1e-9);
        prop_assert!(rbar.vnorm() + 1e-12 >= (v_inner(&r_n, &r_n, data.beta)).sqrt());
    }

    #[test]
    fn multistart_never_hurts(u in prop::collection::vec(-1.0f64..1.0, 2), seed in 0u64..100) {
        let data = ProblemData::new(Domain1D::unit(), 1.0, 0.0, SourceTerm::dirac(0.4), 0.0).unwrap();
        let u_h = trial(2, 0, &u);
        let one = InnerConfig { m: 3, multistart: 1, seed, ..InnerConfig::default() };
        let many = InnerConfig { multistart: 4, ..one.clone() };
        let a = minimize_residual(&u_h, &data, &one, None).unwrap();
        let b = minimize_residual(&u_h, &data, &many, None).unwrap();
        prop_assert!(b.j <= a.j + 1e-15);
    }
}

#[test]
fn warm_started_run_does_not_increase_dual_norm() {
    for (x0, n, m) in [(0.5, 4, 8), (2.0 / 3.0, 3, 6), (0.3, 2, 4)] {
        let data = ProblemData::new(Domain1D::unit(), 1.0, 0.0, SourceTerm::dirac(x0), 0.0).unwrap();
        let mesh = build_uniform_mesh(&data.domain, n).unwrap();
        let fine = FineTestSpace::new(&TrialSpace::new(mesh.clone(), 0), 32, &data).unwrap();
        let inner = InnerConfig { m, multistart: 2, ..InnerConfig::default() };
        let mut cfg = UzawaConfig::new(relu_minres::analysis::default_rho(&fine), inner);
        cfg.eps = 1e-6;
        let st = run_uzawa(&data, &mesh, 0, &cfg).unwrap();
        assert!(st.converged);
        let h = &st.history;
        assert!(h.iter().all(|e| e.dual_norm.is_finite()));
        assert!(h.last().unwrap().dual_norm <= h[0].dual_norm);
    }
}
