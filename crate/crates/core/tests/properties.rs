use heatinv::krylov::geom;
use heatinv::*;
use proptest::prelude::*;

fn field(grid: Grid, values: &[f64]) -> Field {
    Field::from_vec(grid, values.iter().cycle().take(grid.n_dof()).cloned().collect()).unwrap()
}

fn coefficient(kind: u8) -> Coefficient {
    match kind {
        0 => Coefficient::constant(1.0),
        1 => Coefficient::constant(0.3),
        _ => Coefficient::variable(0.5, 3.0, |x| 1.0 + x.iter().map(|v| v * v).sum::<f64>() / 2.0),
    }
}

fn operator(d: usize, n: usize, kind: u8) -> EllipticOperator {
    EllipticOperator::assemble(Grid::new(d, n).unwrap(), coefficient(kind)).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, 1..64)
}

fn nonzero(v: &[f64]) -> bool {
    v.iter().any(|x| x.abs() > 1e-3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_is_symmetric(d in 1usize..=3, n in 3usize..=16, kind in 0u8..3, f in values(), g in values()) {
        let n = if d == 3 { n.min(10) } else { n };
        let op = operator(d, n, kind);
        let f = field(*op.grid(), &f);
        let g = field(*op.grid(), &g);
        let lhs = op.apply_field(&f).unwrap().inner(&g).unwrap();
        let rhs = f.inner(&op.apply_field(&g).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * op.norm_bound() * f.norm() * g.norm());
    }

    #[test]
    fn operator_is_positive(d in 1usize..=3, n in 3usize..=16, kind in 0u8..3, f in values()) {
        prop_assume!(nonzero(&f));
        let n = if d == 3 { n.min(10) } else { n };
        let op = operator(d, n, kind);
        let f = field(*op.grid(), &f);
        prop_assert!(op.apply_field(&f).unwrap().inner(&f).unwrap() > 0.0);
    }

    #[test]
    fn semigroup_contracts(n in 3usize..=12, t in 1e-3..0.5f64, kind in 0u8..3, g in values()) {
        let op = operator(2, n, kind);
        let dense = DenseSpectral::new(&op).unwrap();
        let g = field(*op.grid(), &g);
        let out = dense.expm(t, &g).unwrap();
        prop_assert!(out.norm() <= (-dense.lambda_min() * t).exp() * g.norm() + 1e-10);
    }

    #[test]
    fn lanczos_basis_is_orthonormal(d in 1usize..=2, n in 6usize..=20, k in 1usize..40, seed in values()) {
        prop_assume!(nonzero(&seed));
        let op = operator(d, n, 2);
        let k = k.min(op.grid().n_dof());
        let b = field(*op.grid(), &seed);
        let basis = lanczos(&op, &b, k).unwrap();
        prop_assert!(basis.rank() <= k);
        for i in 0..basis.rank() {
            for j in 0..=i {
                let q: f64 = basis.basis_vector(i).iter().zip(basis.basis_vector(j)).map(|(a, b)| a * b).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((q - expected).abs() <= 1e-10, "Q^T Q [{i},{j}] = {q}");
            }
        }
    }

    #[test]
    fn ritz_values_lie_in_the_spectrum(n in 6usize..=16, k in 1usize..20, seed in values()) {
        prop_assume!(nonzero(&seed));
        let op = operator(1, n, 2);
        let dense = DenseSpectral::new(&op).unwrap();
        let basis = lanczos(&op, &field(*op.grid(), &seed), k.min(n - 1)).unwrap();
        for &mu in basis.ritz_values() {
            prop_assert!(mu >= dense.lambda_min() * (1.0 - 1e-10) && mu <= dense.lambda_max() * (1.0 + 1e-10));
        }
    }

    #[test]
    fn geom_is_at_least_one(z in 1e-6..1e3f64) {
        prop_assert!(geom(z) >= 1.0);
    }

    #[test]
    fn krylov_error_does_not_grow_with_rank(n in 6usize..=14, seed in values()) {
        prop_assume!(nonzero(&seed));
        let op = operator(2, n, 0);
        let b = field(*op.grid(), &seed);
        let exact = dense_expm_oracle(&op, 0.05, &b).unwrap();
        let mut prev = f64::INFINITY;
        for k in [2, 4, 8, 16, 32] {
            let k = k.min(op.grid().n_dof());
            let err = lanczos(&op, &b, k).unwrap().apply_expm(0.05).unwrap().sub(&exact).unwrap().norm();
            prop_assert!(err <= prev + 1e-12 * b.norm(), "k={k}: {err} > {prev}");
            prev = err;
        }
    }

    #[test]
    fn crank_nicolson_is_stable(d in 1usize..=2, n in 4usize..=16, tau in 1e-4..10.0f64, v in values(), g in values()) {
        let op = operator(d, n, 2);
        let grid = *op.grid();
        let v = field(grid, &v);
        let g = field(grid, &g);
        let src = SourceTerm::constant_in_time(g.clone());
        let next = cn_step(&op, &v, 0.0, tau, &src).unwrap();
        let forced = cn_step(&op, &Field::zeros(grid), 0.0, tau, &src).unwrap();
        prop_assert!(next.norm() <= v.norm() + forced.norm() + 1e-10 * (1.0 + v.norm()));
    }

    #[test]
    fn crank_nicolson_propagator_is_symmetric(n in 4usize..=12, tau in 1e-3..1.0f64, f in values(), g in values()) {
        let op = operator(2, n, 2);
        let grid = *op.grid();
        let f = field(grid, &f);
        let g = field(grid, &g);
        let z = SourceTerm::zero();
        let gf = cn_step(&op, &f, 0.0, tau, &z).unwrap();
        let gg = cn_step(&op, &g, 0.0, tau, &z).unwrap();
        let lhs = gf.inner(&g).unwrap();
        let rhs = f.inner(&gg).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9 * f.norm() * g.norm());
    }

    #[test]
    fn quadrature_is_linear(n in 4usize..=12, panels in 1usize..8, a in values(), b in values(), s in -2.0..2.0f64) {
        let op = operator(1, n, 2);
        let grid = *op.grid();
        let fa = field(grid, &a);
        let fb = field(grid, &b);
        let dense = DenseSpectral::new(&op).unwrap();
        let src = |g: Field, rate: f64| SourceTerm::new(Smoothness::C2, move |t, _| g.scaled((-rate * t).exp()));
        let sum = {
            let (fa, fb) = (fa.clone(), fb.clone());
            SourceTerm::new(Smoothness::C2, move |t, _| {
                let mut out = fa.scaled((-t).exp());
                out.axpy(s, &fb.scaled((-3.0 * t).exp())).unwrap();
                out
            })
        };
        let ra = convolve_richardson(&op, &dense, &src(fa, 1.0), 0.1, panels).unwrap();
        let rb = convolve_richardson(&op, &dense, &src(fb, 3.0), 0.1, panels).unwrap();
        let rs = convolve_richardson(&op, &dense, &sum, 0.1, panels).unwrap();
        let mut expected = ra;
        expected.axpy(s, &rb).unwrap();
        prop_assert!(rs.sub(&expected).unwrap().max_abs() <= 1e-12 * (1.0 + expected.max_abs()));
    }

    #[test]
    fn per_operand_reuse_matches_fresh_bases(n in 6usize..=16, k in 2usize..10, seed in values(), c in 0.1..5.0f64) {
        prop_assume!(nonzero(&seed));
        let op = operator(1, n, 2);
        let b = field(*op.grid(), &seed);
        let applier = KrylovApplier::per_operand(&op, k);
        let first = applier.expm(0.05, &b).unwrap();
        // collinear operand: the cached basis is reused
        let reused = applier.expm(0.05, &b.scaled(-c)).unwrap();
        let fresh = lanczos(&op, &b.scaled(-c), k.min(n - 1)).unwrap().apply_expm(0.05).unwrap();
        prop_assert!(reused.sub(&fresh).unwrap().max_abs() <= 1e-12 * (1.0 + fresh.max_abs()));
        prop_assert!(reused.add(&first.scaled(c)).unwrap().max_abs() <= 1e-12 * (1.0 + fresh.max_abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn methods_agree_on_small_problems(n in 3usize..=12, steps in 2usize..=12, amp in 0.5..2.0f64, rate in 0.0..3.0f64) {
        let grid = Grid::new(1, n).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
        let source = SourceTerm::pointwise(Smoothness::C2, move |t, x| amp * (-rate * t).exp() * x[0] * (1.0 - x[0]));
        let target = Field::from_fn(grid, |x| (std::f64::consts::PI * x[0]).sin());
        let prob = InverseProblem::new(op, source, target, 0.1).unwrap();
        let cfg = |method| SolverConfig {
            method,
            steps,
            fp_tol: 1e-12,
            rank: RankRule::Fixed(n - 1),
            propagator: Propagator::CrankNicolson,
            ..SolverConfig::default()
        };
        let reference = solve(&prob, &cfg(Method::Direct)).unwrap();
        let scale = 1.0 + reference.v0.max_abs();
        for method in [Method::Shooting, Method::Hybrid, Method::PureArnoldi] {
            let sol = solve(&prob, &cfg(method)).unwrap();
            let gap = sol.v0.sub(&reference.v0).unwrap().max_abs();
            prop_assert!(gap <= 1e-8 * scale, "{method}: {gap}");
            prop_assert!(sol.u.initial().is_zero());
            prop_assert!(sol.diagnostics.nonlocal_residual <= 1e-8 * scale);
        }
    }
}
