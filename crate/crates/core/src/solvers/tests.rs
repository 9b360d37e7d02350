use super::*;
use crate::krylov::DenseSpectral;
use crate::manufactured::ManufacturedCase;
use crate::operator::Coefficient;
use crate::timestepping::{cn_solve_ivp, propagator_norm};

fn zero_problem(d: usize, n: usize) -> InverseProblem {
    let grid = Grid::new(d, n).unwrap();
    let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
    InverseProblem::new(op, SourceTerm::zero(), Field::zeros(grid), 0.1).unwrap()
}

fn config(method: Method, steps: usize) -> SolverConfig {
    SolverConfig { method, steps, ..SolverConfig::default() }
}

#[test]
fn zero_data_gives_zero_solution() {
    for method in Method::ALL {
        let prob = zero_problem(1, 6);
        let sol = solve(&prob, &config(method, 4)).unwrap();
        assert!(sol.v0.is_zero() && sol.p.is_zero(), "{method}");
        assert!(sol.u.states().iter().all(Field::is_zero));
        assert_eq!(sol.diagnostics.iterations, 1, "{method}");
        assert!(sol.diagnostics.converged);
    }
}

#[test]
fn recover_pair_examples() {
    let prob = zero_problem(1, 8);
    let grid = *prob.grid();
    let v = Field::from_fn(grid, |x| x[0]);
    let traj = cn_solve_ivp(prob.op(), &Field::zeros(grid), &SourceTerm::constant_in_time(v), 0.1, 3).unwrap();
    let (p, u) = recover_pair(&prob, &Field::zeros(grid), &traj).unwrap();
    assert!(p.is_zero());
    assert_eq!(u.states(), traj.states());

    let dense = DenseSpectral::new(prob.op()).unwrap();
    let lambda = dense.eigenvalues()[3];
    let e = Field::from_vec(grid, dense.eigenvectors().column(3).iter().cloned().collect()).unwrap();
    let traj = cn_solve_ivp(prob.op(), &e, &SourceTerm::zero(), 0.1, 2).unwrap();
    let (p, u) = recover_pair(&prob, &e, &traj).unwrap();
    assert!(p.sub(&e.scaled(-lambda)).unwrap().max_abs() < 1e-10);
    assert!(u.initial().is_zero());

    assert!(recover_pair(&prob, &Field::constant(grid, 1.0), &traj).is_err());
}

#[test]
fn shooting_contracts_like_propagator_power() {
    let case = ManufacturedCase::new(1, 0.1).unwrap();
    for n in [4, 8] {
        let prob = case.problem(n).unwrap();
        let reference = solve_shooting(&prob, &SolverConfig { fp_tol: 1e-15, ..config(Method::Shooting, n) });
        // converges to round-off; the fixed point is the last iterate
        let sol = reference.unwrap();
        let limit = sol.v0.clone();
        let cfg = SolverConfig { fp_tol: 1e-13, record_iterates: true, ..config(Method::Shooting, n) };
        let run = solve_shooting(&prob, &cfg).unwrap();
        let g = propagator_norm(prob.op(), 0.1 / n as f64).powi(n as i32);
        let errs: Vec<f64> = run.diagnostics.iterates.iter().map(|a| a.sub(&limit).unwrap().norm()).collect();
        // ratios are only meaningful while the error is far above the
        // accuracy of the reference fixed point
        let floor = 1e-6 * limit.norm();
        let mut checked = 0;
        for w in errs.windows(2) {
            if w[1] > floor {
                assert!(w[1] / w[0] <= g + 1e-8, "n={n}: {} > {g}", w[1] / w[0]);
                checked += 1;
            }
        }
        assert!(checked >= 5, "{errs:?}");
        assert!(run.diagnostics.nonlocal_residual <= 1e-13);
    }
}

#[test]
fn full_rank_hybrid_matches_dense_fixed_point() {
    let case = ManufacturedCase::new(2, 0.1).unwrap();
    let prob = case.problem(8).unwrap();
    let n_dof = prob.grid().n_dof();
    let cfg = SolverConfig {
        rank: RankRule::Fixed(n_dof),
        fp_tol: 1e-13,
        record_iterates: true,
        ..config(Method::Hybrid, 8)
    };
    let sol = solve_hybrid(&prob, &cfg).unwrap();
    let dense = DenseSpectral::new(prob.op()).unwrap();
    let mut rhs = convolve_richardson(prob.op(), &dense, prob.source(), 0.1, 8).unwrap();
    rhs.axpy(-1.0, prob.target()).unwrap();
    let exact = dense.geom(0.1, &rhs).unwrap();
    assert!(sol.v0.sub(&exact).unwrap().max_abs() < 1e-9 * exact.max_abs().max(1.0));

    let bound = (-0.1 * dense.lambda_min()).exp();
    let errs: Vec<f64> = sol.diagnostics.iterates.iter().map(|a| a.sub(&exact).unwrap().norm()).collect();
    for w in errs.windows(2) {
        if w[0] > 1e-11 {
            assert!(w[1] / w[0] <= bound + 1e-8, "{} > {bound}", w[1] / w[0]);
        }
    }
    assert_eq!(sol.diagnostics.rank_bound, Some(0.0));

    let pure =
        solve_pure_arnoldi(&prob, &SolverConfig { rank: RankRule::Fixed(n_dof), ..config(Method::PureArnoldi, 8) })
            .unwrap();
    assert!(pure.v0.sub(&exact).unwrap().max_abs() < 1e-9 * exact.max_abs().max(1.0));
}

#[test]
fn methods_agree_on_the_discrete_system() {
    let case = ManufacturedCase::new(1, 0.1).unwrap();
    let prob = case.problem(8).unwrap();
    let direct = solve_direct(&prob, &config(Method::Direct, 8)).unwrap();
    let shooting = solve_shooting(&prob, &SolverConfig { fp_tol: 1e-12, ..config(Method::Shooting, 8) }).unwrap();
    let krylov = |method| SolverConfig {
        rank: RankRule::Fixed(7),
        fp_tol: 1e-12,
        propagator: Propagator::CrankNicolson,
        ..config(method, 8)
    };
    let hybrid = solve_hybrid(&prob, &krylov(Method::Hybrid)).unwrap();
    let pure = solve_pure_arnoldi(&prob, &krylov(Method::PureArnoldi)).unwrap();
    for other in [&shooting, &hybrid, &pure] {
        let gap = other.v0.sub(&direct.v0).unwrap().max_abs();
        assert!(gap < 1e-9, "{}: {gap}", other.method);
    }
    assert!(direct.diagnostics.nonlocal_residual < 1e-10);
}

#[test]
fn direct_rejects_higher_dimensions() {
    let prob = zero_problem(2, 4);
    assert_eq!(solve_direct(&prob, &config(Method::Direct, 4)).unwrap_err(), Error::UnsupportedDimension(2));
}

#[test]
fn recovered_solution_satisfies_side_conditions() {
    let case = ManufacturedCase::new(1, 0.1).unwrap();
    let prob = case.problem(16).unwrap();
    for method in Method::ALL {
        let sol = solve(&prob, &config(method, 32)).unwrap();
        assert!(sol.u.initial().is_zero(), "{method}");
        let end = sol.u.last().sub(prob.target()).unwrap().max_abs();
        assert!(end < 1e-2 * prob.target().max_abs(), "{method}: {end}");
        assert!(sol.diagnostics.nonlocal_residual.is_finite());
    }
}

#[test]
fn shooting_reports_iteration_cap() {
    let case = ManufacturedCase::new(1, 0.1).unwrap();
    let prob = case.problem(8).unwrap();
    let sol =
        solve_shooting(&prob, &SolverConfig { fp_max_iter: 2, fp_tol: 1e-14, ..config(Method::Shooting, 8) }).unwrap();
    assert!(!sol.diagnostics.converged);
    assert_eq!(sol.diagnostics.iterations, 2);
    assert!(sol.diagnostics.flags.iter().any(|f| f == "fp_max_iter"));
}

#[test]
fn low_rank_is_flagged() {
    let case = ManufacturedCase::new(2, 0.1).unwrap();
    let prob = case.problem(16).unwrap();
    let sol = solve_hybrid(&prob, &SolverConfig { rank: RankRule::Fixed(3), ..config(Method::Hybrid, 16) });
    match sol {
        Ok(sol) => assert!(sol.diagnostics.flags.iter().any(|f| f == "rank-below-bound-regime")),
        Err(e) => assert!(matches!(e, Error::NonContraction { .. })),
    }
}

#[test]
fn config_validation_and_parsing() {
    assert!(SolverConfig { fp_tol: 0.0, ..SolverConfig::default() }.validate().is_err());
    assert!(SolverConfig { fp_max_iter: 0, ..SolverConfig::default() }.validate().is_err());
    assert!(SolverConfig { steps: 0, ..SolverConfig::default() }.validate().is_err());
    assert_eq!("pure-arnoldi".parse::<Method>().unwrap(), Method::PureArnoldi);
    assert_eq!("Hybrid".parse::<Method>().unwrap(), Method::Hybrid);
    assert!("newton".parse::<Method>().is_err());
    assert_eq!("N".parse::<RankRule>().unwrap(), RankRule::Subdivisions);
    assert_eq!("2N".parse::<RankRule>().unwrap(), RankRule::Multiple(2.0));
    assert_eq!("1.5*N".parse::<RankRule>().unwrap(), RankRule::Multiple(1.5));
    assert!("-1N".parse::<RankRule>().is_err());
    assert_eq!(RankRule::Multiple(2.0).to_string().parse::<RankRule>().unwrap(), RankRule::Multiple(2.0));
    assert_eq!("12".parse::<RankRule>().unwrap(), RankRule::Fixed(12));
    assert_eq!("auto:1e-4".parse::<RankRule>().unwrap(), RankRule::Auto { target: 1e-4 });
    for m in Method::ALL {
        assert_eq!(m.name().parse::<Method>().unwrap(), m);
    }
}
