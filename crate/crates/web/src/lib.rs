//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Results cross the boundary as flat `Float64Array`s; the layout of each is
//! given on the exported function. The `*_values` functions hold the logic
//! and are what the native tests exercise.

use heatinv::{
    lanczos, measure_errors, solve, DenseSpectral, ErrorNorm, ManufacturedCase, Method, RankRule, SolverConfig,
};
use wasm_bindgen::prelude::*;

/// Largest grid the demo accepts; the dense oracle is cubic in the unknowns.
pub const MAX_DECAY_N: usize = 32;
pub const MAX_SOLVE_N: usize = 256;

fn check(cond: bool, msg: impl Into<String>) -> heatinv::Result<()> {
    if cond {
        Ok(())
    } else {
        Err(heatinv::Error::InvalidArgument(msg.into()))
    }
}

pub fn krylov_decay_values(n: usize, horizon: f64, k_max: usize) -> heatinv::Result<Vec<f64>> {
    check((4..=MAX_DECAY_N).contains(&n), format!("N must lie in 4..={MAX_DECAY_N}"))?;
    check(horizon > 0.0 && horizon.is_finite(), "T must be positive")?;
    let case = ManufacturedCase::new(2, horizon)?;
    let prob = case.problem(n)?;
    let op = prob.op();
    let dense = DenseSpectral::new(op)?;
    let b = prob.target();
    let expm = dense.expm(horizon, b)?;
    let geom = dense.geom(horizon, b)?;
    let mut out = Vec::new();
    for k in 1..=k_max.min(op.grid().n_dof()) {
        let basis = lanczos(op, b, k)?;
        out.push(k as f64);
        out.push(basis.apply_expm(horizon)?.sub(&expm)?.norm() / b.norm());
        out.push(basis.apply_geom(horizon)?.sub(&geom)?.norm() / b.norm());
    }
    Ok(out)
}

/// `[k, expm_error, geom_error]` triples for `k = 1..=k_max`, on the 2-D
/// manufactured final state with `N` subdivisions. Errors are per `||phi||`.
#[wasm_bindgen]
pub fn krylov_decay(n: usize, horizon: f64, k_max: usize) -> Result<Vec<f64>, JsError> {
    krylov_decay_values(n, horizon, k_max).map_err(|e| JsError::new(&e.to_string()))
}

fn config(method: Method, n: usize, rank: usize) -> SolverConfig {
    SolverConfig {
        steps: 2 * n,
        method,
        rank: if rank == 0 { RankRule::Subdivisions } else { RankRule::Fixed(rank) },
        ..SolverConfig::default()
    }
}

pub fn solve_profile_values(method: &str, n: usize, rank: usize) -> heatinv::Result<Vec<f64>> {
    check((4..=MAX_SOLVE_N).contains(&n), format!("N must lie in 4..={MAX_SOLVE_N}"))?;
    let method: Method = method.parse()?;
    let case = ManufacturedCase::new(1, 0.1)?;
    let sol = solve(&case.problem(n)?, &config(method, n, rank))?;
    let err = measure_errors(&sol, &case, ErrorNorm::MaxRelative)?;
    let grid = *sol.p.grid();
    let mut out = vec![err.e_u, err.e_p, sol.diagnostics.iterations as f64];
    for j in 0..grid.n_dof() {
        let x = grid.point(j)[0];
        out.extend([x, sol.p.values()[j], case.exact_p(&[x]), sol.u.last().values()[j]]);
    }
    Ok(out)
}

/// One-dimensional solve with `M = 2N`. Returns `[E_u, E_p, iterations]`
/// followed by `[x, p, p_exact, u_T]` per grid point. `rank = 0` means
/// `k = N`; it is ignored by shooting and direct.
#[wasm_bindgen]
pub fn solve_profile(method: &str, n: usize, rank: usize) -> Result<Vec<f64>, JsError> {
    solve_profile_values(method, n, rank).map_err(|e| JsError::new(&e.to_string()))
}

pub fn compare_methods_values(dim: usize, n: usize, rank: usize) -> heatinv::Result<Vec<f64>> {
    check((1..=3).contains(&dim), "dimension must be 1, 2 or 3")?;
    let cap = [MAX_SOLVE_N, 48, 16][dim - 1];
    check((4..=cap).contains(&n), format!("N must lie in 4..={cap} at d={dim}"))?;
    let case = ManufacturedCase::new(dim, 0.1)?;
    let prob = case.problem(n)?;
    let mut out = Vec::new();
    for method in [Method::Shooting, Method::Hybrid, Method::PureArnoldi] {
        let sol = solve(&prob, &config(method, n, rank))?;
        let err = measure_errors(&sol, &case, ErrorNorm::MaxRelative)?;
        out.extend([err.e_u, err.e_p, sol.diagnostics.iterations as f64]);
    }
    Ok(out)
}

/// `[E_u, E_p, iterations]` for shooting, hybrid and pure Arnoldi, in that
/// order, with `M = 2N`.
#[wasm_bindgen]
pub fn compare_methods(dim: usize, n: usize, rank: usize) -> Result<Vec<f64>, JsError> {
    compare_methods_values(dim, n, rank).map_err(|e| JsError::new(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_reaches_round_off_at_full_rank() {
        let v = krylov_decay_values(8, 0.1, 100).unwrap();
        assert_eq!(v.len(), 3 * 49);
        let last = &v[v.len() - 3..];
        assert_eq!(last[0], 49.0);
        assert!(last[1] < 1e-10 && last[2] < 1e-10, "{last:?}");
        assert!(v[1] > 1e-3);
    }

    #[test]
    fn profile_layout_and_accuracy() {
        let v = solve_profile_values("hybrid", 16, 0).unwrap();
        assert_eq!(v.len(), 3 + 4 * 15);
        assert!(v[1] < 2e-2, "E_p {}", v[1]);
        let (x, p, exact) = (v[3 + 4 * 3], v[3 + 4 * 3 + 1], v[3 + 4 * 3 + 2]);
        assert!((x - 0.25).abs() < 1e-12);
        assert!((p - exact).abs() < 0.05 * exact.abs());
    }

    #[test]
    fn methods_agree_in_one_dimension() {
        let v = compare_methods_values(1, 16, 0).unwrap();
        assert_eq!(v.len(), 9);
        for m in 1..3 {
            assert!((v[3 * m + 1] / v[1] - 1.0).abs() < 0.2, "{v:?}");
        }
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(krylov_decay_values(100, 0.1, 10).is_err());
        assert!(solve_profile_values("newton", 16, 0).is_err());
        assert!(compare_methods_values(4, 8, 0).is_err());
        assert!(compare_methods_values(3, 40, 0).is_err());
    }
}
