use nalgebra::{DMatrix, DVector};

use super::{finish, Diagnostics, InverseProblem, InverseSolution, Method, SolverConfig, Timer};
use crate::error::{Error, Result};
use crate::grid::Field;
use crate::krylov::dense_matrix;
use crate::timestepping::Trajectory;

/// Block elimination of the Crank-Nicolson space-time system with the
/// nonlocal condition, one space dimension only.
///
/// With `v^0 = v^M - phi` substituted, each grid point carries the `M`
/// unknowns `v^1..v^M`, and the time coupling is cyclic. Point `n` then
/// satisfies `C_n V_{n-1} + B_n V_n + C'_n V_{n+1} = F_n` with
/// `B_n = D + A_nn S`, `C_n = A_{n,n-1} S`, `C'_n = A_{n,n+1} S`, where
/// `D` (differences over `tau`) and `S` (averages) are cyclic `M x M`
/// matrices. A block Thomas sweep solves it with `V_0 = V_N = 0`.
pub fn solve_direct(prob: &InverseProblem, cfg: &SolverConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    let grid = *prob.grid();
    if grid.dim() != 1 {
        return Err(Error::UnsupportedDimension(grid.dim()));
    }
    let timer = Timer::start();
    let steps = cfg.steps;
    let tau = prob.horizon() / steps as f64;
    let points = grid.n_dof();
    let a = dense_matrix(prob.op());
    let phi = prob.target().values();
    let a_phi = prob.op().apply_field(prob.target())?;
    let samples = prob.source().midpoint_samples(&grid, prob.horizon(), steps);

    // Row r is the step from level r to r+1; column c holds v^{c+1}, so
    // v^r sits in column r-1 and v^0 wraps around to v^M.
    let mut d = DMatrix::zeros(steps, steps);
    let mut s = DMatrix::zeros(steps, steps);
    for r in 0..steps {
        let prev = (r + steps - 1) % steps;
        d[(r, r)] += 1.0 / tau;
        d[(r, prev)] -= 1.0 / tau;
        s[(r, r)] += 0.5;
        s[(r, prev)] += 0.5;
    }
    let rhs = |n: usize| {
        let mut f = DVector::from_fn(steps, |r, _| samples[r].values()[n]);
        // v^0 = v^M - phi moves phi to the right of the first step
        f[0] += -phi[n] / tau + 0.5 * a_phi.values()[n];
        f
    };

    let mut alphas: Vec<DMatrix<f64>> = Vec::with_capacity(points + 1);
    let mut betas: Vec<DVector<f64>> = Vec::with_capacity(points + 1);
    alphas.push(DMatrix::zeros(steps, steps));
    betas.push(DVector::zeros(steps));
    for n in 0..points {
        let b = &d + &s * a[(n, n)];
        let lower = if n > 0 { a[(n, n - 1)] } else { 0.0 };
        let upper = if n + 1 < points { a[(n, n + 1)] } else { 0.0 };
        let z = &b + (&s * lower) * &alphas[n];
        let lu = z.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularBlock(n + 1));
        }
        let alpha = lu.solve(&(&s * -upper)).ok_or(Error::SingularBlock(n + 1))?;
        let beta = lu.solve(&(rhs(n) - (&s * lower) * &betas[n])).ok_or(Error::SingularBlock(n + 1))?;
        alphas.push(alpha);
        betas.push(beta);
    }
    let mut v = vec![DVector::zeros(steps); points + 1];
    for n in (0..points).rev() {
        v[n] = &alphas[n + 1] * &v[n + 1] + &betas[n + 1];
    }

    let mut states = Vec::with_capacity(steps + 1);
    let last: Vec<f64> = (0..points).map(|n| v[n][steps - 1]).collect();
    states.push(Field::from_vec(grid, last.iter().zip(phi).map(|(l, p)| l - p).collect())?);
    for m in 1..=steps {
        states.push(Field::from_vec(grid, (0..points).map(|n| v[n][m - 1]).collect())?);
    }
    let traj = Trajectory::new(grid, tau, states)?;
    let diag = Diagnostics { iterations: 1, converged: true, ..Diagnostics::default() };
    finish(prob, Method::Direct, traj, diag, timer)
}
