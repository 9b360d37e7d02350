use super::{
    finalize_bound, finish, midpoint_samples, record_step, Diagnostics, InverseProblem, InverseSolution, Method,
    SolverConfig, Timer,
};
use crate::error::Result;
use crate::timestepping::{propagator_norm, CnStepper};

/// Fixed-point iteration `alpha <- v^M(alpha) - phi`, starting from
/// `alpha_0 = -phi`, with one Crank-Nicolson sweep per iteration. Each
/// iterate contracts by at most `||G||^M`.
///
/// The returned trajectory is the last sweep, started from the last
/// accepted iterate, so its nonlocal residual equals the final
/// successive difference. Running out of iterations is not an error: the
/// last iterate is returned with `converged = false`.
pub fn solve_shooting(prob: &InverseProblem, cfg: &SolverConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    let timer = Timer::start();
    let mut diag = Diagnostics::default();
    let tau = prob.horizon() / cfg.steps as f64;
    diag.predicted_contraction = Some(propagator_norm(prob.op(), tau).powi(cfg.steps as i32));

    let samples = midpoint_samples(prob, cfg.steps);
    let mut stepper = CnStepper::new(prob.op(), tau);
    let mut alpha = prob.target().scaled(-1.0);
    let traj = loop {
        if cfg.record_iterates {
            diag.iterates.push(alpha.clone());
        }
        let traj = stepper.run(&alpha, &samples)?;
        let next = traj.last().sub(prob.target())?;
        let diff = next.sub(&alpha)?.norm();
        record_step(&mut diag, diff);
        if diff <= cfg.fp_tol {
            diag.converged = true;
            break traj;
        }
        if diag.iterations >= cfg.fp_max_iter {
            diag.flag("fp_max_iter");
            log::warn!("shooting stopped after {} iterations at difference {diff:e}", diag.iterations);
            break traj;
        }
        alpha = next;
    };
    diag.cg_iterations = stepper.cg_iterations;
    finalize_bound(&mut diag);
    finish(prob, Method::Shooting, traj, diag, timer)
}
