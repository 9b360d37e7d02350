use super::{
    finalize_bound, finish, midpoint_samples, record_step, Diagnostics, InverseProblem, InverseSolution, KrylovSetup,
    Method, SolverConfig, Timer,
};
use crate::error::{Error, Result};

/// Successive-difference ratios at or above one for this many iterations in
/// a row abort the hybrid iteration.
const NON_CONTRACTION_RUN: usize = 3;

/// Fixed point `alpha <- E_T alpha + conv(f) - phi` with `E_T` the Krylov
/// approximation of the propagator over `[0, T]`. The convolution does not
/// depend on `alpha` and is computed once. A final Crank-Nicolson sweep from
/// the fixed point gives the trajectory.
///
/// Aborts with [`Error::NonContraction`] when the iteration is observed to
/// expand; a bound that merely predicts non-contraction is only flagged.
pub fn solve_hybrid(prob: &InverseProblem, cfg: &SolverConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    let timer = Timer::start();
    let mut diag = Diagnostics::default();
    let mut setup = KrylovSetup::new(prob, cfg, &mut diag)?;
    let samples = midpoint_samples(prob, cfg.steps);

    let mut offset = setup.forced_response(&samples, &mut diag)?;
    offset.axpy(-1.0, prob.target())?;
    let propagate = setup.propagator_fn();

    let mut alpha = prob.target().scaled(-1.0);
    let mut expanding = 0;
    loop {
        if cfg.record_iterates {
            diag.iterates.push(alpha.clone());
        }
        let mut next = setup.apply(&alpha, &propagate)?;
        next.axpy(1.0, &offset)?;
        let diff = next.sub(&alpha)?.norm();
        let ratio = record_step(&mut diag, diff);
        alpha = next;
        if diff <= cfg.fp_tol {
            diag.converged = true;
            break;
        }
        match ratio {
            Some(r) if r >= 1.0 => expanding += 1,
            _ => expanding = 0,
        }
        if expanding >= NON_CONTRACTION_RUN {
            return Err(Error::NonContraction { ratio: ratio.unwrap_or(f64::NAN) });
        }
        if diag.iterations >= cfg.fp_max_iter {
            diag.flag("fp_max_iter");
            log::warn!("hybrid stopped after {} iterations at difference {diff:e}", diag.iterations);
            break;
        }
    }
    if cfg.record_iterates {
        diag.iterates.push(alpha.clone());
    }
    finalize_bound(&mut diag);
    let traj = setup.sweep(&alpha, &samples, &mut diag)?;
    finish(prob, Method::Hybrid, traj, diag, timer)
}
