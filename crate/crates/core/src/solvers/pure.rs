use super::{
    finish, midpoint_samples, Diagnostics, InverseProblem, InverseSolution, KrylovSetup, Method, Propagator,
    SolverConfig, Timer,
};
use crate::error::{Error, Result};
use crate::krylov::{geom, GEOM_GUARD};
use crate::timestepping::amplification;

/// `v(0) = (I - E_T)^{-1} (conv(f) - phi)` evaluated as one Krylov matrix
/// function, followed by a Crank-Nicolson sweep. No iteration.
pub fn solve_pure_arnoldi(prob: &InverseProblem, cfg: &SolverConfig) -> Result<InverseSolution> {
    cfg.validate()?;
    let timer = Timer::start();
    let mut diag = Diagnostics::default();
    let mut setup = KrylovSetup::new(prob, cfg, &mut diag)?;
    diag.predicted_contraction = None;
    diag.flags.retain(|f| f != "bound-not-contractive");
    let samples = midpoint_samples(prob, cfg.steps);

    let mut rhs = setup.forced_response(&samples, &mut diag)?;
    rhs.axpy(-1.0, prob.target())?;

    let horizon = prob.horizon();
    let steps = cfg.steps;
    let tau = horizon / steps as f64;
    let v0 = if rhs.is_zero() {
        rhs
    } else {
        // check the guard on the Ritz values actually used
        let check = |mu: f64| {
            if horizon * mu < GEOM_GUARD {
                f64::NAN
            } else {
                match cfg.propagator {
                    Propagator::Exponential => geom(horizon * mu),
                    Propagator::CrankNicolson => 1.0 / (1.0 - amplification(tau * mu).powi(steps as i32)),
                }
            }
        };
        let out = setup.apply(&rhs, check)?;
        if out.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularFunction(horizon * prob.op().lambda_min()));
        }
        out
    };
    diag.iterations = 1;
    diag.converged = true;
    let traj = setup.sweep(&v0, &samples, &mut diag)?;
    finish(prob, Method::PureArnoldi, traj, diag, timer)
}
