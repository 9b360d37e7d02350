//! Solvers for the nonlocal problem `v' + A v = f`, `v(0) = v(T) - phi`,
//! and recovery of `p = -A v(0)`, `u = v - v(0)`.
//!
//! * [`solve_shooting`]: fixed point on `alpha -> v^M(alpha) - phi` with
//!   Crank-Nicolson sweeps.
//! * [`solve_hybrid`]: fixed point with `e^{-TA}` and the convolution term
//!   evaluated by Krylov projections, then one sweep.
//! * [`solve_pure_arnoldi`]: `v(0) = (I - e^{-TA})^{-1} (conv - phi)` in one
//!   Krylov evaluation, then one sweep.
//! * [`solve_direct`]: block elimination of the coupled space-time system
//!   (one space dimension).

mod direct;
mod hybrid;
mod pure;
mod shooting;

use std::fmt;
use std::str::FromStr;

pub use direct::solve_direct;
pub use hybrid::solve_hybrid;
pub use pure::solve_pure_arnoldi;
pub use shooting::solve_shooting;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::krylov::{BoundParams, KrylovBasis};
use crate::operator::EllipticOperator;
use crate::quadrature::{convolve_richardson, KrylovApplier, SeedMode};
use crate::timestepping::{amplification, SourceTerm, Trajectory};

pub(crate) use timer::Timer;

/// Data of the inverse problem after spatial discretisation.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    op: EllipticOperator,
    source: SourceTerm,
    target: Field,
    horizon: f64,
}

impl InverseProblem {
    pub fn new(op: EllipticOperator, source: SourceTerm, target: Field, horizon: f64) -> Result<Self> {
        if *target.grid() != *op.grid() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = target.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { op, source, target, horizon })
    }

    pub fn grid(&self) -> &Grid {
        self.op.grid()
    }

    pub fn op(&self) -> &EllipticOperator {
        &self.op
    }

    pub fn source(&self) -> &SourceTerm {
        &self.source
    }

    /// Final-time data `phi`.
    pub fn target(&self) -> &Field {
        &self.target
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Direct,
    Shooting,
    Hybrid,
    PureArnoldi,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Direct, Method::Shooting, Method::Hybrid, Method::PureArnoldi];

    pub fn name(self) -> &'static str {
        match self {
            Method::Direct => "direct",
            Method::Shooting => "shooting",
            Method::Hybrid => "hybrid",
            Method::PureArnoldi => "pure",
        }
    }

    pub fn uses_krylov(self) -> bool {
        matches!(self, Method::Hybrid | Method::PureArnoldi)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "direct" => Ok(Method::Direct),
            "shooting" => Ok(Method::Shooting),
            "hybrid" => Ok(Method::Hybrid),
            "pure" | "pure-arnoldi" | "arnoldi" => Ok(Method::PureArnoldi),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Krylov rank selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankRule {
    Fixed(usize),
    /// `k = N`, the number of subdivisions per axis.
    Subdivisions,
    /// `k = round(c N)`.
    Multiple(f64),
    /// Smallest admissible rank meeting an exponential error target.
    Auto {
        target: f64,
    },
}

impl RankRule {
    pub fn resolve(&self, op: &EllipticOperator, horizon: f64) -> Result<usize> {
        let n_dof = op.grid().n_dof();
        let k = match *self {
            RankRule::Fixed(k) => k,
            RankRule::Subdivisions => op.grid().subdivisions(),
            RankRule::Multiple(c) => (c * op.grid().subdivisions() as f64).round() as usize,
            RankRule::Auto { target } => crate::krylov::choose_rank(op, horizon, target)?.k,
        };
        if k == 0 {
            return Err(Error::RankOutOfRange { k, n_dof });
        }
        Ok(k.min(n_dof))
    }
}

impl fmt::Display for RankRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankRule::Fixed(k) => write!(f, "{k}"),
            RankRule::Subdivisions => f.write_str("N"),
            RankRule::Multiple(c) => write!(f, "{c}N"),
            RankRule::Auto { target } => write!(f, "auto:{target:e}"),
        }
    }
}

impl FromStr for RankRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("n") {
            return Ok(RankRule::Subdivisions);
        }
        if let Some(c) = s.strip_suffix(['N', 'n']) {
            return match c.trim().trim_end_matches('*').parse::<f64>() {
                Ok(c) if c > 0.0 && c.is_finite() => Ok(RankRule::Multiple(c)),
                _ => Err(Error::InvalidArgument(format!("bad rank rule '{s}'"))),
            };
        }
        if let Some(rest) = s.strip_prefix("auto") {
            let target = match rest.strip_prefix(':') {
                Some(t) => t.parse().map_err(|_| Error::InvalidArgument(format!("bad rank target '{t}'")))?,
                None if rest.is_empty() => 1e-6,
                None => return Err(Error::InvalidArgument(format!("bad rank rule '{s}'"))),
            };
            return Ok(RankRule::Auto { target });
        }
        s.parse().map(RankRule::Fixed).map_err(|_| {
            Error::InvalidArgument(format!("bad rank rule '{s}' (expected N, cN, auto[:tol] or an integer)"))
        })
    }
}

/// Time propagator used inside the Krylov solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagator {
    /// `e^{-TA}` and the exact convolution, approximated by quadrature.
    #[default]
    Exponential,
    /// `G(A; tau)^M` and the Crank-Nicolson response to `f`: the fixed point
    /// is then the same discrete system the shooting and direct solvers
    /// solve.
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Crank-Nicolson steps `M`.
    pub steps: usize,
    /// Only read by [`solve`].
    pub method: Method,
    pub rank: RankRule,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub seed_mode: SeedMode,
    /// Quadrature panels for the convolution; `None` means `steps`.
    pub quad_panels: Option<usize>,
    pub propagator: Propagator,
    /// Keep every fixed-point iterate in the diagnostics.
    pub record_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            steps: 16,
            method: Method::Shooting,
            rank: RankRule::Subdivisions,
            fp_tol: 1e-10,
            fp_max_iter: 200,
            seed_mode: SeedMode::PerOperand,
            quad_panels: None,
            propagator: Propagator::Exponential,
            record_iterates: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("need at least one time step".into()));
        }
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::InvalidArgument("fp_max_iter must be at least 1".into()));
        }
        if self.quad_panels == Some(0) {
            return Err(Error::InvalidArgument("quad_panels must be at least 1".into()));
        }
        if let RankRule::Auto { target } = self.rank {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::InvalidArgument(format!("rank target must lie in (0, 1], got {target}")));
            }
        }
        Ok(())
    }

    pub fn panels(&self) -> usize {
        self.quad_panels.unwrap_or(self.steps)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub iterations: usize,
    /// Last successive-difference norm of the fixed-point iteration.
    pub fp_residual: f64,
    pub converged: bool,
    /// Predicted per-iteration contraction factor.
    pub predicted_contraction: Option<f64>,
    /// `C/(1-C) * fp_residual` with the predicted factor `C < 1`.
    pub error_bound: Option<f64>,
    /// Ratios of successive differences, one per iteration after the first.
    pub measured_ratios: Vec<f64>,
    pub rank: Option<usize>,
    /// Exponential bound at the rank used (0 for exact bases).
    pub rank_bound: Option<f64>,
    /// `||v^M - phi - v^0||` of the returned trajectory.
    pub nonlocal_residual: f64,
    pub cg_iterations: usize,
    pub wall_time_s: f64,
    pub flags: Vec<String>,
    /// Fixed-point iterates `alpha_0, alpha_1, ..` when requested.
    pub iterates: Vec<Field>,
}

impl Diagnostics {
    fn flag(&mut self, flag: &str) {
        if !self.flags.iter().any(|f| f == flag) {
            self.flags.push(flag.to_string());
        }
    }
}

#[derive(Debug, Clone)]
pub struct InverseSolution {
    pub method: Method,
    pub v0: Field,
    pub p: Field,
    pub u: Trajectory,
    pub diagnostics: Diagnostics,
}

/// `p = -A v0` and `u^m = v^m - v0`.
pub fn recover_pair(prob: &InverseProblem, v0: &Field, traj: &Trajectory) -> Result<(Field, Trajectory)> {
    if traj.initial() != v0 {
        return Err(Error::InvalidArgument("trajectory does not start at v0".into()));
    }
    let mut p = prob.op().apply_field(v0)?;
    p.scale(-1.0);
    let states = traj.states().iter().map(|s| s.sub(v0)).collect::<Result<Vec<_>>>()?;
    Ok((p, Trajectory::new(*traj.grid(), traj.tau(), states)?))
}

/// Runs the method named in `cfg.method`.
pub fn solve(prob: &InverseProblem, cfg: &SolverConfig) -> Result<InverseSolution> {
    match cfg.method {
        Method::Direct => solve_direct(prob, cfg),
        Method::Shooting => solve_shooting(prob, cfg),
        Method::Hybrid => solve_hybrid(prob, cfg),
        Method::PureArnoldi => solve_pure_arnoldi(prob, cfg),
    }
}

fn finish(
    prob: &InverseProblem,
    method: Method,
    traj: Trajectory,
    mut diagnostics: Diagnostics,
    timer: Timer,
) -> Result<InverseSolution> {
    let v0 = traj.initial().clone();
    let mut gap = traj.last().sub(prob.target())?;
    gap.axpy(-1.0, &v0)?;
    diagnostics.nonlocal_residual = gap.norm();
    let (p, u) = recover_pair(prob, &v0, &traj)?;
    diagnostics.wall_time_s = timer.elapsed();
    Ok(InverseSolution { method, v0, p, u, diagnostics })
}

/// The source sampled at the Crank-Nicolson midpoints, shared by the
/// sweeps of one solve.
fn midpoint_samples(prob: &InverseProblem, steps: usize) -> Vec<Field> {
    prob.source().midpoint_samples(prob.grid(), prob.horizon(), steps)
}

/// Records the fixed-point bookkeeping for one iteration. Returns the
/// measured ratio if there was a previous difference.
fn record_step(diag: &mut Diagnostics, diff: f64) -> Option<f64> {
    let prev = diag.fp_residual;
    diag.iterations += 1;
    diag.fp_residual = diff;
    if diag.iterations > 1 && prev > 0.0 {
        let r = diff / prev;
        diag.measured_ratios.push(r);
        Some(r)
    } else {
        None
    }
}

fn finalize_bound(diag: &mut Diagnostics) {
    if let Some(c) = diag.predicted_contraction {
        if c < 1.0 {
            diag.error_bound = Some(c / (1.0 - c) * diag.fp_residual);
        }
    }
}

/// Krylov machinery shared by the hybrid and pure solvers.
struct KrylovSetup<'a> {
    prob: &'a InverseProblem,
    cfg: &'a SolverConfig,
    k: usize,
    shared: Option<KrylovBasis>,
}

impl<'a> KrylovSetup<'a> {
    fn new(prob: &'a InverseProblem, cfg: &'a SolverConfig, diag: &mut Diagnostics) -> Result<Self> {
        let op = prob.op();
        let horizon = prob.horizon();
        let k = cfg.rank.resolve(op, horizon)?;
        let n_dof = prob.grid().n_dof();
        let s = op.spectral();
        let semigroup = (-horizon * s.lambda_min).exp();
        let bound = if k == n_dof { Some(0.0) } else { BoundParams::for_operator(op, horizon, k).expm_bound().ok() };
        diag.rank = Some(k);
        diag.rank_bound = bound;
        match bound {
            Some(b) => diag.predicted_contraction = Some(semigroup + b),
            None => {
                diag.flag("rank-below-bound-regime");
                log::warn!("rank {k} is below sqrt(T rho); the exponential bound does not apply");
            }
        }
        if k < n_dof && (k as f64) <= crate::krylov::contraction_rank_floor(horizon, s.rho, s.lambda_min) {
            diag.flag("rank-below-floor");
            log::warn!("rank {k} does not exceed the contraction floor; consider increasing k");
        }
        if diag.predicted_contraction.is_some_and(|c| c >= 1.0) {
            diag.flag("bound-not-contractive");
        }
        Ok(Self { prob, cfg, k, shared: None })
    }

    fn basis_for(&mut self, v: &Field) -> Result<Option<KrylovBasis>> {
        if v.is_zero() {
            return Ok(None);
        }
        match self.cfg.seed_mode {
            SeedMode::PerOperand => Ok(Some(KrylovBasis::build(self.prob.op(), v, self.k)?)),
            SeedMode::SharedBasis => {
                if self.shared.is_none() {
                    self.shared = Some(KrylovBasis::build(self.prob.op(), v, self.k)?);
                }
                Ok(None)
            }
        }
    }

    /// `F(A) v` with `F` evaluated on the Ritz values.
    fn apply(&mut self, v: &Field, f: impl Fn(f64) -> f64) -> Result<Field> {
        if v.is_zero() {
            return Ok(Field::zeros(*v.grid()));
        }
        match self.basis_for(v)? {
            Some(basis) => Ok(basis.apply_fn(f)),
            None => self.shared.as_ref().expect("shared basis built").apply_fn_to(v, f),
        }
    }

    /// The propagator over `[0, T]` as a scalar function of an eigenvalue.
    fn propagator_fn(&self) -> impl Fn(f64) -> f64 {
        let horizon = self.prob.horizon();
        let steps = self.cfg.steps;
        let tau = horizon / steps as f64;
        let kind = self.cfg.propagator;
        move |mu| match kind {
            Propagator::Exponential => (-horizon * mu).exp(),
            Propagator::CrankNicolson => amplification(tau * mu).powi(steps as i32),
        }
    }

    /// Response at `T` to the source from a zero start.
    fn forced_response(&mut self, samples: &[Field], diag: &mut Diagnostics) -> Result<Field> {
        let prob = self.prob;
        let grid = *prob.grid();
        if prob.source().is_zero() {
            return Ok(Field::zeros(grid));
        }
        match self.cfg.propagator {
            Propagator::Exponential => {
                let panels = self.cfg.panels();
                let applier = match self.cfg.seed_mode {
                    SeedMode::PerOperand => KrylovApplier::per_operand(prob.op(), self.k),
                    SeedMode::SharedBasis => {
                        // first operand of the fine pass
                        let first = prob.source().eval(prob.horizon() / (4.0 * panels as f64), &grid);
                        KrylovApplier::shared(prob.op(), self.k, first)
                    }
                };
                convolve_richardson(prob.op(), &applier, prob.source(), prob.horizon(), panels)
            }
            Propagator::CrankNicolson => {
                let tau = prob.horizon() / self.cfg.steps as f64;
                let mut stepper = crate::timestepping::CnStepper::new(prob.op(), tau);
                let traj = stepper.run(&Field::zeros(grid), samples)?;
                diag.cg_iterations += stepper.cg_iterations;
                Ok(traj.last().clone())
            }
        }
    }

    fn sweep(&self, v0: &Field, samples: &[Field], diag: &mut Diagnostics) -> Result<Trajectory> {
        let tau = self.prob.horizon() / self.cfg.steps as f64;
        let mut stepper = crate::timestepping::CnStepper::new(self.prob.op(), tau);
        let traj = stepper.run(v0, samples)?;
        diag.cg_iterations += stepper.cg_iterations;
        Ok(traj)
    }
}

mod timer {
    #[cfg(not(target_arch = "wasm32"))]
    pub(crate) struct Timer(std::time::Instant);

    #[cfg(not(target_arch = "wasm32"))]
    impl Timer {
        pub(crate) fn start() -> Self {
            Timer(std::time::Instant::now())
        }

        pub(crate) fn elapsed(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }

    // No monotonic clock on bare wasm: wall times read as zero there.
    #[cfg(target_arch = "wasm32")]
    pub(crate) struct Timer;

    #[cfg(target_arch = "wasm32")]
    impl Timer {
        pub(crate) fn start() -> Self {
            Timer
        }

        pub(crate) fn elapsed(&self) -> f64 {
            0.0
        }
    }
}

#[cfg(test)]
mod tests;
