//! Crank-Nicolson integration of `v' + A v = f(t)`.

use std::fmt;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operator::{conjugate_gradient, EllipticOperator, LinearOperator, ShiftedOperator, CG_RTOL};

/// Declared time regularity of a source term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Continuous,
    C1,
    C2,
}

type SourceFn = dyn Fn(f64, &Grid) -> Field + Send + Sync;

/// Time-dependent right-hand side `f(t)` sampled on a grid.
#[derive(Clone)]
pub struct SourceTerm {
    eval: Arc<SourceFn>,
    smoothness: Smoothness,
    zero: bool,
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SourceTerm").field("smoothness", &self.smoothness).field("zero", &self.zero).finish()
    }
}

impl SourceTerm {
    pub fn new(smoothness: Smoothness, eval: impl Fn(f64, &Grid) -> Field + Send + Sync + 'static) -> Self {
        Self { eval: Arc::new(eval), smoothness, zero: false }
    }

    /// Source given pointwise as `f(t, x)`.
    pub fn pointwise(smoothness: Smoothness, f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(smoothness, move |t, grid| Field::from_fn(*grid, |x| f(t, x)))
    }

    /// `f(t, x) = g(t) s(x)`. The spatial factor is sampled once per grid.
    pub fn separable(
        smoothness: Smoothness,
        time: impl Fn(f64) -> f64 + Send + Sync + 'static,
        space: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let cache: Mutex<Option<Field>> = Mutex::new(None);
        Self::new(smoothness, move |t, grid| {
            let mut cache = cache.lock().unwrap_or_else(|e| e.into_inner());
            let shape = match cache.as_ref() {
                Some(f) if f.grid() == grid => f,
                _ => cache.insert(Field::from_fn(*grid, &space)),
            };
            shape.scaled(time(t))
        })
    }

    pub fn zero() -> Self {
        Self { eval: Arc::new(|_, grid| Field::zeros(*grid)), smoothness: Smoothness::C2, zero: true }
    }

    /// `f(t) = g` for all `t`.
    pub fn constant_in_time(g: Field) -> Self {
        Self::new(Smoothness::C2, move |_, grid| {
            assert_eq!(grid, g.grid(), "source sampled on a foreign grid");
            g.clone()
        })
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn eval(&self, t: f64, grid: &Grid) -> Field {
        (self.eval)(t, grid)
    }

    /// `f(t_{m+1/2})` for `m = 0..steps`.
    pub fn midpoint_samples(&self, grid: &Grid, horizon: f64, steps: usize) -> Vec<Field> {
        let tau = horizon / steps as f64;
        (0..steps).map(|m| self.eval((m as f64 + 0.5) * tau, grid)).collect()
    }
}

/// States `v^0 .. v^M` at `t_m = m tau`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    tau: f64,
    states: Vec<Field>,
}

impl Trajectory {
    pub fn new(grid: Grid, tau: f64, states: Vec<Field>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least one state".into()));
        }
        if states.iter().any(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, tau, states })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of steps `M`.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.tau * self.steps() as f64
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.tau
    }

    pub fn states(&self) -> &[Field] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &Field {
        &self.states[m]
    }

    pub fn initial(&self) -> &Field {
        &self.states[0]
    }

    pub fn last(&self) -> &Field {
        self.states.last().unwrap()
    }
}

fn check_step(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {tau}")))
    }
}

/// Reusable Crank-Nicolson stepper for a fixed operator and step size. `G`
/// is never formed: a step is one matvec and one CG solve with
/// `I + tau A / 2`, warm-started from the current state.
pub(crate) struct CnStepper<'a> {
    op: &'a EllipticOperator,
    tau: f64,
    rhs: Vec<f64>,
    av: Vec<f64>,
    pub(crate) cg_iterations: usize,
}

impl<'a> CnStepper<'a> {
    pub(crate) fn new(op: &'a EllipticOperator, tau: f64) -> Self {
        let n = op.dim();
        Self { op, tau, rhs: vec![0.0; n], av: vec![0.0; n], cg_iterations: 0 }
    }

    /// `v <- G v + tau (I + tau A/2)^{-1} f_mid`
    pub(crate) fn step(&mut self, v: &mut [f64], f_mid: Option<&[f64]>) -> Result<()> {
        let half = 0.5 * self.tau;
        self.op.apply(v, &mut self.av);
        for ((r, vi), avi) in self.rhs.iter_mut().zip(v.iter()).zip(&self.av) {
            *r = vi - half * avi;
        }
        if let Some(f) = f_mid {
            for (r, fi) in self.rhs.iter_mut().zip(f) {
                *r += self.tau * fi;
            }
        }
        let shifted = ShiftedOperator { op: self.op, scale: half };
        let out = conjugate_gradient(&shifted, &self.rhs, v, CG_RTOL, 10 * v.len().max(1) + 100)?;
        self.cg_iterations += out.iterations;
        Ok(())
    }

    /// Integrates from `v0` with precomputed midpoint samples, one per step.
    pub(crate) fn run(&mut self, v0: &Field, samples: &[Field]) -> Result<Trajectory> {
        let mut states = Vec::with_capacity(samples.len() + 1);
        states.push(v0.clone());
        let mut v = v0.values().to_vec();
        for f in samples {
            self.step(&mut v, Some(f.values()))?;
            states.push(Field::from_raw(*v0.grid(), v.clone()));
        }
        Trajectory::new(*v0.grid(), self.tau, states)
    }
}

/// One Crank-Nicolson step from time `t`:
/// `G(A;tau) v + tau (I + tau A/2)^{-1} f(t + tau/2)`.
pub fn cn_step(op: &EllipticOperator, v: &Field, t: f64, tau: f64, f: &SourceTerm) -> Result<Field> {
    check_step(tau)?;
    if *v.grid() != *op.grid() {
        return Err(Error::GridMismatch);
    }
    let mut stepper = CnStepper::new(op, tau);
    let mut out = v.values().to_vec();
    if f.is_zero() {
        stepper.step(&mut out, None)?;
    } else {
        let sample = f.eval(t + 0.5 * tau, op.grid());
        stepper.step(&mut out, Some(sample.values()))?;
    }
    Ok(Field::from_raw(*op.grid(), out))
}

/// `M` Crank-Nicolson steps over `[0, T]` starting from `v0`.
pub fn cn_solve_ivp(
    op: &EllipticOperator,
    v0: &Field,
    f: &SourceTerm,
    horizon: f64,
    steps: usize,
) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("need at least one time step".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if *v0.grid() != *op.grid() {
        return Err(Error::GridMismatch);
    }
    let tau = horizon / steps as f64;
    let samples = f.midpoint_samples(op.grid(), horizon, steps);
    CnStepper::new(op, tau).run(v0, &samples)
}

/// Scalar Crank-Nicolson amplification factor `(1 - z/2)/(1 + z/2)`.
pub fn amplification(z: f64) -> f64 {
    (1.0 - 0.5 * z) / (1.0 + 0.5 * z)
}

/// `|(1 - tau lambda_1/2) / (1 + tau lambda_1/2)|` from the cached smallest
/// eigenvalue.
pub fn propagator_norm(op: &EllipticOperator, tau: f64) -> f64 {
    amplification(tau * op.lambda_min()).abs()
}

/// `||G||` over the whole spectrum, `max(|g(lambda_1)|, |g(rho)|)`. Differs
/// from [`propagator_norm`] once `tau rho` is large enough for the stiffest
/// mode to dominate.
pub fn propagator_norm_spectral(op: &EllipticOperator, tau: f64) -> f64 {
    let s = op.spectral();
    amplification(tau * s.lambda_min).abs().max(amplification(tau * s.rho).abs())
}
