//! Recovery of a stationary heat source from final-time data.
//!
//! Given `u_t - div(a grad u) = p(x) + f(t, x)` on the unit cube with
//! homogeneous Dirichlet data, `u(0) = 0` and `u(T) = phi`, the substitution
//! `v = u + w` with `A w = p` turns the problem into `v' + A v = f` with the
//! nonlocal condition `v(0) = v(T) - phi`. Once `v(0)` is known,
//! `p = -A v(0)` and `u = v - v(0)`.
//!
//! The crate provides the finite-difference operator, Krylov matrix
//! functions, Crank-Nicolson stepping, convolution quadrature and four
//! solvers for the nonlocal problem.

// NaN must fail the validity checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod krylov;
pub mod manufactured;
pub mod operator;
pub mod quadrature;
pub mod solvers;
pub mod timestepping;

pub use error::{Error, Result};
pub use grid::{inner_product, Field, Grid};
pub use krylov::{choose_rank, dense_expm_oracle, expm_bound, lanczos, BoundParams, DenseSpectral, KrylovBasis};
pub use manufactured::{manufactured_case, measure_errors, ErrorNorm, ErrorReport, ManufacturedCase};
pub use operator::{solve_spd, spectral_estimates, Coefficient, EllipticOperator, LinearOperator};
pub use quadrature::{
    convolve_increment, convolve_naive_midpoint, convolve_richardson, ExpmApplier, KrylovApplier, SeedMode,
};
pub use solvers::{
    recover_pair, solve, solve_direct, solve_hybrid, solve_pure_arnoldi, solve_shooting, Diagnostics, InverseProblem,
    InverseSolution, Method, Propagator, RankRule, SolverConfig,
};
pub use timestepping::{cn_solve_ivp, cn_step, propagator_norm, Smoothness, SourceTerm, Trajectory};
