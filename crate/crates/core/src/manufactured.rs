//! Manufactured test problem with a known source and solution:
//!
//! `u(t, x) = (e^{-t} - 1) prod_j sin^2(2 pi x_j)`,
//! `p(x) = 8 pi^2 sum_j cos(4 pi x_j) prod_{k != j} sin^2(2 pi x_k)`,
//! `f = u_t - Laplace(u) - p = -e^{-t} (prod_j sin^2(2 pi x_j) + p(x))`,
//! `phi = u(T, .)`, with `a = 1`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, MAX_DIM};
use crate::operator::{Coefficient, EllipticOperator};
use crate::solvers::{InverseProblem, InverseSolution};
use crate::timestepping::{Smoothness, SourceTerm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedCase {
    dim: usize,
    horizon: f64,
}

fn sin2(x: f64) -> f64 {
    let s = (2.0 * PI * x).sin();
    s * s
}

fn bump(x: &[f64]) -> f64 {
    x.iter().map(|&xi| sin2(xi)).product()
}

fn source_shape(x: &[f64]) -> f64 {
    let mut sum = 0.0;
    for j in 0..x.len() {
        let mut term = 8.0 * PI * PI * (4.0 * PI * x[j]).cos();
        for (k, &xk) in x.iter().enumerate() {
            if k != j {
                term *= sin2(xk);
            }
        }
        sum += term;
    }
    sum
}

impl ManufacturedCase {
    pub fn new(dim: usize, horizon: f64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { dim, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exact_u(&self, t: f64, x: &[f64]) -> f64 {
        (-t).exp_m1() * bump(x)
    }

    pub fn exact_p(&self, x: &[f64]) -> f64 {
        source_shape(x)
    }

    pub fn source_value(&self, t: f64, x: &[f64]) -> f64 {
        -(-t).exp() * (bump(x) + source_shape(x))
    }

    pub fn source(&self) -> SourceTerm {
        SourceTerm::separable(Smoothness::C2, |t| -(-t).exp(), |x| bump(x) + source_shape(x))
    }

    pub fn target(&self, grid: Grid) -> Field {
        let t = self.horizon;
        Field::from_fn(grid, |x| (-t).exp_m1() * bump(x))
    }

    pub fn exact_p_field(&self, grid: Grid) -> Field {
        Field::from_fn(grid, source_shape)
    }

    pub fn exact_u_field(&self, grid: Grid, t: f64) -> Field {
        Field::from_fn(grid, |x| (-t).exp_m1() * bump(x))
    }

    /// The discrete problem on `N` subdivisions per axis.
    pub fn problem(&self, subdivisions: usize) -> Result<InverseProblem> {
        let grid = Grid::new(self.dim, subdivisions)?;
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0))?;
        InverseProblem::new(op, self.source(), self.target(grid), self.horizon)
    }
}

/// `ManufacturedCase::new`
pub fn manufactured_case(dim: usize, horizon: f64) -> Result<ManufacturedCase> {
    ManufacturedCase::new(dim, horizon)
}

/// How relative errors are normalised.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum ErrorNorm {
    /// `max |err| / max |exact|` over all sampled points.
    #[default]
    MaxRelative,
    /// `max |err / exact|` over points with `|exact| >= threshold`.
    Pointwise { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorReport {
    pub e_u: f64,
    pub e_p: f64,
    /// Points left out of the pointwise maxima (always 0 for max-relative).
    pub excluded_u: usize,
    pub excluded_p: usize,
}

#[derive(Default)]
struct Accumulator {
    max_err: f64,
    max_exact: f64,
    max_ratio: f64,
    used: usize,
    excluded: usize,
}

impl Accumulator {
    fn push(&mut self, approx: f64, exact: f64, norm: ErrorNorm) {
        let err = (approx - exact).abs();
        self.max_err = self.max_err.max(err);
        self.max_exact = self.max_exact.max(exact.abs());
        if let ErrorNorm::Pointwise { threshold } = norm {
            if exact.abs() < threshold {
                self.excluded += 1;
            } else {
                self.used += 1;
                self.max_ratio = self.max_ratio.max(err / exact.abs());
            }
        }
    }

    fn finish(&self, norm: ErrorNorm, what: &str) -> Result<f64> {
        match norm {
            ErrorNorm::MaxRelative => {
                if self.max_exact == 0.0 {
                    return Err(Error::InvalidArgument(format!("exact {what} vanishes identically")));
                }
                Ok(self.max_err / self.max_exact)
            }
            ErrorNorm::Pointwise { .. } => {
                if self.used == 0 {
                    return Err(Error::InvalidArgument(format!("every {what} point excluded from the relative error")));
                }
                Ok(self.max_ratio)
            }
        }
    }
}

/// Relative errors of `u` over all `(t_m, x_j)` and of `p` over all `x_j`.
pub fn measure_errors(sol: &InverseSolution, case: &ManufacturedCase, norm: ErrorNorm) -> Result<ErrorReport> {
    let grid = *sol.u.grid();
    if grid.dim() != case.dim() {
        return Err(Error::GridMismatch);
    }
    if (sol.u.horizon() - case.horizon()).abs() > 1e-12 * case.horizon() {
        return Err(Error::InvalidArgument(format!(
            "solution horizon {} differs from case horizon {}",
            sol.u.horizon(),
            case.horizon()
        )));
    }
    let mut acc_u = Accumulator::default();
    for (m, state) in sol.u.states().iter().enumerate() {
        let t = sol.u.time(m);
        for (j, &v) in state.values().iter().enumerate() {
            let x = grid.point(j);
            acc_u.push(v, case.exact_u(t, &x[..grid.dim()]), norm);
        }
    }
    let mut acc_p = Accumulator::default();
    for (j, &v) in sol.p.values().iter().enumerate() {
        let x = grid.point(j);
        acc_p.push(v, case.exact_p(&x[..grid.dim()]), norm);
    }
    Ok(ErrorReport {
        e_u: acc_u.finish(norm, "u")?,
        e_p: acc_p.finish(norm, "p")?,
        excluded_u: acc_u.excluded,
        excluded_p: acc_p.excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::{Diagnostics, Method};
    use crate::timestepping::Trajectory;

    fn exact_solution(case: &ManufacturedCase, n: usize, steps: usize, scale: f64) -> InverseSolution {
        let grid = Grid::new(case.dim(), n).unwrap();
        let tau = case.horizon() / steps as f64;
        let states = (0..=steps).map(|m| case.exact_u_field(grid, m as f64 * tau).scaled(scale)).collect();
        InverseSolution {
            method: Method::Shooting,
            v0: Field::zeros(grid),
            p: case.exact_p_field(grid).scaled(scale),
            u: Trajectory::new(grid, tau, states).unwrap(),
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn closed_form_values() {
        let c = ManufacturedCase::new(1, 0.1).unwrap();
        assert!((c.exact_u(0.1, &[0.25]) - -0.095_162_581_964_040_4).abs() < 1e-15);
        assert!((c.exact_p(&[0.25]) - -8.0 * PI * PI).abs() < 1e-12);
        assert!((c.exact_p(&[0.25]) - -78.9568).abs() < 1e-4);
        let c3 = ManufacturedCase::new(3, 0.1).unwrap();
        assert_eq!(c3.exact_u(0.0, &[0.3, 0.2, 0.7]), 0.0);
        assert!(c3.exact_u(0.05, &[0.5, 0.2, 0.7]).abs() < 1e-30);
    }

    #[test]
    fn residual_of_the_equation_vanishes() {
        // u_t - Laplace(u) - p - f by centred differences of the closed form
        for d in 1..=3 {
            let c = ManufacturedCase::new(d, 0.1).unwrap();
            let x = [0.13, 0.71, 0.42];
            let x = &x[..d];
            let t = 0.037;
            let e = 1e-4;
            let ut = (c.exact_u(t + e, x) - c.exact_u(t - e, x)) / (2.0 * e);
            let mut lap = 0.0;
            for j in 0..d {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[j] += e;
                xm[j] -= e;
                lap += (c.exact_u(t, &xp) - 2.0 * c.exact_u(t, x) + c.exact_u(t, &xm)) / (e * e);
            }
            let res = ut - lap - c.exact_p(x) - c.source_value(t, x);
            assert!(res.abs() < 1e-4 * c.exact_p(x).abs().max(1.0), "d={d}: {res}");
        }
    }

    #[test]
    fn exact_samples_have_zero_error() {
        let c = ManufacturedCase::new(2, 0.1).unwrap();
        let sol = exact_solution(&c, 8, 4, 1.0);
        for norm in [ErrorNorm::MaxRelative, ErrorNorm::Pointwise { threshold: 1e-12 }] {
            let r = measure_errors(&sol, &c, norm).unwrap();
            assert_eq!((r.e_u, r.e_p), (0.0, 0.0));
        }
    }

    #[test]
    fn uniform_scaling_error() {
        let c = ManufacturedCase::new(1, 0.1).unwrap();
        let sol = exact_solution(&c, 16, 8, 1.0 + 1e-3);
        for norm in [ErrorNorm::MaxRelative, ErrorNorm::Pointwise { threshold: 1e-12 }] {
            let r = measure_errors(&sol, &c, norm).unwrap();
            assert!((r.e_u - 1e-3).abs() < 1e-12 && (r.e_p - 1e-3).abs() < 1e-12);
        }
        let r = measure_errors(&sol, &c, ErrorNorm::Pointwise { threshold: 1e-12 }).unwrap();
        // t = 0 row and the nodal point x = 0.5
        assert_eq!(r.excluded_u, 15 + 8);
    }

    #[test]
    fn everything_excluded_is_an_error() {
        let c = ManufacturedCase::new(1, 0.1).unwrap();
        let sol = exact_solution(&c, 4, 2, 1.0);
        assert!(measure_errors(&sol, &c, ErrorNorm::Pointwise { threshold: 1e6 }).is_err());
    }
}
