//! Second-order finite-difference discretisation of `-div(a grad u)` with
//! homogeneous Dirichlet conditions, applied matrix-free.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{axpy, dot, norm2, Field, Grid};
use crate::krylov::LanczosProcess;

/// Relative tolerance used for the cached spectral estimates.
pub const SPECTRAL_TOL: f64 = 1e-6;
/// Default relative residual for [`solve_spd`].
pub const CG_RTOL: f64 = 1e-12;

pub type CoefficientFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Scalar diffusion coefficient `a(x)`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Variable { func: CoefficientFn, a_min: f64, a_max: f64 },
}

impl Coefficient {
    pub fn constant(a: f64) -> Self {
        Coefficient::Constant(a)
    }

    pub fn variable(a_min: f64, a_max: f64, func: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Variable { func: Arc::new(func), a_min, a_max }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Coefficient::Constant(a) => (*a, *a),
            Coefficient::Variable { a_min, a_max, .. } => (*a_min, *a_max),
        }
    }

    fn sample(&self, x: &[f64]) -> Result<f64> {
        let (value, min, max) = match self {
            Coefficient::Constant(a) => (*a, *a, *a),
            Coefficient::Variable { func, a_min, a_max } => (func(x), *a_min, *a_max),
        };
        if !(value > 0.0) {
            return Err(Error::NonPositiveCoefficient { value, point: x.to_vec() });
        }
        if value < min || value > max {
            return Err(Error::CoefficientOutOfBounds { value, point: x.to_vec(), min, max });
        }
        Ok(value)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(a) => write!(f, "Constant({a})"),
            Coefficient::Variable { a_min, a_max, .. } => {
                write!(f, "Variable {{ a_min: {a_min}, a_max: {a_max} }}")
            }
        }
    }
}

/// Anything that can be applied to a vector in place.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    /// `y = Op x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimates {
    /// Smallest eigenvalue.
    pub lambda_min: f64,
    /// Largest eigenvalue (spectral radius).
    pub rho: f64,
}

/// The discrete operator `A_h`. Immutable after assembly.
#[derive(Clone)]
pub struct EllipticOperator {
    grid: Grid,
    coeff: Coefficient,
    /// Face coefficients per axis, `None` for a constant coefficient. Each
    /// line of `m = N-1` points along the axis owns `m + 1` faces; face `q`
    /// sits at `(q + 1/2) h`.
    faces: Option<Vec<Vec<f64>>>,
    constant: f64,
    inv_h2: f64,
    norm_bound: f64,
    spectral: OnceLock<SpectralEstimates>,
}

impl fmt::Debug for EllipticOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticOperator").field("grid", &self.grid).field("coeff", &self.coeff).finish()
    }
}

impl EllipticOperator {
    /// Assembles the `(2d+1)`-point stencil. Variable coefficients are
    /// sampled at cell-face midpoints, which keeps the operator symmetric.
    pub fn assemble(grid: Grid, coeff: Coefficient) -> Result<Self> {
        let h = grid.h();
        let m = grid.points_per_axis();
        let n_dof = grid.n_dof();
        let (faces, constant, max_row) = match &coeff {
            Coefficient::Constant(_) => {
                let a = coeff.sample(&vec![0.5; grid.dim()])?;
                (None, a, 4.0 * a * grid.dim() as f64)
            }
            Coefficient::Variable { .. } => {
                let mut all = Vec::with_capacity(grid.dim());
                let mut row_sums = vec![0.0; n_dof];
                for axis in 0..grid.dim() {
                    let s = grid.stride(axis);
                    let lines = n_dof / m;
                    let mut faces = vec![0.0; lines * (m + 1)];
                    for_each_line(n_dof, s, m, |line, base| {
                        let mut x = grid.point(base);
                        for q in 0..=m {
                            x[axis] = (q as f64 + 0.5) * h;
                            faces[line * (m + 1) + q] = coeff.sample(&x[..grid.dim()])?;
                        }
                        for p in 0..m {
                            let j = base + p * s;
                            let lo = faces[line * (m + 1) + p];
                            let hi = faces[line * (m + 1) + p + 1];
                            row_sums[j] += 2.0 * (lo + hi);
                        }
                        Ok(())
                    })?;
                    all.push(faces);
                }
                let max_row = row_sums.iter().cloned().fold(0.0, f64::max);
                (Some(all), 0.0, max_row)
            }
        };
        let inv_h2 = 1.0 / (h * h);
        Ok(Self { grid, coeff, faces, constant, inv_h2, norm_bound: max_row * inv_h2, spectral: OnceLock::new() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.coeff
    }

    /// Gershgorin upper bound on `||A||_2`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn apply_field(&self, x: &Field) -> Result<Field> {
        if *x.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let mut y = vec![0.0; self.grid.n_dof()];
        self.apply(x.values(), &mut y);
        Ok(Field::from_raw(self.grid, y))
    }

    /// Smallest and largest eigenvalue, computed once at
    /// [`SPECTRAL_TOL`] and cached.
    pub fn spectral(&self) -> SpectralEstimates {
        *self.spectral.get_or_init(|| {
            spectral_estimates(self, SPECTRAL_TOL).expect("Lanczos spectral estimate failed on an SPD operator")
        })
    }

    pub fn lambda_min(&self) -> f64 {
        self.spectral().lambda_min
    }

    pub fn rho(&self) -> f64 {
        self.spectral().rho
    }
}

/// Calls `f(line, base)` for every grid line along an axis with stride `s`
/// and `m` points per line.
fn for_each_line(n_dof: usize, s: usize, m: usize, mut f: impl FnMut(usize, usize) -> Result<()>) -> Result<()> {
    let blocks = n_dof / (s * m);
    for hi in 0..blocks {
        for lo in 0..s {
            f(hi * s + lo, hi * s * m + lo)?;
        }
    }
    Ok(())
}

impl LinearOperator for EllipticOperator {
    fn dim(&self) -> usize {
        self.grid.n_dof()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n_dof = self.grid.n_dof();
        let m = self.grid.points_per_axis();
        debug_assert_eq!(x.len(), n_dof);
        y.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..self.grid.dim() {
            let s = self.grid.stride(axis);
            let blocks = n_dof / (s * m);
            match &self.faces {
                None => {
                    let c = self.constant * self.inv_h2;
                    for hi in 0..blocks {
                        for lo in 0..s {
                            let base = hi * s * m + lo;
                            for p in 0..m {
                                let j = base + p * s;
                                let mut acc = 2.0 * x[j];
                                if p > 0 {
                                    acc -= x[j - s];
                                }
                                if p + 1 < m {
                                    acc -= x[j + s];
                                }
                                y[j] += c * acc;
                            }
                        }
                    }
                }
                Some(faces) => {
                    let faces = &faces[axis];
                    for hi in 0..blocks {
                        for lo in 0..s {
                            let line = hi * s + lo;
                            let base = hi * s * m + lo;
                            let fl = &faces[line * (m + 1)..(line + 1) * (m + 1)];
                            for p in 0..m {
                                let j = base + p * s;
                                let (a_lo, a_hi) = (fl[p], fl[p + 1]);
                                let mut acc = (a_lo + a_hi) * x[j];
                                if p > 0 {
                                    acc -= a_lo * x[j - s];
                                }
                                if p + 1 < m {
                                    acc -= a_hi * x[j + s];
                                }
                                y[j] += self.inv_h2 * acc;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `I + scale * A`
pub struct ShiftedOperator<'a> {
    pub op: &'a EllipticOperator,
    pub scale: f64,
}

impl LinearOperator for ShiftedOperator<'_> {
    fn dim(&self) -> usize {
        self.op.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.op.apply(x, y);
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + self.scale * *yi;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Achieved `||b - Op x|| / ||b||`.
    pub relative_residual: f64,
}

/// Conjugate gradients for an SPD operator. `x` holds the initial guess on
/// entry and the solution on exit.
pub fn conjugate_gradient(
    op: &impl LinearOperator,
    rhs: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> Result<CgOutcome> {
    let n = op.dim();
    debug_assert_eq!(rhs.len(), n);
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome { iterations: 0, relative_residual: 0.0 });
    }
    let target = rtol * rhs_norm;

    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = bi - *ri;
    }
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok(CgOutcome { iterations: 0, relative_residual: rr.sqrt() / rhs_norm });
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::NotConverged {
                what: "conjugate gradient (operator not positive definite)",
                iterations: it,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(CgOutcome { iterations: it, relative_residual: rr_new.sqrt() / rhs_norm });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Err(Error::NotConverged { what: "conjugate gradient", iterations: max_iter, residual: rr.sqrt() / rhs_norm })
}

/// Solves `A x = rhs` to relative residual `rtol`, with an iteration cap of
/// `10 * n_dof`.
pub fn solve_spd(op: &EllipticOperator, rhs: &Field, rtol: f64) -> Result<Field> {
    if !(rtol > 0.0) {
        return Err(Error::InvalidArgument(format!("rtol must be positive, got {rtol}")));
    }
    if *rhs.grid() != *op.grid() {
        return Err(Error::GridMismatch);
    }
    let mut x = vec![0.0; op.dim()];
    conjugate_gradient(op, rhs.values(), &mut x, rtol, 10 * op.dim().max(1))?;
    Ok(Field::from_raw(*op.grid(), x))
}

/// Extreme eigenvalues by Lanczos from a fixed pseudo-random seed. Stops
/// once both extreme Ritz pairs satisfy `min(r, r^2/gap) <= tol * theta`,
/// where `r` is the Ritz residual norm.
pub fn spectral_estimates(op: &EllipticOperator, tol: f64) -> Result<SpectralEstimates> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {tol}")));
    }
    let n = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c);
    let seed: Vec<f64> = (0..n).map(|_| unit_uniform(&mut rng) - 0.5).collect();
    let mut process = LanczosProcess::new(op, &seed)?;

    let check_every = 4;
    loop {
        let more = process.step();
        let k = process.rank();
        if !more || k == n || k % check_every == 0 {
            let ritz = process.ritz_extremes();
            if !more || k == n {
                return Ok(SpectralEstimates { lambda_min: ritz.min.value, rho: ritz.max.value });
            }
            let converged = |pair: &crate::krylov::RitzPair| {
                let r = pair.residual;
                let bound = if pair.gap > 0.0 { r.min(r * r / pair.gap) } else { r };
                bound <= tol * pair.value.abs()
            };
            if converged(&ritz.min) && converged(&ritz.max) {
                return Ok(SpectralEstimates { lambda_min: ritz.min.value, rho: ritz.max.value });
            }
        }
    }
}

pub(crate) fn unit_uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::dense_matrix;

    fn laplacian(d: usize, n: usize) -> EllipticOperator {
        EllipticOperator::assemble(Grid::new(d, n).unwrap(), Coefficient::constant(1.0)).unwrap()
    }

    #[test]
    fn stencil_on_middle_unit_vector() {
        let op = laplacian(1, 4);
        let e2 = Field::from_vec(*op.grid(), vec![0.0, 1.0, 0.0]).unwrap();
        let y = op.apply_field(&e2).unwrap();
        assert_eq!(y.values(), &[-16.0, 32.0, -16.0]);
    }

    #[test]
    fn eigenvalues_match_dense_oracle() {
        // (4/h^2) sin^2(j pi h / 2), j = 1..3, h = 1/4
        let expected = [9.372583002030478, 32.0, 54.62741699796952];
        let op = laplacian(1, 4);
        let dense = dense_matrix(&op);
        let mut eig: Vec<f64> = dense.symmetric_eigenvalues().iter().cloned().collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in eig.iter().zip(expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }

        let op2 = laplacian(2, 4);
        let eig2 = dense_matrix(&op2).symmetric_eigenvalues();
        let min = eig2.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - 2.0 * expected[0]).abs() < 1e-10);
    }

    #[test]
    fn variable_coefficient_is_symmetric() {
        let grid = Grid::new(2, 6).unwrap();
        let coeff = Coefficient::variable(1.0, 3.0, |x| 2.0 + x[0] * x[1].sin());
        let op = EllipticOperator::assemble(grid, coeff).unwrap();
        let a = dense_matrix(&op);
        assert!((&a - a.transpose()).amax() < 1e-12 * a.amax());
    }

    #[test]
    fn rejects_bad_coefficients() {
        let grid = Grid::new(1, 8).unwrap();
        let err = EllipticOperator::assemble(grid, Coefficient::constant(0.0)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCoefficient { .. }));
        let coeff = Coefficient::variable(1e-3, 2.0, |x| 1.0 - 2.0 * x[0]);
        let err = EllipticOperator::assemble(grid, coeff).unwrap_err();
        assert!(matches!(err, Error::NonPositiveCoefficient { .. }));
        let coeff = Coefficient::variable(0.5, 1.0, |x| 1.0 + x[0]);
        let err = EllipticOperator::assemble(grid, coeff).unwrap_err();
        assert!(matches!(err, Error::CoefficientOutOfBounds { .. }));
    }

    #[test]
    fn solve_examples() {
        let op = laplacian(1, 4);
        let rhs = Field::constant(*op.grid(), 1.0);
        let x = solve_spd(&op, &rhs, 1e-12).unwrap();
        for (a, b) in x.values().iter().zip([0.09375, 0.125, 0.09375]) {
            assert!((a - b).abs() < 1e-13);
        }
        let zero = solve_spd(&op, &Field::zeros(*op.grid()), 1e-12).unwrap();
        assert!(zero.is_zero());
        assert!(solve_spd(&op, &rhs, 0.0).is_err());
    }

    #[test]
    fn solve_round_trip() {
        let op = laplacian(2, 12);
        let f = Field::from_fn(*op.grid(), |x| (3.0 * x[0]).sin() + x[1] * x[1]);
        let rhs = op.apply_field(&f).unwrap();
        let x = solve_spd(&op, &rhs, 1e-12).unwrap();
        let err = x.sub(&f).unwrap().norm() / f.norm();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn cg_reports_iteration_cap() {
        let op = laplacian(1, 64);
        let rhs = Field::constant(*op.grid(), 1.0);
        let mut x = vec![0.0; op.dim()];
        let err = conjugate_gradient(&op, rhs.values(), &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 3, .. }));
    }

    #[test]
    fn spectral_estimates_small() {
        let op = laplacian(1, 4);
        let s = op.spectral();
        assert!((s.lambda_min - 9.372583002030478).abs() < 1e-8);
        assert!((s.rho - 54.62741699796952).abs() < 1e-8);
    }

    #[test]
    fn spectral_estimates_closed_form() {
        for (d, n) in [(1, 64), (2, 24), (3, 12)] {
            let op = laplacian(d, n);
            let h = 1.0 / n as f64;
            let s1 = 4.0 / (h * h) * (std::f64::consts::PI * h / 2.0).sin().powi(2);
            let sm = 4.0 / (h * h) * (std::f64::consts::PI * (n - 1) as f64 * h / 2.0).sin().powi(2);
            let est = op.spectral();
            assert!((est.lambda_min / (d as f64 * s1) - 1.0).abs() < 1e-6, "{d} {n}");
            assert!((est.rho / (d as f64 * sm) - 1.0).abs() < 1e-6, "{d} {n}");
        }
    }
}
