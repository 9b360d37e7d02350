//! Quadrature for the convolution `int_0^T e^{-(T-s)A} f(s) ds`.
//!
//! The rules only need the action of exponentials, supplied by an
//! [`ExpmApplier`]: a dense eigendecomposition on small grids, a Krylov
//! basis at scale, or CG solves combined with another applier.

use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::grid::{dot, Field, Grid};
use crate::krylov::{increment, DenseSpectral, KrylovBasis};
use crate::operator::{solve_spd, EllipticOperator, CG_RTOL};
use crate::timestepping::SourceTerm;

/// Action of `e^{-tA}` and of exponential increments on fields.
pub trait ExpmApplier {
    fn grid(&self) -> &Grid;

    /// `e^{-tA} v`
    fn expm(&self, t: f64, v: &Field) -> Result<Field>;

    /// `(e^{-near A} - e^{-far A}) A^{-1} v`. The default forms `A^{-1} v`
    /// with CG.
    fn expm_increment(&self, op: &EllipticOperator, near: f64, far: f64, v: &Field) -> Result<Field> {
        let w = solve_spd(op, v, CG_RTOL)?;
        let mut out = self.expm(near, &w)?;
        out.axpy(-1.0, &self.expm(far, &w)?)?;
        Ok(out)
    }
}

impl ExpmApplier for DenseSpectral {
    fn grid(&self) -> &Grid {
        DenseSpectral::grid(self)
    }

    fn expm(&self, t: f64, v: &Field) -> Result<Field> {
        DenseSpectral::expm(self, t, v)
    }

    fn expm_increment(&self, _op: &EllipticOperator, near: f64, far: f64, v: &Field) -> Result<Field> {
        self.apply_fn(v, |l| increment(near, far, l))
    }
}

/// Uses an inner applier for the exponentials but always forms `A^{-1} v`
/// with CG, i.e. the trait's default increment.
pub struct SolveIncrement<'a, E: ExpmApplier + ?Sized>(pub &'a E);

impl<E: ExpmApplier + ?Sized> ExpmApplier for SolveIncrement<'_, E> {
    fn grid(&self) -> &Grid {
        self.0.grid()
    }

    fn expm(&self, t: f64, v: &Field) -> Result<Field> {
        self.0.expm(t, v)
    }
}

/// How a Krylov applier chooses its basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedMode {
    /// A fresh basis seeded with every operand, `||v|| Q f(H) e_1`.
    #[default]
    PerOperand,
    /// One basis, built on first use from a fixed seed, applied as
    /// `Q f(H) Q^T v`. Exact up to the Krylov error when all operands lie
    /// close to the span (e.g. separable sources), much cheaper otherwise.
    SharedBasis,
}

/// Krylov-backed applier of rank `k`. Increments use `H^{-1}` in place of
/// `A^{-1}`, so the whole rule stays in the reduced space.
pub struct KrylovApplier<'a> {
    op: &'a EllipticOperator,
    rank: usize,
    mode: SeedMode,
    shared_seed: Option<Field>,
    shared: OnceLock<KrylovBasis>,
    // last per-operand basis; reused when the next operand is collinear
    last: Mutex<Option<KrylovBasis>>,
}

impl<'a> KrylovApplier<'a> {
    pub fn per_operand(op: &'a EllipticOperator, rank: usize) -> Self {
        Self {
            op,
            rank,
            mode: SeedMode::PerOperand,
            shared_seed: None,
            shared: OnceLock::new(),
            last: Mutex::new(None),
        }
    }

    /// Shared-basis applier seeded with `seed`. A zero seed falls back to
    /// per-operand bases.
    pub fn shared(op: &'a EllipticOperator, rank: usize, seed: Field) -> Self {
        if seed.is_zero() {
            return Self::per_operand(op, rank);
        }
        Self {
            op,
            rank,
            mode: SeedMode::SharedBasis,
            shared_seed: Some(seed),
            shared: OnceLock::new(),
            last: Mutex::new(None),
        }
    }

    pub fn mode(&self) -> SeedMode {
        self.mode
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn shared_basis(&self) -> Result<&KrylovBasis> {
        if let Some(b) = self.shared.get() {
            return Ok(b);
        }
        let seed = self.shared_seed.as_ref().expect("shared mode has a seed");
        let basis = KrylovBasis::build(self.op, seed, self.rank.min(self.op.grid().n_dof()))?;
        Ok(self.shared.get_or_init(|| basis))
    }

    fn apply(&self, v: &Field, f: impl Fn(f64) -> f64) -> Result<Field> {
        if *v.grid() != *self.op.grid() {
            return Err(Error::GridMismatch);
        }
        if v.is_zero() {
            return Ok(Field::zeros(*v.grid()));
        }
        match self.mode {
            SeedMode::PerOperand => {
                let mut last = self.last.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(basis) = last.as_ref() {
                    if let Some(c) = collinear_factor(basis.seed(), v) {
                        // the basis of c*b is sign(c)*Q with the same H
                        return Ok(basis.apply_fn(f).scaled(c));
                    }
                }
                let basis = KrylovBasis::build(self.op, v, self.rank.min(self.op.grid().n_dof()))?;
                let out = basis.apply_fn(f);
                *last = Some(basis);
                Ok(out)
            }
            SeedMode::SharedBasis => self.shared_basis()?.apply_fn_to(v, f),
        }
    }
}

impl ExpmApplier for KrylovApplier<'_> {
    fn grid(&self) -> &Grid {
        self.op.grid()
    }

    fn expm(&self, t: f64, v: &Field) -> Result<Field> {
        if t == 0.0 {
            return Ok(v.clone());
        }
        self.apply(v, |mu| (-t * mu).exp())
    }

    fn expm_increment(&self, _op: &EllipticOperator, near: f64, far: f64, v: &Field) -> Result<Field> {
        self.apply(v, |mu| increment(near, far, mu))
    }
}

/// `c` with `v = c * seed` up to round-off, if there is one.
fn collinear_factor(seed: &Field, v: &Field) -> Option<f64> {
    let c = dot(seed.values(), v.values()) / dot(seed.values(), seed.values());
    let mut r = v.clone();
    r.axpy(-c, seed).ok()?;
    (r.norm() <= 1e-12 * v.norm()).then_some(c)
}

fn check_panels(horizon: f64, panels: usize) -> Result<f64> {
    if panels == 0 {
        return Err(Error::InvalidArgument("need at least one panel".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    Ok(horizon / panels as f64)
}

/// `tau sum_k e^{-(T - t_{k-1/2})A} f(t_{k-1/2})`
pub fn convolve_naive_midpoint(
    applier: &(impl ExpmApplier + ?Sized),
    f: &SourceTerm,
    horizon: f64,
    panels: usize,
) -> Result<Field> {
    let tau = check_panels(horizon, panels)?;
    let grid = *applier.grid();
    let mut out = Field::zeros(grid);
    if f.is_zero() {
        return Ok(out);
    }
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * tau;
        let term = applier.expm(horizon - mid, &f.eval(mid, &grid))?;
        out.axpy(tau, &term)?;
    }
    Ok(out)
}

/// `sum_k (e^{-(T-t_k)A} - e^{-(T-t_{k-1})A}) A^{-1} f(t_{k-1/2})`: the
/// source is frozen at the panel midpoint and the exponential integrated
/// exactly. First order in `tau`, with a constant free of `A`.
pub fn convolve_increment(
    op: &EllipticOperator,
    applier: &(impl ExpmApplier + ?Sized),
    f: &SourceTerm,
    horizon: f64,
    panels: usize,
) -> Result<Field> {
    let tau = check_panels(horizon, panels)?;
    let grid = *applier.grid();
    if grid != *op.grid() {
        return Err(Error::GridMismatch);
    }
    let mut out = Field::zeros(grid);
    if f.is_zero() {
        return Ok(out);
    }
    for k in 0..panels {
        let start = k as f64 * tau;
        let end = if k + 1 == panels { horizon } else { (k + 1) as f64 * tau };
        let sample = f.eval(0.5 * (start + end), &grid);
        let term = applier.expm_increment(op, horizon - end, horizon - start, &sample)?;
        out.axpy(1.0, &term)?;
    }
    Ok(out)
}

/// `2 I_{2M} - I_M` of the increment rule; second order in `tau`.
pub fn convolve_richardson(
    op: &EllipticOperator,
    applier: &(impl ExpmApplier + ?Sized),
    f: &SourceTerm,
    horizon: f64,
    panels: usize,
) -> Result<Field> {
    check_panels(horizon, panels)?;
    let fine = convolve_increment(op, applier, f, horizon, 2 * panels)?;
    let coarse = convolve_increment(op, applier, f, horizon, panels)?;
    let mut out = fine.scaled(2.0);
    out.axpy(-1.0, &coarse)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Coefficient;
    use crate::timestepping::Smoothness;

    /// 1x1 operator with eigenvalue `lambda`: N = 2, a = lambda h^2 / 2.
    fn scalar_op(lambda: f64) -> EllipticOperator {
        let grid = Grid::new(1, 2).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(lambda / 8.0)).unwrap();
        assert!((op.apply_field(&Field::constant(grid, 1.0)).unwrap().values()[0] - lambda).abs() < 1e-12);
        op
    }

    fn decaying_source() -> SourceTerm {
        SourceTerm::pointwise(Smoothness::C2, |t, _| (-t).exp())
    }

    fn scalar_errors(lambda: f64, rule: impl Fn(&EllipticOperator, &DenseSpectral, usize) -> f64) -> Vec<f64> {
        let horizon: f64 = 0.1;
        let op = scalar_op(lambda);
        let dense = DenseSpectral::new(&op).unwrap();
        let exact = ((-horizon).exp() - (-lambda * horizon).exp()) / (lambda - 1.0);
        [4, 8, 16, 32, 64].iter().map(|&m| (rule(&op, &dense, m) - exact).abs() / exact).collect()
    }

    fn orders(errors: &[f64]) -> Vec<f64> {
        errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
    }

    #[test]
    fn increment_rule_is_first_order_when_stiff() {
        // Freezing f at the midpoint costs O(tau) once lambda tau >> 1.
        let src = decaying_source();
        let errs = scalar_errors(1e5, |op, d, m| convolve_increment(op, d, &src, 0.1, m).unwrap().values()[0]);
        for p in orders(&errs) {
            assert!((p - 1.0).abs() < 0.1, "{errs:?}");
        }
    }

    #[test]
    fn increment_rule_is_second_order_when_smooth() {
        // For lambda tau << 1 the frozen-source error is O(lambda tau^2).
        let src = decaying_source();
        let errs = scalar_errors(10.0, |op, d, m| convolve_increment(op, d, &src, 0.1, m).unwrap().values()[0]);
        for p in orders(&errs) {
            assert!((p - 2.0).abs() < 0.1, "{errs:?}");
        }
    }

    #[test]
    fn richardson_rule_is_second_order() {
        let src = decaying_source();
        let errs = scalar_errors(10.0, |op, d, m| convolve_richardson(op, d, &src, 0.1, m).unwrap().values()[0]);
        for p in orders(&errs) {
            assert!((p - 2.0).abs() < 0.2, "{errs:?}");
        }
    }

    #[test]
    fn naive_rule_is_second_order_on_scalars() {
        let src = SourceTerm::pointwise(Smoothness::C2, |_, _| 3.0);
        let lambda: f64 = 10.0;
        let exact = 3.0 * (1.0 - (-lambda * 0.1).exp()) / lambda;
        let op = scalar_op(lambda);
        let dense = DenseSpectral::new(&op).unwrap();
        let errs: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&m| (convolve_naive_midpoint(&dense, &src, 0.1, m).unwrap().values()[0] - exact).abs())
            .collect();
        for p in orders(&errs) {
            assert!((p - 2.0).abs() < 0.1, "{errs:?}");
        }
    }

    #[test]
    fn time_constant_source_telescopes() {
        let grid = Grid::new(1, 8).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
        let dense = DenseSpectral::new(&op).unwrap();
        let g = Field::from_fn(grid, |x| x[0] * (1.0 - x[0]) + 0.1);
        let src = SourceTerm::constant_in_time(g.clone());
        let exact = dense.apply_fn(&g, |l| -(-0.1 * l).exp_m1() / l).unwrap();
        for m in [1, 3, 7] {
            for out in [
                convolve_increment(&op, &dense, &src, 0.1, m).unwrap(),
                convolve_richardson(&op, &dense, &src, 0.1, m).unwrap(),
                convolve_increment(&op, &SolveIncrement(&dense), &src, 0.1, m).unwrap(),
            ] {
                assert!(out.sub(&exact).unwrap().max_abs() < 1e-10 * exact.max_abs());
            }
        }
    }

    #[test]
    fn zero_source_gives_zero() {
        let grid = Grid::new(2, 5).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
        let k = KrylovApplier::per_operand(&op, 4);
        let z = SourceTerm::zero();
        assert!(convolve_naive_midpoint(&k, &z, 0.1, 3).unwrap().is_zero());
        assert!(convolve_richardson(&op, &k, &z, 0.1, 3).unwrap().is_zero());
        assert!(convolve_increment(&op, &k, &z, 0.0, 3).is_err());
        assert!(convolve_increment(&op, &k, &z, 0.1, 0).is_err());
    }

    #[test]
    fn krylov_full_rank_matches_dense() {
        let grid = Grid::new(2, 6).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
        let dense = DenseSpectral::new(&op).unwrap();
        let src = SourceTerm::pointwise(Smoothness::C2, |t, x| (1.0 + t) * x[0] * (1.0 - x[1]));
        let reference = convolve_richardson(&op, &dense, &src, 0.1, 6).unwrap();
        let n = grid.n_dof();
        let per = convolve_richardson(&op, &KrylovApplier::per_operand(&op, n), &src, 0.1, 6).unwrap();
        assert!(per.sub(&reference).unwrap().max_abs() < 1e-10 * reference.max_abs());
        let seed = src.eval(0.05, &grid);
        let shared = convolve_richardson(&op, &KrylovApplier::shared(&op, n, seed), &src, 0.1, 6).unwrap();
        assert!(shared.sub(&reference).unwrap().max_abs() < 1e-10 * reference.max_abs());
    }

    #[test]
    fn increment_constant_is_free_of_operator() {
        // f(t) = e^{-t} on the constant field: the naive rule's error picks
        // up |A|^2 from the high modes, the increment rule's does not.
        let horizon: f64 = 0.1;
        let panels = 256;
        let src = SourceTerm::pointwise(Smoothness::C2, |t, _| (-t).exp());
        let mut naive = Vec::new();
        let mut inc = Vec::new();
        for n in [16, 64] {
            let grid = Grid::new(1, n).unwrap();
            let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
            let dense = DenseSpectral::new(&op).unwrap();
            let g = Field::constant(grid, 1.0);
            let exact = dense.apply_fn(&g, |l| ((-horizon).exp() - (-horizon * l).exp()) / (l - 1.0)).unwrap();
            let err = |v: Field| v.sub(&exact).unwrap().norm() / exact.norm();
            naive.push(err(convolve_naive_midpoint(&dense, &src, horizon, panels).unwrap()));
            inc.push(err(convolve_increment(&op, &dense, &src, horizon, panels).unwrap()));
        }
        assert!(naive[1] / naive[0] > 4.0, "{naive:?}");
        assert!(inc[1] / inc[0] < 2.0 && inc[0] / inc[1] < 2.0, "{inc:?}");
    }

    #[test]
    fn rules_are_linear_in_the_source() {
        let grid = Grid::new(1, 10).unwrap();
        let op = EllipticOperator::assemble(grid, Coefficient::constant(1.0)).unwrap();
        let dense = DenseSpectral::new(&op).unwrap();
        let f1 = SourceTerm::pointwise(Smoothness::C2, |t, x| t.sin() * x[0]);
        let f2 = SourceTerm::pointwise(Smoothness::C2, |t, x| (1.0 - x[0]) * (2.0 * t).cos());
        let sum = SourceTerm::pointwise(Smoothness::C2, |t, x| t.sin() * x[0] + (1.0 - x[0]) * (2.0 * t).cos());
        let a = convolve_richardson(&op, &dense, &f1, 0.2, 5).unwrap();
        let b = convolve_richardson(&op, &dense, &f2, 0.2, 5).unwrap();
        let c = convolve_richardson(&op, &dense, &sum, 0.2, 5).unwrap();
        assert!(a.add(&b).unwrap().sub(&c).unwrap().max_abs() < 1e-13);
    }
}
