//! Lanczos factorisation of the symmetric operator and matrix functions
//! evaluated through the reduced tridiagonal matrix:
//! `f(A) b ~ ||b|| Q f(H) e_1`.
//!
//! Basis vectors are orthonormal in the Euclidean inner product, which is the
//! weighted grid inner product up to the constant factor `h^d`.

mod bounds;
mod oracle;

pub use bounds::{choose_rank, contraction_rank_floor, expm_bound, required_rank, BoundParams, RankChoice};
pub use oracle::{dense_expm_oracle, dense_matrix, DenseSpectral, ORACLE_CAP};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{axpy, dot, norm2, Field, Grid};
use crate::operator::{EllipticOperator, LinearOperator};

/// Lanczos residual norms below `BREAKDOWN_TOL * ||A||` end the recurrence:
/// the Krylov space is invariant.
pub const BREAKDOWN_TOL: f64 = 1e-12;

/// Guard for `(1 - e^{-z})^{-1}`: `T * mu_min` must be at least this.
pub const GEOM_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzPair {
    pub value: f64,
    /// `beta_k |s_k|`, the residual norm of the Ritz pair.
    pub residual: f64,
    /// Distance to the nearest other Ritz value (`inf` at rank 1).
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RitzExtremes {
    pub min: RitzPair,
    pub max: RitzPair,
}

/// Incremental Lanczos recurrence with full reorthogonalisation.
pub struct LanczosProcess<'a> {
    op: &'a EllipticOperator,
    n: usize,
    /// Basis vectors, contiguous; holds `rank + 1` vectors while the process
    /// can continue.
    q: Vec<f64>,
    alpha: Vec<f64>,
    /// `beta[j]` couples `q_j` and `q_{j+1}`; the last entry is the current
    /// residual norm.
    beta: Vec<f64>,
    seed_norm: f64,
    stopped: bool,
    breakdown: bool,
    work: Vec<f64>,
    coeffs: Vec<f64>,
}

impl<'a> LanczosProcess<'a> {
    pub fn new(op: &'a EllipticOperator, seed: &[f64]) -> Result<Self> {
        let n = op.dim();
        if seed.len() != n {
            return Err(Error::LengthMismatch { expected: n, found: seed.len() });
        }
        let seed_norm = norm2(seed);
        if seed_norm == 0.0 {
            return Err(Error::ZeroSeed);
        }
        let q = seed.iter().map(|v| v / seed_norm).collect();
        Ok(Self {
            op,
            n,
            q,
            alpha: Vec::new(),
            beta: Vec::new(),
            seed_norm,
            stopped: false,
            breakdown: false,
            work: vec![0.0; n],
            coeffs: Vec::new(),
        })
    }

    /// Dimension of the current tridiagonal matrix.
    pub fn rank(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_breakdown(&self) -> bool {
        self.breakdown
    }

    fn column(&self, j: usize) -> &[f64] {
        &self.q[j * self.n..(j + 1) * self.n]
    }

    /// Extends the factorisation by one column. Returns `false` once the
    /// process cannot continue (breakdown or full dimension reached).
    pub fn step(&mut self) -> bool {
        if self.stopped {
            return false;
        }
        let j = self.alpha.len();
        let n = self.n;
        let mut w = std::mem::take(&mut self.work);
        self.op.apply(self.column(j), &mut w);
        if j > 0 {
            let b = self.beta[j - 1];
            axpy(-b, &self.q[(j - 1) * n..j * n], &mut w);
        }
        let a = dot(self.column(j), &w);
        axpy(-a, self.column(j), &mut w);

        // Classical Gram-Schmidt against the whole basis, repeated once when
        // the first pass cancels more than 30% of the norm.
        let before = norm2(&w);
        self.reorthogonalize(&mut w, j + 1);
        let mut after = norm2(&w);
        if after < 0.7 * before {
            self.reorthogonalize(&mut w, j + 1);
            after = norm2(&w);
        }

        self.alpha.push(a);
        self.beta.push(after);
        let done = j + 1 == n;
        if after < BREAKDOWN_TOL * self.op.norm_bound() || done {
            self.stopped = true;
            self.breakdown = !done;
            self.work = w;
            return false;
        }
        self.q.extend(w.iter().map(|v| v / after));
        self.work = w;
        true
    }

    fn reorthogonalize(&mut self, w: &mut [f64], count: usize) {
        let n = self.n;
        self.coeffs.clear();
        for i in 0..count {
            let c = dot(&self.q[i * n..(i + 1) * n], w);
            self.coeffs.push(c);
        }
        for i in 0..count {
            let c = self.coeffs[i];
            axpy(-c, &self.q[i * n..(i + 1) * n], w);
        }
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.rank();
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            h[(i, i)] = self.alpha[i];
            if i + 1 < k {
                h[(i, i + 1)] = self.beta[i];
                h[(i + 1, i)] = self.beta[i];
            }
        }
        h
    }

    /// Current extreme Ritz values with residual estimates.
    pub fn ritz_extremes(&self) -> RitzExtremes {
        let k = self.rank();
        assert!(k > 0, "no Lanczos step taken");
        let eig = SymmetricEigen::new(self.tridiagonal());
        let beta_k = if self.breakdown { 0.0 } else { *self.beta.last().unwrap() };
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let pair = |pos: usize| {
            let i = order[pos];
            let value = eig.eigenvalues[i];
            let residual = beta_k * eig.eigenvectors[(k - 1, i)].abs();
            let gap = if k == 1 {
                f64::INFINITY
            } else if pos == 0 {
                eig.eigenvalues[order[1]] - value
            } else {
                value - eig.eigenvalues[order[pos - 1]]
            };
            RitzPair { value, residual, gap }
        };
        RitzExtremes { min: pair(0), max: pair(k - 1) }
    }

    fn into_basis(mut self, grid: Grid, seed: Field) -> KrylovBasis {
        let k = self.rank();
        self.q.truncate(k * self.n);
        let h = self.tridiagonal();
        let eig = SymmetricEigen::new(h);
        let exact = self.breakdown || k == self.n;
        let residual = if exact { 0.0 } else { *self.beta.last().unwrap() };
        KrylovBasis {
            grid,
            n: self.n,
            q: self.q,
            alpha: self.alpha,
            beta: {
                self.beta.truncate(k.saturating_sub(1));
                self.beta
            },
            residual,
            seed_norm: self.seed_norm,
            seed,
            exact,
            ritz_values: eig.eigenvalues.iter().cloned().collect(),
            ritz_vectors: eig.eigenvectors,
        }
    }
}

/// Lanczos factorisation `A Q = Q H + r e_k^T` of a fixed rank, built from a
/// seed vector. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    grid: Grid,
    n: usize,
    q: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    residual: f64,
    seed_norm: f64,
    seed: Field,
    exact: bool,
    ritz_values: Vec<f64>,
    ritz_vectors: DMatrix<f64>,
}

impl KrylovBasis {
    /// Runs `k` Lanczos steps from `seed`, stopping early on breakdown.
    pub fn build(op: &EllipticOperator, seed: &Field, k: usize) -> Result<Self> {
        if *seed.grid() != *op.grid() {
            return Err(Error::GridMismatch);
        }
        let n_dof = op.dim();
        if k == 0 || k > n_dof {
            return Err(Error::RankOutOfRange { k, n_dof });
        }
        let mut process = LanczosProcess::new(op, seed.values())?;
        while process.rank() < k && process.step() {}
        Ok(process.into_basis(*op.grid(), seed.clone()))
    }

    /// Number of basis vectors actually built.
    pub fn rank(&self) -> usize {
        self.alpha.len()
    }

    /// True when the Krylov space is invariant under `A` (lucky breakdown or
    /// full dimension), so matrix functions are reproduced to round-off.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn seed_norm(&self) -> f64 {
        self.seed_norm
    }

    pub fn seed(&self) -> &Field {
        &self.seed
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Norm of the next Lanczos residual, `beta_k`; zero when exact.
    pub fn residual_norm(&self) -> f64 {
        self.residual
    }

    pub fn basis_vector(&self, j: usize) -> &[f64] {
        &self.q[j * self.n..(j + 1) * self.n]
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.alpha
    }

    pub fn off_diagonal(&self) -> &[f64] {
        &self.beta
    }

    pub fn tridiagonal(&self) -> DMatrix<f64> {
        let k = self.rank();
        let mut h = DMatrix::zeros(k, k);
        for i in 0..k {
            h[(i, i)] = self.alpha[i];
            if i + 1 < k {
                h[(i, i + 1)] = self.beta[i];
                h[(i + 1, i)] = self.beta[i];
            }
        }
        h
    }

    /// Eigenvalues of `H`, unordered.
    pub fn ritz_values(&self) -> &[f64] {
        &self.ritz_values
    }

    pub fn min_ritz_value(&self) -> f64 {
        self.ritz_values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `Q^T v` in the Euclidean inner product.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rank()).map(|j| dot(self.basis_vector(j), v)).collect()
    }

    /// `Q y`
    pub fn expand(&self, y: &[f64]) -> Field {
        let mut out = vec![0.0; self.n];
        for (j, &c) in y.iter().enumerate() {
            axpy(c, self.basis_vector(j), &mut out);
        }
        Field::from_raw(self.grid, out)
    }

    /// `V diag(f(mu)) V^T c` in reduced coordinates.
    fn reduced_apply(&self, c: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let k = self.rank();
        let v = &self.ritz_vectors;
        let mut coeff = vec![0.0; k];
        for i in 0..k {
            let mut s = 0.0;
            for (j, cj) in c.iter().enumerate() {
                s += v[(j, i)] * cj;
            }
            coeff[i] = f(self.ritz_values[i]) * s;
        }
        (0..k).map(|j| (0..k).map(|i| v[(j, i)] * coeff[i]).sum()).collect()
    }

    /// `||b|| Q f(H) e_1` for the seed `b`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> Field {
        let mut e1 = vec![0.0; self.rank()];
        e1[0] = self.seed_norm;
        self.expand(&self.reduced_apply(&e1, f))
    }

    /// `Q f(H) Q^T v` for an arbitrary vector (shared-basis use).
    pub fn apply_fn_to(&self, v: &Field, f: impl Fn(f64) -> f64) -> Result<Field> {
        if *v.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let c = self.project(v.values());
        Ok(self.expand(&self.reduced_apply(&c, f)))
    }

    /// Approximates `e^{-tA} b`. At `t = 0` the seed is returned unchanged.
    pub fn apply_expm(&self, t: f64) -> Result<Field> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(self.seed.clone());
        }
        Ok(self.apply_fn(|mu| (-t * mu).exp()))
    }

    pub fn apply_expm_to(&self, t: f64, v: &Field) -> Result<Field> {
        check_time(t)?;
        if t == 0.0 {
            return Ok(v.clone());
        }
        self.apply_fn_to(v, |mu| (-t * mu).exp())
    }

    fn check_geom(&self, horizon: f64) -> Result<()> {
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        let z = horizon * self.min_ritz_value();
        if !(z >= GEOM_GUARD) {
            return Err(Error::SingularFunction(z));
        }
        Ok(())
    }

    /// Approximates `(I - e^{-TA})^{-1} b` by evaluating
    /// `b(z) = (1 - e^{-z})^{-1}` on the spectrum of `T H`.
    pub fn apply_geom(&self, horizon: f64) -> Result<Field> {
        self.check_geom(horizon)?;
        Ok(self.apply_fn(|mu| geom(horizon * mu)))
    }

    pub fn apply_geom_to(&self, horizon: f64, v: &Field) -> Result<Field> {
        self.check_geom(horizon)?;
        self.apply_fn_to(v, |mu| geom(horizon * mu))
    }

    /// Approximates `(e^{-near A} - e^{-far A}) A^{-1} b` with `H^{-1}` in
    /// place of `A^{-1}`.
    pub fn apply_increment(&self, near: f64, far: f64) -> Result<Field> {
        check_interval(near, far)?;
        Ok(self.apply_fn(|mu| increment(near, far, mu)))
    }

    pub fn apply_increment_to(&self, near: f64, far: f64, v: &Field) -> Result<Field> {
        check_interval(near, far)?;
        self.apply_fn_to(v, |mu| increment(near, far, mu))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be non-negative, got {t}")))
    }
}

fn check_interval(near: f64, far: f64) -> Result<()> {
    check_time(near)?;
    if far >= near && far.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("invalid time interval [{near}, {far}]")))
    }
}

/// `(1 - e^{-z})^{-1}`
pub fn geom(z: f64) -> f64 {
    -1.0 / (-z).exp_m1()
}

/// `(e^{-near mu} - e^{-far mu}) / mu`, written to avoid cancellation.
pub fn increment(near: f64, far: f64, mu: f64) -> f64 {
    let width = far - near;
    if mu == 0.0 {
        return width;
    }
    -(-near * mu).exp() * (-width * mu).exp_m1() / mu
}

/// Lanczos factorisation of rank `k` seeded with `seed`.
pub fn lanczos(op: &EllipticOperator, seed: &Field, k: usize) -> Result<KrylovBasis> {
    KrylovBasis::build(op, seed, k)
}
