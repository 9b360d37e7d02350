//! Dense eigendecomposition oracle. Cubic cost: reserved for tests, small
//! problems and accuracy studies.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::operator::{EllipticOperator, LinearOperator};

pub const ORACLE_CAP: usize = 4096;

/// Column-by-column dense copy of the operator.
pub fn dense_matrix(op: &EllipticOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut col);
        a.set_column(j, &DVector::from_column_slice(&col));
        e[j] = 0.0;
    }
    a
}

/// Full symmetric eigendecomposition `A = V diag(lambda) V^T`.
#[derive(Debug, Clone)]
pub struct DenseSpectral {
    grid: Grid,
    values: DVector<f64>,
    vectors: DMatrix<f64>,
}

impl DenseSpectral {
    pub fn new(op: &EllipticOperator) -> Result<Self> {
        Self::with_cap(op, ORACLE_CAP)
    }

    pub fn with_cap(op: &EllipticOperator, cap: usize) -> Result<Self> {
        let n_dof = op.dim();
        if n_dof > cap {
            return Err(Error::OracleTooLarge { n_dof, cap });
        }
        let eig = SymmetricEigen::new(dense_matrix(op));
        Ok(Self { grid: *op.grid(), values: eig.eigenvalues, vectors: eig.eigenvectors })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn lambda_min(&self) -> f64 {
        self.values.min()
    }

    pub fn lambda_max(&self) -> f64 {
        self.values.max()
    }

    /// `V diag(f(lambda)) V^T v`
    pub fn apply_fn(&self, v: &Field, f: impl Fn(f64) -> f64) -> Result<Field> {
        if *v.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let x = DVector::from_column_slice(v.values());
        let mut c = self.vectors.tr_mul(&x);
        for (ci, &l) in c.iter_mut().zip(self.values.iter()) {
            *ci *= f(l);
        }
        let y = &self.vectors * c;
        Ok(Field::from_raw(self.grid, y.as_slice().to_vec()))
    }

    pub fn expm(&self, t: f64, v: &Field) -> Result<Field> {
        self.apply_fn(v, |l| (-t * l).exp())
    }

    /// `(I - e^{-TA})^{-1} v`
    pub fn geom(&self, horizon: f64, v: &Field) -> Result<Field> {
        self.apply_fn(v, |l| super::geom(horizon * l))
    }
}

/// Exact `e^{-tA} b` through a full eigendecomposition.
pub fn dense_expm_oracle(op: &EllipticOperator, t: f64, b: &Field) -> Result<Field> {
    DenseSpectral::new(op)?.expm(t, b)
}
