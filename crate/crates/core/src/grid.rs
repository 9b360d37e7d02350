//! Tensor-product grids on the unit cube and real fields over their interior
//! points.
//!
//! Unknowns live on interior points only: for `N` subdivisions per axis there
//! are `(N-1)^d` of them. Linear indices run with axis 0 fastest.

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    dim: usize,
    subdivisions: usize,
}

impl Grid {
    pub fn new(dim: usize, subdivisions: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        if subdivisions < 2 {
            return Err(Error::TooFewSubdivisions(subdivisions));
        }
        Ok(Self { dim, subdivisions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Subdivisions per axis, `N`.
    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Mesh width `1/N`, recomputed on every call.
    pub fn h(&self) -> f64 {
        1.0 / self.subdivisions as f64
    }

    /// Interior points per axis, `N - 1`.
    pub fn points_per_axis(&self) -> usize {
        self.subdivisions - 1
    }

    pub fn n_dof(&self) -> usize {
        self.points_per_axis().pow(self.dim as u32)
    }

    /// Linear-index distance between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis().pow(axis as u32)
    }

    /// `h^d`, the quadrature weight of the discrete inner product.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Multi-index `(n_1, .., n_d)` with `1 <= n_i <= N-1`; unused axes are 0.
    pub fn multi_index(&self, linear: usize) -> [usize; MAX_DIM] {
        debug_assert!(linear < self.n_dof());
        let m = self.points_per_axis();
        let mut out = [0; MAX_DIM];
        let mut rest = linear;
        for slot in out.iter_mut().take(self.dim) {
            *slot = rest % m + 1;
            rest /= m;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> Option<usize> {
        if multi.len() != self.dim {
            return None;
        }
        let m = self.points_per_axis();
        let mut linear = 0;
        for (axis, &n) in multi.iter().enumerate() {
            if n == 0 || n > m {
                return None;
            }
            linear += (n - 1) * self.stride(axis);
        }
        Some(linear)
    }

    /// Coordinates of interior point `linear`; unused axes are 0.
    pub fn point(&self, linear: usize) -> [f64; MAX_DIM] {
        let h = self.h();
        let idx = self.multi_index(linear);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = idx[axis] as f64 * h;
        }
        x
    }
}

/// Real values on the interior points of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n_dof()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.n_dof()] }
    }

    pub fn from_vec(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_dof() {
            return Err(Error::LengthMismatch { expected: grid.n_dof(), found: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every interior point. `f` receives the first `d`
    /// coordinates.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.n_dof())
            .map(|j| {
                let x = grid.point(j);
                f(&x[..grid.dim()])
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_dof());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Weighted inner product `h^d * sum f_j g_j`.
    pub fn inner(&self, other: &Field) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self.grid.cell_volume() * dot(&self.values, &other.values))
    }

    pub fn norm(&self) -> f64 {
        (self.grid.cell_volume() * dot(&self.values, &self.values)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Field) -> Result<()> {
        self.check_same_grid(other)?;
        axpy(alpha, &other.values, &mut self.values);
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }
}

/// Inner product of two fields, `h^d * sum f_j g_j`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.inner(g)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators: keeps the summation order fixed while letting the
    // compiler vectorise.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dof_counts() {
        assert_eq!(Grid::new(1, 4).unwrap().n_dof(), 3);
        assert_eq!(Grid::new(2, 40).unwrap().n_dof(), 1521);
        assert_eq!(Grid::new(3, 10).unwrap().n_dof(), 729);
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(Grid::new(4, 8), Err(Error::UnsupportedDimension(4)));
        assert_eq!(Grid::new(0, 8), Err(Error::UnsupportedDimension(0)));
        assert_eq!(Grid::new(2, 1), Err(Error::TooFewSubdivisions(1)));
    }

    #[test]
    fn mesh_width_is_exact_reciprocal() {
        for n in 2..200 {
            let g = Grid::new(1, n).unwrap();
            assert_eq!(g.h(), 1.0 / n as f64);
        }
    }

    #[test]
    fn index_maps_are_inverse() {
        for (d, n) in [(1, 7), (2, 5), (3, 4)] {
            let g = Grid::new(d, n).unwrap();
            let mut seen = vec![false; g.n_dof()];
            for j in 0..g.n_dof() {
                let idx = g.multi_index(j);
                assert!(idx[..d].iter().all(|&k| (1..n).contains(&k)));
                let back = g.linear_index(&idx[..d]).unwrap();
                assert_eq!(back, j);
                assert!(!seen[back]);
                seen[back] = true;
            }
        }
        let g = Grid::new(2, 5).unwrap();
        assert_eq!(g.linear_index(&[0, 1]), None);
        assert_eq!(g.linear_index(&[1, 5]), None);
    }

    #[test]
    fn inner_product_examples() {
        let g1 = Grid::new(1, 4).unwrap();
        let ones = Field::constant(g1, 1.0);
        assert!((ones.inner(&ones).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(Field::zeros(g1).inner(&ones).unwrap(), 0.0);

        let g2 = Grid::new(2, 4).unwrap();
        let ones2 = Field::constant(g2, 1.0);
        assert!((ones2.inner(&ones2).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(ones.inner(&ones2), Err(Error::GridMismatch));
    }

    #[test]
    fn from_vec_validates() {
        let g = Grid::new(1, 4).unwrap();
        assert!(matches!(Field::from_vec(g, vec![1.0; 2]), Err(Error::LengthMismatch { expected: 3, found: 2 })));
        assert_eq!(Field::from_vec(g, vec![1.0, f64::NAN, 0.0]), Err(Error::NonFinite(1)));
    }

    #[test]
    fn points_lie_inside_unit_cube() {
        let g = Grid::new(3, 4).unwrap();
        let x = g.point(0);
        assert_eq!(x, [0.25, 0.25, 0.25]);
        let x = g.point(g.n_dof() - 1);
        assert_eq!(x, [0.75, 0.75, 0.75]);
    }
}
