//! A priori error bounds for the Krylov exponential and the resulting rank
//! selection.

use crate::error::{Error, Result};
use crate::operator::EllipticOperator;

/// Inputs of the rank bounds. `rho` is the spectral radius of the scaled
/// operator `T A`, i.e. dimensionless.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub rho: f64,
    pub k: usize,
    pub lambda_min: f64,
    pub horizon: f64,
}

impl BoundParams {
    pub fn for_operator(op: &EllipticOperator, horizon: f64, k: usize) -> Self {
        let s = op.spectral();
        Self { rho: horizon * s.rho, k, lambda_min: s.lambda_min, horizon }
    }

    pub fn expm_bound(&self) -> Result<f64> {
        expm_bound(self.rho, self.k)
    }

    /// Predicted contraction factor `e^{-T lambda_1} + bound` of the
    /// Krylov fixed-point map.
    pub fn contraction(&self) -> Result<f64> {
        Ok((-self.horizon * self.lambda_min).exp() + self.expm_bound()?)
    }
}

fn superlinear_branch(rho: f64, k: f64) -> f64 {
    // (40/rho) e^{-rho/4} (e rho / 4k)^k, evaluated in log space
    let log = (40.0 / rho).ln() - rho / 4.0 + k * (std::f64::consts::E * rho / (4.0 * k)).ln();
    log.exp()
}

fn gaussian_branch(rho: f64, k: f64) -> f64 {
    10.0 * (-4.0 * k * k / (5.0 * rho)).exp()
}

/// Relative error bound for `||e^{-B} b - Q e^{-H} Q^T b|| / ||b||` when the
/// eigenvalues of `B` lie in `[0, rho]`:
///
/// * `10 e^{-4k^2/(5 rho)}` for `sqrt(rho) <= k <= rho/2`,
/// * `(40/rho) e^{-rho/4} (e rho/(4k))^k` for `k >= rho/2`.
///
/// Both branches bound a polynomial approximation error that cannot grow
/// with the degree, so the result is the smallest bound available at any
/// admissible rank `<= k`, which makes it non-increasing in `k`.
pub fn expm_bound(rho: f64, k: usize) -> Result<f64> {
    if !(rho > 0.0) || k == 0 {
        return Err(Error::InvalidArgument(format!("need rho > 0 and k >= 1, got rho={rho}, k={k}")));
    }
    let kf = k as f64;
    let sqrt_rho = rho.sqrt();
    let mut best = f64::INFINITY;
    // first branch at the largest admissible rank not exceeding k
    let k1 = kf.min((rho / 2.0).floor());
    if k1 >= sqrt_rho && k1 >= 1.0 {
        best = best.min(gaussian_branch(rho, k1));
    }
    if kf >= rho / 2.0 {
        best = best.min(superlinear_branch(rho, kf));
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::BoundNotApplicable { k, sqrt_rho })
    }
}

/// Lower rank limit for the Krylov fixed-point map to contract:
/// `sqrt((5 T rho / 4) ln(10 / (1 - e^{-T lambda_1})))`.
pub fn contraction_rank_floor(horizon: f64, rho: f64, lambda_min: f64) -> f64 {
    let ln = (10.0 / -(-horizon * lambda_min).exp_m1()).ln();
    (1.25 * horizon * rho * ln).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankChoice {
    pub k: usize,
    /// Bound at the chosen rank, if the bound applies there.
    pub bound: Option<f64>,
    /// The target was not reachable below the problem size.
    pub capped: bool,
}

/// Smallest rank `k > contraction_rank_floor` with `expm_bound(T rho, k) <=
/// target`, ignoring the problem size. `rho` is the unscaled spectral
/// radius.
pub fn required_rank(horizon: f64, rho: f64, lambda_min: f64, target: f64) -> Result<usize> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::InvalidArgument(format!("target must lie in (0, 1], got {target}")));
    }
    if !(horizon > 0.0 && rho > 0.0 && lambda_min > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need positive horizon and spectrum, got T={horizon}, rho={rho}, lambda_1={lambda_min}"
        )));
    }
    let scaled = horizon * rho;
    let floor = contraction_rank_floor(horizon, rho, lambda_min);
    let mut k = (floor.floor() as usize + 1).max(scaled.sqrt().ceil() as usize).max(1);
    // The first branch alone gives k^2 >= (5 T rho / 4) ln(10 / target); the
    // scan only needs to walk past that point.
    loop {
        if let Ok(b) = expm_bound(scaled, k) {
            if b <= target {
                return Ok(k);
            }
        }
        k += 1;
    }
}

/// [`required_rank`] for an assembled operator, clamped to `n_dof`.
pub fn choose_rank(op: &EllipticOperator, horizon: f64, target: f64) -> Result<RankChoice> {
    let s = op.spectral();
    let k = required_rank(horizon, s.rho, s.lambda_min, target)?;
    let n_dof = op.grid().n_dof();
    let rho = horizon * s.rho;
    if k <= n_dof {
        return Ok(RankChoice { k, bound: expm_bound(rho, k).ok(), capped: false });
    }
    log::warn!("rank target {target:e} needs k = {k} > n_dof = {n_dof} (T rho = {rho:.1}); using full rank");
    Ok(RankChoice { k: n_dof, bound: expm_bound(rho, n_dof).ok(), capped: true })
}
