use heatinv::{
    lanczos, measure_errors, solve, DenseSpectral, ErrorNorm, Field, InverseSolution, ManufacturedCase, Method,
};
use rayon::prelude::*;

use crate::config::{seed_mode_name, Config};
use crate::error::{BenchError, Result};

/// One `(method, N)` run.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub method: Method,
    pub d: usize,
    pub n: usize,
    pub m: usize,
    /// Krylov rank, `None` for shooting and direct.
    pub k: Option<usize>,
    pub e_u: f64,
    pub e_p: f64,
    pub order_u: Option<f64>,
    pub order_p: Option<f64>,
    pub iters: usize,
    pub wall_time_s: f64,
    pub flags: Vec<String>,
}

impl Row {
    pub fn failed(&self) -> bool {
        self.flags.iter().any(|f| f.starts_with("error"))
    }
}

pub fn observed_order(e_coarse: f64, e_fine: f64, n_coarse: usize, n_fine: usize) -> Option<f64> {
    let order = (e_coarse / e_fine).ln() / (n_fine as f64 / n_coarse as f64).ln();
    order.is_finite().then_some(order)
}

/// Fills the order columns between consecutive rows of the same method.
pub fn fill_orders(rows: &mut [Row]) {
    for i in 1..rows.len() {
        let (prev, cur) = (&rows[i - 1], &rows[i]);
        if prev.method != cur.method || prev.d != cur.d || prev.n >= cur.n || prev.failed() || cur.failed() {
            continue;
        }
        let ou = observed_order(prev.e_u, cur.e_u, prev.n, cur.n);
        let op = observed_order(prev.e_p, cur.e_p, prev.n, cur.n);
        rows[i].order_u = ou;
        rows[i].order_p = op;
    }
}

/// Solves the manufactured problem once. Failures come back as a flagged
/// row rather than an error.
pub fn run_one(cfg: &Config, case: &ManufacturedCase, method: Method, n: usize) -> (Row, Option<InverseSolution>) {
    let scfg = cfg.solver_config(method, n);
    let mut row = Row {
        method,
        d: case.dim(),
        n,
        m: scfg.steps,
        k: None,
        e_u: f64::NAN,
        e_p: f64::NAN,
        order_u: None,
        order_p: None,
        iters: 0,
        wall_time_s: f64::NAN,
        flags: Vec::new(),
    };
    if method.uses_krylov() {
        row.flags.push(format!("seed={}", seed_mode_name(cfg.seed_mode)));
    }
    let outcome = case
        .problem(n)
        .and_then(|prob| solve(&prob, &scfg))
        .and_then(|sol| measure_errors(&sol, case, cfg.error_norm).map(|e| (sol, e)));
    match outcome {
        Ok((sol, err)) => {
            let diag = &sol.diagnostics;
            row.k = diag.rank;
            row.e_u = err.e_u;
            row.e_p = err.e_p;
            row.iters = diag.iterations;
            row.wall_time_s = diag.wall_time_s;
            row.flags.extend(diag.flags.iter().cloned());
            if let ErrorNorm::Pointwise { .. } = cfg.error_norm {
                row.flags.push(format!("excluded={}+{}", err.excluded_u, err.excluded_p));
            }
            (row, Some(sol))
        }
        Err(e) => {
            log::error!("{method} N={n}: {e}");
            row.flags.push(format!("error: {e}"));
            (row, None)
        }
    }
}

fn case(cfg: &Config) -> Result<ManufacturedCase> {
    Ok(ManufacturedCase::new(cfg.dimension, cfg.horizon)?)
}

/// Every `(method, N)` pair, in parallel; rows come back in method-list
/// order, then by `N`.
pub fn convergence_study(cfg: &Config) -> Result<Vec<Row>> {
    let case = case(cfg)?;
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let jobs: Vec<(Method, usize)> = cfg.methods.iter().flat_map(|&m| ns.iter().map(move |&n| (m, n))).collect();
    let mut rows: Vec<Row> = jobs.par_iter().map(|&(m, n)| run_one(cfg, &case, m, n).0).collect();
    fill_orders(&mut rows);
    Ok(rows)
}

/// Serial sweep (wall times are the point, so runs must not compete).
pub fn cost_study(cfg: &Config) -> Result<Vec<Row>> {
    let case = case(cfg)?;
    let mut ns = cfg.n_list.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = Vec::new();
    for &m in &cfg.methods {
        for &n in &ns {
            rows.push(run_one(cfg, &case, m, n).0);
        }
    }
    fill_orders(&mut rows);
    Ok(rows)
}

/// Time for each method to first reach `E_p <= tol` over the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CostPoint {
    pub method: Method,
    pub tolerance: f64,
    /// `(N, wall time)` of the cheapest run meeting the tolerance.
    pub reached: Option<(usize, f64)>,
}

pub fn time_to_tolerance(rows: &[Row], methods: &[Method], tolerances: &[f64]) -> Vec<CostPoint> {
    let mut out = Vec::new();
    for &tol in tolerances {
        for &method in methods {
            let reached = rows
                .iter()
                .filter(|r| r.method == method && !r.failed() && r.e_p <= tol)
                .map(|r| (r.n, r.wall_time_s))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            out.push(CostPoint { method, tolerance: tol, reached });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayRow {
    pub k: usize,
    pub expm_error: f64,
    pub geom_error: f64,
    /// Exponential error bound, `None` outside its regime.
    pub bound: Option<f64>,
}

/// Errors of the Krylov `e^{-TA} b` and `(I - e^{-TA})^{-1} b` against the
/// dense oracle, for the manufactured final state `b = phi`. Errors are
/// divided by `||b||`, the scale the exponential bound is stated in.
pub fn decay_study(cfg: &Config) -> Result<Vec<DecayRow>> {
    let case = case(cfg)?;
    let prob = case.problem(cfg.n_list[0])?;
    let op = prob.op();
    let n_dof = op.grid().n_dof();
    let dense = DenseSpectral::with_cap(op, n_dof.max(heatinv::krylov::ORACLE_CAP))?;
    let b = prob.target();
    let t = cfg.horizon;
    let expm_exact = dense.expm(t, b)?;
    let geom_exact = dense.geom(t, b)?;
    let rel = |x: &Field, y: &Field| x.sub(y).map(|d| d.norm() / b.norm());
    let mut ks = cfg.k_list.clone();
    ks.retain(|&k| k <= n_dof);
    ks.sort_unstable();
    ks.dedup();
    ks.into_par_iter()
        .map(|k| {
            let basis = lanczos(op, b, k)?;
            Ok(DecayRow {
                k,
                expm_error: rel(&basis.apply_expm(t)?, &expm_exact)?,
                geom_error: rel(&basis.apply_geom(t)?, &geom_exact)?,
                bound: heatinv::BoundParams::for_operator(op, t, k).expm_bound().ok(),
            })
        })
        .collect::<std::result::Result<Vec<_>, heatinv::Error>>()
        .map_err(BenchError::from)
}

/// One solve of the manufactured problem with the first configured method
/// and `N`.
pub fn solve_once(cfg: &Config) -> Result<(Row, InverseSolution, ManufacturedCase)> {
    let case = case(cfg)?;
    let (row, sol) = run_one(cfg, &case, cfg.methods[0], cfg.n_list[0]);
    match sol {
        Some(sol) => Ok((row, sol, case)),
        None => {
            // rerun to surface the typed error
            let prob = case.problem(cfg.n_list[0])?;
            solve(&prob, &cfg.solver_config(cfg.methods[0], cfg.n_list[0]))?;
            Err(BenchError::FailedRows(1))
        }
    }
}
