//! CSV tables, the run manifest and the solution dump.

use std::path::{Path, PathBuf};

use heatinv::{InverseSolution, ManufacturedCase, Method};

use crate::config::Config;
use crate::error::{BenchError, Result};
use crate::study::{CostPoint, DecayRow, Row};

pub const COLUMNS: [&str; 12] =
    ["method", "d", "N", "M", "k", "E_u", "E_p", "order_u", "order_p", "iters", "wall_time_s", "flags"];

/// 17 significant digits, `NaN` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.d.to_string(),
            r.n.to_string(),
            r.m.to_string(),
            r.k.map(|k| k.to_string()).unwrap_or_default(),
            num(r.e_u),
            num(r.e_p),
            opt(r.order_u),
            opt(r.order_p),
            r.iters.to_string(),
            num(r.wall_time_s),
            r.flags.join(";"),
        ])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| BenchError::Config(format!("{}: bad value in column {}", path.display(), COLUMNS[i])))
}

fn opt_field(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, i, path).map(Some),
    }
}

pub fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(BenchError::Config(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let method: Method = rec[0].parse().map_err(|e: heatinv::Error| BenchError::Config(e.to_string()))?;
        rows.push(Row {
            method,
            d: field(&rec, 1, path)?,
            n: field(&rec, 2, path)?,
            m: field(&rec, 3, path)?,
            k: match &rec[4] {
                "" => None,
                _ => Some(field(&rec, 4, path)?),
            },
            e_u: field(&rec, 5, path)?,
            e_p: field(&rec, 6, path)?,
            order_u: opt_field(&rec, 7, path)?,
            order_p: opt_field(&rec, 8, path)?,
            iters: field(&rec, 9, path)?,
            wall_time_s: field(&rec, 10, path)?,
            flags: rec[11].split(';').filter(|s| !s.is_empty()).map(str::to_string).collect(),
        });
    }
    Ok(rows)
}

pub fn write_decay(path: &Path, rows: &[DecayRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "expm_error", "geom_error", "bound"])?;
    for r in rows {
        w.write_record([r.k.to_string(), num(r.expm_error), num(r.geom_error), opt(r.bound)])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    Ok(())
}

pub fn read_decay(path: &Path) -> Result<Vec<DecayRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| BenchError::Config(format!("{}: bad decay value '{}'", path.display(), &rec[i])))
        };
        rows.push(DecayRow {
            k: rec[0].parse().map_err(|_| BenchError::Config(format!("{}: bad rank '{}'", path.display(), &rec[0])))?,
            expm_error: parse(1)?,
            geom_error: parse(2)?,
            bound: if rec[3].is_empty() { None } else { Some(parse(3)?) },
        });
    }
    Ok(rows)
}

pub fn write_cost_summary(path: &Path, points: &[CostPoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "tolerance", "N", "wall_time_s"])?;
    for p in points {
        let (n, t) = match p.reached {
            Some((n, t)) => (n.to_string(), num(t)),
            None => (String::new(), String::new()),
        };
        w.write_record([p.method.name().to_string(), num(p.tolerance), n, t])?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    Ok(())
}

/// `x_1..x_d, p, p_exact, v0, u_T, phi` per grid point.
pub fn write_solution(path: &Path, sol: &InverseSolution, case: &ManufacturedCase) -> Result<()> {
    let grid = *sol.p.grid();
    let d = grid.dim();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=d).map(|j| format!("x_{j}")).collect();
    header.extend(["p", "p_exact", "v0", "u_T", "u_T_exact"].map(String::from));
    w.write_record(&header)?;
    let t = sol.u.horizon();
    for j in 0..grid.n_dof() {
        let x = grid.point(j);
        let x = &x[..d];
        let mut rec: Vec<String> = x.iter().map(|&v| num(v)).collect();
        rec.push(num(sol.p.values()[j]));
        rec.push(num(case.exact_p(x)));
        rec.push(num(sol.v0.values()[j]));
        rec.push(num(sol.u.last().values()[j]));
        rec.push(num(case.exact_u(t, x)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| BenchError::io(path, e))
}

pub fn manifest_text(cfg: &Config, study: &str, args: &[String], outputs: &[PathBuf]) -> String {
    let mut s = String::new();
    s.push_str(&format!("# heatinv {} run manifest\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("# study: {study}\n"));
    s.push_str(&format!("# command: {}\n", args.join(" ")));
    s.push_str(&format!("# core library: heatinv {}\n", env!("CARGO_PKG_VERSION")));
    for o in outputs {
        s.push_str(&format!("# output: {}\n", o.display()));
    }
    s.push('\n');
    s.push_str(&cfg.to_toml());
    s
}
