use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use heatinv::{InverseSolution, ManufacturedCase};
use heatinv_bench::config::{Config, RawConfig, Study};
use heatinv_bench::error::{BenchError, Result};
use heatinv_bench::study::{self, Row};
use heatinv_bench::{checks, output, svg};

/// Stationary heat source recovery: solves, convergence, cost and Krylov
/// decay studies on the manufactured problem.
#[derive(Debug, Parser)]
#[command(name = "heatinv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    keys: Keys,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve once with the first method and N; write the recovered fields.
    Solve,
    /// Errors and observed orders over N_list for every method.
    Converge,
    /// Wall time against achieved E_p, and time to reach each tolerance.
    Cost,
    /// Krylov error against rank k for e^{-TA} phi and the geometric series.
    Decay,
    /// Quick correctness checks.
    Selftest,
}

/// Each flag overrides the config-file key of the same name.
#[derive(Debug, Args)]
#[allow(non_snake_case)]
struct Keys {
    /// TOML file with any of the keys below
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dimension: Option<usize>,
    /// comma-separated, e.g. 8,16,32
    #[arg(long = "N_list", global = true, value_delimiter = ',')]
    N_list: Option<Vec<usize>>,
    /// time steps: 2N, 0.5*N or a fixed count
    #[arg(long = "M_rule", global = true)]
    M_rule: Option<String>,
    #[arg(long = "T", global = true)]
    T: Option<f64>,
    /// comma-separated: direct, shooting, hybrid, pure
    #[arg(long = "method_list", alias = "method-list", global = true, value_delimiter = ',')]
    method_list: Option<Vec<String>>,
    /// N, 2N, a fixed rank, or auto:<target>
    #[arg(long = "k_rule", alias = "k-rule", global = true)]
    k_rule: Option<String>,
    #[arg(long = "fp_tol", alias = "fp-tol", global = true)]
    fp_tol: Option<f64>,
    #[arg(long = "fp_max_iter", alias = "fp-max-iter", global = true)]
    fp_max_iter: Option<usize>,
    /// per-operand or shared-basis
    #[arg(long = "seed_mode", alias = "seed-mode", global = true)]
    seed_mode: Option<String>,
    /// quadrature panels: M, 4M or a fixed count
    #[arg(long = "quad_panels", alias = "quad-panels", global = true)]
    quad_panels: Option<String>,
    #[arg(long = "output_dir", alias = "output-dir", global = true)]
    output_dir: Option<PathBuf>,
    /// max-relative or pointwise[:threshold]
    #[arg(long = "error_norm", alias = "error-norm", global = true)]
    error_norm: Option<String>,
    /// cost-study targets on E_p, comma-separated
    #[arg(long, global = true, value_delimiter = ',')]
    tolerances: Option<Vec<f64>>,
    /// ranks for the decay study, comma-separated
    #[arg(long = "k_list", alias = "k-list", global = true, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
}

impl Keys {
    fn raw(&self) -> Result<RawConfig> {
        let file = match &self.config {
            Some(path) => RawConfig::load(path)?,
            None => RawConfig::default(),
        };
        let flags = RawConfig {
            dimension: self.dimension,
            n_list: self.N_list.clone(),
            m_rule: self.M_rule.clone(),
            horizon: self.T,
            method_list: self.method_list.clone(),
            k_rule: self.k_rule.clone(),
            fp_tol: self.fp_tol,
            fp_max_iter: self.fp_max_iter,
            seed_mode: self.seed_mode.clone(),
            quad_panels: self.quad_panels.clone(),
            output_dir: self.output_dir.clone(),
            error_norm: self.error_norm.clone(),
            tolerances: self.tolerances.clone(),
            k_list: self.k_list.clone(),
        };
        Ok(file.merge(flags))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("heatinv: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let study = match cli.command {
        Command::Solve => Study::Solve,
        Command::Converge => Study::Converge,
        Command::Cost => Study::Cost,
        Command::Decay => Study::Decay,
        Command::Selftest => Study::Selftest,
    };
    let cfg = Config::resolve(&cli.keys.raw()?, study)?;
    let dir = cfg.output_dir.clone();
    output::ensure_dir(&dir)?;
    let name = study.name();
    let mut outputs = Vec::new();
    let result = match study {
        Study::Solve => run_solve(&cfg, &dir, &mut outputs),
        Study::Converge => run_rows(&dir, name, study::convergence_study(&cfg)?, &mut outputs),
        Study::Cost => run_cost(&cfg, &dir, &mut outputs),
        Study::Decay => run_decay(&cfg, &dir, &mut outputs),
        Study::Selftest => run_selftest(&dir, &mut outputs),
    };
    outputs.push(dir.join("run_manifest.toml"));
    let args: Vec<String> = std::env::args().collect();
    output::write_text(&dir.join("run_manifest.toml"), &output::manifest_text(&cfg, name, &args, &outputs))?;
    result
}

fn print_rows(rows: &[Row]) {
    println!(
        "{:<9} {:>2} {:>4} {:>5} {:>4} {:>11} {:>11} {:>7} {:>7} {:>5} {:>9}",
        "method", "d", "N", "M", "k", "E_u", "E_p", "ord_u", "ord_p", "iters", "time_s"
    );
    for r in rows {
        let ord = |o: Option<f64>| o.map(|o| format!("{o:.3}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<9} {:>2} {:>4} {:>5} {:>4} {:>11.4e} {:>11.4e} {:>7} {:>7} {:>5} {:>9.4} {}",
            r.method.name(),
            r.d,
            r.n,
            r.m,
            r.k.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
            r.e_u,
            r.e_p,
            ord(r.order_u),
            ord(r.order_p),
            r.iters,
            r.wall_time_s,
            r.flags.join(";")
        );
    }
}

fn failures(rows: &[Row]) -> Result<()> {
    match rows.iter().filter(|r| r.failed()).count() {
        0 => Ok(()),
        n => Err(BenchError::FailedRows(n)),
    }
}

/// Writes the table, then redraws the plot from what was written.
fn run_rows(dir: &Path, name: &str, rows: Vec<Row>, outputs: &mut Vec<PathBuf>) -> Result<()> {
    print_rows(&rows);
    let csv = dir.join(format!("{name}.csv"));
    output::write_rows(&csv, &rows)?;
    let back = output::read_rows(&csv)?;
    let plot = if name == "cost" { svg::cost_plot(&back) } else { svg::convergence_plot(&back) };
    let svg_path = dir.join(format!("{name}.svg"));
    output::write_text(&svg_path, &plot)?;
    outputs.extend([csv, svg_path]);
    failures(&rows)
}

fn run_cost(cfg: &Config, dir: &Path, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let rows = study::cost_study(cfg)?;
    let points = study::time_to_tolerance(&rows, &cfg.methods, &cfg.tolerances);
    let summary = dir.join("cost_summary.csv");
    output::write_cost_summary(&summary, &points)?;
    outputs.push(summary);
    let res = run_rows(dir, "cost", rows, outputs);
    for p in &points {
        match p.reached {
            Some((n, t)) => println!("E_p <= {:.0e}: {:<9} N={n:<3} {t:.4}s", p.tolerance, p.method.name()),
            None => println!("E_p <= {:.0e}: {:<9} not reached", p.tolerance, p.method.name()),
        }
    }
    res
}

/// Values along the line through the centre parallel to the first axis.
fn centre_line(sol: &InverseSolution, case: &ManufacturedCase) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let grid = *sol.p.grid();
    let mid = grid.subdivisions() / 2 - 1;
    let (mut xs, mut p, mut exact) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..grid.n_dof() {
        let idx = grid.multi_index(j);
        if (1..grid.dim()).all(|a| idx[a] == mid) {
            let x = grid.point(j);
            xs.push(x[0]);
            p.push(sol.p.values()[j]);
            exact.push(case.exact_p(&x[..grid.dim()]));
        }
    }
    (xs, p, exact)
}

fn run_solve(cfg: &Config, dir: &Path, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let (row, sol, case) = study::solve_once(cfg)?;
    print_rows(std::slice::from_ref(&row));
    let d = &sol.diagnostics;
    println!(
        "converged={} fp_residual={:.3e} nonlocal_residual={:.3e} cg_iterations={}",
        d.converged, d.fp_residual, d.nonlocal_residual, d.cg_iterations
    );
    let csv = dir.join("solve.csv");
    output::write_rows(&csv, std::slice::from_ref(&row))?;
    let fields = dir.join("solution.csv");
    output::write_solution(&fields, &sol, &case)?;
    let (xs, p, exact) = centre_line(&sol, &case);
    let title = format!("recovered p, {} d={} N={}", row.method.name(), row.d, row.n);
    let svg_path = dir.join("solve.svg");
    output::write_text(&svg_path, &svg::profile_plot(&title, &xs, &p, &exact))?;
    outputs.extend([csv, fields, svg_path]);
    Ok(())
}

fn run_decay(cfg: &Config, dir: &Path, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let rows = study::decay_study(cfg)?;
    println!("{:>4} {:>12} {:>12} {:>12}", "k", "expm_error", "geom_error", "bound");
    for r in &rows {
        let b = r.bound.map(|b| format!("{b:.4e}")).unwrap_or_else(|| "-".into());
        println!("{:>4} {:>12.4e} {:>12.4e} {:>12}", r.k, r.expm_error, r.geom_error, b);
    }
    let csv = dir.join("decay.csv");
    output::write_decay(&csv, &rows)?;
    let back = output::read_decay(&csv)?;
    let svg_path = dir.join("decay.svg");
    output::write_text(&svg_path, &svg::decay_plot(&back))?;
    outputs.extend([csv, svg_path]);
    Ok(())
}

fn run_selftest(dir: &Path, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let outcomes = checks::quick();
    let mut text = String::new();
    for o in &outcomes {
        println!("{}", o.line());
        text.push_str(&o.line());
        text.push('\n');
    }
    let path = dir.join("selftest.txt");
    output::write_text(&path, &text)?;
    outputs.push(path);
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(BenchError::Check(format!("criteria {}", failed.join(", "))))
    }
}
