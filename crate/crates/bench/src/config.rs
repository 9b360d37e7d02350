//! Study configuration: a TOML file whose keys can each be overridden on the
//! command line. Unset keys fall back to per-study defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use heatinv::{ErrorNorm, Method, RankRule, SeedMode, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Raw keys as they appear in the file. Everything is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub dimension: Option<usize>,
    #[serde(rename = "N_list")]
    pub n_list: Option<Vec<usize>>,
    #[serde(rename = "M_rule")]
    pub m_rule: Option<String>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub method_list: Option<Vec<String>>,
    pub k_rule: Option<String>,
    pub fp_tol: Option<f64>,
    pub fp_max_iter: Option<usize>,
    pub seed_mode: Option<String>,
    pub quad_panels: Option<String>,
    pub output_dir: Option<PathBuf>,
    pub error_norm: Option<String>,
    /// Target tolerances of the cost study.
    pub tolerances: Option<Vec<f64>>,
    /// Ranks swept by the decay study.
    pub k_list: Option<Vec<usize>>,
}

impl RawConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))
    }

    /// Keys set in `other` win.
    pub fn merge(self, other: RawConfig) -> RawConfig {
        RawConfig {
            dimension: other.dimension.or(self.dimension),
            n_list: other.n_list.or(self.n_list),
            m_rule: other.m_rule.or(self.m_rule),
            horizon: other.horizon.or(self.horizon),
            method_list: other.method_list.or(self.method_list),
            k_rule: other.k_rule.or(self.k_rule),
            fp_tol: other.fp_tol.or(self.fp_tol),
            fp_max_iter: other.fp_max_iter.or(self.fp_max_iter),
            seed_mode: other.seed_mode.or(self.seed_mode),
            quad_panels: other.quad_panels.or(self.quad_panels),
            output_dir: other.output_dir.or(self.output_dir),
            error_norm: other.error_norm.or(self.error_norm),
            tolerances: other.tolerances.or(self.tolerances),
            k_list: other.k_list.or(self.k_list),
        }
    }
}

/// Time steps as a function of `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `M = max(1, round(r N))`
    Ratio(f64),
    Fixed(usize),
}

impl StepRule {
    pub fn steps(&self, n: usize) -> usize {
        match *self {
            StepRule::Ratio(r) => ((r * n as f64).round() as usize).max(1),
            StepRule::Fixed(m) => m,
        }
    }
}

impl FromStr for StepRule {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::Config(format!("bad M_rule '{s}' (expected e.g. 2N, 0.5N or 64)"));
        let t = s.trim();
        if let Some(r) = t.strip_suffix(['N', 'n']) {
            let r = r.trim().trim_end_matches('*');
            let r = if r.is_empty() { 1.0 } else { r.parse::<f64>().map_err(|_| bad())? };
            if !(r > 0.0 && r.is_finite()) {
                return Err(bad());
            }
            return Ok(StepRule::Ratio(r));
        }
        match t.parse::<usize>() {
            Ok(m) if m > 0 => Ok(StepRule::Fixed(m)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for StepRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepRule::Ratio(r) => write!(f, "{r}N"),
            StepRule::Fixed(m) => write!(f, "{m}"),
        }
    }
}

/// Quadrature panels as a function of the step count `M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanelRule {
    Multiple(usize),
    Fixed(usize),
}

impl PanelRule {
    pub fn panels(&self, steps: usize) -> usize {
        match *self {
            PanelRule::Multiple(c) => c * steps,
            PanelRule::Fixed(p) => p,
        }
    }
}

impl FromStr for PanelRule {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || BenchError::Config(format!("bad quad_panels '{s}' (expected M, 4M or a count)"));
        let t = s.trim();
        if let Some(c) = t.strip_suffix(['M', 'm']) {
            let c = c.trim().trim_end_matches('*');
            let c = if c.is_empty() { 1 } else { c.parse::<usize>().map_err(|_| bad())? };
            return if c > 0 { Ok(PanelRule::Multiple(c)) } else { Err(bad()) };
        }
        match t.parse::<usize>() {
            Ok(p) if p > 0 => Ok(PanelRule::Fixed(p)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for PanelRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PanelRule::Multiple(1) => f.write_str("M"),
            PanelRule::Multiple(c) => write!(f, "{c}M"),
            PanelRule::Fixed(p) => write!(f, "{p}"),
        }
    }
}

pub fn parse_seed_mode(s: &str) -> Result<SeedMode> {
    match s.trim().to_ascii_lowercase().as_str() {
        "per-operand" | "per_operand" | "peroperand" => Ok(SeedMode::PerOperand),
        "shared-basis" | "shared_basis" | "shared" => Ok(SeedMode::SharedBasis),
        _ => Err(BenchError::Config(format!("bad seed_mode '{s}' (expected per-operand or shared-basis)"))),
    }
}

pub fn seed_mode_name(m: SeedMode) -> &'static str {
    match m {
        SeedMode::PerOperand => "per-operand",
        SeedMode::SharedBasis => "shared-basis",
    }
}

pub fn parse_error_norm(s: &str) -> Result<ErrorNorm> {
    let t = s.trim().to_ascii_lowercase();
    if t == "max-relative" || t == "max_relative" {
        return Ok(ErrorNorm::MaxRelative);
    }
    if let Some(rest) = t.strip_prefix("pointwise") {
        let threshold = match rest.strip_prefix(':') {
            Some(v) => v.parse::<f64>().map_err(|_| BenchError::Config(format!("bad error_norm threshold '{v}'")))?,
            None if rest.is_empty() => 1e-12,
            None => return Err(BenchError::Config(format!("bad error_norm '{s}'"))),
        };
        if !(threshold >= 0.0) {
            return Err(BenchError::Config(format!("error_norm threshold must be non-negative, got {threshold}")));
        }
        return Ok(ErrorNorm::Pointwise { threshold });
    }
    Err(BenchError::Config(format!("bad error_norm '{s}' (expected max-relative or pointwise[:threshold])")))
}

pub fn error_norm_name(n: ErrorNorm) -> String {
    match n {
        ErrorNorm::MaxRelative => "max-relative".into(),
        ErrorNorm::Pointwise { threshold } => format!("pointwise:{threshold:e}"),
    }
}

/// Which study the defaults are drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Solve,
    Converge,
    Cost,
    Decay,
    Selftest,
}

impl Study {
    pub fn name(&self) -> &'static str {
        match self {
            Study::Solve => "solve",
            Study::Converge => "converge",
            Study::Cost => "cost",
            Study::Decay => "decay",
            Study::Selftest => "selftest",
        }
    }
}

/// Fully resolved, validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub dimension: usize,
    pub n_list: Vec<usize>,
    pub m_rule: StepRule,
    pub horizon: f64,
    pub methods: Vec<Method>,
    pub k_rule: RankRule,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
    pub seed_mode: SeedMode,
    pub quad_panels: PanelRule,
    pub output_dir: PathBuf,
    pub error_norm: ErrorNorm,
    pub tolerances: Vec<f64>,
    pub k_list: Vec<usize>,
}

impl Config {
    pub fn resolve(raw: &RawConfig, study: Study) -> Result<Self> {
        let (dim, n_list): (usize, &[usize]) = match study {
            Study::Converge | Study::Solve | Study::Selftest => (1, &[8, 16, 32, 64]),
            Study::Cost => (2, &[16, 24, 32, 40, 48]),
            Study::Decay => (2, &[40]),
        };
        let dimension = raw.dimension.unwrap_or(dim);
        if !(1..=3).contains(&dimension) {
            return Err(BenchError::Config(format!("dimension must be 1, 2 or 3, got {dimension}")));
        }
        let n_list = raw.n_list.clone().unwrap_or_else(|| n_list.to_vec());
        if n_list.is_empty() || n_list.iter().any(|&n| n < 2) {
            return Err(BenchError::Config(format!("N_list entries must be at least 2, got {n_list:?}")));
        }
        let methods = match &raw.method_list {
            Some(list) => list
                .iter()
                .map(|m| m.parse::<Method>().map_err(|e| BenchError::Config(e.to_string())))
                .collect::<Result<Vec<_>>>()?,
            None => vec![Method::Shooting, Method::Hybrid, Method::PureArnoldi],
        };
        if methods.is_empty() {
            return Err(BenchError::Config("method_list is empty".into()));
        }
        let horizon = raw.horizon.unwrap_or(0.1);
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(BenchError::Config(format!("T must be positive, got {horizon}")));
        }
        let k_rule = match &raw.k_rule {
            Some(s) => s.parse::<RankRule>().map_err(|e| BenchError::Config(e.to_string()))?,
            None if study == Study::Cost => RankRule::Multiple(2.0),
            None => RankRule::Subdivisions,
        };
        let tolerances = raw.tolerances.clone().unwrap_or_else(|| vec![1e-2, 3e-3, 1e-3]);
        if tolerances.iter().any(|t| !(*t > 0.0)) {
            return Err(BenchError::Config(format!("tolerances must be positive, got {tolerances:?}")));
        }
        let k_list = raw.k_list.clone().unwrap_or_else(|| (1..=40).map(|j| 2 * j).collect());
        if k_list.contains(&0) {
            return Err(BenchError::Config("k_list entries must be positive".into()));
        }
        let cfg = Config {
            dimension,
            n_list,
            m_rule: raw.m_rule.as_deref().unwrap_or("2N").parse()?,
            horizon,
            methods,
            k_rule,
            fp_tol: raw.fp_tol.unwrap_or(1e-10),
            fp_max_iter: raw.fp_max_iter.unwrap_or(200),
            seed_mode: parse_seed_mode(raw.seed_mode.as_deref().unwrap_or("per-operand"))?,
            quad_panels: raw.quad_panels.as_deref().unwrap_or("M").parse()?,
            output_dir: raw.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
            error_norm: parse_error_norm(raw.error_norm.as_deref().unwrap_or("max-relative"))?,
            tolerances,
            k_list,
        };
        cfg.solver_config(Method::Shooting, cfg.n_list[0]).validate().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn solver_config(&self, method: Method, n: usize) -> SolverConfig {
        let steps = self.m_rule.steps(n);
        SolverConfig {
            steps,
            method,
            rank: self.k_rule,
            fp_tol: self.fp_tol,
            fp_max_iter: self.fp_max_iter,
            seed_mode: self.seed_mode,
            quad_panels: Some(self.quad_panels.panels(steps)),
            ..SolverConfig::default()
        }
    }

    /// The resolved keys in the config file syntax.
    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            dimension: Some(self.dimension),
            n_list: Some(self.n_list.clone()),
            m_rule: Some(self.m_rule.to_string()),
            horizon: Some(self.horizon),
            method_list: Some(self.methods.iter().map(|m| m.name().to_string()).collect()),
            k_rule: Some(self.k_rule.to_string()),
            fp_tol: Some(self.fp_tol),
            fp_max_iter: Some(self.fp_max_iter),
            seed_mode: Some(seed_mode_name(self.seed_mode).into()),
            quad_panels: Some(self.quad_panels.to_string()),
            output_dir: Some(self.output_dir.clone()),
            error_norm: Some(error_norm_name(self.error_norm)),
            tolerances: Some(self.tolerances.clone()),
            k_list: Some(self.k_list.clone()),
        };
        toml::to_string(&raw).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_rule_parsing() {
        assert_eq!("2N".parse::<StepRule>().unwrap(), StepRule::Ratio(2.0));
        assert_eq!("N".parse::<StepRule>().unwrap(), StepRule::Ratio(1.0));
        assert_eq!("0.5*N".parse::<StepRule>().unwrap(), StepRule::Ratio(0.5));
        assert_eq!("64".parse::<StepRule>().unwrap(), StepRule::Fixed(64));
        assert!("0".parse::<StepRule>().is_err());
        assert!("xN".parse::<StepRule>().is_err());
        assert_eq!(StepRule::Ratio(2.0).steps(16), 32);
        assert_eq!(StepRule::Ratio(0.1).steps(8), 1);
    }

    #[test]
    fn panel_rule_parsing() {
        assert_eq!("M".parse::<PanelRule>().unwrap(), PanelRule::Multiple(1));
        assert_eq!("4M".parse::<PanelRule>().unwrap().panels(10), 40);
        assert_eq!("100".parse::<PanelRule>().unwrap().panels(10), 100);
        assert!("0M".parse::<PanelRule>().is_err());
    }

    #[test]
    fn file_keys_and_overrides() {
        let file = RawConfig::parse(
            "dimension = 2\nN_list = [8, 16]\nM_rule = \"N\"\nT = 0.2\nmethod_list = [\"shooting\", \"pure-arnoldi\"]\nk_rule = \"auto:1e-6\"\nseed_mode = \"shared-basis\"\n",
        )
        .unwrap();
        let flags = RawConfig { fp_tol: Some(1e-8), dimension: Some(3), ..RawConfig::default() };
        let cfg = Config::resolve(&file.merge(flags), Study::Converge).unwrap();
        assert_eq!(cfg.dimension, 3);
        assert_eq!(cfg.n_list, vec![8, 16]);
        assert_eq!(cfg.horizon, 0.2);
        assert_eq!(cfg.methods, vec![Method::Shooting, Method::PureArnoldi]);
        assert_eq!(cfg.k_rule, RankRule::Auto { target: 1e-6 });
        assert_eq!(cfg.seed_mode, SeedMode::SharedBasis);
        assert_eq!(cfg.fp_tol, 1e-8);
        // round trip through the manifest syntax
        let again = Config::resolve(&RawConfig::parse(&cfg.to_toml()).unwrap(), Study::Converge).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn bad_config_is_rejected() {
        assert!(RawConfig::parse("dimensions = 2").is_err());
        for text in [
            "dimension = 4",
            "N_list = []",
            "T = -1.0",
            "method_list = [\"newton\"]",
            "fp_tol = 0.0",
            "error_norm = \"l2\"",
        ] {
            let raw = RawConfig::parse(text).unwrap();
            let err = Config::resolve(&raw, Study::Converge).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}");
        }
    }

    #[test]
    fn study_defaults() {
        let cost = Config::resolve(&RawConfig::default(), Study::Cost).unwrap();
        assert_eq!(cost.dimension, 2);
        assert_eq!(cost.k_rule, RankRule::Multiple(2.0));
        let decay = Config::resolve(&RawConfig::default(), Study::Decay).unwrap();
        assert_eq!((decay.dimension, decay.n_list.clone()), (2, vec![40]));
        let conv = Config::resolve(&RawConfig::default(), Study::Converge).unwrap();
        assert_eq!(conv.k_rule, RankRule::Subdivisions);
        assert_eq!(conv.m_rule, StepRule::Ratio(2.0));
        assert_eq!(conv.error_norm, ErrorNorm::MaxRelative);
    }
}
