//! Scenario configuration: `key=value` lines, `#` comments, documented defaults.

use std::path::PathBuf;

use crate::error::{LabError, Result};
use crate::harmonic::SolverOptions;
use crate::variation::CertifyOptions;

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub genus: usize,
    pub cover_degree: usize,
    pub refine: usize,
    pub q_seed: u32,
    pub q_truncation: usize,
    /// `None` is `auto`.
    pub t_max: Option<f64>,
    pub grid_points: usize,
    pub solver_tol: f64,
    pub solver_max_iter: usize,
    pub kernel_kappa: f64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            genus: 2,
            cover_degree: 2,
            refine: 3,
            q_seed: 0,
            q_truncation: 6,
            t_max: None,
            grid_points: 5,
            solver_tol: 1e-10,
            solver_max_iter: 500,
            kernel_kappa: 1e-10,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

const KEYS: [&str; 12] = [
    "genus",
    "cover_degree",
    "refine",
    "q_seed",
    "q_truncation",
    "t_max",
    "grid_points",
    "solver_tol",
    "solver_max_iter",
    "kernel_kappa",
    "seed",
    "out_dir",
];

fn num<T: std::str::FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| LabError::Config { line, message: format!("cannot parse {key} value {v:?}") })
}

/// Parses and validates a configuration; errors name the offending line (0 when a
/// constraint involves no single line).
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut c = ScenarioConfig::default();
    let mut seen = std::collections::HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| LabError::Config { line, message: format!("expected key=value, got {body:?}") })?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(LabError::Config { line, message: format!("unknown key {k:?}") });
        }
        if let Some(prev) = seen.insert(k.to_string(), line) {
            return Err(LabError::Config { line, message: format!("{k} already set on line {prev}") });
        }
        match k {
            "genus" => c.genus = num(v, line, k)?,
            "cover_degree" => c.cover_degree = num(v, line, k)?,
            "refine" => c.refine = num(v, line, k)?,
            "q_seed" => c.q_seed = num(v, line, k)?,
            "q_truncation" => c.q_truncation = num(v, line, k)?,
            "t_max" => c.t_max = if v == "auto" { None } else { Some(num(v, line, k)?) },
            "grid_points" => c.grid_points = num(v, line, k)?,
            "solver_tol" => c.solver_tol = num(v, line, k)?,
            "solver_max_iter" => c.solver_max_iter = num(v, line, k)?,
            "kernel_kappa" => c.kernel_kappa = num(v, line, k)?,
            "seed" => c.seed = num(v, line, k)?,
            "out_dir" => c.out_dir = PathBuf::from(v),
            _ => unreachable!(),
        }
    }
    let at = |k: &str| seen.get(k).copied().unwrap_or(0);
    let bad = |k: &str, message: &str| Err(LabError::Config { line: at(k), message: format!("{k}: {message}") });
    if c.genus < 2 {
        return bad("genus", "must be at least 2");
    }
    if c.cover_degree < 1 {
        return bad("cover_degree", "must be positive");
    }
    if c.grid_points < 5 || c.grid_points % 2 == 0 {
        return bad("grid_points", "must be odd and at least 5");
    }
    if !(c.solver_tol > 0.0) {
        return bad("solver_tol", "must be positive");
    }
    if c.solver_max_iter == 0 {
        return bad("solver_max_iter", "must be positive");
    }
    if !(c.kernel_kappa > 0.0) {
        return bad("kernel_kappa", "must be positive");
    }
    if let Some(t) = c.t_max {
        if !(t > 0.0) {
            return bad("t_max", "must be positive or auto");
        }
    }
    Ok(c)
}

impl ScenarioConfig {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.solver_tol, max_iter: self.solver_max_iter }
    }

    pub fn certify_options(&self) -> CertifyOptions {
        CertifyOptions {
            solver: self.solver(),
            q_truncation: self.q_truncation,
            grid_points: self.grid_points,
            t_max: self.t_max,
            kernel_kappa: self.kernel_kappa,
            ..CertifyOptions::default()
        }
    }

    /// The configuration as `config.key: value` lines, embedded in every report.
    pub fn to_report_lines(&self) -> String {
        let t = self.t_max.map_or("auto".to_string(), |t| format!("{t:e}"));
        [
            ("genus", self.genus.to_string()),
            ("cover_degree", self.cover_degree.to_string()),
            ("refine", self.refine.to_string()),
            ("q_seed", self.q_seed.to_string()),
            ("q_truncation", self.q_truncation.to_string()),
            ("t_max", t),
            ("grid_points", self.grid_points.to_string()),
            ("solver_tol", format!("{:e}", self.solver_tol)),
            ("solver_max_iter", self.solver_max_iter.to_string()),
            ("kernel_kappa", format!("{:e}", self.kernel_kappa)),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
        ]
        .iter()
        .map(|(k, v)| format!("config.{k}: {v}\n"))
        .collect()
    }
}
