//! Flat `key = value` run configuration with command-line overrides.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pcurl_core::mms::cases;
use pcurl_core::solver::SolveConfig;

use crate::error::CliError;

/// Environment variable prepended to a relative `output_dir`.
pub const OUTPUT_ROOT_ENV: &str = "PCURL_OUTPUT_ROOT";

pub const KEYS: [&str; 23] = [
    "case",
    "divisions",
    "eps_schedule",
    "extents",
    "levels",
    "linear_maxit",
    "linear_solver",
    "linear_tol",
    "max_halvings",
    "max_newton",
    "newton_tol",
    "output_dir",
    "p",
    "p_schedule",
    "preconditioner",
    "projection_tol",
    "quad_order",
    "samples",
    "seed",
    "threads",
    "verify_p",
    "friedrich_max_iter",
    "eig_tol",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case: String,
    pub p: f64,
    pub solve: SolveConfig,
    pub divisions: [usize; 3],
    pub extents: [f64; 3],
    /// Refinement levels (cube divisions per axis); `None` picks the
    /// command's default.
    pub levels: Option<Vec<usize>>,
    pub quad_order: usize,
    pub verify_p: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    pub threads: usize,
    pub eig_tol: f64,
    pub friedrich_max_iter: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            case: "general_p".into(),
            p: 2.0,
            solve: SolveConfig::new(2.0),
            divisions: [4; 3],
            extents: [PI; 3],
            levels: None,
            quad_order: 4,
            verify_p: vec![2.0, 3.0, 4.0, 6.0, 10.0],
            samples: 100_000,
            seed: 0,
            threads: 1,
            eig_tol: 1e-12,
            friedrich_max_iter: 500,
            output_dir: PathBuf::from("pcurl-out"),
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`, got `{}`", i + 1, raw.trim())))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let v = v.trim();
    let bad = || CliError::Config(format!("{key}: cannot parse `{v}` as a number"));
    if let Some(k) = v.strip_suffix("pi") {
        let k = k.trim().trim_end_matches('*').trim();
        let factor = if k.is_empty() { 1.0 } else { k.parse::<f64>().map_err(|_| bad())? };
        return Ok(factor * PI);
    }
    v.parse::<f64>().map_err(|_| bad())
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim()
        .parse::<usize>()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{v}` as a nonnegative integer")))
}

fn list<T>(key: &str, v: &str, f: fn(&str, &str) -> Result<T, CliError>) -> Result<Vec<T>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| f(key, s)).collect()
}

fn triple<T: Copy>(key: &str, v: &str, f: fn(&str, &str) -> Result<T, CliError>) -> Result<[T; 3], CliError> {
    match list(key, v, f)?.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::Config(format!("{key}: expected one or three comma-separated values, got `{v}`"))),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies `pairs` in order over the defaults, then validates.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (k, v) in pairs {
            if !KEYS.contains(&k.as_str()) {
                return Err(CliError::Config(format!("unknown key `{k}`")));
            }
            map.insert(k.as_str(), v.as_str());
        }
        let mut c = RunConfig::default();
        let s = &mut c.solve;
        for (&k, &v) in &map {
            match k {
                "case" => c.case = v.to_string(),
                "divisions" => c.divisions = triple(k, v, parse_usize)?,
                "eps_schedule" => s.eps_schedule = list(k, v, parse_f64)?,
                "extents" => c.extents = triple(k, v, parse_f64)?,
                "levels" => c.levels = Some(list(k, v, parse_usize)?),
                "linear_maxit" => s.linear_maxit = parse_usize(k, v)?,
                "linear_solver" => s.linear_solver = v.to_string(),
                "linear_tol" => s.linear_tol = parse_f64(k, v)?,
                "max_halvings" => s.max_halvings = parse_usize(k, v)?,
                "max_newton" => s.max_newton = parse_usize(k, v)?,
                "newton_tol" => s.newton_tol = parse_f64(k, v)?,
                "output_dir" => c.output_dir = PathBuf::from(v),
                "p" => c.p = parse_f64(k, v)?,
                "p_schedule" => s.p_schedule = list(k, v, parse_f64)?,
                "preconditioner" => s.preconditioner = v.to_string(),
                "projection_tol" => s.projection_tol = parse_f64(k, v)?,
                "quad_order" => c.quad_order = parse_usize(k, v)?,
                "samples" => c.samples = parse_usize(k, v)?,
                "seed" => {
                    c.seed = v
                        .parse()
                        .map_err(|_| CliError::Config(format!("seed: cannot parse `{v}` as an unsigned integer")))?
                }
                "threads" => c.threads = parse_usize(k, v)?,
                "verify_p" => c.verify_p = list(k, v, parse_f64)?,
                "eig_tol" => c.eig_tol = parse_f64(k, v)?,
                "friedrich_max_iter" => c.friedrich_max_iter = parse_usize(k, v)?,
                _ => unreachable!("key list and match arms disagree on `{k}`"),
            }
        }
        c.solve.p_target = c.p;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut pairs = parse_pairs(&text)?;
        pairs.extend_from_slice(overrides);
        Self::from_pairs(&pairs)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |m: String| Err(CliError::Config(m));
        if !(self.p >= 2.0) || !self.p.is_finite() {
            return cfg(format!("p must satisfy p >= 2 (finite), got {}", self.p));
        }
        self.solve.validate().map_err(|e| CliError::Config(e.to_string()))?;
        cases()
            .get(&self.case)
            .and_then(|family| family.build(self.p))
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.divisions.contains(&0) {
            return cfg(format!("divisions must be positive, got {:?}", self.divisions));
        }
        if self.extents.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return cfg(format!("extents must be positive, got {:?}", self.extents));
        }
        if let Some(levels) = &self.levels {
            if levels.is_empty() || levels.contains(&0) || levels.windows(2).any(|w| w[1] <= w[0]) {
                return cfg(format!("levels must be positive and strictly increasing, got {levels:?}"));
            }
        }
        if ![1, 2, 4].contains(&self.quad_order) {
            return cfg(format!("quad_order must be 1, 2 or 4, got {}", self.quad_order));
        }
        if self.verify_p.is_empty() || self.verify_p.iter().any(|&p| !(p >= 2.0) || !p.is_finite()) {
            return cfg(format!("verify_p entries must satisfy p >= 2, got {:?}", self.verify_p));
        }
        if self.samples == 0 || self.threads == 0 || self.friedrich_max_iter == 0 {
            return cfg("samples, threads and friedrich_max_iter must be positive".into());
        }
        if !(self.eig_tol > 0.0 && self.eig_tol < 1.0) {
            return cfg(format!("eig_tol must lie in (0, 1), got {}", self.eig_tol));
        }
        Ok(())
    }

    /// Output directory with the environment root applied to relative paths.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.output_dir.is_relative() && !root.is_empty() => PathBuf::from(root).join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn levels_or(&self, default: &[usize]) -> Vec<usize> {
        self.levels.clone().unwrap_or_else(|| default.to_vec())
    }

    /// Every key with its resolved value, parseable by [`parse_pairs`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let s = &self.solve;
        let mut out: Vec<(&str, String)> = vec![
            ("case", self.case.clone()),
            ("divisions", join(&self.divisions)),
            ("eps_schedule", join(&s.eps_schedule)),
            ("extents", join(&self.extents)),
            ("linear_maxit", s.linear_maxit.to_string()),
            ("linear_solver", s.linear_solver.clone()),
            ("linear_tol", s.linear_tol.to_string()),
            ("max_halvings", s.max_halvings.to_string()),
            ("max_newton", s.max_newton.to_string()),
            ("newton_tol", s.newton_tol.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("p", self.p.to_string()),
            ("p_schedule", join(&s.p_schedule)),
            ("preconditioner", s.preconditioner.clone()),
            ("projection_tol", s.projection_tol.to_string()),
            ("quad_order", self.quad_order.to_string()),
            ("samples", self.samples.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("verify_p", join(&self.verify_p)),
            ("eig_tol", self.eig_tol.to_string()),
            ("friedrich_max_iter", self.friedrich_max_iter.to_string()),
        ];
        if let Some(levels) = &self.levels {
            out.push(("levels", join(levels)));
        }
        out.sort_by(|a, b| a.0.cmp(b.0));
        out.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn echo(&self, command: &str) -> String {
        let mut s = format!("# pcurl {command}\n");
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
