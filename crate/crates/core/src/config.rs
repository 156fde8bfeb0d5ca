//! Flat `key = value` configuration files.
//!
//! One pair per line; `#` starts a comment. Numbers accept fractions such as
//! `1/50`. A file either describes a single run or a convergence grid:
//!
//! ```text
//! # single run
//! problem = traveling_circle
//! n = 32
//! dt = 1/50
//! tmax = 0.1
//!
//! # grid: mode = full | diagonal
//! mode = diagonal
//! problem = traveling_circle
//! degree = 2
//! n_list = 16, 32, 64
//! dt_ratio = 32/100      # dt = dt_ratio / n; or give dt_list
//! tmax = 0.1
//! ```
//!
//! Optional keys: `degree` (1), `gamma_D` (1 for P1, 10 for P2), `gamma_g`
//! (1e-3), `delta` (4·dt), `solver_tol` (1e-10), `r2` (0.09), `out`, `vtk`.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::experiment::{ExperimentGrid, GridMode};
use crate::manufactured::ProblemId;
use crate::timestepper::{default_gamma_d, RunConfig, DEFAULT_GAMMA_G, DEFAULT_R2};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Run {
        run: RunConfig,
        out: Option<PathBuf>,
    },
    Grid(ExperimentGrid),
}

const KEYS: &[&str] = &[
    "mode", "problem", "n", "dt", "tmax", "degree", "gamma_D", "gamma_g", "delta", "solver_tol", "r2",
    "out", "vtk", "n_list", "dt_list", "dt_ratio",
];

struct Entries {
    map: HashMap<String, (usize, String)>,
    last_line: usize,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Parses a real number or a fraction `a/b`.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(line, format!("expected 'key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(line, format!("unknown key '{key}'")));
            }
            if value.is_empty() {
                return Err(err(line, format!("empty value for '{key}'")));
            }
            if map.insert(key.to_string(), (line, value.to_string())).is_some() {
                return Err(err(line, format!("duplicate key '{key}'")));
            }
        }
        Ok(Self { map, last_line })
    }

    fn raw(&self, key: &str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn required(&self, key: &str) -> Result<&(usize, String)> {
        self.raw(key)
            .ok_or_else(|| err(self.last_line, format!("missing required key '{key}'")))
    }

    fn line(&self, key: &str) -> usize {
        self.raw(key).map_or(self.last_line, |e| e.0)
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(line, v)| parse_number(v).ok_or_else(|| err(*line, format!("'{key}' expects a number, got '{v}'"))))
            .transpose()
    }

    fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.number(key)? {
            Some(v) if !(v > 0.0) => Err(err(self.line(key), format!("'{key}' must be positive, got {v}"))),
            other => Ok(other),
        }
    }

    fn integer(&self, key: &str) -> Result<Option<usize>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<usize>()
                    .map_err(|_| err(*line, format!("'{key}' expects a non-negative integer, got '{v}'")))
            })
            .transpose()
    }

    fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|(line, v)| {
                v.split(',')
                    .map(|item| parse(item.trim()).ok_or_else(|| err(*line, format!("bad entry '{}' in '{key}'", item.trim()))))
                    .collect()
            })
            .transpose()
    }

    fn boolean(&self, key: &str) -> Result<Option<bool>> {
        self.raw(key)
            .map(|(line, v)| match v.as_str() {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                other => Err(err(*line, format!("'{key}' expects true or false, got '{other}'"))),
            })
            .transpose()
    }
}

/// Parses and validates a configuration file's contents.
pub fn parse_config(text: &str) -> Result<Config> {
    let e = Entries::parse(text)?;
    let (pline, pname) = e.required("problem")?;
    let problem: ProblemId = pname
        .parse()
        .map_err(|x: Error| err(*pline, x.to_string()))?;
    let degree = e.integer("degree")?.unwrap_or(1);
    if !(1..=2).contains(&degree) {
        return Err(err(e.line("degree"), format!("degree must be 1 or 2, got {degree}")));
    }
    let t_max = e.positive("tmax")?.ok_or_else(|| err(e.last_line, "missing required key 'tmax'"))?;
    let mut base = RunConfig::new(problem, 1, t_max, degree);
    base.t_max = t_max;
    base.gamma_d = e.positive("gamma_D")?.unwrap_or(default_gamma_d(degree));
    base.gamma_g = e.positive("gamma_g")?.unwrap_or(DEFAULT_GAMMA_G);
    base.delta = e.positive("delta")?;
    base.solver_tol = e.positive("solver_tol")?.unwrap_or(1e-10);
    base.r2 = e.positive("r2")?.unwrap_or(DEFAULT_R2);
    let out = e.raw("out").map(|(_, v)| PathBuf::from(v));
    let vtk = e.boolean("vtk")?.unwrap_or(false);
    let manufactured = base
        .problem()
        .map_err(|x| err(e.line("r2"), x.to_string()))?;

    let mode = e.raw("mode").map_or("single", |(_, v)| v.as_str());
    match mode {
        "single" => {
            for key in ["n_list", "dt_list", "dt_ratio"] {
                if e.raw(key).is_some() {
                    return Err(err(e.line(key), format!("'{key}' is only allowed in grid mode")));
                }
            }
            let mut run = base;
            run.n = e.integer("n")?.ok_or_else(|| err(e.last_line, "missing required key 'n'"))?;
            run.dt = e.number("dt")?.ok_or_else(|| err(e.last_line, "missing required key 'dt'"))?;
            if vtk {
                run.vtk_dir = Some(out.clone().unwrap_or_else(|| PathBuf::from(".")).join("vtk"));
            }
            run.validate(&manufactured)
                .map_err(|x| err(e.line("dt"), x.to_string()))?;
            Ok(Config::Run { run, out })
        }
        "full" | "diagonal" => {
            for key in ["n", "dt"] {
                if e.raw(key).is_some() {
                    return Err(err(e.line(key), format!("'{key}' is not allowed in grid mode; use '{key}_list'")));
                }
            }
            let mode = if mode == "full" { GridMode::Full } else { GridMode::Diagonal };
            let n_list = e
                .list("n_list", |s| s.parse::<usize>().ok())?
                .ok_or_else(|| err(e.last_line, "missing required key 'n_list'"))?;
            let dt_list = match (e.list("dt_list", parse_number)?, e.positive("dt_ratio")?) {
                (Some(_), Some(_)) => {
                    return Err(err(e.line("dt_ratio"), "give either 'dt_list' or 'dt_ratio', not both"))
                }
                (Some(l), None) => l,
                (None, Some(ratio)) if mode == GridMode::Diagonal => {
                    n_list.iter().map(|&n| ratio / n as f64).collect()
                }
                (None, Some(_)) => return Err(err(e.line("dt_ratio"), "'dt_ratio' requires mode = diagonal")),
                (None, None) => return Err(err(e.last_line, "missing required key 'dt_list'")),
            };
            let grid = ExperimentGrid {
                mode,
                n_list,
                dt_list,
                base,
                out_dir: out,
                vtk,
            };
            let line = e.line("n_list");
            grid.validate().map_err(|x| err(line, x.to_string()))?;
            Ok(Config::Grid(grid))
        }
        other => Err(err(e.line("mode"), format!("mode must be single, full or diagonal, got '{other}'"))),
    }
}
