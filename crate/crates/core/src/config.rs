//! Sectioned `key = value` run configuration.
//!
//! ```text
//! [geometry]
//! kind = laminate        # or disk
//! theta = 0.5
//! [micro]
//! epsilon = 1/4, 1/8, 1/16
//! ```

use crate::cell::GammaSign;
use crate::coefficients::{CoefficientSet, TensorField};
use crate::effective::BConvention;
use crate::error::{Error, Result};
use crate::expr::{parse_expression, Symbol};
use crate::fem::SolverOptions;
use crate::geometry::{cells_per_side, GeometrySpec};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::PathBuf;

const MAX_CELL_N: usize = 512;
const MAX_MACRO_N: usize = 512;

/// Coefficient expressions kept as text so a config can be echoed verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientText {
    pub conductivity: [[[String; 2]; 2]; 2],
    pub reaction: [String; 2],
    pub alpha: String,
    pub source: [String; 2],
}

impl Default for CoefficientText {
    fn default() -> Self {
        let id = || [["1".to_string(), "0".to_string()], ["0".to_string(), "1".to_string()]];
        CoefficientText {
            conductivity: [id(), id()],
            reaction: ["1".into(), "1".into()],
            alpha: "cos(2*pi*y1)".into(),
            source: ["1".into(), "sin(pi*x1)".into()],
        }
    }
}

impl CoefficientText {
    pub fn build(&self) -> Result<CoefficientSet> {
        let cell = |s: &str| parse_expression(s, Symbol::CELL);
        let tensor = |p: usize| -> Result<TensorField> {
            let t = &self.conductivity[p];
            Ok(TensorField {
                entries: [[cell(&t[0][0])?, cell(&t[0][1])?], [cell(&t[1][0])?, cell(&t[1][1])?]],
            })
        };
        let src = |s: &str| parse_expression(s, Symbol::MACRO);
        Ok(CoefficientSet {
            conductivity: [tensor(0)?, tensor(1)?],
            reaction: [cell(&self.reaction[0])?, cell(&self.reaction[1])?],
            alpha: cell(&self.alpha)?,
            source: [src(&self.source[0])?, src(&self.source[1])?],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySpec,
    pub cell_n: usize,
    pub compat_tol: f64,
    pub gamma_sign: GammaSign,
    pub convention: BConvention,
    pub validation_grid: usize,
    pub macro_n: usize,
    pub micro_n: usize,
    /// Cells per side K for each ε = 1/K, in the order given.
    pub micro_cells: Vec<usize>,
    /// Cap on K·N_micro.
    pub micro_size_cap: usize,
    pub coefficients: CoefficientText,
    pub solver: SolverOptions,
    pub output_dir: PathBuf,
    pub write_fields: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometrySpec::Laminate { theta: 0.5 },
            cell_n: 64,
            compat_tol: 1e-8,
            gamma_sign: GammaSign::Derived,
            convention: BConvention::RemarkConsistent,
            validation_grid: 32,
            macro_n: 32,
            micro_n: 8,
            micro_cells: vec![4, 8, 16],
            micro_size_cap: 1024,
            coefficients: CoefficientText::default(),
            solver: SolverOptions {
                tol: 1e-10,
                max_iter: 20000,
                direct_cap: 20000,
                keep_directions: 0,
            },
            output_dir: PathBuf::from("out"),
            write_fields: true,
        }
    }
}

impl RunConfig {
    pub fn epsilons(&self) -> Vec<f64> {
        self.micro_cells.iter().map(|&k| 1.0 / k as f64).collect()
    }

    /// Resolved configuration text; parsing it yields `self` again.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[geometry]");
        match self.geometry {
            GeometrySpec::Laminate { theta } => {
                let _ = writeln!(s, "kind = laminate\ntheta = {theta:?}");
            }
            GeometrySpec::Disk { radius, n_seg } => {
                let _ = writeln!(s, "kind = disk\nradius = {radius:?}\nn_seg = {n_seg}");
            }
        }
        let _ = writeln!(
            s,
            "\n[cell]\nn = {}\ncompat_tol = {:?}\ngamma_sign = {}\nconvention = {}\nvalidation_grid = {}",
            self.cell_n, self.compat_tol, self.gamma_sign, self.convention, self.validation_grid
        );
        let _ = writeln!(s, "\n[macro]\nn = {}", self.macro_n);
        let eps: Vec<String> = self.micro_cells.iter().map(|k| format!("1/{k}")).collect();
        let _ = writeln!(
            s,
            "\n[micro]\nn = {}\nepsilon = {}\nsize_cap = {}",
            self.micro_n,
            eps.join(", "),
            self.micro_size_cap
        );
        let c = &self.coefficients;
        let _ = writeln!(s, "\n[coefficients]");
        for p in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let _ = writeln!(s, "A{}_{}{} = {}", p + 1, i + 1, j + 1, c.conductivity[p][i][j]);
                }
            }
        }
        let _ = writeln!(
            s,
            "a1 = {}\na2 = {}\nalpha = {}\nf1 = {}\nf2 = {}",
            c.reaction[0], c.reaction[1], c.alpha, c.source[0], c.source[1]
        );
        let _ = writeln!(
            s,
            "\n[solver]\ntol = {:?}\nmax_iter = {}\ndirect_cap = {}",
            self.solver.tol, self.solver.max_iter, self.solver.direct_cap
        );
        let _ = writeln!(
            s,
            "\n[output]\ndir = {}\nwrite_fields = {}",
            self.output_dir.display(),
            self.write_fields
        );
        s
    }
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| bad(line, format!("malformed value `{v}` for `{key}`")))
}

fn epsilon_entry(line: usize, v: &str) -> Result<usize> {
    let value = match v.split_once('/') {
        Some((a, b)) => {
            let a: f64 = num(line, "epsilon", a.trim())?;
            let b: f64 = num(line, "epsilon", b.trim())?;
            a / b
        }
        None => num(line, "epsilon", v)?,
    };
    cells_per_side(value).map_err(|e| bad(line, format!("epsilon = {v}: {e}")))
}

/// Parses configuration text; missing keys take the acceptance defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen = HashSet::new();
    let mut kind: Option<(usize, String)> = None;
    let mut theta = 0.5;
    let mut radius = 0.25;
    let mut n_seg = 64usize;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad(line, format!("malformed section header `{content}`")))?
                .trim();
            if !["geometry", "cell", "macro", "micro", "coefficients", "solver", "output"]
                .contains(&name)
            {
                return Err(bad(line, format!("unknown section `{name}`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| bad(line, format!("expected `key = value`, got `{content}`")))?;
        let (key, v) = (key.trim(), value.trim());
        if section.is_empty() {
            return Err(bad(line, format!("`{key}` outside any section")));
        }
        if !seen.insert(format!("{section}.{key}")) {
            return Err(bad(line, format!("duplicate key `{key}` in [{section}]")));
        }
        let c = &mut cfg.coefficients;
        match (section.as_str(), key) {
            ("geometry", "kind") => kind = Some((line, v.to_string())),
            ("geometry", "theta") => theta = num(line, key, v)?,
            ("geometry", "radius") => radius = num(line, key, v)?,
            ("geometry", "n_seg") => n_seg = num(line, key, v)?,
            ("cell", "n") => cfg.cell_n = num(line, key, v)?,
            ("cell", "compat_tol") => cfg.compat_tol = num(line, key, v)?,
            ("cell", "gamma_sign") => {
                cfg.gamma_sign = v.parse().map_err(|_| bad(line, format!("unknown gamma_sign `{v}`")))?
            }
            ("cell", "convention") => {
                cfg.convention = v.parse().map_err(|_| bad(line, format!("unknown convention `{v}`")))?
            }
            ("cell", "validation_grid") => cfg.validation_grid = num(line, key, v)?,
            ("macro", "n") => cfg.macro_n = num(line, key, v)?,
            ("micro", "n") => cfg.micro_n = num(line, key, v)?,
            ("micro", "epsilon") => {
                cfg.micro_cells = v
                    .split(',')
                    .map(|e| epsilon_entry(line, e.trim()))
                    .collect::<Result<_>>()?;
            }
            ("micro", "size_cap") => cfg.micro_size_cap = num(line, key, v)?,
            ("coefficients", k) => {
                let slot = match k {
                    "a1" => &mut c.reaction[0],
                    "a2" => &mut c.reaction[1],
                    "alpha" => &mut c.alpha,
                    "f1" => &mut c.source[0],
                    "f2" => &mut c.source[1],
                    _ => match k.as_bytes() {
                        [b'A', p @ (b'1' | b'2'), b'_', i @ (b'1' | b'2'), j @ (b'1' | b'2')] => {
                            &mut c.conductivity[(p - b'1') as usize][(i - b'1') as usize]
                                [(j - b'1') as usize]
                        }
                        _ => return Err(bad(line, format!("unknown key `{k}` in [coefficients]"))),
                    },
                };
                *slot = v.to_string();
                let symbols = if k.starts_with('f') { Symbol::MACRO } else { Symbol::CELL };
                parse_expression(v, symbols).map_err(|e| bad(line, format!("`{k}`: {e}")))?;
            }
            ("solver", "tol") => cfg.solver.tol = num(line, key, v)?,
            ("solver", "max_iter") => cfg.solver.max_iter = num(line, key, v)?,
            ("solver", "direct_cap") => cfg.solver.direct_cap = num(line, key, v)?,
            ("output", "dir") => cfg.output_dir = PathBuf::from(v),
            ("output", "write_fields") => cfg.write_fields = num(line, key, v)?,
            _ => return Err(bad(line, format!("unknown key `{key}` in [{section}]"))),
        }
    }

    let geometry_line = kind.as_ref().map_or(0, |k| k.0);
    cfg.geometry = match kind.as_ref().map_or("laminate", |k| k.1.as_str()) {
        "laminate" => GeometrySpec::Laminate { theta },
        "disk" => GeometrySpec::Disk { radius, n_seg },
        other => return Err(bad(geometry_line, format!("unknown geometry kind `{other}`"))),
    };
    check(&cfg, geometry_line)?;
    Ok(cfg)
}

fn check(cfg: &RunConfig, geometry_line: usize) -> Result<()> {
    cfg.geometry
        .validate()
        .map_err(|e| bad(geometry_line, e.to_string()))?;
    let range = |name: &str, v: usize, lo: usize, hi: usize| {
        if v < lo || v > hi {
            Err(bad(0, format!("{name} = {v} outside [{lo}, {hi}]")))
        } else {
            Ok(())
        }
    };
    range("cell n", cfg.cell_n, 4, MAX_CELL_N)?;
    range("macro n", cfg.macro_n, 2, MAX_MACRO_N)?;
    range("micro n", cfg.micro_n, 2, MAX_CELL_N)?;
    range("validation_grid", cfg.validation_grid, 8, 4096)?;
    if cfg.micro_cells.is_empty() {
        return Err(bad(0, "epsilon list is empty"));
    }
    for &k in &cfg.micro_cells {
        if k * cfg.micro_n > cfg.micro_size_cap {
            return Err(bad(
                0,
                format!("epsilon = 1/{k} with micro n {} exceeds size_cap {}", cfg.micro_n, cfg.micro_size_cap),
            ));
        }
    }
    if !(cfg.compat_tol > 0.0) || !(cfg.solver.tol > 0.0) {
        return Err(bad(0, "tolerances must be positive"));
    }
    if cfg.solver.max_iter == 0 {
        return Err(bad(0, "max_iter must be positive"));
    }
    Ok(())
}

/// Expressions in `cfg`, already known to parse.
pub fn coefficient_set(cfg: &RunConfig) -> Result<CoefficientSet> {
    cfg.coefficients.build()
}

impl From<&RunConfig> for crate::cell::CellOptions {
    fn from(cfg: &RunConfig) -> Self {
        crate::cell::CellOptions {
            compat_tol: cfg.compat_tol,
            gamma_sign: cfg.gamma_sign,
            solver: SolverOptions {
                tol: cfg.solver.tol.min(1e-12),
                ..cfg.solver
            },
        }
    }
}
