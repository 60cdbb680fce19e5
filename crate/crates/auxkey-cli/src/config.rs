//! The line-based scenario config format: one `key = value` per line,
//! `#` comments, blank lines ignored. Unknown keys, duplicate keys, and
//! malformed values are all rejected with the offending line number, so a
//! typo'd scenario fails loudly instead of silently running defaults.

use auxkey_core::{AuxPlacement, Boundary, SimConfig};
use std::fmt;
use std::path::Path;

#[derive(Debug, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line number; 0 for whole-file problems (I/O, validation).
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line > 0 {
            write!(f, "config line {}: {}", self.line, self.message)
        } else {
            write!(f, "config: {}", self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError {
        line,
        message: message.into(),
    }
}

/// Parse a scenario on top of the built-in defaults.
pub fn parse(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(lineno, format!("expected `key = value`, got {line:?}")));
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(err(lineno, format!("key `{key}` has no value")));
        }
        if seen.contains(&key) {
            return Err(err(lineno, format!("key `{key}` set more than once")));
        }

        macro_rules! num {
            ($ty:ty) => {
                value.parse::<$ty>().map_err(|e| {
                    err(lineno, format!("key `{key}`: cannot parse {value:?} ({e})"))
                })?
            };
        }
        match key {
            "n" => cfg.n = num!(u64),
            "m" => cfg.m = num!(u64),
            "d" => cfg.d = num!(u64),
            "rho_m" => cfg.rho_m = num!(f64),
            "boundary" => cfg.boundary = parse_boundary(value).map_err(|m| err(lineno, m))?,
            "hops" => {
                cfg.hops = num!(u8);
                if cfg.hops > 1 {
                    return Err(err(lineno, format!("key `hops` must be 0 or 1, got {value}")));
                }
            }
            "mobility_rounds" => cfg.mobility_rounds = num!(u32),
            "mobility_step_factor" => cfg.mobility_step_factor = num!(f64),
            "seed" => cfg.seed = num!(u64),
            "trials" => cfg.trials = num!(u32),
            "aux_placement" => {
                cfg.aux_placement = match value {
                    "cells" => AuxPlacement::Cells,
                    "uniform" => AuxPlacement::Uniform,
                    other => {
                        return Err(err(
                            lineno,
                            format!("key `aux_placement` must be cells or uniform, got {other:?}"),
                        ))
                    }
                }
            }
            unknown => return Err(err(lineno, format!("unknown key `{unknown}`"))),
        }
        seen.push(key);
    }
    cfg.validate()
        .map_err(|e| err(0, e.to_string()))?;
    Ok(cfg)
}

pub fn parse_boundary(value: &str) -> Result<Boundary, String> {
    match value {
        "torus" => Ok(Boundary::Toroidal),
        "bounded" => Ok(Boundary::Bounded),
        other => Err(format!("boundary must be torus or bounded, got {other:?}")),
    }
}

pub fn load(path: &Path) -> Result<SimConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| err(0, format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

/// The canonical `key = value` rendering, used for the manifest snapshot.
pub fn render(cfg: &SimConfig) -> String {
    let boundary = match cfg.boundary {
        Boundary::Toroidal => "torus",
        Boundary::Bounded => "bounded",
    };
    let placement = match cfg.aux_placement {
        AuxPlacement::Cells => "cells",
        AuxPlacement::Uniform => "uniform",
    };
    format!(
        "n = {}\nm = {}\nd = {}\nrho_m = {}\nboundary = {}\nhops = {}\n\
         mobility_rounds = {}\nmobility_step_factor = {}\nseed = {}\ntrials = {}\n\
         aux_placement = {}\n",
        cfg.n,
        cfg.m,
        cfg.d,
        cfg.rho_m,
        boundary,
        cfg.hops,
        cfg.mobility_rounds,
        cfg.mobility_step_factor,
        cfg.seed,
        cfg.trials,
        placement
    )
}
