//! Line-based problem files: `[section]` headers, `key = value` pairs, `#` comments.

use std::collections::BTreeMap;
use std::fmt;

use crate::expr::{parse_expression, Expr, Var};

const SECTIONS: [(&str, &[&str]); 6] = [
    (
        "diffusion",
        &[
            "sigma2",
            "mu",
            "left",
            "right",
            "left_boundary",
            "right_boundary",
            "atoms",
            "start",
        ],
    ),
    (
        "reward",
        &[
            "G",
            "G_theta",
            "c",
            "c_theta",
            "theta_min",
            "theta_max",
            "side",
        ],
    ),
    ("discount", &["rho"]),
    (
        "numerics",
        &[
            "grid_points",
            "left_cutoff",
            "right_cutoff",
            "positive_factor",
            "additive_width",
            "shoot_tol",
            "max_shots",
            "theta_points",
            "theta_clip",
            "x_min",
            "x_max",
            "x_points",
        ],
    ),
    (
        "inverse",
        &[
            "V",
            "V_prime",
            "theta_star",
            "x_min",
            "x_max",
            "x_points",
            "x_grid",
            "extension_theta_star",
            "extension_min",
            "extension_max",
            "extension_points",
            "extension_grid",
            "extension_mode",
            "sigma2_below",
            "mu_below",
            "sigma2_above",
            "mu_above",
            "feasibility_condition",
            "check_theta_min",
            "check_theta_max",
        ],
    ),
    (
        "simulate",
        &[
            "n_paths",
            "dt",
            "t_max",
            "seed",
            "antithetic",
            "rule",
            "level",
            "theta",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = Result<T, ConfigError>;

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw key-value pairs per section, validated against the known schema.
#[derive(Debug, Clone, Default)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

impl Config {
    pub fn parse(text: &str) -> CResult<Self> {
        let mut cfg = Config::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.iter().any(|s| s.0 == name) {
                    return Err(ConfigError(format!(
                        "line {line_no}: unknown section [{name}]"
                    )));
                }
                if cfg.sections.contains_key(name) {
                    return Err(ConfigError(format!(
                        "line {line_no}: duplicate section [{name}]"
                    )));
                }
                cfg.sections.insert(name.to_string(), BTreeMap::new());
                current = Some(name.to_string());
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {line_no}: expected 'key = value', got '{line}'"
                )));
            };
            let Some(section) = &current else {
                return Err(ConfigError(format!(
                    "line {line_no}: key outside of any section"
                )));
            };
            let key = key.trim();
            let allowed = SECTIONS
                .iter()
                .find(|s| s.0 == section)
                .map(|s| s.1)
                .unwrap_or(&[]);
            if !allowed.contains(&key) {
                return Err(ConfigError(format!(
                    "line {line_no}: unknown key '{key}' in [{section}]"
                )));
            }
            let value = value.trim();
            let value = value
                .strip_prefix('"')
                .and_then(|v| v.strip_suffix('"'))
                .unwrap_or(value)
                .to_string();
            let map = cfg.sections.get_mut(section).expect("section exists");
            if map.contains_key(key) {
                return Err(ConfigError(format!(
                    "line {line_no}: duplicate key '{key}' in [{section}]"
                )));
            }
            map.insert(
                key.to_string(),
                Entry {
                    value,
                    line: line_no,
                },
            );
        }
        Ok(cfg)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    fn entry(&self, section: &str, key: &str) -> Option<&Entry> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    pub fn has(&self, section: &str, key: &str) -> bool {
        self.entry(section, key).is_some()
    }

    fn missing(section: &str, key: &str) -> ConfigError {
        ConfigError(format!("missing required key '{key}' in [{section}]"))
    }

    pub fn string(&self, section: &str, key: &str) -> Option<String> {
        self.entry(section, key).map(|e| e.value.clone())
    }

    pub fn expr(&self, section: &str, key: &str) -> CResult<Option<Expr>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        parse_expression(&e.value)
            .map(Some)
            .map_err(|err| ConfigError(format!("line {}: [{section}] {key}: {err}", e.line)))
    }

    pub fn require_expr(&self, section: &str, key: &str) -> CResult<Expr> {
        self.expr(section, key)?
            .ok_or_else(|| Self::missing(section, key))
    }

    /// An expression in `x` only.
    pub fn require_expr_x(&self, section: &str, key: &str) -> CResult<Expr> {
        let e = self.require_expr(section, key)?;
        self.no_var(section, key, &e, Var::Theta, "theta")?;
        Ok(e)
    }

    /// An expression in `theta` only.
    pub fn require_expr_theta(&self, section: &str, key: &str) -> CResult<Expr> {
        let e = self.require_expr(section, key)?;
        self.no_var(section, key, &e, Var::X, "x")?;
        Ok(e)
    }

    fn no_var(&self, section: &str, key: &str, e: &Expr, v: Var, name: &str) -> CResult<()> {
        if e.uses(v) {
            let line = self.entry(section, key).map_or(0, |e| e.line);
            return Err(ConfigError(format!(
                "line {line}: [{section}] {key} must not depend on {name}"
            )));
        }
        Ok(())
    }

    /// A number, `inf`/`-inf`, or a constant expression such as `2*pi`.
    pub fn number(&self, section: &str, key: &str) -> CResult<Option<f64>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        let bad = |why: String| ConfigError(format!("line {}: [{section}] {key}: {why}", e.line));
        match e.value.as_str() {
            "inf" | "+inf" => return Ok(Some(f64::INFINITY)),
            "-inf" => return Ok(Some(f64::NEG_INFINITY)),
            _ => {}
        }
        let ex = parse_expression(&e.value).map_err(|err| bad(err.to_string()))?;
        if ex.uses(Var::X) || ex.uses(Var::Theta) {
            return Err(bad("expected a constant".into()));
        }
        let v = ex.eval(0.0, 0.0).map_err(|err| bad(err.to_string()))?;
        if v.is_nan() {
            return Err(bad("value is not a number".into()));
        }
        Ok(Some(v))
    }

    pub fn require_number(&self, section: &str, key: &str) -> CResult<f64> {
        self.number(section, key)?
            .ok_or_else(|| Self::missing(section, key))
    }

    pub fn count(&self, section: &str, key: &str) -> CResult<Option<usize>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        e.value.parse::<usize>().map(Some).map_err(|_| {
            ConfigError(format!(
                "line {}: [{section}] {key}: expected a non-negative integer",
                e.line
            ))
        })
    }

    pub fn flag(&self, section: &str, key: &str) -> CResult<Option<bool>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(None);
        };
        match e.value.to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Ok(Some(true)),
            "false" | "no" | "0" => Ok(Some(false)),
            _ => Err(ConfigError(format!(
                "line {}: [{section}] {key}: expected true or false",
                e.line
            ))),
        }
    }

    /// `x:mass` pairs separated by commas.
    pub fn pairs(&self, section: &str, key: &str) -> CResult<Vec<(f64, f64)>> {
        let Some(e) = self.entry(section, key) else {
            return Ok(Vec::new());
        };
        let bad = || {
            ConfigError(format!(
                "line {}: [{section}] {key}: expected 'x:mass, ...'",
                e.line
            ))
        };
        e.value
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|item| {
                let (a, b) = item.split_once(':').ok_or_else(bad)?;
                let a: f64 = a.trim().parse().map_err(|_| bad())?;
                let b: f64 = b.trim().parse().map_err(|_| bad())?;
                Ok((a, b))
            })
            .collect()
    }

    pub fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        self.entry(section, key).map(|e| e.line)
    }
}
