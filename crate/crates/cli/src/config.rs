//! The run configuration file.
//!
//! One TOML file describes one run:
//!
//! ```toml
//! seed = 1
//! grid_n = 4096
//!
//! [system]
//! x0 = 0.75
//! y0 = 0.5
//!
//! [p0]
//! family = "constant"
//! p = 0.5
//!
//! [experiments.slln]
//! steps = 200000
//! ```
//!
//! Everything except `system` and `p0` has a default. Unknown keys are
//! rejected. `grid_n` is the grid size of every grid-based experiment whose
//! section does not set its own.

use std::path::PathBuf;

use amz_core::experiments::{ExperimentsConfig, Setup};
use amz_core::field::ProbField;
use amz_core::ifs::{AssumptionReport, SystemParams};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_GRID_N: usize = 4096;

/// Sections whose experiments run on a grid.
const GRID_SECTIONS: [&str; 4] = ["stationary", "stability", "slln", "equicontinuity"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub x0: f64,
    pub y0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed", with = "seed_repr")]
    pub seed: u64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub system: SystemSpec,
    pub p0: ProbField,
    #[serde(default)]
    pub experiments: ExperimentsConfig,
}

/// TOML integers are signed, so seeds above `i64::MAX` are written as
/// decimal strings. Both forms are accepted on input.
mod seed_repr {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v).map_err(|_| de::Error::custom(format!("seed {v} is negative"))),
            Repr::Text(t) => t
                .parse()
                .map_err(|_| de::Error::custom(format!("seed {t:?} is not an unsigned 64-bit integer"))),
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_grid_n() -> usize {
    DEFAULT_GRID_N
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("config parse error: {0}")]
    Syntax(String),
    #[error("config validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

fn parse_error(text: &str, err: toml::de::Error) -> ConfigError {
    match err.span() {
        Some(span) => {
            let (line, column) = line_col(text, span.start);
            ConfigError::Parse {
                line,
                column,
                message: err.message().trim().to_string(),
            }
        }
        None => ConfigError::Syntax(err.message().trim().to_string()),
    }
}

/// Parse and validate a config.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    // The typed pass reports errors with positions; the table pass then
    // fills per-section grid sizes from the global one.
    let typed: RunConfig = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let experiments = table
        .entry("experiments")
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    if let toml::Value::Table(sections) = experiments {
        for name in GRID_SECTIONS {
            let section = sections
                .entry(name)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            if let toml::Value::Table(s) = section {
                s.entry("grid_n")
                    .or_insert(toml::Value::Integer(typed.grid_n as i64));
            }
        }
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
    validate(&cfg)?;
    Ok(cfg)
}

/// Serialize in the same grammar; `parse_config(&to_toml(c)) == c`.
pub fn to_toml(cfg: &RunConfig) -> String {
    toml::to_string(cfg).expect("run configs are always representable in TOML")
}

/// The standing assumptions (which include the field checks) and the
/// grid size, with every failure listed.
pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    let mut problems = Vec::new();
    let report = AssumptionReport::evaluate(cfg.system.x0, cfg.system.y0, &cfg.p0);
    if !report.all_ok() {
        for (ok, name) in [
            (report.a1_ok, "A1 (breakpoint region)"),
            (report.a2_ok, "A2 (Dini continuity)"),
            (report.a3_ok, "A3 (probabilities inside (0, 1))"),
            (report.a4_ok, "A4 (positive endpoint exponents)"),
        ] {
            if !ok {
                problems.push(format!("assumption {name} fails"));
            }
        }
        problems.extend(report.detail.iter().cloned());
    }
    if cfg.grid_n < amz_core::transfer::MIN_GRID {
        problems.push(format!(
            "grid_n = {} is below the minimum {}",
            cfg.grid_n,
            amz_core::transfer::MIN_GRID
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Validation(problems))
    }
}

impl RunConfig {
    /// Minimal E1 config with every default filled in.
    pub fn e1() -> Self {
        parse_config(E1_TOML).expect("the built-in E1 config is valid")
    }

    /// The experiment context; only call on a validated config.
    pub fn setup(&self) -> Setup {
        let params = SystemParams::new(self.system.x0, self.system.y0).expect("validated config");
        Setup::new(params, self.p0.clone(), self.seed)
    }
}

/// `(x0, y0) = (0.75, 0.5)`, constant `p0 = 1/2`.
pub const E1_TOML: &str = r#"[system]
x0 = 0.75
y0 = 0.5

[p0]
family = "constant"
p = 0.5
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::e1();
        assert_eq!(cfg.seed, DEFAULT_SEED);
        assert_eq!(cfg.grid_n, DEFAULT_GRID_N);
        assert_eq!(cfg.experiments.stationary.tol, 1e-6);
        assert_eq!(cfg.experiments.slln.grid_n, DEFAULT_GRID_N);
    }

    #[test]
    fn global_grid_fills_unset_sections_only() {
        let text = format!("grid_n = 512\n{E1_TOML}\n[experiments.stability]\ngrid_n = 256\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(cfg.experiments.stability.grid_n, 256);
        assert_eq!(cfg.experiments.stationary.grid_n, 512);
        assert_eq!(cfg.experiments.equicontinuity.grid_n, 512);
    }

    #[test]
    fn large_seeds_survive_a_round_trip() {
        let mut cfg = RunConfig::e1();
        cfg.seed = u64::MAX;
        let text = to_toml(&cfg);
        assert!(text.contains("seed = \"18446744073709551615\""));
        assert_eq!(parse_config(&text).unwrap().seed, u64::MAX);
        assert!(parse_config(&format!("seed = -1\n{E1_TOML}")).is_err());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
