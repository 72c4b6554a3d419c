//! Flat `key = value` experiment configuration.

use std::fmt;

use ilab_core::{Partition, SpaceSpec, Vector};
use serde::Serialize;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("{source_name}:{line}:{column}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {value} is invalid, allowed {allowed}")]
    Range {
        field: &'static str,
        value: String,
        allowed: &'static str,
    },
    #[error("unknown experiment `{0}` (see `ilab list`)")]
    UnknownExperiment(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Partition presets accepted by `partition`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum PartitionPreset {
    /// Dyadic blocks `A_1..A_n`.
    Dyadic(usize),
    /// `count` consecutive blocks of `size` coordinates.
    Uniform { size: usize, count: usize },
}

impl PartitionPreset {
    pub fn build(&self) -> Partition {
        match self {
            PartitionPreset::Dyadic(n) => Partition::dyadic(*n),
            PartitionPreset::Uniform { size, count } => Partition::uniform(*size, *count),
        }
    }
}

impl fmt::Display for PartitionPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionPreset::Dyadic(n) => write!(f, "dyadic:{n}"),
            PartitionPreset::Uniform { size, count } => write!(f, "uniform:{size}x{count}"),
        }
    }
}

impl From<PartitionPreset> for String {
    fn from(p: PartitionPreset) -> Self {
        p.to_string()
    }
}

/// Space names accepted by `space`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(into = "String")]
pub enum SpaceName {
    Lp(f64),
    Lorentz(f64, f64),
    /// Weighted `l_p`, weights from `weights` or drawn from the seed.
    Weighted(f64),
    Tsirelson,
    Tsirelson2,
}

impl SpaceName {
    pub fn build(&self, weights: &Vector) -> ilab_core::Result<SpaceSpec> {
        match self {
            SpaceName::Lp(p) => SpaceSpec::lp(*p),
            SpaceName::Lorentz(p, q) => SpaceSpec::lorentz(*p, *q),
            SpaceName::Weighted(p) => SpaceSpec::weighted(*p, weights.clone()),
            SpaceName::Tsirelson => Ok(SpaceSpec::TsirelsonT),
            SpaceName::Tsirelson2 => Ok(SpaceSpec::Tsirelson2),
        }
    }
}

impl fmt::Display for SpaceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceName::Lp(p) => write!(f, "Lp({p})"),
            SpaceName::Lorentz(p, q) => write!(f, "Lorentz({p},{q})"),
            SpaceName::Weighted(p) => write!(f, "Weighted({p})"),
            SpaceName::Tsirelson => write!(f, "Tsirelson"),
            SpaceName::Tsirelson2 => write!(f, "Tsirelson2"),
        }
    }
}

impl From<SpaceName> for String {
    fn from(s: SpaceName) -> Self {
        s.to_string()
    }
}

/// A validated experiment configuration. Keys not used by the selected
/// experiment are accepted and echoed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub dim: usize,
    pub theta: f64,
    /// `None` selects the experiment's default.
    pub p: Option<f64>,
    pub q: f64,
    pub p0: f64,
    pub q0: f64,
    pub p1: f64,
    pub q1: f64,
    pub theta0: f64,
    pub theta1: f64,
    pub eta: f64,
    pub weights: Option<Vec<f64>>,
    pub partition: Option<PartitionPreset>,
    pub space: SpaceName,
    pub n_min: usize,
    pub n_max: usize,
    pub budget: usize,
    pub blocks: usize,
    pub identical: bool,
    pub samples: Option<usize>,
    pub seed: u64,
    pub eps: f64,
    pub out: Option<String>,
    pub format: Format,
}

impl ExperimentConfig {
    pub fn new(experiment: &str) -> Self {
        Self {
            experiment: experiment.to_string(),
            dim: 32,
            theta: 0.5,
            p: None,
            q: 2.0,
            p0: 1.5,
            q0: 1.0,
            p1: 3.0,
            q1: 3.0,
            theta0: 0.25,
            theta1: 0.75,
            eta: 0.5,
            weights: None,
            partition: None,
            space: SpaceName::Lp(2.0),
            n_min: 1,
            n_max: 8,
            budget: 200,
            blocks: 5,
            identical: false,
            samples: None,
            seed: 0,
            eps: 1e-6,
            out: None,
            format: Format::Json,
        }
    }
}

/// Keys in the order they are documented.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "registered experiment name"),
    ("dim", "ambient dimension, 1..=65536"),
    ("theta", "interpolation parameter, (0, 1)"),
    (
        "p",
        "exponent, [1, inf]; default 4 for amalgam-equality, else 2",
    ),
    ("q", "second Lorentz exponent, [1, inf]"),
    ("p0", "exponent of X0, [1, inf]"),
    ("q0", "second exponent of X0, [1, inf]"),
    ("p1", "exponent of X1, [1, inf]"),
    ("q1", "second exponent of X1, [1, inf]"),
    ("theta0", "reiteration endpoint, [0, 1]"),
    ("theta1", "reiteration endpoint, [0, 1]"),
    ("eta", "reiteration parameter, (0, 1)"),
    ("weights", "comma separated positive weights"),
    ("partition", "dyadic:N or uniform:SIZExCOUNT"),
    (
        "space",
        "Lp(p), Lorentz(p,q), Weighted(p), Tsirelson, Tsirelson2",
    ),
    ("n_min", "first A-parameter index, >= 1"),
    ("n_max", "last A-parameter index, >= n_min"),
    ("budget", "ascent steps per A-parameter search"),
    ("blocks", "number of dyadic blocks, 1..=6"),
    ("identical", "true or false"),
    ("samples", "sample count, >= 1"),
    ("seed", "unsigned 64-bit seed"),
    ("eps", "solver accuracy, (0, 0.1]"),
    ("out", "output path"),
    ("format", "json or csv"),
];

fn range(field: &'static str, value: &str, allowed: &'static str) -> ConfigError {
    ConfigError::Range {
        field,
        value: value.to_string(),
        allowed,
    }
}

fn parse_f64(field: &'static str, v: &str, allowed: &'static str) -> Result<f64, ConfigError> {
    let x = match v.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        s => s.parse::<f64>().map_err(|_| range(field, v, allowed))?,
    };
    if x.is_nan() {
        return Err(range(field, v, allowed));
    }
    Ok(x)
}

fn exponent(field: &'static str, v: &str) -> Result<f64, ConfigError> {
    const ALLOWED: &str = "[1, inf]";
    let x = parse_f64(field, v, ALLOWED)?;
    if x < 1.0 {
        return Err(range(field, v, ALLOWED));
    }
    Ok(x)
}

fn open_unit(field: &'static str, v: &str) -> Result<f64, ConfigError> {
    const ALLOWED: &str = "(0, 1)";
    let x = parse_f64(field, v, ALLOWED)?;
    if !(x > 0.0 && x < 1.0) {
        return Err(range(field, v, ALLOWED));
    }
    Ok(x)
}

fn closed_unit(field: &'static str, v: &str) -> Result<f64, ConfigError> {
    const ALLOWED: &str = "[0, 1]";
    let x = parse_f64(field, v, ALLOWED)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(range(field, v, ALLOWED));
    }
    Ok(x)
}

fn count(
    field: &'static str,
    v: &str,
    lo: usize,
    hi: usize,
    allowed: &'static str,
) -> Result<usize, ConfigError> {
    let n: usize = v.parse().map_err(|_| range(field, v, allowed))?;
    if n < lo || n > hi {
        return Err(range(field, v, allowed));
    }
    Ok(n)
}

fn args(v: &str, name: &str) -> Option<Vec<String>> {
    let inner = v.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
    Some(inner.split(',').map(|s| s.trim().to_string()).collect())
}

fn parse_space(v: &str) -> Result<SpaceName, ConfigError> {
    const ALLOWED: &str = "Lp(p), Lorentz(p,q), Weighted(p), Tsirelson, Tsirelson2";
    let v = v.trim();
    let bad = || range("space", v, ALLOWED);
    if v == "Tsirelson" {
        return Ok(SpaceName::Tsirelson);
    }
    if v == "Tsirelson2" {
        return Ok(SpaceName::Tsirelson2);
    }
    if let Some(a) = args(v, "Lp") {
        let [p] = a.as_slice() else { return Err(bad()) };
        return Ok(SpaceName::Lp(exponent("space", p)?));
    }
    if let Some(a) = args(v, "Weighted") {
        let [p] = a.as_slice() else { return Err(bad()) };
        let p = exponent("space", p)?;
        if p.is_infinite() {
            return Err(bad());
        }
        return Ok(SpaceName::Weighted(p));
    }
    if let Some(a) = args(v, "Lorentz") {
        let [p, q] = a.as_slice() else {
            return Err(bad());
        };
        let p = exponent("space", p)?;
        if p.is_infinite() {
            return Err(bad());
        }
        return Ok(SpaceName::Lorentz(p, exponent("space", q)?));
    }
    Err(bad())
}

fn parse_partition(v: &str) -> Result<PartitionPreset, ConfigError> {
    const ALLOWED: &str = "dyadic:N with 1 <= N <= 12, or uniform:SIZExCOUNT";
    let bad = || range("partition", v, ALLOWED);
    if let Some(n) = v.strip_prefix("dyadic:") {
        return Ok(PartitionPreset::Dyadic(count(
            "partition",
            n,
            1,
            12,
            ALLOWED,
        )?));
    }
    if let Some(rest) = v.strip_prefix("uniform:") {
        let (a, b) = rest.split_once('x').ok_or_else(bad)?;
        let size = count("partition", a, 1, 4096, ALLOWED)?;
        let n = count("partition", b, 1, 4096, ALLOWED)?;
        return Ok(PartitionPreset::Uniform { size, count: n });
    }
    Err(bad())
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let v = v.trim();
        match key {
            "experiment" => self.experiment = v.to_string(),
            "dim" => self.dim = count("dim", v, 1, 65536, "1..=65536")?,
            "theta" => self.theta = open_unit("theta", v)?,
            "p" => self.p = Some(exponent("p", v)?),
            "q" => self.q = exponent("q", v)?,
            "p0" => self.p0 = exponent("p0", v)?,
            "q0" => self.q0 = exponent("q0", v)?,
            "p1" => self.p1 = exponent("p1", v)?,
            "q1" => self.q1 = exponent("q1", v)?,
            "theta0" => self.theta0 = closed_unit("theta0", v)?,
            "theta1" => self.theta1 = closed_unit("theta1", v)?,
            "eta" => self.eta = open_unit("eta", v)?,
            "weights" => {
                const ALLOWED: &str = "comma separated finite values > 0";
                let w = v
                    .split(',')
                    .map(|s| {
                        let x = parse_f64("weights", s.trim(), ALLOWED)?;
                        if x > 0.0 && x.is_finite() {
                            Ok(x)
                        } else {
                            Err(range("weights", s.trim(), ALLOWED))
                        }
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                self.weights = Some(w);
            }
            "partition" => self.partition = Some(parse_partition(v)?),
            "space" => self.space = parse_space(v)?,
            "n_min" => self.n_min = count("n_min", v, 1, 1024, "1..=1024")?,
            "n_max" => self.n_max = count("n_max", v, 1, 1024, "1..=1024")?,
            "budget" => self.budget = count("budget", v, 0, 1_000_000, "0..=1000000")?,
            "blocks" => self.blocks = count("blocks", v, 1, 6, "1..=6")?,
            "identical" => {
                self.identical = match v {
                    "true" => true,
                    "false" => false,
                    _ => return Err(range("identical", v, "true or false")),
                }
            }
            "samples" => self.samples = Some(count("samples", v, 1, 10_000_000, ">= 1")?),
            "seed" => {
                self.seed = v
                    .parse()
                    .map_err(|_| range("seed", v, "0..=18446744073709551615"))?
            }
            "eps" => {
                let x = parse_f64("eps", v, "(0, 0.1]")?;
                if !(x > 0.0 && x <= 0.1) {
                    return Err(range("eps", v, "(0, 0.1]"));
                }
                self.eps = x;
            }
            "out" => self.out = Some(v.to_string()),
            "format" => {
                self.format = match v {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    _ => return Err(range("format", v, "json or csv")),
                }
            }
            _ => unreachable!("keys are checked by the parser"),
        }
        Ok(())
    }

    /// Cross-field checks once all assignments are applied.
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.n_max < self.n_min {
            return Err(range("n_max", &self.n_max.to_string(), ">= n_min"));
        }
        if let Some(w) = &self.weights {
            if w.len() < self.dim {
                return Err(range(
                    "weights",
                    &format!("{} values", w.len()),
                    "at least `dim` values",
                ));
            }
        }
        Ok(())
    }
}

/// Applies the assignments in `text` (one `key = value` per line, `#`
/// comments) on top of `cfg`. Errors carry 1-based line and column.
pub fn apply(cfg: &mut ExperimentConfig, text: &str, source_name: &str) -> Result<(), ConfigError> {
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let at = |column: usize, message: String| ConfigError::Parse {
            source_name: source_name.to_string(),
            line: k + 1,
            column,
            message,
        };
        let Some(eq) = line.find('=') else {
            let col = line.len() - line.trim_start().len() + 1;
            return Err(at(col, "expected `key = value`".into()));
        };
        let key = line[..eq].trim();
        let key_col = line.len() - line.trim_start().len() + 1;
        if key.is_empty() {
            return Err(at(key_col, "missing key before `=`".into()));
        }
        if !KEYS.iter().any(|(name, _)| *name == key) {
            return Err(at(key_col, format!("unknown key `{key}`")));
        }
        let value = &line[eq + 1..];
        let value_col = eq + 2 + (value.len() - value.trim_start().len());
        if value.trim().is_empty() {
            return Err(at(value_col, format!("missing value for `{key}`")));
        }
        match cfg.set(key, value) {
            Ok(()) => {}
            Err(ConfigError::Range {
                field,
                value,
                allowed,
            }) => {
                return Err(at(
                    value_col,
                    format!("`{field}` = {value} is invalid, allowed {allowed}"),
                ));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut c = ExperimentConfig::new("aparam-table");
        apply(&mut c, text, "cfg")?;
        c.check()?;
        Ok(c)
    }

    #[test]
    fn parses_assignments() {
        let c = parse("# comment\n dim = 16\ntheta=0.3 # trailing\nspace = Lorentz(2, 4)\np=inf\npartition = uniform:4x4\n").unwrap();
        assert_eq!(c.dim, 16);
        assert_eq!(c.theta, 0.3);
        assert_eq!(c.space, SpaceName::Lorentz(2.0, 4.0));
        assert!(c.p.is_some_and(f64::is_infinite));
        assert_eq!(
            c.partition,
            Some(PartitionPreset::Uniform { size: 4, count: 4 })
        );
    }

    #[test]
    fn rejects_theta_out_of_range() {
        let e = parse("dim = 4\ntheta = 1.2\n").unwrap_err();
        let ConfigError::Parse {
            line,
            column,
            message,
            ..
        } = e
        else {
            panic!("{e:?}")
        };
        assert_eq!((line, column), (2, 9));
        assert!(
            message.contains("theta") && message.contains("(0, 1)"),
            "{message}"
        );
    }

    #[test]
    fn rejects_negative_weight() {
        let mut c = ExperimentConfig::new("weighted-trivial");
        let e = c.set("weights", "1, -2, 3").unwrap_err();
        assert!(matches!(
            e,
            ConfigError::Range {
                field: "weights",
                ..
            }
        ));
    }

    #[test]
    fn reports_positions() {
        let e = parse("dim = 4\n  bogus = 1\n").unwrap_err();
        assert!(
            matches!(
                e,
                ConfigError::Parse {
                    line: 2,
                    column: 3,
                    ..
                }
            ),
            "{e:?}"
        );
        let e = parse("dim 4\n").unwrap_err();
        assert!(matches!(
            e,
            ConfigError::Parse {
                line: 1,
                column: 1,
                ..
            }
        ));
        let e = parse("n_min = 5\nn_max = 2\n").unwrap_err();
        assert!(matches!(e, ConfigError::Range { field: "n_max", .. }));
    }
}
