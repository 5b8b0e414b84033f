//! Layered `key=value` settings: built-in defaults, then an optional config
//! file, then command-line flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use gossiplab::analysis::{self, EpsilonReport};
use gossiplab::protocol::SchemeKind;
use gossiplab::sim::{InitKind, SeriesMode, StopRule, TrialConfig};

use crate::error::CliError;

/// Every key a config file may set.
pub const KNOWN_KEYS: &[&str] = &[
    "check",
    "epsilon",
    "gamma",
    "graph",
    "graph_seed",
    "grid",
    "init",
    "max_iters",
    "mixing",
    "n",
    "output",
    "p_asym",
    "per_trial",
    "radius",
    "scheme",
    "schemes",
    "seed",
    "series",
    "stop",
    "stride",
    "svg",
    "threshold",
    "trials",
];

const DEFAULTS: &[(&str, &str)] = &[
    ("epsilon", "0.5"),
    ("gamma", "0.5"),
    ("init", "uniform"),
    ("max_iters", "10000000"),
    ("n", "16"),
    ("p_asym", "0"),
    ("per_trial", "false"),
    ("radius", "auto"),
    ("scheme", "bbga"),
    ("schemes", "classic,ubga1,bbga"),
    ("seed", "1"),
    ("series", "thinned"),
    ("stop", "step"),
    ("stride", "1"),
    ("svg", "false"),
    ("threshold", "1e-5"),
    ("trials", "100"),
];

#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('-', "_");
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

impl Settings {
    pub fn resolve(
        config_file: Option<&Path>,
        overrides: Vec<(&'static str, Option<String>)>,
    ) -> Result<Self, CliError> {
        let mut values: BTreeMap<String, String> =
            DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = config_file {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            values.extend(parse_config_text(&text)?);
        }
        for (k, v) in overrides {
            if let Some(v) = v {
                values.insert(k.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn require(&self, key: &str) -> Result<&str, CliError> {
        self.get(key).ok_or_else(|| CliError::Config(format!("missing `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| CliError::Config(format!("bad value `{raw}` for `{key}`: {e}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key).unwrap_or("false") {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("bad boolean `{other}` for `{key}`"))),
        }
    }

    /// Header lines echoing the given keys as `key=value`.
    pub fn header(&self, command: &str, keys: &[&str]) -> Vec<String> {
        let mut lines = vec![format!("gossiplab {} {command}", env!("CARGO_PKG_VERSION"))];
        for k in keys {
            if let Some(v) = self.get(k) {
                lines.push(format!("{k}={v}"));
            }
        }
        lines
    }

    pub fn subset(&self, keys: &[&str]) -> BTreeMap<String, String> {
        keys.iter()
            .filter_map(|k| self.get(k).map(|v| (k.to_string(), v.to_string())))
            .collect()
    }

    pub fn scheme(&self) -> Result<SchemeKind, CliError> {
        self.parse("scheme")
    }

    pub fn epsilon_spec(&self) -> Result<EpsilonSpec, CliError> {
        self.parse("epsilon")
    }

    pub fn trial_config(&self) -> Result<TrialConfig, CliError> {
        let threshold: f64 = self.parse("threshold")?;
        let stop = match self.require("stop")? {
            "step" => StopRule::StepChange { threshold },
            "deviation" => StopRule::deviation_for(threshold),
            other => return Err(CliError::Config(format!("unknown stop rule `{other}` (step or deviation)"))),
        };
        let series = match self.require("series")? {
            "thinned" => SeriesMode::Thinned,
            "full" => SeriesMode::Full,
            "none" => SeriesMode::None,
            other => return Err(CliError::Config(format!("unknown series mode `{other}`"))),
        };
        let config = TrialConfig {
            stop,
            max_iters: self.parse("max_iters")?,
            stride: self.parse("stride")?,
            series,
            check_mass: false,
            predictor: None,
        };
        config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn init(&self) -> Result<InitKind, CliError> {
        self.parse("init")
    }

    /// Grid of perturbation values: `default` or a comma-separated list.
    pub fn grid(&self) -> Result<Option<Vec<f64>>, CliError> {
        match self.get("grid") {
            None => Ok(None),
            Some("default") => Ok(Some(analysis::default_epsilon_grid())),
            Some(list) => {
                let grid = list
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| CliError::Config(format!("bad grid `{list}`: {e}")))?;
                if grid.is_empty() || grid.iter().any(|e| !(*e > 0.0)) {
                    return Err(CliError::Config(format!("grid values must be positive: `{list}`")));
                }
                Ok(Some(grid))
            }
        }
    }
}

/// How the perturbation parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonSpec {
    Literal(f64),
    /// `f * eta`, with `0 < f < 1`.
    EtaFraction(f64),
    /// The analytic optimum for BBGA on the graph.
    Optimal,
}

impl FromStr for EpsilonSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "auto-optimal" {
            return Ok(Self::Optimal);
        }
        if let Some(f) = s.strip_prefix("auto-eta-fraction:") {
            let f: f64 = f.parse().map_err(|e| format!("{e}"))?;
            if !(f > 0.0 && f < 1.0) {
                return Err(format!("eta fraction must lie in (0, 1), got {f}"));
            }
            return Ok(Self::EtaFraction(f));
        }
        let v: f64 = s
            .parse()
            .map_err(|_| format!("expected a number, auto-optimal or auto-eta-fraction:f, got `{s}`"))?;
        if !(v > 0.0) || !v.is_finite() {
            return Err(format!("epsilon must be positive, got {v}"));
        }
        Ok(Self::Literal(v))
    }
}

/// A resolved perturbation value with an optional caveat.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedEpsilon {
    pub value: f64,
    pub note: Option<String>,
}

impl EpsilonSpec {
    pub fn resolve(self, report: &EpsilonReport) -> ResolvedEpsilon {
        match self {
            Self::Literal(v) => ResolvedEpsilon { value: v, note: None },
            Self::Optimal => ResolvedEpsilon {
                value: report.epsilon_star,
                note: report
                    .approximate
                    .then(|| "approximate: Re(xi_2)/2 on a complex Laplacian spectrum".to_string()),
            },
            Self::EtaFraction(f) => match report.eta_formula {
                Some(eta) => ResolvedEpsilon {
                    value: f * eta,
                    note: None,
                },
                None => ResolvedEpsilon {
                    value: f * report.eta_practical,
                    note: Some("complex Laplacian spectrum: fraction of 2(n-1)^2/n".to_string()),
                },
            },
        }
    }
}

/// One entry of a `schemes` list: `kind` or `kind@epsilon-spec`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeEntry {
    pub label: String,
    pub kind: SchemeKind,
    pub epsilon: Option<EpsilonSpec>,
}

pub fn parse_scheme_list(list: &str) -> Result<Vec<SchemeEntry>, CliError> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (kind, eps) = match item.split_once('@') {
            Some((k, e)) => (k, Some(e)),
            None => (item, None),
        };
        let kind: SchemeKind = kind.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let epsilon = eps
            .map(|e| e.parse::<EpsilonSpec>())
            .transpose()
            .map_err(|e| CliError::Config(format!("bad epsilon in `{item}`: {e}")))?;
        out.push(SchemeEntry {
            label: item.to_string(),
            kind,
            epsilon,
        });
    }
    if out.is_empty() {
        return Err(CliError::Config("empty scheme list".into()));
    }
    Ok(out)
}

/// File-name-safe form of a label.
pub fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '-' })
        .collect()
}
