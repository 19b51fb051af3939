//! Run configuration from flags and an optional `key=value` file.
//!
//! Both sources are collected into one string map, file first so that
//! flags win, and then parsed in one place. Parse errors name the field.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nilprove_core::instances::DEFAULT_MAX_ENUM;
use nilprove_core::{FilterConfig, Shape};

use crate::CliError;

pub const KEYS: &[&str] = &[
    "mode",
    "a",
    "b",
    "sigma",
    "filters",
    "seed",
    "dropout",
    "width-n",
    "cycles",
    "checkpoint",
    "checkpoint-every",
    "out",
    "max-enum",
    "policy",
    "held-out",
    "threads",
    "node-limit",
    "random-seeds",
    "split-root",
    "json",
    "learning-rate",
    "w-leaf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Enumerate,
    Bench,
    Prove,
    Train,
    Minimize,
    Verify,
    Generalize,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Enumerate => "enumerate",
            Mode::Bench => "bench",
            Mode::Prove => "prove",
            Mode::Train => "train",
            Mode::Minimize => "minimize",
            Mode::Verify => "verify",
            Mode::Generalize => "generalize",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            Mode::Enumerate,
            Mode::Bench,
            Mode::Prove,
            Mode::Train,
            Mode::Minimize,
            Mode::Verify,
            Mode::Generalize,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SigmaSelection {
    All,
    Suggested,
    List(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Benchmark,
    Random,
    Learned,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Benchmark => "benchmark",
            PolicyKind::Random => "random",
            PolicyKind::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub shape: Shape,
    pub sigma: SigmaSelection,
    pub filters: FilterConfig,
    pub seed: u64,
    /// Frontier limit; 0 means no dropout.
    pub dropout: usize,
    pub width: usize,
    /// Number of proofs in a training run.
    pub cycles: usize,
    pub checkpoint: Option<PathBuf>,
    /// Save a checkpoint every this many proofs; 0 saves only at the end.
    pub checkpoint_every: usize,
    pub out: PathBuf,
    pub max_enum: usize,
    pub policy: PolicyKind,
    pub held_out: Option<usize>,
    pub threads: Option<usize>,
    pub node_limit: usize,
    pub random_seeds: usize,
    pub split_root: bool,
    pub json: bool,
    pub learning_rate: f64,
    pub w_leaf: f64,
}

pub type Settings = BTreeMap<String, String>;

fn usage(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Usage {
        field: field.to_string(),
        msg: msg.into(),
    }
}

/// Parses `key=value` lines; `#` starts a comment line. Keys may use `_`
/// in place of `-`.
pub fn parse_config_file(text: &str) -> Result<Settings, CliError> {
    let mut out = Settings::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| usage("config", format!("line {} is not key=value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(&key, format!("unknown key on line {}", n + 1)));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(s: &Settings, key: &str, default: T) -> Result<T, CliError> {
    match s.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|_| usage(key, format!("cannot parse {v:?}"))),
    }
}

fn required(s: &Settings, key: &str) -> Result<usize, CliError> {
    s.get(key)
        .ok_or_else(|| usage(key, "required"))?
        .parse()
        .map_err(|_| usage(key, "expected a non-negative integer"))
}

fn parse_bool(s: &Settings, key: &str) -> Result<bool, CliError> {
    match s.get(key).map(String::as_str) {
        None | Some("false") | Some("0") | Some("no") => Ok(false),
        Some("true") | Some("1") | Some("yes") | Some("") => Ok(true),
        Some(v) => Err(usage(key, format!("expected true or false, got {v:?}"))),
    }
}

pub fn parse_filters(v: &str) -> Result<FilterConfig, CliError> {
    let mut cfg = FilterConfig::all_off();
    if v == "none" {
        return Ok(cfg);
    }
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part {
            "profile" => cfg.profile_filter_on = true,
            "halfones" => cfg.half_ones_filter_on = true,
            other => return Err(usage("filters", format!("unknown filter {other:?}; use profile,halfones or none"))),
        }
    }
    Ok(cfg)
}

pub fn filters_name(cfg: &FilterConfig) -> String {
    match (cfg.profile_filter_on, cfg.half_ones_filter_on) {
        (false, false) => "none".into(),
        (true, false) => "profile".into(),
        (false, true) => "halfones".into(),
        (true, true) => "profile,halfones".into(),
    }
}

fn parse_sigma(v: &str) -> Result<SigmaSelection, CliError> {
    match v {
        "all" => Ok(SigmaSelection::All),
        "suggested" => Ok(SigmaSelection::Suggested),
        _ => v
            .split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<Vec<_>, _>>()
            .map(SigmaSelection::List)
            .map_err(|_| usage("sigma", format!("expected all, suggested or a list like 3,4; got {v:?}"))),
    }
}

impl RunConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let mode_name = s.get("mode").ok_or_else(|| usage("mode", "required"))?;
        let mode = Mode::parse(mode_name).ok_or_else(|| usage("mode", format!("unknown mode {mode_name:?}")))?;
        let (a, b) = (required(s, "a")?, required(s, "b")?);
        let shape = Shape::new(a, b).map_err(|e| usage("a", e.to_string()))?;
        let policy = match s.get("policy").map(String::as_str) {
            None | Some("benchmark") => PolicyKind::Benchmark,
            Some("random") => PolicyKind::Random,
            Some("learned") => PolicyKind::Learned,
            Some(v) => return Err(usage("policy", format!("unknown policy {v:?}"))),
        };
        let cfg = RunConfig {
            mode,
            shape,
            sigma: s.get("sigma").map_or(Ok(SigmaSelection::All), |v| parse_sigma(v))?,
            filters: parse_filters(s.get("filters").map_or("profile,halfones", String::as_str))?,
            seed: get(s, "seed", 0)?,
            dropout: get(s, "dropout", 0)?,
            width: get(s, "width-n", 4)?,
            cycles: get(s, "cycles", 100)?,
            checkpoint: s.get("checkpoint").map(PathBuf::from),
            checkpoint_every: get(s, "checkpoint-every", 0)?,
            out: PathBuf::from(s.get("out").map_or(".", String::as_str)),
            max_enum: get(s, "max-enum", DEFAULT_MAX_ENUM)?,
            policy,
            held_out: s.get("held-out").map(|_| get(s, "held-out", 0)).transpose()?,
            threads: s.get("threads").map(|_| get(s, "threads", 1)).transpose()?,
            node_limit: get(s, "node-limit", nilprove_core::minprover::DEFAULT_NODE_LIMIT)?,
            random_seeds: get(s, "random-seeds", 5)?,
            split_root: parse_bool(s, "split-root")?,
            json: parse_bool(s, "json")?,
            learning_rate: get(s, "learning-rate", 1e-3)?,
            w_leaf: get(s, "w-leaf", 0.01)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.width == 0 {
            return Err(usage("width-n", "must be at least 1"));
        }
        if self.policy == PolicyKind::Learned && self.checkpoint.is_none() {
            return Err(usage("checkpoint", "the learned policy needs a checkpoint"));
        }
        if self.mode == Mode::Generalize && self.held_out.is_none() {
            return Err(usage("held-out", "generalize needs a held-out sigma"));
        }
        if self.threads == Some(0) {
            return Err(usage("threads", "must be at least 1"));
        }
        if !(self.w_leaf > 0.0) {
            return Err(usage("w-leaf", "must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(usage("learning-rate", "must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(pairs: &[(&str, &str)]) -> Settings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_and_overrides() {
        let c = RunConfig::from_settings(&settings(&[("mode", "bench"), ("a", "3"), ("b", "2")])).unwrap();
        assert_eq!(c.sigma, SigmaSelection::All);
        assert_eq!(c.filters, FilterConfig::all_on());
        assert_eq!(c.policy, PolicyKind::Benchmark);
        let c = RunConfig::from_settings(&settings(&[
            ("mode", "bench"),
            ("a", "3"),
            ("b", "2"),
            ("sigma", "3,4"),
            ("filters", "none"),
        ]))
        .unwrap();
        assert_eq!(c.sigma, SigmaSelection::List(vec![3, 4]));
        assert_eq!(c.filters, FilterConfig::all_off());
    }

    #[test]
    fn errors_name_the_field() {
        let field = |pairs: &[(&str, &str)]| match RunConfig::from_settings(&settings(pairs)) {
            Err(CliError::Usage { field, .. }) => field,
            other => panic!("expected usage error, got {other:?}"),
        };
        assert_eq!(field(&[("a", "3"), ("b", "2")]), "mode");
        assert_eq!(field(&[("mode", "bench"), ("b", "2")]), "a");
        assert_eq!(field(&[("mode", "bench"), ("a", "3"), ("b", "2"), ("sigma", "x")]), "sigma");
        assert_eq!(field(&[("mode", "bench"), ("a", "3"), ("b", "2"), ("filters", "odd")]), "filters");
        assert_eq!(field(&[("mode", "prove"), ("a", "3"), ("b", "2"), ("policy", "learned")]), "checkpoint");
        assert_eq!(field(&[("mode", "generalize"), ("a", "3"), ("b", "2")]), "held-out");
        assert_eq!(field(&[("mode", "fly"), ("a", "3"), ("b", "2")]), "mode");
    }

    #[test]
    fn config_file_lines() {
        let s = parse_config_file("# run\nmode = bench\na=3\nb=2\nmax_enum=12\n\n").unwrap();
        assert_eq!(s.get("max-enum").map(String::as_str), Some("12"));
        assert!(parse_config_file("colour=red").is_err());
        assert!(parse_config_file("just words").is_err());
    }

    #[test]
    fn filter_names_round_trip() {
        for v in ["none", "profile", "halfones", "profile,halfones"] {
            assert_eq!(filters_name(&parse_filters(v).unwrap()), v);
        }
    }
}
