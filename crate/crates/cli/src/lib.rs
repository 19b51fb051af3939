//! Experiment harness: run modes, artifacts and exit codes.

pub mod config;
pub mod modes;
pub mod verify;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

pub use config::{Mode, PolicyKind, RunConfig, SigmaSelection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;
pub const EXIT_SIZE_GUARD: i32 = 4;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error in {field}: {msg}")]
    Usage { field: String, msg: String },

    #[error("size guard: {0}")]
    SizeGuard(String),

    #[error("verification failed:\n{0}")]
    Verification(String),

    #[error("{0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => EXIT_USAGE,
            CliError::SizeGuard(_) => EXIT_SIZE_GUARD,
            CliError::Verification(_) => EXIT_VERIFY,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

impl From<nilprove_core::Error> for CliError {
    fn from(e: nilprove_core::Error) -> Self {
        match e {
            nilprove_core::Error::SizeGuard { .. } | nilprove_core::Error::Partial { .. } => {
                CliError::SizeGuard(e.to_string())
            }
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<nilprove_learn::Error> for CliError {
    fn from(e: nilprove_learn::Error) -> Self {
        match e {
            nilprove_learn::Error::Core(c) => c.into(),
            nilprove_learn::Error::Config(m) => CliError::Usage {
                field: "config".into(),
                msg: m,
            },
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("io error: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(format!("csv error: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Run(format!("json error: {e}"))
    }
}

/// Proof search, minimization and training for graded 4-nilpotent
/// semigroups of size (a, b, 1, 1).
#[derive(Debug, Parser)]
#[command(name = "nilprove", version)]
pub struct Args {
    /// enumerate, bench, prove, train, minimize, verify or generalize
    #[arg(value_name = "MODE")]
    pub mode_arg: Option<String>,
    #[arg(long)]
    pub mode: Option<String>,
    /// flat key=value file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub a: Option<String>,
    #[arg(long)]
    pub b: Option<String>,
    /// all, suggested, or a list such as 3,4
    #[arg(long)]
    pub sigma: Option<String>,
    /// profile,halfones or none
    #[arg(long)]
    pub filters: Option<String>,
    /// same as --filters none
    #[arg(long)]
    pub no_filters: bool,
    #[arg(long)]
    pub seed: Option<String>,
    /// frontier limit of pruned proofs
    #[arg(long)]
    pub dropout: Option<String>,
    #[arg(long = "width-n")]
    pub width_n: Option<String>,
    /// proofs per training run
    #[arg(long)]
    pub cycles: Option<String>,
    #[arg(long)]
    pub checkpoint: Option<String>,
    #[arg(long = "checkpoint-every")]
    pub checkpoint_every: Option<String>,
    /// output directory
    #[arg(long)]
    pub out: Option<String>,
    /// largest a*b the sieve accepts
    #[arg(long = "max-enum")]
    pub max_enum: Option<String>,
    /// benchmark, random or learned
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long = "held-out")]
    pub held_out: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
    #[arg(long = "node-limit")]
    pub node_limit: Option<String>,
    #[arg(long = "random-seeds")]
    pub random_seeds: Option<String>,
    #[arg(long = "learning-rate")]
    pub learning_rate: Option<String>,
    #[arg(long = "w-leaf")]
    pub w_leaf: Option<String>,
    #[arg(long = "split-root")]
    pub split_root: bool,
    #[arg(long)]
    pub json: bool,
}

impl Args {
    /// Config-file settings overlaid with the flags.
    pub fn settings(&self) -> Result<config::Settings, CliError> {
        let mut s = match &self.config {
            Some(p) => config::parse_config_file(&std::fs::read_to_string(p).map_err(|e| CliError::Usage {
                field: "config".into(),
                msg: format!("{}: {e}", p.display()),
            })?)?,
            None => config::Settings::new(),
        };
        if let (Some(m1), Some(m2)) = (&self.mode_arg, &self.mode) {
            if m1 != m2 {
                return Err(CliError::Usage {
                    field: "mode".into(),
                    msg: format!("given twice: {m1} and {m2}"),
                });
            }
        }
        let flags: [(&str, Option<&String>); 20] = [
            ("mode", self.mode_arg.as_ref().or(self.mode.as_ref())),
            ("a", self.a.as_ref()),
            ("b", self.b.as_ref()),
            ("sigma", self.sigma.as_ref()),
            ("filters", self.filters.as_ref()),
            ("seed", self.seed.as_ref()),
            ("dropout", self.dropout.as_ref()),
            ("width-n", self.width_n.as_ref()),
            ("cycles", self.cycles.as_ref()),
            ("checkpoint", self.checkpoint.as_ref()),
            ("checkpoint-every", self.checkpoint_every.as_ref()),
            ("out", self.out.as_ref()),
            ("max-enum", self.max_enum.as_ref()),
            ("policy", self.policy.as_ref()),
            ("held-out", self.held_out.as_ref()),
            ("threads", self.threads.as_ref()),
            ("node-limit", self.node_limit.as_ref()),
            ("random-seeds", self.random_seeds.as_ref()),
            ("learning-rate", self.learning_rate.as_ref()),
            ("w-leaf", self.w_leaf.as_ref()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.insert(k.to_string(), v.clone());
            }
        }
        if self.no_filters {
            s.insert("filters".into(), "none".into());
        }
        if self.split_root {
            s.insert("split-root".into(), "true".into());
        }
        if self.json {
            s.insert("json".into(), "true".into());
        }
        Ok(s)
    }
}

/// Names artifacts `{mode}_{a}x{b}_{timestamp}` inside the output
/// directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub stem: String,
    pub written: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(cfg: &RunConfig) -> Result<Self, CliError> {
        std::fs::create_dir_all(&cfg.out)?;
        let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S");
        Ok(Artifacts {
            dir: cfg.out.clone(),
            stem: format!("{}_{}x{}_{stamp}", cfg.mode.name(), cfg.shape.a, cfg.shape.b),
            written: Vec::new(),
        })
    }

    /// `suffix` is appended to the stem with an underscore when non-empty.
    pub fn path(&self, suffix: &str, ext: &str) -> PathBuf {
        let name = if suffix.is_empty() {
            format!("{}.{ext}", self.stem)
        } else {
            format!("{}_{suffix}.{ext}", self.stem)
        };
        self.dir.join(name)
    }

    pub fn csv<T: Serialize>(&mut self, suffix: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let path = self.path(suffix, "csv");
        write_csv(&path, rows)?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, suffix: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(suffix, "json");
        std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

/// Header row from the field names, also for an empty table.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &mut dyn Write) -> Result<Vec<PathBuf>, CliError> {
    let mut art = Artifacts::new(cfg)?;
    match cfg.mode {
        Mode::Enumerate => modes::enumerate(cfg, &mut art, out)?,
        Mode::Bench | Mode::Prove => modes::prove(cfg, &mut art, out)?,
        Mode::Minimize => modes::minimize(cfg, &mut art, out)?,
        Mode::Train | Mode::Generalize => modes::train(cfg, &mut art, out)?,
        Mode::Verify => modes::verify(cfg, &mut art, out)?,
    }
    Ok(art.written)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = args
        .settings()
        .and_then(|s| RunConfig::from_settings(&s))
        .and_then(|cfg| {
            configure_threads(&cfg)?;
            run(&cfg, out)
        });
    match result {
        Ok(_) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads(cfg: &RunConfig) -> Result<(), CliError> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cfg.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cfg;
    Ok(())
}
