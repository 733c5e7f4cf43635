//! Seeded experiment runners. Each produces a [`Table`] with a fixed header;
//! the same configuration always yields the same CSV bytes.

mod count_accuracy;
mod rotation;
mod selfid;
mod sniff;
mod subway;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use count_accuracy::{count_accuracy_stream, run_count_accuracy, CountMechanism};
pub use rotation::{check_rotation, run_rotation_props, trace_rotations, RotationReport};
pub use selfid::run_selfid;
pub use sniff::run_sniff;
pub use subway::{od_noise_seed, run_subway_od, OdSetup};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Process exit status for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Io(_) => 3,
        }
    }
}

pub(crate) fn config_err(e: impl fmt::Display) -> ExperimentError {
    ExperimentError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    Sniff,
    CountAccuracy,
    SubwayOd,
    SelfidUtility,
    RotationProps,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::Sniff,
        ExperimentKind::CountAccuracy,
        ExperimentKind::SubwayOd,
        ExperimentKind::SelfidUtility,
        ExperimentKind::RotationProps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Sniff => "sniff",
            ExperimentKind::CountAccuracy => "count-accuracy",
            ExperimentKind::SubwayOd => "subway-od",
            ExperimentKind::SelfidUtility => "selfid-utility",
            ExperimentKind::RotationProps => "rotation-props",
        }
    }

    /// Trials used when none are configured.
    pub fn default_trials(self) -> u32 {
        match self {
            ExperimentKind::CountAccuracy => 1000,
            ExperimentKind::RotationProps => 50,
            _ => 1,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentKind {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ExperimentError::Config(format!("unknown experiment {s:?}")))
    }
}

/// Free-form `key=value` parameters for one experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    pub fn new() -> Self {
        Params::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }

    /// Parses one `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ExperimentError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ExperimentError::Config(format!("expected key=value, got {pair:?}")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ExperimentError::Config(format!("empty key in {pair:?}")));
        }
        self.set(k, v.trim());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|e| ExperimentError::Config(format!("{key}={v:?}: {e}"))),
        }
    }

    /// Comma-separated list.
    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>, ExperimentError>
    where
        T::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => {
                let items = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e| ExperimentError::Config(format!("{key}: {s:?}: {e}"))))
                    .collect::<Result<Vec<T>, _>>()?;
                if items.is_empty() {
                    return Err(ExperimentError::Config(format!("{key} is empty")));
                }
                Ok(items)
            }
        }
    }

    /// Rejects keys outside `known`.
    pub fn check_known(&self, known: &[&str]) -> Result<(), ExperimentError> {
        match self.keys().find(|k| !known.contains(k)) {
            Some(k) => Err(ExperimentError::Config(format!(
                "unknown parameter {k:?} (known: {})",
                known.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

/// Flat `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config_text(text: &str) -> Result<Params, ExperimentError> {
    let mut p = Params::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        p.set_pair(line)
            .map_err(|e| ExperimentError::Config(format!("line {}: {e}", n + 1)))?;
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub trials: u32,
    pub out: Option<PathBuf>,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        ExperimentConfig {
            experiment,
            seed: 1,
            trials: experiment.default_trials(),
            out: None,
            params: Params::new(),
        }
    }

    pub fn with_param(mut self, key: &str, value: &str) -> Self {
        self.params.set(key, value);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    /// Numeric value of `name` in `row` (`inf` allowed).
    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        let c = self.column(name)?;
        self.rows.get(row)?.get(c)?.parse().ok()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ExperimentError> {
        let io = |e: csv::Error| ExperimentError::Io(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        w.flush().map_err(|e| ExperimentError::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

/// Shortest round-trip decimal, with `inf` for infinity.
pub fn fmt_f64(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        x.to_string()
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    if cfg.trials == 0 {
        return Err(ExperimentError::Config("trials must be positive".into()));
    }
    match cfg.experiment {
        ExperimentKind::Sniff => run_sniff(cfg),
        ExperimentKind::CountAccuracy => run_count_accuracy(cfg),
        ExperimentKind::SubwayOd => run_subway_od(cfg),
        ExperimentKind::SelfidUtility => run_selfid(cfg),
        ExperimentKind::RotationProps => run_rotation_props(cfg),
    }
}

/// Runs `cfg` and writes the table to `cfg.out` (stdout when unset).
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<Table, ExperimentError> {
    let table = run_experiment(cfg)?;
    match &cfg.out {
        Some(path) => {
            let f = std::fs::File::create(path)
                .map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
            table.write_csv(std::io::BufWriter::new(f))?;
        }
        None => table.write_csv(std::io::stdout().lock())?,
    }
    Ok(table)
}
