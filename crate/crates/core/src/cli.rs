//! Config files, experiment sweeps and CSV output.
//!
//! Config documents are `key = value` lines; `#` starts a comment. Every key
//! may also be set through an environment variable named `MKSTREAM_` plus
//! the upper-cased key.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::scalar::Scalar;
use crate::sim::{run_replicates, ConfigError, Metric, ReplicateSummary, SimConfig, Strategy};

pub const ENV_PREFIX: &str = "MKSTREAM_";

/// Simulation keys in serialization order.
pub const CONFIG_KEYS: [&str; 25] = [
    "t_sim",
    "nb_measure",
    "nb_video",
    "nb_gop",
    "nb_p",
    "lambda",
    "qos",
    "tm_service",
    "nb_vs",
    "beta",
    "capacity_c",
    "net_capacity",
    "p_loss",
    "strategy",
    "seed",
    "deadline_slack_multiplier",
    "sampling_period",
    "b_per_group",
    "latency",
    "tick",
    "popularity_skew",
    "restore_step",
    "restore_hold",
    "p_floor",
    "b_floor",
];

pub const PLAN_KEYS: [&str; 4] = ["lambda_grid", "strategies", "n_reps", "output_path"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("environment variable {var} names no config key")]
    UnknownEnv { var: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("{key}: cannot parse {value:?} as {expected}")]
    Value {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Plan(String),
    #[error("nothing to summarize")]
    EmptyResults,
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// A sweep over arrival rates and strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan<T> {
    pub base: SimConfig<T>,
    pub lambda_grid: Vec<T>,
    pub strategies: Vec<Strategy>,
    pub n_reps: u32,
    pub output_path: PathBuf,
}

impl<T: Scalar> Default for ExperimentPlan<T> {
    fn default() -> Self {
        ExperimentPlan {
            base: SimConfig::default(),
            lambda_grid: (1..=20).map(|i| T::lit(f64::from(i) / 10.0)).collect(),
            strategies: Strategy::ALL.to_vec(),
            n_reps: 100,
            output_path: PathBuf::from("out"),
        }
    }
}

impl<T: Scalar> ExperimentPlan<T> {
    pub fn validate(&self) -> Result<(), CliError> {
        self.base.validate()?;
        if self.lambda_grid.is_empty() {
            return Err(CliError::Plan("lambda_grid is empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Plan("strategies is empty".into()));
        }
        if self.n_reps == 0 {
            return Err(CliError::Plan("n_reps must be at least 1".into()));
        }
        for &l in &self.lambda_grid {
            self.base.with_lambda(l).validate()?;
        }
        Ok(())
    }
}

fn parse_value<V: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<V, CliError> {
    value.parse().map_err(|_| CliError::Value {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    })
}

fn parse_list<V: FromStr>(key: &str, value: &str, expected: &'static str) -> Result<Vec<V>, CliError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s, expected))
        .collect()
}

/// Sets one key. Returns false for unknown keys.
fn set_key<T: Scalar>(plan: &mut ExperimentPlan<T>, key: &str, value: &str) -> Result<bool, CliError> {
    let c = &mut plan.base;
    let u32v = |v: &str| parse_value::<u32>(key, v, "an unsigned integer");
    let real = |v: &str| parse_value::<T>(key, v, "a number");
    match key {
        "t_sim" => c.t_sim = real(value)?,
        "nb_measure" => c.nb_measure = u32v(value)?,
        "nb_video" => c.nb_video = u32v(value)?,
        "nb_gop" => c.nb_gop = u32v(value)?,
        "nb_p" => c.nb_p = u32v(value)?,
        "lambda" => c.lambda = real(value)?,
        "qos" => c.qos = u32v(value)?,
        "tm_service" => c.tm_service = real(value)?,
        "nb_vs" => c.nb_vs = u32v(value)?,
        "beta" => c.beta = real(value)?,
        "capacity_c" => c.capacity_c = u32v(value)?,
        "net_capacity" => c.net_capacity = parse_value(key, value, "an unsigned integer")?,
        "p_loss" => c.p_loss = real(value)?,
        "strategy" => c.strategy = value.parse()?,
        "seed" => c.seed = parse_value(key, value, "an unsigned integer")?,
        "deadline_slack_multiplier" => c.deadline_slack_multiplier = real(value)?,
        "sampling_period" => c.sampling_period = real(value)?,
        "b_per_group" => c.b_per_group = u32v(value)?,
        "latency" => c.latency = real(value)?,
        "tick" => c.tick = real(value)?,
        "popularity_skew" => c.popularity_skew = real(value)?,
        "restore_step" => c.restore_step = u32v(value)?,
        "restore_hold" => c.restore_hold = u32v(value)?,
        "p_floor" => c.p_floor = u32v(value)?,
        "b_floor" => c.b_floor = u32v(value)?,
        "lambda_grid" => plan.lambda_grid = parse_list(key, value, "a comma-separated list of numbers")?,
        "strategies" => {
            plan.strategies = value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(Strategy::from_str)
                .collect::<Result<_, _>>()?
        }
        "n_reps" => plan.n_reps = u32v(value)?,
        "output_path" => plan.output_path = PathBuf::from(value),
        _ => return Ok(false),
    }
    Ok(true)
}

fn get_key<T: Scalar>(plan: &ExperimentPlan<T>, key: &str) -> String {
    let c = &plan.base;
    match key {
        "t_sim" => c.t_sim.to_string(),
        "nb_measure" => c.nb_measure.to_string(),
        "nb_video" => c.nb_video.to_string(),
        "nb_gop" => c.nb_gop.to_string(),
        "nb_p" => c.nb_p.to_string(),
        "lambda" => c.lambda.to_string(),
        "qos" => c.qos.to_string(),
        "tm_service" => c.tm_service.to_string(),
        "nb_vs" => c.nb_vs.to_string(),
        "beta" => c.beta.to_string(),
        "capacity_c" => c.capacity_c.to_string(),
        "net_capacity" => c.net_capacity.to_string(),
        "p_loss" => c.p_loss.to_string(),
        "strategy" => c.strategy.to_string(),
        "seed" => c.seed.to_string(),
        "deadline_slack_multiplier" => c.deadline_slack_multiplier.to_string(),
        "sampling_period" => c.sampling_period.to_string(),
        "b_per_group" => c.b_per_group.to_string(),
        "latency" => c.latency.to_string(),
        "tick" => c.tick.to_string(),
        "popularity_skew" => c.popularity_skew.to_string(),
        "restore_step" => c.restore_step.to_string(),
        "restore_hold" => c.restore_hold.to_string(),
        "p_floor" => c.p_floor.to_string(),
        "b_floor" => c.b_floor.to_string(),
        "lambda_grid" => join(&plan.lambda_grid),
        "strategies" => join(&plan.strategies),
        "n_reps" => plan.n_reps.to_string(),
        "output_path" => plan.output_path.display().to_string(),
        _ => unreachable!("unknown key {key}"),
    }
}

fn join<V: fmt::Display>(xs: &[V]) -> String {
    xs.iter().map(V::to_string).collect::<Vec<_>>().join(",")
}

/// Parses a document without range checks. Missing keys keep defaults.
pub fn parse_plan_unchecked<T: Scalar>(text: &str) -> Result<ExperimentPlan<T>, CliError> {
    let mut plan = ExperimentPlan::default();
    let mut seen: Vec<String> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if seen.iter().any(|k| k == key) {
            return Err(CliError::Duplicate {
                line: i + 1,
                key: key.to_string(),
            });
        }
        if !set_key(&mut plan, key, value)? {
            return Err(CliError::UnknownKey {
                line: i + 1,
                key: key.to_string(),
            });
        }
        seen.push(key.to_string());
    }
    Ok(plan)
}

/// Parses and validates a full experiment document.
pub fn parse_plan<T: Scalar>(text: &str) -> Result<ExperimentPlan<T>, CliError> {
    let plan = parse_plan_unchecked(text)?;
    plan.validate()?;
    Ok(plan)
}

/// Parses and validates the simulation part of a document. Plan keys are
/// accepted and ignored.
pub fn parse_config<T: Scalar>(text: &str) -> Result<SimConfig<T>, CliError> {
    let plan = parse_plan_unchecked::<T>(text)?;
    plan.base.validate()?;
    Ok(plan.base)
}

pub fn serialize_config<T: Scalar>(config: &SimConfig<T>) -> String {
    let plan = ExperimentPlan {
        base: config.clone(),
        ..Default::default()
    };
    let mut out = String::new();
    for key in CONFIG_KEYS {
        writeln!(out, "{key} = {}", get_key(&plan, key)).expect("write to string");
    }
    out
}

pub fn serialize_plan<T: Scalar>(plan: &ExperimentPlan<T>) -> String {
    let mut out = serialize_config(&plan.base);
    for key in PLAN_KEYS {
        writeln!(out, "{key} = {}", get_key(plan, key)).expect("write to string");
    }
    out
}

/// Applies `MKSTREAM_<KEY>` variables from `vars`. Other variables are
/// ignored; a prefixed variable naming no key is an error.
pub fn apply_env<T: Scalar, I>(plan: &mut ExperimentPlan<T>, vars: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = vars
        .into_iter()
        .filter(|(k, _)| k.starts_with(ENV_PREFIX))
        .collect();
    vars.sort();
    for (var, value) in vars {
        let key = var[ENV_PREFIX.len()..].to_ascii_lowercase();
        if !set_key(plan, &key, value.trim())? {
            return Err(CliError::UnknownEnv { var });
        }
    }
    Ok(())
}

/// Replicate statistics of one (λ, strategy) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T> {
    pub lambda: T,
    pub strategy: Strategy,
    pub summary: ReplicateSummary<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults<T> {
    pub cells: Vec<Cell<T>>,
}

/// Runs every cell of `plan` on the current rayon pool.
pub fn run_experiment<T: Scalar>(plan: &ExperimentPlan<T>) -> Result<ExperimentResults<T>, CliError> {
    plan.validate()?;
    let mut cells = Vec::with_capacity(plan.lambda_grid.len() * plan.strategies.len());
    for &lambda in &plan.lambda_grid {
        for &strategy in &plan.strategies {
            let cfg = plan.base.with_lambda(lambda).with_strategy(strategy);
            cells.push(Cell {
                lambda,
                strategy,
                summary: run_replicates(&cfg, plan.n_reps)?,
            });
        }
    }
    Ok(ExperimentResults { cells })
}

/// Per-metric CSV: `lambda,strategy,bucket_index,mean_rate,stddev`.
pub fn metric_csv<T: Scalar>(results: &ExperimentResults<T>, metric: Metric) -> String {
    let mut out = String::from("lambda,strategy,bucket_index,mean_rate,stddev\n");
    for cell in &results.cells {
        for b in &cell.summary.buckets {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6}",
                cell.lambda,
                cell.strategy,
                b.bucket_index,
                b.mean.get(metric).as_f64(),
                b.stddev.get(metric).as_f64()
            )
            .expect("write to string");
        }
    }
    out
}

/// Whole-run means per cell.
pub fn summary_csv<T: Scalar>(results: &ExperimentResults<T>) -> String {
    let mut out = String::from("lambda,strategy,n_reps");
    for m in Metric::ALL {
        write!(out, ",{}", m.name()).expect("write to string");
    }
    out.push('\n');
    for cell in &results.cells {
        write!(out, "{},{},{}", cell.lambda, cell.strategy, cell.summary.n_reps).expect("write to string");
        for m in Metric::ALL {
            write!(out, ",{:.6}", cell.summary.run_mean(m).as_f64()).expect("write to string");
        }
        out.push('\n');
    }
    out
}

/// Writes the five metric CSVs and `summary.csv` into `dir`.
pub fn write_outputs<T: Scalar>(results: &ExperimentResults<T>, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files: Vec<(PathBuf, String)> = Metric::ALL
        .iter()
        .map(|&m| (dir.join(format!("{}.csv", m.name())), metric_csv(results, m)))
        .collect();
    files.push((dir.join("summary.csv"), summary_csv(results)));
    for (path, body) in &files {
        fs::write(path, body).map_err(io(path))?;
    }
    Ok(files.into_iter().map(|f| f.0).collect())
}

/// Per-strategy means over the λ grid, best received rate first, with the
/// observed ordering underneath.
pub fn emit_summary<T: Scalar>(results: &ExperimentResults<T>) -> Result<String, CliError> {
    if results.cells.is_empty() {
        return Err(CliError::EmptyResults);
    }
    let mut strategies: Vec<Strategy> = Vec::new();
    for c in &results.cells {
        if !strategies.contains(&c.strategy) {
            strategies.push(c.strategy);
        }
    }
    let mut rows: Vec<(Strategy, [f64; 3])> = strategies
        .iter()
        .map(|&s| {
            let cells: Vec<&Cell<T>> = results.cells.iter().filter(|c| c.strategy == s).collect();
            let n = cells.len() as f64;
            let mean = |m: Metric| cells.iter().map(|c| c.summary.run_mean(m).as_f64()).sum::<f64>() / n;
            (s, [mean(Metric::Received), mean(Metric::Useful), mean(Metric::Lost)])
        })
        .collect();
    rows.sort_by(|a, b| b.1[0].total_cmp(&a.1[0]).then(a.0.cmp(&b.0)));
    let mut out = String::new();
    writeln!(out, "{:<17} {:>9} {:>9} {:>9}", "strategy", "received", "useful", "lost").expect("write to string");
    for (i, (s, v)) in rows.iter().enumerate() {
        let flag = if rows.len() > 1 && i == 0 { " *" } else { "" };
        writeln!(out, "{:<17} {:>9.4} {:>9.4} {:>9.4}{flag}", s.name(), v[0], v[1], v[2]).expect("write to string");
    }
    if rows.len() > 1 {
        let order: Vec<&str> = rows.iter().map(|r| r.0.name()).collect();
        writeln!(out, "received ordering: {}", order.join(" > ")).expect("write to string");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults() {
        let c: SimConfig<f64> = parse_config("lambda=0.5\nnb_vs=10").unwrap();
        assert_eq!(c.lambda, 0.5);
        assert_eq!(c.nb_vs, 10);
        assert_eq!(c.qos, SimConfig::<f64>::default().qos);
        let c: SimConfig<f64> = parse_config("qos=30 # frames per unit\n\n# comment only\n").unwrap();
        assert_eq!(c.qos, 30);
    }

    #[test]
    fn range_error_names_key_and_range() {
        let e = parse_config::<f64>("nb_p=12").unwrap_err().to_string();
        assert!(e.contains("nb_p") && e.contains("[3, 9]"), "{e}");
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(matches!(parse_config::<f64>("speed=3"), Err(CliError::UnknownKey { line: 1, .. })));
        assert!(matches!(parse_config::<f64>("qos 30"), Err(CliError::Syntax { .. })));
        assert!(matches!(parse_config::<f64>("qos=a"), Err(CliError::Value { .. })));
        assert!(matches!(parse_config::<f64>("qos=30\nqos=31"), Err(CliError::Duplicate { line: 2, .. })));
    }

    #[test]
    fn round_trip() {
        let mut c = SimConfig::<f64>::default();
        c.lambda = 0.1 + 0.2;
        c.strategy = Strategy::Mk;
        c.p_loss = 1.0 / 3.0;
        assert_eq!(parse_config::<f64>(&serialize_config(&c)).unwrap(), c);
        let c32 = SimConfig::<f32> {
            lambda: 0.7,
            ..Default::default()
        };
        assert_eq!(parse_config::<f32>(&serialize_config(&c32)).unwrap(), c32);
        let plan = ExperimentPlan::<f64>::default();
        assert_eq!(parse_plan::<f64>(&serialize_plan(&plan)).unwrap(), plan);
    }

    #[test]
    fn env_overrides() {
        let mut p = ExperimentPlan::<f64>::default();
        apply_env(
            &mut p,
            [
                ("MKSTREAM_LAMBDA".to_string(), "1.5".to_string()),
                ("MKSTREAM_STRATEGIES".to_string(), "mk,baseline".to_string()),
                ("PATH".to_string(), "/bin".to_string()),
            ],
        )
        .unwrap();
        assert_eq!(p.base.lambda, 1.5);
        assert_eq!(p.strategies, vec![Strategy::Mk, Strategy::Baseline]);
        assert!(matches!(
            apply_env(&mut p, [("MKSTREAM_NOPE".to_string(), "1".to_string())]),
            Err(CliError::UnknownEnv { .. })
        ));
    }

    #[test]
    fn every_key_is_settable() {
        let p = ExperimentPlan::<f64>::default();
        for key in CONFIG_KEYS.iter().chain(PLAN_KEYS.iter()) {
            let mut q = ExperimentPlan::<f64>::default();
            assert!(set_key(&mut q, key, &get_key(&p, key)).unwrap(), "{key}");
        }
    }

    #[test]
    fn empty_summary_is_an_error() {
        let r = ExperimentResults::<f64> { cells: Vec::new() };
        assert!(matches!(emit_summary(&r), Err(CliError::EmptyResults)));
    }
}
