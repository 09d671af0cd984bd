//! Experiment runners behind the command-line interface.
//!
//! Every runner writes CSV or JSON-lines artifacts under an output directory
//! together with `run_manifest.json`, which records the resolved configs.
//! Every data row carries the seed and the hash of the config that produced it.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{config_hash, Algorithm, AnalyzeConfig, ConfigFile, EnvConfig, TrainConfig};
use crate::dilemma::{classify_zone, gradient_report, schelling_curve, signflip_lambda, ExpectationMode, SimplifiedWorld, Zone};
use crate::env::{trajectory_rows, InvestEsgEnv, JointAction};
use crate::error::{Error, Result};
use crate::metrics::{aggregate, summarize_run, EpisodeRecord, MeanStd, RunSummary, SUMMARY_SCHEMA_VERSION};
use crate::training::{checkpoint_path, MetricsSink, Trainer, UpdateMetrics};

/// Environment variable naming the default output root.
pub const OUT_ENV_VAR: &str = "INVESTESG_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Train,
    Simulate,
    Sweep,
    Analyze,
    Schelling,
    Summarize,
}

/// Everything a runner needs, as parsed from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub command: Command,
    /// Config file with `env` (and optionally `train` / `analyze`) sections.
    pub config: Option<PathBuf>,
    /// Config file whose `train` section overrides the one in `config`.
    pub train_config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    /// Overrides the env alpha; each value becomes its own run group.
    pub alphas: Vec<f64>,
    /// Sweep algorithms; empty means the train config's algorithm.
    pub algorithms: Vec<Algorithm>,
    /// Fixed mitigation rates for `simulate`.
    pub rates: Vec<f64>,
    pub out_dir: PathBuf,
    pub desk_scale: bool,
    pub resume: bool,
    /// Upper bound on concurrently running sweep cells (0 = one per core).
    pub parallelism: usize,
}

impl ExperimentSpec {
    pub fn new(command: Command, out_dir: impl Into<PathBuf>) -> Self {
        ExperimentSpec {
            command,
            config: None,
            train_config: None,
            seeds: vec![0],
            alphas: Vec::new(),
            algorithms: Vec::new(),
            rates: vec![0.0, 0.005],
            out_dir: out_dir.into(),
            desk_scale: false,
            resume: false,
            parallelism: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "must list at least one seed"));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::config("alphas", format!("contains invalid value {a}")));
        }
        Ok(())
    }
}

/// Default output root: `$INVESTESG_OUT` or `./runs`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_ENV_VAR).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// Configs after loading files and applying the desk-scale profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub analyze: AnalyzeConfig,
}

pub fn resolve(spec: &ExperimentSpec) -> Result<Resolved> {
    let file = match &spec.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::new(),
    };
    let mut train = file.train.clone().unwrap_or_default();
    if let Some(p) = &spec.train_config {
        let tf = ConfigFile::load(p)?;
        train = tf
            .train
            .ok_or_else(|| Error::config("train_config", format!("{} has no [train] section", p.display())))?;
    }
    let mut env = file.env.clone().unwrap_or_default();
    if spec.desk_scale {
        env = env.desk_scale();
        train = train.desk_scale();
    }
    env.validate()?;
    train.validate(&env)?;
    Ok(Resolved {
        env,
        train,
        analyze: file.analyze.unwrap_or_default(),
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in rows {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: Command,
    version: &'static str,
    spec: &'a ExperimentSpec,
    resolved: &'a Resolved,
    config_hash: String,
    artifacts: Vec<String>,
}

fn write_manifest(spec: &ExperimentSpec, resolved: &Resolved, artifacts: Vec<String>) -> Result<()> {
    create_dir(&spec.out_dir)?;
    let manifest = Manifest {
        command: spec.command,
        version: env!("CARGO_PKG_VERSION"),
        spec,
        resolved,
        config_hash: config_hash(resolved),
        artifacts,
    };
    write_json(&spec.out_dir.join("run_manifest.json"), &manifest)
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub alpha: f64,
    pub algorithm: String,
    pub esg_weight: f64,
    pub seed: u64,
    pub config_hash: String,
    pub episodes: usize,
    pub market_total_wealth: f64,
    pub final_mitigation: f64,
    pub final_climate_risk: f64,
    pub gini_capital: Option<f64>,
    pub gini_investment: Option<f64>,
    /// Mean return per agent, `;`-separated in agent order.
    pub agent_returns: String,
}

impl SummaryRow {
    pub fn new(summary: &RunSummary, env: &EnvConfig, algorithm: &str) -> Self {
        SummaryRow {
            schema_version: SUMMARY_SCHEMA_VERSION,
            alpha: env.alpha,
            algorithm: algorithm.to_string(),
            esg_weight: env.esg_weight(0),
            seed: summary.seed,
            config_hash: summary.config_hash.clone(),
            episodes: summary.episodes,
            market_total_wealth: summary.market_total_wealth,
            final_mitigation: summary.final_mitigation,
            final_climate_risk: summary.final_climate_risk,
            gini_capital: summary.gini_capital,
            gini_investment: summary.gini_investment,
            agent_returns: summary.agent_returns.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";"),
        }
    }

    fn to_summary(&self) -> Result<RunSummary> {
        let agent_returns = if self.agent_returns.is_empty() {
            Vec::new()
        } else {
            self.agent_returns
                .split(';')
                .map(|s| s.parse::<f64>().map_err(|e| Error::UndefinedInput(format!("agent_returns `{s}`: {e}"))))
                .collect::<Result<_>>()?
        };
        Ok(RunSummary {
            seed: self.seed,
            config_hash: self.config_hash.clone(),
            episodes: self.episodes,
            market_total_wealth: self.market_total_wealth,
            final_mitigation: self.final_mitigation,
            final_climate_risk: self.final_climate_risk,
            gini_capital: self.gini_capital,
            gini_investment: self.gini_investment,
            agent_returns,
        })
    }
}

/// One row of `aggregate.csv`: mean and population std across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub schema_version: u32,
    pub alpha: f64,
    pub algorithm: String,
    pub esg_weight: f64,
    pub runs: usize,
    pub market_total_wealth_mean: f64,
    pub market_total_wealth_std: f64,
    pub final_mitigation_mean: f64,
    pub final_mitigation_std: f64,
    pub final_climate_risk_mean: f64,
    pub final_climate_risk_std: f64,
}

/// Groups rows by (alpha, algorithm, ESG weight) in first-seen order.
pub fn aggregate_rows(rows: &[SummaryRow]) -> Result<Vec<AggregateRow>> {
    let mut keys: Vec<(f64, String, f64)> = Vec::new();
    for r in rows {
        let key = (r.alpha, r.algorithm.clone(), r.esg_weight);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(alpha, algorithm, esg_weight)| {
            let group: Vec<RunSummary> = rows
                .iter()
                .filter(|r| r.alpha == alpha && r.algorithm == algorithm && r.esg_weight == esg_weight)
                .map(SummaryRow::to_summary)
                .collect::<Result<_>>()?;
            let agg = aggregate(&group)?;
            Ok(AggregateRow {
                schema_version: SUMMARY_SCHEMA_VERSION,
                alpha,
                algorithm,
                esg_weight,
                runs: agg.runs,
                market_total_wealth_mean: agg.market_total_wealth.mean,
                market_total_wealth_std: agg.market_total_wealth.std,
                final_mitigation_mean: agg.final_mitigation.mean,
                final_mitigation_std: agg.final_mitigation.std,
                final_climate_risk_mean: agg.final_climate_risk.mean,
                final_climate_risk_std: agg.final_climate_risk.std,
            })
        })
        .collect()
}

struct CsvSink {
    writer: Mutex<csv::Writer<File>>,
    path: PathBuf,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        Ok(CsvSink {
            writer: Mutex::new(csv_writer(path)?),
            path: path.to_path_buf(),
        })
    }
}

impl MetricsSink for CsvSink {
    fn record(&self, row: &UpdateMetrics) -> Result<()> {
        let mut w = self.writer.lock().expect("metrics writer poisoned");
        w.serialize(row)?;
        w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Artifacts of one trained (alpha, algorithm, seed) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainArtifacts {
    pub dir: PathBuf,
    pub summary: SummaryRow,
    pub history: Vec<UpdateMetrics>,
}

fn cell_dir(root: &Path, env: &EnvConfig, train: &TrainConfig) -> PathBuf {
    let mut name = format!("alpha{}_{}", env.alpha, train.algorithm.name());
    if let Some(w) = train.esg_weight {
        name.push_str(&format!("_esg{w}"));
    }
    root.join(name).join(format!("seed{}", train.seed))
}

/// Trains one cell into `dir`: `metrics.csv`, `checkpoint.bin`, `config.toml`
/// and `summary.json`. With `resume`, continues from an existing checkpoint.
pub fn train_cell(env: &EnvConfig, train: &TrainConfig, dir: &Path, resume: bool) -> Result<TrainArtifacts> {
    create_dir(dir)?;
    let ck = checkpoint_path(dir);
    let mut trainer = if resume && ck.exists() {
        Trainer::resume(env, train, &ck)?
    } else {
        Trainer::new(env, train)?
    };
    let file = ConfigFile {
        env: Some(env.clone()),
        train: Some(train.clone()),
        ..ConfigFile::new()
    };
    file.save(&dir.join("config.toml"))?;
    let sink = CsvSink::create(&dir.join("metrics.csv"))?;
    for row in trainer.history() {
        sink.record(row)?;
    }
    trainer.run(Some(&sink), Some(dir))?;
    let summary = trainer.summary()?;
    let row = SummaryRow::new(&summary, trainer.env_config(), train.algorithm.name());
    #[derive(Serialize)]
    struct SummaryFile<'a> {
        summary: &'a SummaryRow,
        run: &'a RunSummary,
        env: &'a EnvConfig,
        train: &'a TrainConfig,
    }
    write_json(
        &dir.join("summary.json"),
        &SummaryFile {
            summary: &row,
            run: &summary,
            env: trainer.env_config(),
            train,
        },
    )?;
    Ok(TrainArtifacts {
        dir: dir.to_path_buf(),
        summary: row,
        history: trainer.history().to_vec(),
    })
}

fn alphas_or(spec: &ExperimentSpec, env: &EnvConfig) -> Vec<f64> {
    if spec.alphas.is_empty() {
        vec![env.alpha]
    } else {
        spec.alphas.clone()
    }
}

/// Trains every (alpha, seed) cell sequentially.
pub fn run_train(spec: &ExperimentSpec) -> Result<Vec<TrainArtifacts>> {
    spec.validate()?;
    let resolved = resolve(spec)?;
    let mut out = Vec::new();
    for alpha in alphas_or(spec, &resolved.env) {
        let env = EnvConfig {
            alpha,
            ..resolved.env.clone()
        };
        for &seed in &spec.seeds {
            let train = resolved.train.clone().with_seed(seed);
            out.push(train_cell(&env, &train, &cell_dir(&spec.out_dir, &env, &train), spec.resume)?);
        }
    }
    let rows: Vec<SummaryRow> = out.iter().map(|a| a.summary.clone()).collect();
    write_csv(&spec.out_dir.join("summary.csv"), &rows)?;
    write_csv(&spec.out_dir.join("aggregate.csv"), &aggregate_rows(&rows)?)?;
    write_manifest(spec, &resolved, vec!["summary.csv".into(), "aggregate.csv".into()])?;
    Ok(out)
}

/// A sweep cell that failed, recorded instead of aborting the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub alpha: f64,
    pub algorithm: String,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SummaryRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }
}

/// `base` with the fields that define `algorithm` (self-play and critic
/// input) switched over; sizes, step sizes and budgets are kept.
pub fn switch_algorithm(base: &TrainConfig, algorithm: Algorithm) -> TrainConfig {
    if algorithm == base.algorithm {
        return base.clone();
    }
    let defaults = TrainConfig::for_algorithm(algorithm);
    TrainConfig {
        algorithm,
        self_play: defaults.self_play,
        critic_input: defaults.critic_input,
        ..base.clone()
    }
}

/// Cross product of alphas, algorithms and seeds, run on a bounded pool.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepReport> {
    spec.validate()?;
    if spec.alphas.is_empty() {
        return Err(Error::config("alphas", "a sweep needs at least one alpha"));
    }
    let resolved = resolve(spec)?;
    let algorithms = if spec.algorithms.is_empty() {
        vec![resolved.train.algorithm]
    } else {
        spec.algorithms.clone()
    };
    let mut cells = Vec::new();
    for &alpha in &spec.alphas {
        for &algorithm in &algorithms {
            for &seed in &spec.seeds {
                let env = EnvConfig {
                    alpha,
                    ..resolved.env.clone()
                };
                let train = switch_algorithm(&resolved.train, algorithm).with_seed(seed);
                cells.push((env, train));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism)
        .build()
        .map_err(|e| Error::config("parallelism", e.to_string()))?;
    let results: Vec<std::result::Result<SummaryRow, SweepFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|(env, train)| {
                let dir = cell_dir(&spec.out_dir, env, train);
                train_cell(env, train, &dir, spec.resume)
                    .map(|a| a.summary)
                    .map_err(|e| SweepFailure {
                        alpha: env.alpha,
                        algorithm: train.algorithm.name().to_string(),
                        seed: train.seed,
                        error: e.to_string(),
                    })
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(f) => failures.push(f),
        }
    }
    let aggregates = if rows.is_empty() { Vec::new() } else { aggregate_rows(&rows)? };
    create_dir(&spec.out_dir)?;
    write_csv(&spec.out_dir.join("summary.csv"), &rows)?;
    write_csv(&spec.out_dir.join("aggregate.csv"), &aggregates)?;
    write_jsonl(&spec.out_dir.join("failures.jsonl"), &failures)?;
    write_manifest(
        spec,
        &resolved,
        vec!["summary.csv".into(), "aggregate.csv".into(), "failures.jsonl".into()],
    )?;
    Ok(SweepReport {
        rows,
        aggregates,
        failures,
    })
}

/// One row of `thresholds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub alpha: f64,
    pub step: usize,
    pub max_lag: usize,
    pub mode: ExpectationMode,
    pub lambda_low: f64,
    pub lambda_critical: f64,
    pub zone: Zone,
    pub max_private: f64,
    pub max_social: f64,
    /// Lag-0 sign flip of company 0's private gradient, if it has one.
    pub signflip: Option<f64>,
    pub config_hash: String,
}

/// One row of `gradients.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientRow {
    pub alpha: f64,
    pub company: usize,
    pub lag: usize,
    pub private: f64,
    pub social: f64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub thresholds: Vec<ThresholdRow>,
    pub gradients: Vec<GradientRow>,
}

/// Threshold classification and gradient reports over an alpha grid.
pub fn run_analyze(spec: &ExperimentSpec) -> Result<AnalyzeReport> {
    spec.validate()?;
    let resolved = resolve(spec)?;
    let a = &resolved.analyze;
    let alphas = if spec.alphas.is_empty() { a.alphas.clone() } else { spec.alphas.clone() };
    if alphas.is_empty() {
        return Err(Error::config("analyze.alphas", "must not be empty"));
    }
    let hash = config_hash(&(&resolved.env, a));
    let mut base = SimplifiedWorld::from_env(&resolved.env, a.step)?;
    base.max_lag = a.max_lag;
    base.mode = if a.bernoulli_approximation {
        ExpectationMode::Bernoulli
    } else {
        ExpectationMode::Exact
    };
    let mut thresholds = Vec::new();
    let mut gradients = Vec::new();
    for &alpha in &alphas {
        let world = base.with_lambda(alpha);
        let r = classify_zone(&world, alpha)?;
        let signflip = match signflip_lambda(&world, 0) {
            Ok(v) => Some(v),
            Err(Error::NoSignFlip(_)) => None,
            Err(e) => return Err(e),
        };
        thresholds.push(ThresholdRow {
            alpha,
            step: a.step,
            max_lag: a.max_lag,
            mode: base.mode,
            lambda_low: r.lambda_low,
            lambda_critical: r.lambda_critical,
            zone: r.zone,
            max_private: r.max_private,
            max_social: r.max_social,
            signflip,
            config_hash: hash.clone(),
        });
        for company in 0..world.num_companies() {
            let g = gradient_report(&world, company, a.max_lag.min(a.step))?;
            for lag in 0..g.private.len() {
                gradients.push(GradientRow {
                    alpha,
                    company,
                    lag,
                    private: g.private[lag],
                    social: g.social[lag],
                    config_hash: hash.clone(),
                });
            }
        }
    }
    create_dir(&spec.out_dir)?;
    write_csv(&spec.out_dir.join("thresholds.csv"), &thresholds)?;
    write_csv(&spec.out_dir.join("gradients.csv"), &gradients)?;
    write_manifest(spec, &resolved, vec!["thresholds.csv".into(), "gradients.csv".into()])?;
    Ok(AnalyzeReport { thresholds, gradients })
}

/// Cooperative mitigation rate used by the Schelling runner.
pub const SCHELLING_RATE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchellingCsvRow {
    pub alpha: f64,
    pub num_cooperators: usize,
    pub payoff_coop: f64,
    pub payoff_defect: f64,
    pub payoff_coop_std: f64,
    pub payoff_defect_std: f64,
    pub focal_capital_coop: f64,
    pub focal_capital_defect: f64,
    pub seeds: String,
    pub config_hash: String,
}

/// Schelling diagram per alpha over the spec's seeds.
pub fn run_schelling(spec: &ExperimentSpec) -> Result<Vec<SchellingCsvRow>> {
    spec.validate()?;
    let resolved = resolve(spec)?;
    let seeds = spec.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";");
    let mut rows = Vec::new();
    for alpha in alphas_or(spec, &resolved.env) {
        let env = EnvConfig {
            alpha,
            ..resolved.env.clone()
        };
        let hash = config_hash(&env);
        let counts: Vec<usize> = (0..env.num_companies).collect();
        for r in schelling_curve(&env, SCHELLING_RATE.min(env.max_mitigation), &counts, &spec.seeds)? {
            rows.push(SchellingCsvRow {
                alpha,
                num_cooperators: r.num_cooperators,
                payoff_coop: r.payoff_coop,
                payoff_defect: r.payoff_defect,
                payoff_coop_std: r.payoff_coop_std,
                payoff_defect_std: r.payoff_defect_std,
                focal_capital_coop: r.focal_capital_coop,
                focal_capital_defect: r.focal_capital_defect,
                seeds: seeds.clone(),
                config_hash: hash.clone(),
            });
        }
    }
    create_dir(&spec.out_dir)?;
    write_csv(&spec.out_dir.join("schelling.csv"), &rows)?;
    write_manifest(spec, &resolved, vec!["schelling.csv".into()])?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SimulateRow {
    alpha: f64,
    rate: f64,
    seed: u64,
    config_hash: String,
    #[serde(flatten)]
    row: crate::env::TrajectoryRow,
}

/// Fixed-policy rollouts: every company mitigates `rate`, investors hold
/// every company. Writes per-step trajectories (JSON lines) and summaries.
pub fn run_simulate(spec: &ExperimentSpec) -> Result<Vec<SummaryRow>> {
    spec.validate()?;
    if spec.rates.is_empty() {
        return Err(Error::config("rates", "must list at least one mitigation rate"));
    }
    let resolved = resolve(spec)?;
    let mut trajectories = Vec::new();
    let mut summaries = Vec::new();
    for alpha in alphas_or(spec, &resolved.env) {
        let env = EnvConfig {
            alpha,
            ..resolved.env.clone()
        };
        let hash = config_hash(&env);
        for &rate in &spec.rates {
            let action = JointAction::uniform(&env, rate);
            action.validate(&env)?;
            for &seed in &spec.seeds {
                let (mut sim, _) = InvestEsgEnv::reset(env.clone(), seed)?;
                let mut returns = vec![0.0; env.num_agents()];
                while !sim.is_done() {
                    let outcome = sim.step(&action)?;
                    returns.iter_mut().zip(&outcome.rewards).for_each(|(r, x)| *r += x);
                    for row in trajectory_rows(0, &action, &outcome, sim.state()) {
                        trajectories.push(SimulateRow {
                            alpha,
                            rate,
                            seed,
                            config_hash: hash.clone(),
                            row,
                        });
                    }
                }
                let record = EpisodeRecord {
                    final_state: sim.state().clone(),
                    returns,
                };
                let summary = summarize_run(&[record], seed, &hash)?;
                summaries.push(SummaryRow::new(&summary, &env, &format!("fixed_{rate}")));
            }
        }
    }
    create_dir(&spec.out_dir)?;
    write_jsonl(&spec.out_dir.join("trajectories.jsonl"), &trajectories)?;
    write_csv(&spec.out_dir.join("summary.csv"), &summaries)?;
    write_manifest(spec, &resolved, vec!["trajectories.jsonl".into(), "summary.csv".into()])?;
    Ok(summaries)
}

/// Collects every `summary.csv` below `out_dir` (except the output itself)
/// and writes their aggregate to `out_dir/aggregate.csv`.
pub fn run_summarize(spec: &ExperimentSpec) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    let mut stack = vec![spec.out_dir.clone()];
    let mut files = Vec::new();
    while let Some(dir) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "summary.csv") {
                files.push(path);
            }
        }
    }
    files.sort();
    for path in &files {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        for row in reader.deserialize::<SummaryRow>() {
            let row = row.map_err(|e| Error::Parse {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if !rows.contains(&row) {
                rows.push(row);
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::UndefinedInput(format!("no summary.csv rows under {}", spec.out_dir.display())));
    }
    let aggregates = aggregate_rows(&rows)?;
    write_csv(&spec.out_dir.join("aggregate.csv"), &aggregates)?;
    Ok(aggregates)
}

/// Mean and std of a column across rows, for callers that aggregate by hand.
pub fn column_stats(rows: &[SummaryRow], f: impl Fn(&SummaryRow) -> f64) -> Option<MeanStd> {
    MeanStd::of(&rows.iter().map(f).collect::<Vec<_>>())
}
