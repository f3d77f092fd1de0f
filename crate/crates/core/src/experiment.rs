//! Batch experiments: configuration, seeded replications, aggregation and
//! result files.
//!
//! # Config files
//!
//! One `key = value` pair per line; blank lines and text after `#` are
//! ignored. Unknown keys are an error.
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `setting` | `S1` | generated market: `S1` or `S2` |
//! | `n_agents`, `n_firms` | `5`, `5` | generated market size |
//! | `market_seed` | `0` | seed of the generated market |
//! | `market_file` | none | read the market from a file instead |
//! | `policy` | `ucb` | `ucb` or `ts` |
//! | `horizon` | `50000` | rounds per replication |
//! | `replications` | `25` | number of replications |
//! | `master_seed` | `0` | replication seeds derive from this |
//! | `eta`, `lambda_bar` | `0.02`, `0.16` | pull-module parameters |
//! | `noise_std` | `1` | reward noise standard deviation |
//! | `output_dir` | `out` | result directory |
//! | `grid_size` | `500` | regret samples per run |
//! | `tail_len` | `horizon / 10` | final window for the stable-match rate |
//! | `workers` | `1` | worker threads |
//! | `ts_variance` | `total` | `total` or `per_firm` |
//! | `tie_break` | `firm_id` | `firm_id` or `random` |
//! | `fallback_pull_update` | `false` | update the pull module on fallback |
//!
//! # Output files
//!
//! * `runs.csv`: `run_id,t,agent_id,cum_regret`, one row per run, grid
//!   point and agent.
//! * `aggregate.csv`: `t,agent_id,mean,std`, population standard deviation
//!   across runs.
//! * `summary.json`: configuration, market, seeds, per-run terminal
//!   summaries and wall-clock time.
//! * `market.txt`: the market in the market-file format.
//!
//! Numbers use the shortest decimal that round-trips, so the CSV files are
//! byte-identical for identical inputs regardless of the worker count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::adversarial::ABParams;
use crate::agent::{Policy, TieBreak};
use crate::bandit_index::TsVariance;
use crate::error::{Error, Result};
use crate::market::{gen_market, make_benchmark, Benchmark, Market, Setting, UtilityScheme};
use crate::market_file::{format_market, read_market};
use crate::rng::{replication_seed, stream_rng, Stream};
use crate::simulator::{even_grid, run_episode, Metrics, SimConfig};

pub const RUNS_HEADER: &str = "run_id,t,agent_id,cum_regret";
pub const AGGREGATE_HEADER: &str = "t,agent_id,mean,std";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketSource {
    Generate {
        setting: Setting,
        n_agents: usize,
        n_firms: usize,
        market_seed: u64,
    },
    File(PathBuf),
}

impl MarketSource {
    /// Generated markets draw from the market stream of `market_seed`.
    pub fn load(&self) -> Result<Market> {
        match self {
            MarketSource::Generate {
                setting,
                n_agents,
                n_firms,
                market_seed,
            } => {
                let mut rng = stream_rng(*market_seed, Stream::Market);
                gen_market(&mut rng, *n_agents, *n_firms, *setting, UtilityScheme::default())
            }
            MarketSource::File(path) => read_market(path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub market: MarketSource,
    pub policy: Policy,
    pub horizon: u64,
    pub replications: usize,
    pub master_seed: u64,
    pub params: ABParams,
    pub noise_std: f64,
    pub output_dir: PathBuf,
    pub grid_size: u64,
    /// `None` means `horizon / 10`.
    pub tail_len: Option<u64>,
    pub workers: usize,
    pub ts_variance: TsVariance,
    pub tie_break: TieBreak,
    pub fallback_pull_update: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            market: MarketSource::Generate {
                setting: Setting::S1,
                n_agents: 5,
                n_firms: 5,
                market_seed: 0,
            },
            policy: Policy::Ucb,
            horizon: 50_000,
            replications: 25,
            master_seed: 0,
            params: ABParams::default(),
            noise_std: 1.0,
            output_dir: PathBuf::from("out"),
            grid_size: 500,
            tail_len: None,
            workers: 1,
            ts_variance: TsVariance::Total,
            tie_break: TieBreak::FirmId,
            fallback_pull_update: false,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "setting",
    "n_agents",
    "n_firms",
    "market_seed",
    "market_file",
    "policy",
    "horizon",
    "replications",
    "master_seed",
    "eta",
    "lambda_bar",
    "noise_std",
    "output_dir",
    "grid_size",
    "tail_len",
    "workers",
    "ts_variance",
    "tie_break",
    "fallback_pull_update",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            config.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Sets one field from its config-file key. Later calls override
    /// earlier ones; `market_file` switches the market source to a file and
    /// any generation key switches it back.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "setting" | "n_agents" | "n_firms" | "market_seed" => {
                let (mut setting, mut n_agents, mut n_firms, mut market_seed) = match self.market {
                    MarketSource::Generate {
                        setting,
                        n_agents,
                        n_firms,
                        market_seed,
                    } => (setting, n_agents, n_firms, market_seed),
                    MarketSource::File(_) => (Setting::S1, 5, 5, 0),
                };
                match key {
                    "setting" => setting = parse_value(key, value)?,
                    "n_agents" => n_agents = parse_value(key, value)?,
                    "n_firms" => n_firms = parse_value(key, value)?,
                    _ => market_seed = parse_value(key, value)?,
                }
                self.market = MarketSource::Generate {
                    setting,
                    n_agents,
                    n_firms,
                    market_seed,
                };
            }
            "market_file" => self.market = MarketSource::File(PathBuf::from(value)),
            "policy" => self.policy = parse_value(key, value)?,
            "horizon" => self.horizon = parse_value(key, value)?,
            "replications" => self.replications = parse_value(key, value)?,
            "master_seed" => self.master_seed = parse_value(key, value)?,
            "eta" => self.params = ABParams::new(parse_value(key, value)?, self.params.lambda_bar())?,
            "lambda_bar" => self.params = ABParams::new(self.params.eta(), parse_value(key, value)?)?,
            "noise_std" => self.noise_std = parse_value(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "grid_size" => self.grid_size = parse_value(key, value)?,
            "tail_len" => self.tail_len = Some(parse_value(key, value)?),
            "workers" => self.workers = parse_value(key, value)?,
            "ts_variance" => {
                self.ts_variance = match value {
                    "total" => TsVariance::Total,
                    "per_firm" => TsVariance::PerFirm,
                    _ => return Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
                }
            }
            "tie_break" => {
                self.tie_break = match value {
                    "firm_id" => TieBreak::FirmId,
                    "random" => TieBreak::Random,
                    _ => return Err(Error::Config(format!("invalid value `{value}` for `{key}`"))),
                }
            }
            "fallback_pull_update" => self.fallback_pull_update = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.grid_size == 0 {
            return Err(Error::Config("grid_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replications as u64)
            .map(|i| replication_seed(self.master_seed, i))
            .collect()
    }

    fn sim_config(&self, market: &Market, benchmark: &Benchmark, seed: u64) -> SimConfig {
        let mut sim = SimConfig::new(market.clone(), benchmark.clone(), self.policy, self.horizon, seed)
            .with_params(self.params)
            .with_ts_variance(self.ts_variance)
            .with_tie_break(self.tie_break);
        sim.agent.fallback_pull_update = self.fallback_pull_update;
        sim.noise_std = self.noise_std;
        sim.sample_grid = even_grid(self.horizon, self.grid_size);
        if let Some(tail) = self.tail_len {
            sim.tail_len = tail;
        }
        sim
    }
}

/// Terminal statistics of one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub run_id: usize,
    pub seed: u64,
    pub final_regret: Vec<f64>,
    pub tail_stable_rate: Vec<f64>,
    pub total_collisions: Vec<u64>,
    pub fallbacks: Vec<u64>,
}

impl RunSummary {
    fn new(run_id: usize, seed: u64, metrics: &Metrics) -> Self {
        Self {
            run_id,
            seed,
            final_regret: metrics.agents.iter().map(|a| a.final_regret()).collect(),
            tail_stable_rate: (0..metrics.agents.len()).map(|a| metrics.tail_stable_rate(a)).collect(),
            total_collisions: metrics.agents.iter().map(|a| a.collisions.iter().sum()).collect(),
            fallbacks: metrics.agents.iter().map(|a| a.fallbacks).collect(),
        }
    }
}

/// Across-run mean and population standard deviation of cumulative regret,
/// indexed `[agent][grid point]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateResult {
    pub grid: Vec<u64>,
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    pub runs: Vec<RunSummary>,
}

impl AggregateResult {
    /// Aggregates runs in the given order, which fixes the summation order.
    pub fn from_runs(runs: &[Metrics], seeds: &[u64]) -> Result<Self> {
        let first = runs
            .first()
            .ok_or_else(|| Error::Config("no runs to aggregate".into()))?;
        let grid = first.grid.clone();
        let n_agents = first.agents.len();
        let n = runs.len() as f64;
        let mut mean = vec![vec![0.0; grid.len()]; n_agents];
        let mut std = vec![vec![0.0; grid.len()]; n_agents];
        for a in 0..n_agents {
            for k in 0..grid.len() {
                let m = runs.iter().map(|r| r.agents[a].regret[k]).sum::<f64>() / n;
                let var = runs.iter().map(|r| (r.agents[a].regret[k] - m).powi(2)).sum::<f64>() / n;
                mean[a][k] = m;
                std[a][k] = var.sqrt();
            }
        }
        Ok(Self {
            grid,
            mean,
            std,
            runs: runs
                .iter()
                .zip(seeds)
                .enumerate()
                .map(|(i, (r, &s))| RunSummary::new(i, s, r))
                .collect(),
        })
    }

    /// Mean over runs of each agent's tail stable-match rate.
    pub fn mean_tail_stable_rate(&self) -> Vec<f64> {
        let n_agents = self.mean.len();
        let n = self.runs.len() as f64;
        (0..n_agents)
            .map(|a| self.runs.iter().map(|r| r.tail_stable_rate[a]).sum::<f64>() / n)
            .collect()
    }

    /// Population standard deviation over runs of each agent's final regret.
    pub fn final_regret_std(&self) -> Vec<f64> {
        let n = self.runs.len() as f64;
        (0..self.mean.len())
            .map(|a| {
                let m = self.runs.iter().map(|r| r.final_regret[a]).sum::<f64>() / n;
                (self.runs.iter().map(|r| (r.final_regret[a] - m).powi(2)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }

    /// Mean cumulative regret of `agent` at round `t`, if `t` is a grid point.
    pub fn mean_at(&self, agent: usize, t: u64) -> Option<f64> {
        let k = self.grid.binary_search(&t).ok()?;
        Some(self.mean[agent][k])
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub config: ExperimentConfig,
    pub market: Market,
    pub benchmark: Benchmark,
    pub seeds: Vec<u64>,
    pub runs: Vec<Metrics>,
    pub aggregate: AggregateResult,
    pub wall_clock_secs: f64,
}

/// Runs every replication on a pool of `config.workers` threads. Results
/// are ordered by run id.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchResult> {
    config.validate()?;
    let start = Instant::now();
    let market = config.market.load()?;
    let benchmark = make_benchmark(&market)?;
    let seeds = config.seeds();
    config.sim_config(&market, &benchmark, seeds[0]).validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let runs = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| run_episode(&config.sim_config(&market, &benchmark, seed)))
            .collect::<Result<Vec<Metrics>>>()
    })?;
    let aggregate = AggregateResult::from_runs(&runs, &seeds)?;
    Ok(BatchResult {
        config: config.clone(),
        market,
        benchmark,
        seeds,
        runs,
        aggregate,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn runs_csv(runs: &[Metrics]) -> String {
    let mut out = String::from(RUNS_HEADER);
    out.push('\n');
    for (run_id, run) in runs.iter().enumerate() {
        for (k, t) in run.grid.iter().enumerate() {
            for (a, agent) in run.agents.iter().enumerate() {
                let _ = writeln!(out, "{run_id},{t},{a},{}", agent.regret[k]);
            }
        }
    }
    out
}

pub fn aggregate_csv(aggregate: &AggregateResult) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for (k, t) in aggregate.grid.iter().enumerate() {
        for a in 0..aggregate.mean.len() {
            let _ = writeln!(out, "{t},{a},{},{}", aggregate.mean[a][k], aggregate.std[a][k]);
        }
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    market: &'a Market,
    stable_matching: &'a [usize],
    seed_derivation: &'static str,
    seeds: &'a [u64],
    mean_tail_stable_rate: Vec<f64>,
    final_regret_mean: Vec<f64>,
    final_regret_std: Vec<f64>,
    runs: &'a [RunSummary],
    wall_clock_secs: f64,
}

pub const SEED_DERIVATION: &str =
    "seed_i = splitmix64_finalize(master_seed + (i + 1) * 0x9e3779b97f4a7c15), i = 0..replications, wrapping u64 arithmetic";

pub fn summary_json(result: &BatchResult) -> Result<String> {
    let agg = &result.aggregate;
    let summary = Summary {
        config: &result.config,
        market: &result.market,
        stable_matching: &result.benchmark.stable_firm,
        seed_derivation: SEED_DERIVATION,
        seeds: &result.seeds,
        mean_tail_stable_rate: agg.mean_tail_stable_rate(),
        final_regret_mean: agg.mean.iter().map(|m| m.last().copied().unwrap_or(0.0)).collect(),
        final_regret_std: agg.final_regret_std(),
        runs: &agg.runs,
        wall_clock_secs: result.wall_clock_secs,
    };
    Ok(serde_json::to_string_pretty(&summary)?)
}

/// Writes `runs.csv`, `aggregate.csv`, `summary.json` and `market.txt` into
/// `dir`, creating it if needed.
pub fn write_outputs(result: &BatchResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("runs.csv"), runs_csv(&result.runs))?;
    std::fs::write(dir.join("aggregate.csv"), aggregate_csv(&result.aggregate))?;
    std::fs::write(dir.join("summary.json"), summary_json(result)?)?;
    std::fs::write(dir.join("market.txt"), format_market(&result.market))?;
    Ok(())
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<BatchResult> {
    let result = run_batch(config)?;
    write_outputs(&result, &config.output_dir)?;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
}

impl FromStr for Figure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            other => Err(Error::Config(format!("unknown figure `{other}`"))),
        }
    }
}

impl Figure {
    pub fn setting(self) -> Setting {
        match self {
            Figure::Fig1 => Setting::S1,
            Figure::Fig2 => Setting::S2,
        }
    }
}

/// Market seeds of the two preference orderings are `seed` and `seed + 1`.
pub const REPRODUCE_SEED: u64 = 2024;

/// Panel directories in figure order: UCB on both markets, then TS.
pub const PANELS: [(&str, Policy, u64); 4] = [
    ("a_ucb_m0", Policy::Ucb, 0),
    ("b_ucb_m1", Policy::Ucb, 1),
    ("c_ts_m0", Policy::Ts, 0),
    ("d_ts_m1", Policy::Ts, 1),
];

/// Runs the four panels of a figure with `base` supplying everything but
/// the market and policy. Each panel is written to `base.output_dir/<panel>`.
pub fn reproduce(figure: Figure, seed: u64, base: &ExperimentConfig) -> Result<Vec<(String, BatchResult)>> {
    let (n_agents, n_firms) = match base.market {
        MarketSource::Generate { n_agents, n_firms, .. } => (n_agents, n_firms),
        MarketSource::File(_) => (5, 5),
    };
    PANELS
        .iter()
        .map(|&(name, policy, m)| {
            let mut config = base.clone();
            config.market = MarketSource::Generate {
                setting: figure.setting(),
                n_agents,
                n_firms,
                market_seed: seed + m,
            };
            config.policy = policy;
            config.output_dir = base.output_dir.join(name);
            Ok((name.to_string(), run_experiment(&config)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::parse("n_agents = 3\nn_firms = 4\nhorizon = 300\nreplications = 4\ngrid_size = 10").unwrap();
        c.master_seed = 9;
        c
    }

    #[test]
    fn parses_config_text() {
        let c = ExperimentConfig::parse(
            "# demo\nsetting = S2\npolicy = ts  # thompson\nhorizon=10\n\neta = 0.01\nlambda_bar = 0.08\nworkers = 3\nts_variance = per_firm\ntie_break = random\nfallback_pull_update = true\n",
        )
        .unwrap();
        assert_eq!(
            c.market,
            MarketSource::Generate {
                setting: Setting::S2,
                n_agents: 5,
                n_firms: 5,
                market_seed: 0
            }
        );
        assert_eq!(c.policy, Policy::Ts);
        assert_eq!(c.horizon, 10);
        assert_eq!(c.params, ABParams::new(0.01, 0.08).unwrap());
        assert_eq!(c.workers, 3);
        assert_eq!(c.ts_variance, TsVariance::PerFirm);
        assert_eq!(c.tie_break, TieBreak::Random);
        assert!(c.fallback_pull_update);
        assert_eq!(c.replications, 25);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        assert!(matches!(ExperimentConfig::parse("horizon = 5\nbogus = 1"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("horizon 5"), Err(Error::Parse { line: 1, .. })));
        assert!(ExperimentConfig::parse("policy = greedy").is_err());
        assert!(ExperimentConfig::parse("eta = 0.5").is_err());
        let c = ExperimentConfig {
            replications: 0,
            ..ExperimentConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn market_file_key_switches_source() {
        let mut c = ExperimentConfig::default();
        c.set("market_file", "m.txt").unwrap();
        assert_eq!(c.market, MarketSource::File(PathBuf::from("m.txt")));
        c.set("n_agents", "2").unwrap();
        assert!(matches!(c.market, MarketSource::Generate { n_agents: 2, .. }));
    }

    #[test]
    fn seeds_are_distinct() {
        let c = ExperimentConfig {
            replications: 1000,
            ..ExperimentConfig::default()
        };
        let mut s = c.seeds();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn batch_shapes_and_single_replication_std() {
        let mut c = small();
        let r = run_batch(&c).unwrap();
        assert_eq!(r.runs.len(), 4);
        assert_eq!(r.aggregate.grid.len(), 10);
        assert!(r.aggregate.mean.iter().all(|m| m.len() == 10));
        assert!(r.aggregate.std.iter().flatten().all(|&s| s >= 0.0));
        let csv = runs_csv(&r.runs);
        assert_eq!(csv.lines().count(), 1 + 4 * 10 * 3);

        c.replications = 1;
        let r = run_batch(&c).unwrap();
        assert!(r.aggregate.std.iter().flatten().all(|&s| s == 0.0));
    }

    #[test]
    fn aggregate_matches_direct_mean() {
        let r = run_batch(&small()).unwrap();
        for a in 0..3 {
            for k in 0..10 {
                let xs: Vec<f64> = r.runs.iter().map(|m| m.agents[a].regret[k]).collect();
                let mean = xs.iter().sum::<f64>() / 4.0;
                assert!((r.aggregate.mean[a][k] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut c = small();
        let one = run_batch(&c).unwrap();
        c.workers = 4;
        let four = run_batch(&c).unwrap();
        assert_eq!(runs_csv(&one.runs), runs_csv(&four.runs));
        assert_eq!(aggregate_csv(&one.aggregate), aggregate_csv(&four.aggregate));
    }
}
