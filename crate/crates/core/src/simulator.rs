//! Round engine and stable-regret accounting.
//!
//! A round is gather, resolve, scatter: every agent picks a request from
//! its own state, each firm accepts its favourite requester, matched agents
//! draw a noisy reward, and every agent receives only its own outcome.
//! Diagnostics such as H-events are computed here with full knowledge of
//! the round and are never shown to agents.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::adversarial::ABParams;
use crate::agent::{AgentConfig, AgentState, Policy, RequestDecision, TieBreak};
use crate::bandit_index::TsVariance;
use crate::error::{Error, Result};
use crate::market::{Benchmark, Market};
use crate::rng::{stream_rng, SimRng, Stream};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub market: Market,
    pub benchmark: Benchmark,
    pub agent: AgentConfig,
    pub horizon: u64,
    pub seed: u64,
    pub noise_std: f64,
    /// Rounds (1-based, ascending, ending at `horizon`) at which the regret
    /// series is recorded.
    pub sample_grid: Vec<u64>,
    /// Length of the final window used for the stable-match rate.
    pub tail_len: u64,
}

impl SimConfig {
    /// Defaults: unit noise, 500-point grid, final 10% as the tail window.
    pub fn new(market: Market, benchmark: Benchmark, policy: Policy, horizon: u64, seed: u64) -> Self {
        Self {
            market,
            benchmark,
            agent: AgentConfig::new(policy),
            horizon,
            seed,
            noise_std: 1.0,
            sample_grid: even_grid(horizon, 500),
            tail_len: (horizon / 10).max(1),
        }
    }

    pub fn with_params(mut self, params: ABParams) -> Self {
        self.agent.params = params;
        self
    }

    pub fn with_ts_variance(mut self, v: TsVariance) -> Self {
        self.agent.ts_variance = v;
        self
    }

    pub fn with_tie_break(mut self, t: TieBreak) -> Self {
        self.agent.tie_break = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.horizon == 0 {
            return cfg("horizon must be at least 1".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return cfg(format!("noise_std must be finite and >= 0, got {}", self.noise_std));
        }
        if self.benchmark.n_agents() != self.market.n_agents()
            || self.benchmark.gap.iter().any(|r| r.len() != self.market.n_firms())
        {
            return cfg("benchmark does not belong to the market".into());
        }
        for (a, &star) in self.benchmark.stable_firm.iter().enumerate() {
            if star >= self.market.n_firms() {
                return cfg(format!("stable firm {star} of agent {a} out of range"));
            }
            let best = self.market.agent_util(a, star);
            let consistent = (0..self.market.n_firms())
                .all(|f| (self.benchmark.gap[a][f] - (best - self.market.agent_util(a, f))).abs() <= 1e-12);
            if !consistent {
                return cfg(format!("benchmark gaps of agent {a} do not match the market"));
            }
        }
        if self.sample_grid.is_empty()
            || self.sample_grid.windows(2).any(|w| w[0] >= w[1])
            || self.sample_grid[0] == 0
            || *self.sample_grid.last().unwrap() != self.horizon
        {
            return cfg("sample grid must be strictly increasing within [1, horizon] and end at horizon".into());
        }
        if self.tail_len == 0 || self.tail_len > self.horizon {
            return cfg(format!("tail window {} outside [1, horizon]", self.tail_len));
        }
        Ok(())
    }
}

/// `points` rounds spread evenly over `[1, horizon]`, always ending at
/// `horizon`: `ceil(k * horizon / points)` for `k = 1..=points`, deduplicated.
pub fn even_grid(horizon: u64, points: u64) -> Vec<u64> {
    let points = points.clamp(1, horizon.max(1));
    let mut grid: Vec<u64> = (1..=points)
        .map(|k| (k * horizon).div_ceil(points))
        .collect();
    grid.dedup();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRound {
    pub requested: usize,
    pub matched: bool,
    /// Realized reward, 0 on collision.
    pub reward: f64,
    pub fallback: bool,
    pub pruned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub agents: Vec<AgentRound>,
    /// Agent accepted by each firm this round.
    pub accepted: Vec<Option<usize>>,
}

/// Each firm accepts its favourite requester; every other requester of that
/// firm collides. Rewards are left at 0.
pub fn resolve_requests(market: &Market, requests: &[usize]) -> Result<RoundOutcome> {
    let mut accepted: Vec<Option<usize>> = vec![None; market.n_firms()];
    for (a, &f) in requests.iter().enumerate() {
        let slot = accepted.get_mut(f).ok_or(Error::IndexOutOfRange {
            what: "firm",
            index: f,
            len: market.n_firms(),
        })?;
        match *slot {
            Some(b) if market.firm_util(f, b) > market.firm_util(f, a) => {}
            _ => *slot = Some(a),
        }
    }
    let agents = requests
        .iter()
        .enumerate()
        .map(|(a, &f)| AgentRound {
            requested: f,
            matched: accepted[f] == Some(a),
            reward: 0.0,
            fallback: false,
            pruned: 0,
        })
        .collect();
    Ok(RoundOutcome { agents, accepted })
}

pub fn sample_reward<R: Rng + ?Sized>(rng: &mut R, true_mean: f64, noise_std: f64) -> f64 {
    if noise_std == 0.0 {
        return true_mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    true_mean + noise_std * z
}

/// Expected stable-regret increment of one round: `u_a(f*_a)` minus the
/// true utility obtained (0 on a collision).
pub fn regret_increment(market: &Market, benchmark: &Benchmark, agent: usize, record: &AgentRound) -> f64 {
    let best = market.agent_util(agent, benchmark.stable_firm[agent]);
    if record.matched {
        benchmark.gap[agent][record.requested]
    } else {
        best
    }
}

/// True iff another agent that the stable firm of `agent` weakly prefers
/// requested that firm this round.
pub fn record_h_event(market: &Market, benchmark: &Benchmark, requests: &[usize], agent: usize) -> bool {
    let star = benchmark.stable_firm[agent];
    let own = market.firm_util(star, agent);
    requests
        .iter()
        .enumerate()
        .any(|(b, &f)| b != agent && f == star && market.firm_util(star, b) >= own)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    /// Cumulative expected stable regret at each grid point.
    pub regret: Vec<f64>,
    /// Cumulative realized regret (`u_a(f*_a)` minus realized reward).
    pub realized_regret: Vec<f64>,
    pub matches: Vec<u64>,
    pub collisions: Vec<u64>,
    pub stable_matches: u64,
    pub tail_stable_matches: u64,
    pub h_events: u64,
    pub fallbacks: u64,
    pub path_length: Vec<u64>,
    pub pull_updates: Vec<u64>,
}

impl AgentMetrics {
    fn new(n_firms: usize) -> Self {
        Self {
            regret: Vec::new(),
            realized_regret: Vec::new(),
            matches: vec![0; n_firms],
            collisions: vec![0; n_firms],
            stable_matches: 0,
            tail_stable_matches: 0,
            h_events: 0,
            fallbacks: 0,
            path_length: vec![0; n_firms],
            pull_updates: vec![0; n_firms],
        }
    }

    pub fn final_regret(&self) -> f64 {
        self.regret.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub grid: Vec<u64>,
    pub horizon: u64,
    pub tail_len: u64,
    pub agents: Vec<AgentMetrics>,
}

impl Metrics {
    /// Fraction of the final `tail_len` rounds in which `agent` was matched
    /// to its stable firm.
    pub fn tail_stable_rate(&self, agent: usize) -> f64 {
        self.agents[agent].tail_stable_matches as f64 / self.tail_len as f64
    }
}

/// A running episode, advanced one round at a time.
pub struct Episode<'a> {
    config: &'a SimConfig,
    agents: Vec<AgentState>,
    reward_rngs: Vec<SimRng>,
    t: u64,
    next_grid: usize,
    cum_regret: Vec<f64>,
    cum_realized: Vec<f64>,
    metrics: Vec<AgentMetrics>,
}

impl<'a> Episode<'a> {
    pub fn new(config: &'a SimConfig) -> Result<Self> {
        config.validate()?;
        let n = config.market.n_agents();
        let m = config.market.n_firms();
        let agents = (0..n)
            .map(|a| AgentState::new(m, config.agent, stream_rng(config.seed, Stream::Policy(a as u32))))
            .collect();
        let reward_rngs = (0..n)
            .map(|a| stream_rng(config.seed, Stream::RewardNoise(a as u32)))
            .collect();
        Ok(Self {
            config,
            agents,
            reward_rngs,
            t: 0,
            next_grid: 0,
            cum_regret: vec![0.0; n],
            cum_realized: vec![0.0; n],
            metrics: (0..n).map(|_| AgentMetrics::new(m)).collect(),
        })
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.config.horizon
    }

    pub fn step(&mut self) -> Result<RoundOutcome> {
        let cfg = self.config;
        let market = &cfg.market;
        let bench = &cfg.benchmark;
        self.t += 1;

        let decisions: Vec<RequestDecision> = self.agents.iter_mut().map(|a| a.select_request()).collect();
        let requests: Vec<usize> = decisions.iter().map(|d| d.firm).collect();
        let mut outcome = resolve_requests(market, &requests)?;

        let in_tail = self.t > cfg.horizon - cfg.tail_len;
        for (a, (record, decision)) in outcome.agents.iter_mut().zip(&decisions).enumerate() {
            record.fallback = decision.fallback;
            record.pruned = decision.pruned.len();
            let f = record.requested;
            if record.matched {
                record.reward = sample_reward(&mut self.reward_rngs[a], market.agent_util(a, f), cfg.noise_std);
            }
            self.agents[a].process_feedback(decision, record.matched, record.reward)?;

            let best = market.agent_util(a, bench.stable_firm[a]);
            self.cum_regret[a] += regret_increment(market, bench, a, record);
            self.cum_realized[a] += best - record.reward;

            let mm = &mut self.metrics[a];
            if record.matched {
                mm.matches[f] += 1;
                if f == bench.stable_firm[a] {
                    mm.stable_matches += 1;
                    if in_tail {
                        mm.tail_stable_matches += 1;
                    }
                }
            } else {
                mm.collisions[f] += 1;
            }
            mm.fallbacks += u64::from(decision.fallback);
            mm.h_events += u64::from(record_h_event(market, bench, &requests, a));
        }

        if cfg.sample_grid.get(self.next_grid) == Some(&self.t) {
            for a in 0..self.metrics.len() {
                self.metrics[a].regret.push(self.cum_regret[a]);
                self.metrics[a].realized_regret.push(self.cum_realized[a]);
            }
            self.next_grid += 1;
        }
        Ok(outcome)
    }

    pub fn finish(mut self) -> Metrics {
        for (mm, agent) in self.metrics.iter_mut().zip(&self.agents) {
            mm.path_length = agent.pull.iter().map(|s| s.path_length).collect();
            mm.pull_updates = agent.pull.iter().map(|s| s.updates).collect();
        }
        Metrics {
            grid: self.config.sample_grid.clone(),
            horizon: self.config.horizon,
            tail_len: self.config.tail_len,
            agents: self.metrics,
        }
    }
}

pub fn run_episode(config: &SimConfig) -> Result<Metrics> {
    let mut episode = Episode::new(config)?;
    while !episode.is_done() {
        episode.step()?;
    }
    Ok(episode.finish())
}
