//! The per-round decision loop of a decentralized matching agent.
//!
//! Each round the agent ranks firms by its index (UCB or a Thompson draw),
//! walks that order flipping a coin with the firm's request probability, and
//! requests the first firm whose coin comes up heads. If every firm is
//! pruned it falls back to the top-ranked firm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversarial::{ABParams, PullState};
use crate::bandit_index::{AgentStats, TsVariance};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Policy {
    Ucb,
    Ts,
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ucb" | "ucb-dma" => Ok(Policy::Ucb),
            "ts" | "ts-dma" => Ok(Policy::Ts),
            other => Err(Error::Config(format!("unknown policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Policy::Ucb => "ucb",
            Policy::Ts => "ts",
        })
    }
}

/// How equal indices are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TieBreak {
    #[default]
    FirmId,
    /// Random keys drawn from the agent's policy stream.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub policy: Policy,
    pub params: ABParams,
    pub ts_variance: TsVariance,
    pub tie_break: TieBreak,
    /// Also step the pull module of the force-requested firm after a
    /// fallback round. Off by default.
    pub fallback_pull_update: bool,
}

impl AgentConfig {
    pub fn new(policy: Policy) -> Self {
        Self {
            policy,
            params: ABParams::default(),
            ts_variance: TsVariance::default(),
            tie_break: TieBreak::default(),
            fallback_pull_update: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestDecision {
    pub firm: usize,
    /// Firms pruned before the request, in walk order.
    pub pruned: Vec<usize>,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct AgentState {
    pub stats: AgentStats,
    pub pull: Vec<PullState>,
    pub config: AgentConfig,
    rng: SimRng,
}

impl AgentState {
    pub fn new(n_firms: usize, config: AgentConfig, rng: SimRng) -> Self {
        Self {
            stats: AgentStats::new(n_firms),
            pull: vec![PullState::default(); n_firms],
            config,
            rng,
        }
    }

    pub fn n_firms(&self) -> usize {
        self.pull.len()
    }

    /// Firms in descending index order. Thompson draws are taken in firm-id
    /// order from the policy stream.
    pub fn index_order(&mut self) -> Vec<usize> {
        let n = self.n_firms();
        let index: Vec<f64> = match self.config.policy {
            Policy::Ucb => (0..n).map(|f| self.stats.ucb_index(f)).collect(),
            Policy::Ts => (0..n)
                .map(|f| self.stats.ts_index(f, self.config.ts_variance, &mut self.rng))
                .collect(),
        };
        let mut order: Vec<usize> = (0..n).collect();
        match self.config.tie_break {
            TieBreak::FirmId => order.sort_by(|&a, &b| index[b].total_cmp(&index[a])),
            TieBreak::Random => {
                let keys: Vec<u64> = (0..n).map(|_| self.rng.random()).collect();
                order.sort_by(|&a, &b| index[b].total_cmp(&index[a]).then(keys[a].cmp(&keys[b])));
            }
        }
        order
    }

    /// Chooses this round's request. Pull states are not modified; only the
    /// policy stream advances.
    pub fn select_request(&mut self) -> RequestDecision {
        let order = self.index_order();
        let mut pruned = Vec::new();
        for &f in &order {
            if self.rng.random_bool(self.pull[f].p) {
                return RequestDecision {
                    firm: f,
                    pruned,
                    fallback: false,
                };
            }
            pruned.push(f);
        }
        RequestDecision {
            firm: order[0],
            pruned,
            fallback: true,
        }
    }

    /// Applies the round's feedback: prune updates in walk order, then the
    /// statistics and pull update of the requested firm. A fallback request
    /// only updates statistics unless `fallback_pull_update` is set.
    pub fn process_feedback(
        &mut self,
        decision: &RequestDecision,
        matched: bool,
        reward: f64,
    ) -> Result<()> {
        let params = self.config.params;
        for &f in &decision.pruned {
            self.pull[f].step(false, false, &params)?;
        }
        let f = decision.firm;
        if matched {
            self.stats.update_on_match(f, reward);
        } else {
            self.stats.update_on_collision(f);
        }
        if !decision.fallback || self.config.fallback_pull_update {
            self.pull[f].step(true, matched, &params)?;
        }
        Ok(())
    }
}
