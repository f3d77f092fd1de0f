//! Two-sided market model, stable matchings and α-reducibility analysis.
//!
//! A [`Market`] holds both sides' utilities: `agent_util[a][f]` is agent `a`'s
//! value for firm `f` and `firm_util[f][a]` is firm `f`'s value for agent `a`.
//! Preferences are strict on both sides and there are at least as many firms
//! as agents, so every stable matching assigns every agent.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest side length accepted by [`is_alpha_reducible_bruteforce`].
pub const BRUTE_FORCE_LIMIT: usize = 6;

/// Attempt cap for rejection sampling of non-α-reducible markets.
pub const S2_MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    n_agents: usize,
    n_firms: usize,
    agent_util: Vec<Vec<f64>>,
    firm_util: Vec<Vec<f64>>,
}

impl Market {
    /// Builds a market, checking dimensions, finiteness, `n_agents <= n_firms`
    /// and strictness of every preference row.
    pub fn new(agent_util: Vec<Vec<f64>>, firm_util: Vec<Vec<f64>>) -> Result<Self> {
        let n_agents = agent_util.len();
        let n_firms = firm_util.len();
        if n_agents == 0 || n_firms == 0 {
            return Err(Error::InvalidMarket("both sides must be nonempty".into()));
        }
        if n_agents > n_firms {
            return Err(Error::InvalidMarket(format!(
                "{n_agents} agents but only {n_firms} firms"
            )));
        }
        for (a, row) in agent_util.iter().enumerate() {
            check_row(row, n_firms, "agent", a)?;
        }
        for (f, row) in firm_util.iter().enumerate() {
            check_row(row, n_agents, "firm", f)?;
        }
        Ok(Self {
            n_agents,
            n_firms,
            agent_util,
            firm_util,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn n_firms(&self) -> usize {
        self.n_firms
    }

    #[inline]
    pub fn agent_util(&self, agent: usize, firm: usize) -> f64 {
        self.agent_util[agent][firm]
    }

    #[inline]
    pub fn firm_util(&self, firm: usize, agent: usize) -> f64 {
        self.firm_util[firm][agent]
    }

    pub fn agent_util_rows(&self) -> &[Vec<f64>] {
        &self.agent_util
    }

    pub fn firm_util_rows(&self) -> &[Vec<f64>] {
        &self.firm_util
    }

    /// Firms ordered from most to least preferred by `agent`.
    pub fn agent_ranking(&self, agent: usize) -> Vec<usize> {
        descending_order(&self.agent_util[agent])
    }

    /// Agents ordered from most to least preferred by `firm`.
    pub fn firm_ranking(&self, firm: usize) -> Vec<usize> {
        descending_order(&self.firm_util[firm])
    }

    /// `agent`'s favourite firm among `firms`.
    pub fn top_firm_among(&self, agent: usize, firms: &[usize]) -> Option<usize> {
        let row = &self.agent_util[agent];
        firms
            .iter()
            .copied()
            .max_by(|&x, &y| row[x].total_cmp(&row[y]))
    }

    /// `firm`'s favourite agent among `agents`.
    pub fn top_agent_among(&self, firm: usize, agents: &[usize]) -> Option<usize> {
        let row = &self.firm_util[firm];
        agents
            .iter()
            .copied()
            .max_by(|&x, &y| row[x].total_cmp(&row[y]))
    }
}

fn check_row(row: &[f64], len: usize, side: &str, idx: usize) -> Result<()> {
    if row.len() != len {
        return Err(Error::InvalidMarket(format!(
            "{side} {idx} has {} utilities, expected {len}",
            row.len()
        )));
    }
    if let Some(v) = row.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidMarket(format!(
            "{side} {idx} has non-finite utility {v}"
        )));
    }
    for i in 0..row.len() {
        for j in (i + 1)..row.len() {
            if row[i] == row[j] {
                return Err(Error::InvalidMarket(format!(
                    "{side} {idx} is indifferent between {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

fn descending_order(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&x, &y| row[y].total_cmp(&row[x]));
    order
}

/// An injective partial map from agents to firms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    assign: Vec<Option<usize>>,
}

impl Matching {
    pub fn new(assign: Vec<Option<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for f in assign.iter().flatten() {
            if !seen.insert(*f) {
                return Err(Error::NotInjective { firm: *f });
            }
        }
        Ok(Self { assign })
    }

    /// Total matching from an agent-indexed firm list.
    pub fn from_firms(firms: &[usize]) -> Result<Self> {
        Self::new(firms.iter().map(|&f| Some(f)).collect())
    }

    /// Builds a matching over `n_agents` agents from `(agent, firm)` pairs.
    pub fn from_pairs(n_agents: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut assign = vec![None; n_agents];
        for &(a, f) in pairs {
            let slot = assign.get_mut(a).ok_or(Error::IndexOutOfRange {
                what: "agent",
                index: a,
                len: n_agents,
            })?;
            *slot = Some(f);
        }
        Self::new(assign)
    }

    pub fn n_agents(&self) -> usize {
        self.assign.len()
    }

    pub fn firm_of(&self, agent: usize) -> Option<usize> {
        self.assign.get(agent).copied().flatten()
    }

    pub fn assign(&self) -> &[Option<usize>] {
        &self.assign
    }

    pub fn is_total(&self) -> bool {
        self.assign.iter().all(Option::is_some)
    }

    /// Inverse map over `n_firms` firms.
    pub fn agents_of_firms(&self, n_firms: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; n_firms];
        for (a, f) in self.assign.iter().enumerate() {
            if let Some(f) = f {
                if *f < n_firms {
                    inv[*f] = Some(a);
                }
            }
        }
        inv
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.assign
            .iter()
            .enumerate()
            .filter_map(|(a, f)| f.map(|f| (a, f)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProposingSide {
    Agents,
    Firms,
}

/// Gale-Shapley deferred acceptance.
///
/// Agent-proposing returns the agent-optimal stable matching, firm-proposing
/// the firm-optimal one.
pub fn deferred_acceptance(market: &Market, side: ProposingSide) -> Matching {
    match side {
        ProposingSide::Agents => agent_proposing(market),
        ProposingSide::Firms => firm_proposing(market),
    }
}

fn agent_proposing(market: &Market) -> Matching {
    let rankings: Vec<Vec<usize>> = (0..market.n_agents)
        .map(|a| market.agent_ranking(a))
        .collect();
    let mut next = vec![0usize; market.n_agents];
    let mut holder: Vec<Option<usize>> = vec![None; market.n_firms];
    let mut free: Vec<usize> = (0..market.n_agents).rev().collect();

    while let Some(a) = free.pop() {
        // n_agents <= n_firms: an agent never exhausts its list
        let f = rankings[a][next[a]];
        next[a] += 1;
        match holder[f] {
            None => holder[f] = Some(a),
            Some(cur) if market.firm_util(f, a) > market.firm_util(f, cur) => {
                holder[f] = Some(a);
                free.push(cur);
            }
            Some(_) => free.push(a),
        }
    }

    let mut assign = vec![None; market.n_agents];
    for (f, a) in holder.iter().enumerate() {
        if let Some(a) = a {
            assign[*a] = Some(f);
        }
    }
    Matching { assign }
}

fn firm_proposing(market: &Market) -> Matching {
    let rankings: Vec<Vec<usize>> = (0..market.n_firms)
        .map(|f| market.firm_ranking(f))
        .collect();
    let mut next = vec![0usize; market.n_firms];
    let mut holder: Vec<Option<usize>> = vec![None; market.n_agents];
    let mut free: Vec<usize> = (0..market.n_firms).rev().collect();

    while let Some(f) = free.pop() {
        if next[f] == market.n_agents {
            continue; // rejected by everyone, stays unmatched
        }
        let a = rankings[f][next[f]];
        next[f] += 1;
        match holder[a] {
            None => holder[a] = Some(f),
            Some(cur) if market.agent_util(a, f) > market.agent_util(a, cur) => {
                holder[a] = Some(f);
                free.push(cur);
            }
            Some(_) => free.push(f),
        }
    }
    Matching { assign: holder }
}

fn check_matching_range(market: &Market, matching: &Matching) -> Result<()> {
    if matching.n_agents() != market.n_agents {
        return Err(Error::IndexOutOfRange {
            what: "agent",
            index: matching.n_agents().saturating_sub(1),
            len: market.n_agents,
        });
    }
    for f in matching.assign.iter().flatten() {
        if *f >= market.n_firms {
            return Err(Error::IndexOutOfRange {
                what: "firm",
                index: *f,
                len: market.n_firms,
            });
        }
    }
    Ok(())
}

/// First blocking pair in (agent, firm) scan order, or `None` if `matching`
/// is stable. Unmatched firms prefer any agent to staying vacant; unmatched
/// agents prefer any firm.
pub fn find_blocking_pair(market: &Market, matching: &Matching) -> Result<Option<(usize, usize)>> {
    check_matching_range(market, matching)?;
    let inverse = matching.agents_of_firms(market.n_firms);
    for a in 0..market.n_agents {
        let current = matching.firm_of(a);
        for f in 0..market.n_firms {
            let agent_wants = match current {
                Some(m) => market.agent_util(a, f) > market.agent_util(a, m),
                None => true,
            };
            if !agent_wants {
                continue;
            }
            let firm_wants = match inverse[f] {
                Some(b) => market.firm_util(f, a) > market.firm_util(f, b),
                None => true,
            };
            if firm_wants {
                return Ok(Some((a, f)));
            }
        }
    }
    Ok(None)
}

pub fn is_stable(market: &Market, matching: &Matching) -> Result<bool> {
    Ok(find_blocking_pair(market, matching)?.is_none())
}

/// Every mutual-top pair of the sub-market spanned by `agents` and `firms`.
pub fn find_fixed_pairs(market: &Market, agents: &[usize], firms: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for &a in agents {
        let Some(f) = market.top_firm_among(a, firms) else {
            continue;
        };
        if market.top_agent_among(f, agents) == Some(a) {
            pairs.push((a, f));
        }
    }
    pairs
}

/// One stage of the fixed-pair elimination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub agents: Vec<usize>,
    pub firms: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub levels: Vec<Level>,
}

impl Decomposition {
    /// Zero-based level containing `agent`.
    pub fn level_of_agent(&self, agent: usize) -> Option<usize> {
        self.levels.iter().position(|l| l.agents.contains(&agent))
    }

    pub fn to_matching(&self, n_agents: usize) -> Result<Matching> {
        let pairs: Vec<(usize, usize)> = self
            .levels
            .iter()
            .flat_map(|l| l.pairs.iter().copied())
            .collect();
        Matching::from_pairs(n_agents, &pairs)
    }
}

/// Result of a failed decomposition: the level index at which the residual
/// market had no fixed pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecompositionFailure {
    pub level: usize,
}

/// Repeatedly removes all fixed pairs of the residual market.
///
/// Returns `None` as soon as a nonempty residual market has no fixed pair.
pub fn decompose(market: &Market) -> Option<Decomposition> {
    decompose_detailed(market).ok()
}

/// Like [`decompose`] but reports the failing level.
pub fn decompose_detailed(market: &Market) -> std::result::Result<Decomposition, DecompositionFailure> {
    let mut agents: Vec<usize> = (0..market.n_agents).collect();
    let mut firms: Vec<usize> = (0..market.n_firms).collect();
    let mut levels = Vec::new();

    while !agents.is_empty() {
        let pairs = find_fixed_pairs(market, &agents, &firms);
        if pairs.is_empty() {
            return Err(DecompositionFailure {
                level: levels.len(),
            });
        }
        let level_agents: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let level_firms: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        agents.retain(|a| !level_agents.contains(a));
        firms.retain(|f| !level_firms.contains(f));
        levels.push(Level {
            agents: level_agents,
            firms: level_firms,
            pairs,
        });
    }

    let decomposition = Decomposition { levels };
    let union = decomposition
        .to_matching(market.n_agents)
        .expect("fixed pairs within a level use distinct firms");
    assert!(
        is_stable(market, &union).unwrap_or(false),
        "fixed-pair union must be stable"
    );
    Ok(decomposition)
}

/// Exhaustive α-reducibility check: every sub-market `A' x F'` with both
/// sides nonempty and `|A'| <= |F'|` must contain a fixed pair.
pub fn is_alpha_reducible_bruteforce(market: &Market) -> Result<bool> {
    let (n, m) = (market.n_agents, market.n_firms);
    if n > BRUTE_FORCE_LIMIT || m > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeLimit {
            n_agents: n,
            n_firms: m,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let members = |mask: u32, len: usize| -> Vec<usize> {
        (0..len).filter(|i| mask & (1 << i) != 0).collect()
    };
    for agent_mask in 1u32..(1 << n) {
        let agents = members(agent_mask, n);
        for firm_mask in 1u32..(1 << m) {
            if firm_mask.count_ones() < agent_mask.count_ones() {
                continue;
            }
            let firms = members(firm_mask, m);
            if find_fixed_pairs(market, &agents, &firms).is_empty() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Stable-matching benchmark used for regret accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub stable: Matching,
    pub stable_firm: Vec<usize>,
    /// `gap[a][f] = u_a(f*_a) - u_a(f)`.
    pub gap: Vec<Vec<f64>>,
    pub super_opt: Vec<Vec<usize>>,
    pub sub_opt: Vec<Vec<usize>>,
    /// Smallest positive gap over all agents; `None` if no agent has a
    /// sub-optimal firm.
    pub min_gap: Option<f64>,
}

impl Benchmark {
    /// Benchmark quantities for an arbitrary total matching.
    pub fn from_matching(market: &Market, stable: Matching) -> Result<Self> {
        check_matching_range(market, &stable)?;
        let stable_firm: Vec<usize> = stable
            .assign
            .iter()
            .enumerate()
            .map(|(a, f)| {
                f.ok_or_else(|| Error::InvalidParams(format!("agent {a} is unmatched")))
            })
            .collect::<Result<_>>()?;

        let mut gap = Vec::with_capacity(market.n_agents);
        let mut super_opt = Vec::with_capacity(market.n_agents);
        let mut sub_opt = Vec::with_capacity(market.n_agents);
        let mut min_gap: Option<f64> = None;
        for (a, &star) in stable_firm.iter().enumerate() {
            let best = market.agent_util(a, star);
            let row: Vec<f64> = (0..market.n_firms)
                .map(|f| if f == star { 0.0 } else { best - market.agent_util(a, f) })
                .collect();
            super_opt.push((0..market.n_firms).filter(|&f| row[f] < 0.0).collect());
            let sub: Vec<usize> = (0..market.n_firms).filter(|&f| row[f] > 0.0).collect();
            for &f in &sub {
                min_gap = Some(min_gap.map_or(row[f], |g: f64| g.min(row[f])));
            }
            sub_opt.push(sub);
            gap.push(row);
        }
        Ok(Self {
            stable,
            stable_firm,
            gap,
            super_opt,
            sub_opt,
            min_gap,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.stable_firm.len()
    }
}

/// Agent-optimal stable benchmark. When the market decomposes, also checks
/// that the stable matching is unique (both DA variants and the fixed-pair
/// union coincide).
pub fn make_benchmark(market: &Market) -> Result<Benchmark> {
    let stable = deferred_acceptance(market, ProposingSide::Agents);
    if let Some(decomposition) = decompose(market) {
        let firm_side = deferred_acceptance(market, ProposingSide::Firms);
        let union = decomposition.to_matching(market.n_agents)?;
        if firm_side != stable || union != stable {
            return Err(Error::Consistency(
                "decomposable market with more than one stable matching".into(),
            ));
        }
    }
    Benchmark::from_matching(market, stable)
}

/// Super-optimal firms of `agent`, checked to lie in the firm sets of the
/// levels strictly before the agent's own level.
pub fn super_optimal_set(
    benchmark: &Benchmark,
    decomposition: &Decomposition,
    agent: usize,
) -> Result<Vec<usize>> {
    let set = benchmark
        .super_opt
        .get(agent)
        .ok_or(Error::IndexOutOfRange {
            what: "agent",
            index: agent,
            len: benchmark.n_agents(),
        })?
        .clone();
    let level = decomposition.level_of_agent(agent).ok_or_else(|| {
        Error::Consistency(format!("agent {agent} missing from decomposition"))
    })?;
    let earlier: Vec<usize> = decomposition.levels[..level]
        .iter()
        .flat_map(|l| l.firms.iter().copied())
        .collect();
    if let Some(f) = set.iter().find(|f| !earlier.contains(f)) {
        return Err(Error::Consistency(format!(
            "super-optimal firm {f} of agent {agent} (level {level}) is not eliminated earlier"
        )));
    }
    Ok(set)
}

/// Preference structure of generated markets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    /// Random agent preferences, one random ranking shared by every firm.
    S1,
    /// Independent random rankings on both sides, rejected until the market
    /// does not decompose.
    S2,
}

impl std::str::FromStr for Setting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "s-i" => Ok(Setting::S1),
            "s2" | "s-ii" => Ok(Setting::S2),
            other => Err(Error::Config(format!("unknown setting `{other}`"))),
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Setting::S1 => "S1",
            Setting::S2 => "S2",
        })
    }
}

/// How agent utilities are assigned to a sampled ranking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UtilityScheme {
    /// Top firm gets `top`, bottom firm `bottom`, the rest equally spaced.
    EquallySpaced { top: f64, bottom: f64 },
}

impl Default for UtilityScheme {
    fn default() -> Self {
        UtilityScheme::EquallySpaced { top: 5.0, bottom: 0.0 }
    }
}

impl UtilityScheme {
    /// Utility of the firm at `rank` (0 = favourite) among `n_firms`.
    pub fn value(&self, rank: usize, n_firms: usize) -> f64 {
        match *self {
            UtilityScheme::EquallySpaced { top, bottom } => {
                if n_firms == 1 {
                    top
                } else {
                    top - (top - bottom) * rank as f64 / (n_firms - 1) as f64
                }
            }
        }
    }
}

pub fn gen_market<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    n_firms: usize,
    setting: Setting,
    scheme: UtilityScheme,
) -> Result<Market> {
    gen_market_with_limit(rng, n_agents, n_firms, setting, scheme, S2_MAX_ATTEMPTS)
}

pub fn gen_market_with_limit<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    n_firms: usize,
    setting: Setting,
    scheme: UtilityScheme,
    max_attempts: usize,
) -> Result<Market> {
    if n_agents == 0 || n_agents > n_firms {
        return Err(Error::InvalidMarket(format!(
            "cannot generate {n_agents} agents with {n_firms} firms"
        )));
    }
    let UtilityScheme::EquallySpaced { top, bottom } = scheme;
    if (!top.is_finite() || !bottom.is_finite() || top <= bottom) && n_firms > 1 {
        return Err(Error::InvalidParams("utility scheme needs top > bottom".into()));
    }
    match setting {
        Setting::S1 => {
            let agent_util = sample_agent_utils(rng, n_agents, n_firms, scheme);
            let shared = ranking_values(&random_permutation(rng, n_agents));
            Market::new(agent_util, vec![shared; n_firms])
        }
        Setting::S2 => {
            for _ in 0..max_attempts {
                let agent_util = sample_agent_utils(rng, n_agents, n_firms, scheme);
                let firm_util = (0..n_firms)
                    .map(|_| ranking_values(&random_permutation(rng, n_agents)))
                    .collect();
                let market = Market::new(agent_util, firm_util)?;
                if decompose(&market).is_none() {
                    return Ok(market);
                }
            }
            Err(Error::ResampleLimit {
                attempts: max_attempts,
            })
        }
    }
}

/// Uniformly random strict preferences on both sides, utilities per `scheme`
/// for agents and rank-encoded for firms.
pub fn random_market<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    n_firms: usize,
    scheme: UtilityScheme,
) -> Result<Market> {
    let agent_util = sample_agent_utils(rng, n_agents, n_firms, scheme);
    let firm_util = (0..n_firms)
        .map(|_| ranking_values(&random_permutation(rng, n_agents)))
        .collect();
    Market::new(agent_util, firm_util)
}

fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

fn sample_agent_utils<R: Rng + ?Sized>(
    rng: &mut R,
    n_agents: usize,
    n_firms: usize,
    scheme: UtilityScheme,
) -> Vec<Vec<f64>> {
    (0..n_agents)
        .map(|_| {
            let order = random_permutation(rng, n_firms);
            let mut row = vec![0.0; n_firms];
            for (rank, &f) in order.iter().enumerate() {
                row[f] = scheme.value(rank, n_firms);
            }
            row
        })
        .collect()
}

/// Firm utilities encoding `order` (best first): rank r gets `len - r`.
fn ranking_values(order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut row = vec![0.0; n];
    for (rank, &a) in order.iter().enumerate() {
        row[a] = (n - rank) as f64;
    }
    row
}
