//! Independent cross-checks of the core routines.
//!
//! Each suite recomputes a result by a different route (a numeric
//! minimizer, exact enumeration, exhaustive scans) and reports the worst
//! disagreement. The checks here deliberately avoid the code paths they
//! verify.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adversarial::{loss_estimates, md_closed_form, PullState};
use crate::market::{decompose, deferred_acceptance, random_market, Market, ProposingSide, UtilityScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Suite {
    Md,
    Estimator,
    Da,
    Alpha,
}

impl std::str::FromStr for Suite {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "md" => Ok(Suite::Md),
            "estimator" => Ok(Suite::Estimator),
            "da" => Ok(Suite::Da),
            "alpha" => Ok(Suite::Alpha),
            other => Err(crate::Error::Config(format!("unknown oracle suite `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub suite: Suite,
    pub cases: usize,
    /// Largest numeric discrepancy, for suites that measure one.
    pub max_error: Option<f64>,
    pub tolerance: Option<f64>,
    /// Human-readable description of every failed case (capped).
    pub violations: Vec<String>,
    pub violation_count: usize,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn record(&mut self, msg: String) {
        self.violation_count += 1;
        if self.violations.len() < 10 {
            self.violations.push(msg);
        }
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:?}: {} cases, {} violations",
            self.suite, self.cases, self.violation_count
        )?;
        if let Some(e) = self.max_error {
            write!(f, ", max error {e:e}")?;
        }
        if let Some(t) = self.tolerance {
            write!(f, " (tolerance {t:e})")?;
        }
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> OracleReport {
    match suite {
        Suite::Md => md_suite(seed, 10_000),
        Suite::Estimator => estimator_suite(),
        Suite::Da => da_suite(seed, 1_000),
        Suite::Alpha => alpha_suite(seed, 1_000, 4),
    }
}

fn report(suite: Suite, tolerance: Option<f64>) -> OracleReport {
    OracleReport {
        suite,
        cases: 0,
        max_error: tolerance.map(|_| 0.0),
        tolerance,
        violations: Vec::new(),
        violation_count: 0,
    }
}

/// Minimizer over `z` in (0, 1) of
/// `z l_pull + (1 - z) l_prune + D(z, x)`, with `D` the Bregman divergence
/// of `(1/eta)(-ln z - ln(1 - z))`, found by bisection on the derivative of
/// that objective (strictly convex, infinite at both ends).
pub fn numeric_mirror_step(x: f64, l_pull: f64, l_prune: f64, eta: f64) -> f64 {
    let grad = |z: f64| {
        (l_pull - l_prune) + (-1.0 / z + 1.0 / (1.0 - z) + 1.0 / x - 1.0 / (1.0 - x)) / eta
    };
    let (mut lo, mut hi) = (f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if grad(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Objective value of the two-arm mirror step.
pub fn mirror_objective(z: f64, x: f64, l_pull: f64, l_prune: f64, eta: f64) -> f64 {
    let breg = (x / z).ln() + ((1.0 - x) / (1.0 - z)).ln() + (z - x) / x + (x - z) / (1.0 - x);
    z * l_pull + (1.0 - z) * l_prune + breg / eta
}

pub fn md_suite(seed: u64, cases: usize) -> OracleReport {
    const TOL: f64 = 1e-8;
    let eta = 1.0 / 50.0;
    let mut rep = report(Suite::Md, Some(TOL));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    for _ in 0..cases {
        let x: f64 = rng.random_range(1e-4..=1.0 - 1e-4);
        let xi: f64 = rng.random_range(-1e3..=1e3);
        // losses that produce this xi through the mirror step
        let l_prune = rng.random_range(-2.0..2.0);
        let l_pull = l_prune + (xi - 1.0 / x + 1.0 / (1.0 - x)) / eta;
        let numeric = numeric_mirror_step(x, l_pull, l_prune, eta);
        let closed = md_closed_form(xi);
        let err = (numeric - closed).abs();
        max_err = max_err.max(err);
        if err >= TOL {
            rep.record(format!("x={x}, xi={xi}: closed {closed} vs numeric {numeric}"));
        }
        let sym = (md_closed_form(xi) + md_closed_form(-xi) - 1.0).abs();
        if sym > 1e-12 {
            rep.record(format!("symmetry broken at xi={xi}: {sym:e}"));
        }
        rep.cases += 1;
    }
    for xi in [0.0, 1e-12, -1e-12, 1e-10] {
        let v = md_closed_form(xi);
        if (v - 0.5).abs() > 1e-9 {
            rep.record(format!("limit at xi={xi} is {v}, expected 1/2"));
        }
        rep.cases += 1;
    }
    rep.max_error = Some(max_err);
    rep
}

/// Weighted enumeration over the pull decision: for every `(p, last_loss,
/// matched)` on the grid, `E[l_pull] = (l + 1)/2` and `E[l_prune] = 1/2`.
pub fn estimator_suite() -> OracleReport {
    const TOL: f64 = 1e-12;
    let mut rep = report(Suite::Estimator, Some(TOL));
    let mut ps = vec![0.01];
    ps.extend((1..=9).map(|k| k as f64 / 10.0));
    ps.push(0.99);
    let mut max_err: f64 = 0.0;
    for &p in &ps {
        for last_loss in [-1i8, 0, 1] {
            for matched in [false, true] {
                let st = PullState {
                    p,
                    x: 0.5,
                    last_loss,
                    ..PullState::default()
                };
                let (prune1, pull1) = loss_estimates(&st, true, matched).expect("p is interior");
                let (prune0, pull0) = loss_estimates(&st, false, matched).expect("p is interior");
                let l_pull = if matched { -1.0 } else { 1.0 };
                let e_pull = p * pull1 + (1.0 - p) * pull0;
                let e_prune = p * prune1 + (1.0 - p) * prune0;
                let err = (e_pull - (l_pull + 1.0) / 2.0).abs().max((e_prune - 0.5).abs());
                max_err = max_err.max(err);
                if err >= TOL {
                    rep.record(format!(
                        "p={p}, last_loss={last_loss}, matched={matched}: error {err:e}"
                    ));
                }
                rep.cases += 1;
            }
        }
    }
    rep.max_error = Some(max_err);
    rep
}

/// All `(agent, firm)` pairs that block `assign` (agent-indexed firms,
/// `None` for unmatched).
pub fn blocking_pairs_exhaustive(market: &Market, assign: &[Option<usize>]) -> Vec<(usize, usize)> {
    let holder = |f: usize| assign.iter().position(|&g| g == Some(f));
    let mut out = Vec::new();
    for a in 0..market.n_agents() {
        for f in 0..market.n_firms() {
            let agent_gain = assign[a].is_none_or(|g| market.agent_util(a, f) > market.agent_util(a, g));
            let firm_gain = holder(f).is_none_or(|b| market.firm_util(f, a) > market.firm_util(f, b));
            if agent_gain && firm_gain {
                out.push((a, f));
            }
        }
    }
    out
}

pub fn da_suite(seed: u64, markets: usize) -> OracleReport {
    let mut rep = report(Suite::Da, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..markets {
        let n = 2 + i % 3;
        let market = random_market(&mut rng, n, n, UtilityScheme::default()).expect("valid sizes");
        let agent_side = deferred_acceptance(&market, ProposingSide::Agents);
        let firm_side = deferred_acceptance(&market, ProposingSide::Firms);
        for (name, m) in [("agent", &agent_side), ("firm", &firm_side)] {
            let blocking = blocking_pairs_exhaustive(&market, m.assign());
            if !blocking.is_empty() || !m.is_total() {
                rep.record(format!("market {i}: {name}-proposing DA blocked by {blocking:?}"));
            }
        }
        if let Some(d) = decompose(&market) {
            let union = d.to_matching(n).expect("fixed pairs are injective");
            if agent_side != firm_side || union != agent_side {
                rep.record(format!(
                    "market {i}: decomposable but agent {:?}, firm {:?}, union {:?}",
                    agent_side.assign(),
                    firm_side.assign(),
                    union.assign()
                ));
            }
        }
        rep.cases += 1;
    }
    rep
}

/// Brute-force α-reducibility with its own fixed-pair test.
pub fn alpha_reducible_exhaustive(market: &Market) -> bool {
    let (n, m) = (market.n_agents(), market.n_firms());
    for am in 1u32..(1 << n) {
        for fm in 1u32..(1 << m) {
            if fm.count_ones() < am.count_ones() {
                continue;
            }
            let agents: Vec<usize> = (0..n).filter(|a| am >> a & 1 == 1).collect();
            let firms: Vec<usize> = (0..m).filter(|f| fm >> f & 1 == 1).collect();
            let has_fixed = agents.iter().any(|&a| {
                firms.iter().any(|&f| {
                    firms.iter().all(|&g| market.agent_util(a, f) >= market.agent_util(a, g))
                        && agents.iter().all(|&b| market.firm_util(f, a) >= market.firm_util(f, b))
                })
            });
            if !has_fixed {
                return false;
            }
        }
    }
    true
}

pub fn alpha_suite(seed: u64, markets: usize, size: usize) -> OracleReport {
    let mut rep = report(Suite::Alpha, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..markets {
        let market = random_market(&mut rng, size, size, UtilityScheme::default()).expect("valid sizes");
        let brute = alpha_reducible_exhaustive(&market);
        let decomposes = decompose(&market).is_some();
        if brute != decomposes {
            rep.record(format!(
                "market {i}: brute force says {brute}, decomposition says {decomposes}; agent {:?} firm {:?}",
                market.agent_util_rows(),
                market.firm_util_rows()
            ));
        }
        rep.cases += 1;
    }
    rep
}
