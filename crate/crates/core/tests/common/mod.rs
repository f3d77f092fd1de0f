#![allow(dead_code)]

use matchbandit::agent::Policy;
use matchbandit::market::{gen_market, make_benchmark, random_market, Market, Setting, UtilityScheme};
use matchbandit::simulator::SimConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn market(agent: &[&[f64]], firm: &[&[f64]]) -> Market {
    Market::new(
        agent.iter().map(|r| r.to_vec()).collect(),
        firm.iter().map(|r| r.to_vec()).collect(),
    )
    .unwrap()
}

/// A random market of 1 to 4 agents and up to 2 spare firms, either side
/// drawn independently or with shared firm preferences.
pub fn random_episode_config(seed: u64, horizon: u64) -> SimConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=4);
    let m = n + rng.random_range(0..=2);
    let market = if rng.random_bool(0.5) {
        gen_market(&mut rng, n, m, Setting::S1, UtilityScheme::default()).unwrap()
    } else {
        random_market(&mut rng, n, m, UtilityScheme::default()).unwrap()
    };
    let benchmark = make_benchmark(&market).unwrap();
    let policy = if rng.random_bool(0.5) { Policy::Ucb } else { Policy::Ts };
    SimConfig::new(market, benchmark, policy, horizon, rng.random())
}
