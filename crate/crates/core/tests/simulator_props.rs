mod common;

use common::{market, random_episode_config};
use matchbandit::agent::Policy;
use matchbandit::market::make_benchmark;
use matchbandit::simulator::{run_episode, Episode, SimConfig};

#[test]
fn conservation_capacity_and_interior_probabilities() {
    for seed in 0..100 {
        let config = random_episode_config(seed, 1000);
        let (n, m) = (config.market.n_agents(), config.market.n_firms());
        let mut episode = Episode::new(&config).unwrap();
        let mut events = vec![0u64; n];
        while !episode.is_done() {
            let outcome = episode.step().unwrap();
            for f in 0..m {
                let winners = outcome.agents.iter().filter(|r| r.matched && r.requested == f).count();
                assert!(winners <= 1, "seed {seed}: firm {f} matched {winners} agents");
                assert_eq!(winners == 1, outcome.accepted[f].is_some());
            }
            for (a, r) in outcome.agents.iter().enumerate() {
                assert_eq!(outcome.accepted[r.requested] == Some(a), r.matched);
                events[a] += 1;
            }
            for agent in episode.agents() {
                for s in &agent.pull {
                    assert!(s.p > 0.0 && s.p < 1.0 && s.x > 0.0 && s.x < 1.0, "seed {seed}: {s:?}");
                }
            }
        }
        let metrics = episode.finish();
        for (a, am) in metrics.agents.iter().enumerate() {
            let total: u64 = am.matches.iter().sum::<u64>() + am.collisions.iter().sum::<u64>();
            assert_eq!(total, 1000, "seed {seed} agent {a}");
            assert_eq!(events[a], 1000);
        }
    }
}

#[test]
fn stable_firm_collisions_never_exceed_h_events() {
    for seed in 100..140 {
        let config = random_episode_config(seed, 1000);
        let metrics = run_episode(&config).unwrap();
        for (a, am) in metrics.agents.iter().enumerate() {
            let star = config.benchmark.stable_firm[a];
            assert!(am.collisions[star] <= am.h_events, "seed {seed} agent {a}");
        }
    }
}

#[test]
fn regret_increments_stay_in_range() {
    for seed in 200..230 {
        let config = random_episode_config(seed, 400);
        let mut episode = Episode::new(&config).unwrap();
        let bench = &config.benchmark;
        while !episode.is_done() {
            let outcome = episode.step().unwrap();
            for (a, r) in outcome.agents.iter().enumerate() {
                let inc = matchbandit::simulator::regret_increment(&config.market, bench, a, r);
                let lo = bench.gap[a].iter().copied().fold(f64::INFINITY, f64::min);
                let hi = config.market.agent_util(a, bench.stable_firm[a]);
                assert!(inc >= lo && inc <= hi, "seed {seed}: {inc} outside [{lo}, {hi}]");
            }
        }
    }
}

#[test]
fn identical_configs_give_identical_metrics() {
    for seed in [3, 17, 99] {
        let config = random_episode_config(seed, 800);
        assert_eq!(run_episode(&config).unwrap(), run_episode(&config).unwrap());
    }
}

#[test]
fn path_length_is_bounded_by_requests() {
    for seed in 300..330 {
        let config = random_episode_config(seed, 1000);
        let metrics = run_episode(&config).unwrap();
        for am in &metrics.agents {
            for f in 0..config.market.n_firms() {
                assert!(am.path_length[f] <= 4 * (am.matches[f] + am.collisions[f]));
            }
        }
    }
}

#[test]
fn trivial_market_has_zero_regret() {
    let m = market(&[&[3.0]], &[&[1.0]]);
    for policy in [Policy::Ucb, Policy::Ts] {
        let config = SimConfig::new(m.clone(), make_benchmark(&m).unwrap(), policy, 500, 4);
        let metrics = run_episode(&config).unwrap();
        assert!(metrics.agents[0].regret.iter().all(|&r| r == 0.0));
        assert_eq!(metrics.agents[0].collisions[0], 0);
    }
}

fn single_agent_tail_rate(horizon: u64, tail: u64) -> f64 {
    let m = market(&[&[1.0, 3.0, 2.0]], &[&[1.0], &[1.0], &[1.0]]);
    let mut config = SimConfig::new(m.clone(), make_benchmark(&m).unwrap(), Policy::Ucb, horizon, 11);
    config.noise_std = 0.0;
    config.tail_len = tail;
    let metrics = run_episode(&config).unwrap();
    assert_eq!(config.benchmark.stable_firm[0], 1);
    metrics.tail_stable_rate(0)
}

#[test]
fn single_agent_settles_on_its_top_firm() {
    let short = single_agent_tail_rate(10_000, 1_000);
    assert!(short >= 0.99, "final 1000 of 10^4: {short}");
    let long = single_agent_tail_rate(20_000, 2_000);
    assert!(long >= 0.99, "final 10% of 20000: {long}");
}
