mod common;

use matchbandit::market::{
    decompose, deferred_acceptance, gen_market, is_alpha_reducible_bruteforce, is_stable, make_benchmark,
    random_market, super_optimal_set, ProposingSide, Setting, UtilityScheme,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn decomposable_markets_have_one_stable_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut decomposable = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=4);
        let extra = rng.random_range(0..=1);
        let m = random_market(&mut rng, n, n + extra, UtilityScheme::default()).unwrap();
        let agent_side = deferred_acceptance(&m, ProposingSide::Agents);
        let firm_side = deferred_acceptance(&m, ProposingSide::Firms);
        assert!(is_stable(&m, &agent_side).unwrap());
        assert!(is_stable(&m, &firm_side).unwrap());
        if let Some(d) = decompose(&m) {
            decomposable += 1;
            assert_eq!(agent_side, firm_side);
            assert_eq!(d.to_matching(n).unwrap(), agent_side);
        }
    }
    assert!(decomposable > 100);
}

#[test]
fn super_optimal_firms_lie_in_earlier_levels() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    while checked < 200 {
        let m = random_market(&mut rng, 5, 5, UtilityScheme::default()).unwrap();
        let Some(d) = decompose(&m) else { continue };
        let bench = make_benchmark(&m).unwrap();
        for a in 0..5 {
            let set = super_optimal_set(&bench, &d, a).unwrap();
            if d.level_of_agent(a) == Some(0) {
                assert!(set.is_empty());
            }
        }
        checked += 1;
    }
}

#[test]
fn shared_firm_rankings_are_alpha_reducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let n = rng.random_range(1..=5);
        let extra = rng.random_range(0..=1);
        let m = gen_market(&mut rng, n, n + extra, Setting::S1, UtilityScheme::default()).unwrap();
        assert!(is_alpha_reducible_bruteforce(&m).unwrap());
        assert_eq!(decompose(&m).unwrap().levels.len(), n);
    }
}

#[test]
fn alpha_reducible_markets_always_decompose() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut reducible = 0;
    for _ in 0..1000 {
        let m = random_market(&mut rng, 4, 4, UtilityScheme::default()).unwrap();
        if is_alpha_reducible_bruteforce(&m).unwrap() {
            reducible += 1;
            assert!(decompose(&m).is_some());
        }
    }
    assert!(reducible > 0);
}

#[test]
fn s2_markets_never_decompose() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for _ in 0..50 {
        let m = gen_market(&mut rng, 5, 5, Setting::S2, UtilityScheme::default()).unwrap();
        assert!(decompose(&m).is_none());
        assert!(!is_alpha_reducible_bruteforce(&m).unwrap());
    }
}

#[test]
fn both_exhaustive_checks_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..1000 {
        let m = random_market(&mut rng, 4, 4, UtilityScheme::default()).unwrap();
        assert_eq!(
            is_alpha_reducible_bruteforce(&m).unwrap(),
            matchbandit::oracle::alpha_reducible_exhaustive(&m)
        );
    }
}
