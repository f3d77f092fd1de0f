//! Per-agent match statistics and the UCB / Thompson-sampling indices that
//! order firms each round.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Variance used by the Thompson-sampling index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TsVariance {
    /// `1 / N_a` with `N_a` the agent's total matches (unit variance before
    /// the first match).
    #[default]
    Total,
    /// `1 / (M_{a,f} + 1)`.
    PerFirm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStats {
    mean: Vec<f64>,
    matches: Vec<u64>,
    collisions: Vec<u64>,
    total_matches: u64,
}

impl AgentStats {
    pub fn new(n_firms: usize) -> Self {
        Self {
            mean: vec![0.0; n_firms],
            matches: vec![0; n_firms],
            collisions: vec![0; n_firms],
            total_matches: 0,
        }
    }

    pub fn n_firms(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn matches(&self) -> &[u64] {
        &self.matches
    }

    pub fn collisions(&self) -> &[u64] {
        &self.collisions
    }

    pub fn total_matches(&self) -> u64 {
        self.total_matches
    }

    pub fn update_on_match(&mut self, firm: usize, reward: f64) {
        let m = self.matches[firm] as f64;
        self.mean[firm] = (self.mean[firm] * m + reward) / (m + 1.0);
        self.matches[firm] += 1;
        self.total_matches += 1;
    }

    /// Collisions leave the mean and match counts untouched.
    pub fn update_on_collision(&mut self, firm: usize) {
        self.collisions[firm] += 1;
    }

    /// `mean + sqrt(2 ln(1 + N ln^2 N) / M)`, or `+inf` for a firm never
    /// matched. `N` is the total match count; logs are natural.
    pub fn ucb_index(&self, firm: usize) -> f64 {
        let m = self.matches[firm];
        if m == 0 {
            return f64::INFINITY;
        }
        let n = self.total_matches as f64;
        let ln_n = n.ln();
        let bonus = (2.0 * (1.0 + n * ln_n * ln_n).ln() / m as f64).sqrt();
        self.mean[firm] + bonus
    }

    /// One Gaussian posterior draw for `firm`.
    pub fn ts_index<R: Rng + ?Sized>(&self, firm: usize, variance: TsVariance, rng: &mut R) -> f64 {
        let var = match variance {
            TsVariance::Total if self.total_matches == 0 => 1.0,
            TsVariance::Total => 1.0 / self.total_matches as f64,
            TsVariance::PerFirm => 1.0 / (self.matches[firm] + 1) as f64,
        };
        let z: f64 = StandardNormal.sample(rng);
        self.mean[firm] + var.sqrt() * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ucb_unvisited_is_infinite() {
        let mut s = AgentStats::new(3);
        assert_eq!(s.ucb_index(0), f64::INFINITY);
        s.update_on_collision(0);
        assert_eq!(s.ucb_index(0), f64::INFINITY);
        s.update_on_match(1, 1.0);
        assert_eq!(s.ucb_index(0), f64::INFINITY);
    }

    #[test]
    fn ucb_bonus_vanishes_at_one_match() {
        let mut s = AgentStats::new(2);
        s.update_on_match(0, 3.25);
        assert_eq!(s.ucb_index(0), 3.25);
    }

    #[test]
    fn ucb_two_matches() {
        // sqrt(2 ln(1 + 2 ln^2 2)), evaluated with mpmath at 30 digits:
        // 1.16052283522023627...
        let mut s = AgentStats::new(2);
        s.update_on_match(0, 0.0);
        s.update_on_match(1, 7.0);
        assert!((s.ucb_index(0) - 1.160_522_835_220_236).abs() < 1e-12);
    }

    #[test]
    fn match_updates() {
        let mut s = AgentStats::new(2);
        s.update_on_match(0, 3.2);
        assert_eq!(s.mean()[0], 3.2);
        assert_eq!(s.matches()[0], 1);
        let mut s = AgentStats::new(1);
        s.update_on_match(0, 1.0);
        s.update_on_match(0, 3.0);
        assert_eq!(s.mean()[0], 2.0);
        assert_eq!(s.matches()[0], 2);
        assert_eq!(s.total_matches(), 2);
    }

    #[test]
    fn collision_only_touches_collision_count() {
        let mut s = AgentStats::new(2);
        s.update_on_match(1, 2.0);
        let before = s.clone();
        s.update_on_collision(1);
        assert_eq!(s.mean(), before.mean());
        assert_eq!(s.matches(), before.matches());
        assert_eq!(s.total_matches(), before.total_matches());
        assert_eq!(s.collisions(), &[0, 1]);
    }

    #[test]
    fn ts_prior_and_determinism() {
        let s = AgentStats::new(2);
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let a = s.ts_index(0, TsVariance::Total, &mut r1);
        let b = s.ts_index(0, TsVariance::Total, &mut r2);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ts_moments_with_total_variance() {
        let mut s = AgentStats::new(2);
        for _ in 0..4 {
            s.update_on_match(0, 2.5);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| s.ts_index(0, TsVariance::Total, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // se(mean) = 0.5/1000; se(var) ~= var*sqrt(2/n)
        assert!((mean - 2.5).abs() < 3.0 * 0.5 / 1000.0);
        assert!((var - 0.25).abs() < 3.0 * 0.25 * (2.0 / n as f64).sqrt());

        // unit prior when nothing is matched yet
        let fresh = AgentStats::new(1);
        let draws: Vec<f64> = (0..n).map(|_| fresh.ts_index(0, TsVariance::Total, &mut rng)).collect();
        let var = draws.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn ts_per_firm_variance() {
        let mut s = AgentStats::new(2);
        for _ in 0..3 {
            s.update_on_match(1, 1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let var = (0..n)
            .map(|_| (s.ts_index(1, TsVariance::PerFirm, &mut rng) - 1.0).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var - 0.25).abs() < 3.0 * 0.25 * (2.0 / n as f64).sqrt());
    }

    proptest! {
        #[test]
        fn mean_is_average_of_matched_rewards(
            events in proptest::collection::vec((0usize..3, proptest::option::of(-5.0f64..10.0)), 1..200)
        ) {
            let mut s = AgentStats::new(3);
            let mut raw: Vec<Vec<f64>> = vec![Vec::new(); 3];
            let mut cols = [0u64; 3];
            for (f, r) in &events {
                match r {
                    Some(r) => { s.update_on_match(*f, *r); raw[*f].push(*r); }
                    None => { s.update_on_collision(*f); cols[*f] += 1; }
                }
            }
            for f in 0..3 {
                let expect = if raw[f].is_empty() { 0.0 } else { raw[f].iter().sum::<f64>() / raw[f].len() as f64 };
                prop_assert!((s.mean()[f] - expect).abs() < 1e-12);
                prop_assert_eq!(s.matches()[f], raw[f].len() as u64);
                prop_assert_eq!(s.collisions()[f], cols[f]);
            }
            prop_assert_eq!(s.total_matches(), s.matches().iter().sum::<u64>());
        }

        #[test]
        fn ucb_monotonicity(mean_lo in 0.0f64..5.0, delta in 0.001f64..5.0, m in 1u64..50, extra in 1u64..50) {
            // higher mean, same counts -> higher index
            let mut lo = AgentStats::new(2);
            let mut hi = AgentStats::new(2);
            for _ in 0..m { lo.update_on_match(0, mean_lo); hi.update_on_match(0, mean_lo + delta); }
            for _ in 0..extra { lo.update_on_match(1, 0.0); hi.update_on_match(1, 0.0); }
            prop_assert!(hi.ucb_index(0) > lo.ucb_index(0));

            // same N, more matches on the firm -> smaller bonus
            let mut few = AgentStats::new(2);
            let mut many = AgentStats::new(2);
            for _ in 0..m { few.update_on_match(0, 1.0); }
            for _ in 0..(m + extra) { few.update_on_match(1, 1.0); }
            for _ in 0..(m + extra) { many.update_on_match(0, 1.0); }
            for _ in 0..m { many.update_on_match(1, 1.0); }
            prop_assert_eq!(few.total_matches(), many.total_matches());
            prop_assert!(many.ucb_index(0) <= few.ucb_index(0));
        }
    }
}
