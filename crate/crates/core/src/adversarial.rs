//! Two-arm request-vs-prune learner run by every (agent, firm) pair.
//!
//! Optimistic mirror descent with a log-barrier regularizer over the two
//! actions. Pruning always costs 0; requesting costs -1 on a match and +1 on
//! a collision. The mirror step has a closed form in one scalar `xi`, and
//! the sampling probability mixes the mirror point with the last action.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ABParams {
    eta: f64,
    lambda_bar: f64,
}

impl ABParams {
    pub const MAX_ETA: f64 = 1.0 / 50.0;

    pub fn new(eta: f64, lambda_bar: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= Self::MAX_ETA) {
            return Err(Error::InvalidParams(format!("eta must lie in (0, 1/50], got {eta}")));
        }
        if !(lambda_bar > 0.0 && lambda_bar < 1.0) {
            return Err(Error::InvalidParams(format!(
                "lambda_bar must lie in (0, 1), got {lambda_bar}"
            )));
        }
        Ok(Self { eta, lambda_bar })
    }

    /// `lambda_bar = 8 eta`.
    pub fn with_eta(eta: f64) -> Result<Self> {
        Self::new(eta, 8.0 * eta)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn lambda_bar(&self) -> f64 {
        self.lambda_bar
    }
}

impl Default for ABParams {
    fn default() -> Self {
        Self {
            eta: Self::MAX_ETA,
            lambda_bar: 8.0 * Self::MAX_ETA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullState {
    /// Request probability.
    pub p: f64,
    /// Mirror-descent point.
    pub x: f64,
    /// Loss of the previous invocation: -1 match, +1 collision, 0 prune.
    pub last_loss: i8,
    /// Number of invocations.
    pub updates: u64,
    /// Number of invocations that requested the firm.
    pub pulls: u64,
    /// Sum of |loss(t) - loss(t_prev)| over consecutive invocations.
    pub path_length: u64,
}

impl Default for PullState {
    fn default() -> Self {
        Self {
            p: 0.5,
            x: 0.5,
            last_loss: 0,
            updates: 0,
            pulls: 0,
            path_length: 0,
        }
    }
}

/// Optimistic importance-weighted loss estimates `(prune, pull)`.
pub fn loss_estimates(state: &PullState, pulled: bool, matched: bool) -> Result<(f64, f64)> {
    let p = state.p;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Consistency(format!("request probability {p} outside (0, 1)")));
    }
    let m = f64::from(state.last_loss);
    let hint = (1.0 + m) / 2.0;
    if pulled {
        let observed = if matched { -1.0 } else { 1.0 };
        Ok((hint, (observed - m) / (2.0 * p) + hint))
    } else {
        Ok((-m / (2.0 * (1.0 - p)) + hint, hint))
    }
}

/// Minimizer over `z` in (0, 1) of the two-arm log-barrier mirror step,
/// `(2 + xi - sqrt(4 + xi^2)) / (2 xi)`.
///
/// Evaluated as `2 / (2 + xi + sqrt(4 + xi^2))` for `xi > 0` and through
/// `x(xi) + x(-xi) = 1` for `xi < 0`, both free of cancellation. Returns the
/// limit 1/2 for `|xi| < 1e-9`.
pub fn md_closed_form(xi: f64) -> f64 {
    if xi.abs() < 1e-9 {
        0.5
    } else if xi > 0.0 {
        2.0 / (2.0 + xi + (4.0 + xi * xi).sqrt())
    } else {
        let xi = -xi;
        1.0 - 2.0 / (2.0 + xi + (4.0 + xi * xi).sqrt())
    }
}

/// `xi = eta (l_pull - l_prune) + 1/x - 1/(1 - x)`.
pub fn mirror_xi(x: f64, l_pull: f64, l_prune: f64, eta: f64) -> f64 {
    eta * (l_pull - l_prune) + 1.0 / x - 1.0 / (1.0 - x)
}

/// Mixing weight for the given realized loss.
pub fn mixing_weight(loss: i8, lambda_bar: f64) -> f64 {
    let s = lambda_bar * (1.0 - f64::from(loss));
    s / (2.0 + s)
}

impl PullState {
    /// One invocation: estimate losses, take the mirror step, then mix
    /// towards the action just taken.
    pub fn step(&mut self, pulled: bool, matched: bool, params: &ABParams) -> Result<()> {
        let (l_prune, l_pull) = loss_estimates(self, pulled, matched)?;
        let loss: i8 = match (pulled, matched) {
            (false, _) => 0,
            (true, true) => -1,
            (true, false) => 1,
        };
        let xi = mirror_xi(self.x, l_pull, l_prune, params.eta);
        let x = md_closed_form(xi);
        let gamma = mixing_weight(loss, params.lambda_bar);
        let p = (1.0 - gamma) * x + if pulled { gamma } else { 0.0 };

        if !(x > 0.0 && x < 1.0 && p > 0.0 && p < 1.0) {
            return Err(Error::Consistency(format!(
                "pull state left the open unit interval: x = {x}, p = {p}"
            )));
        }
        if self.updates > 0 {
            self.path_length += u64::from((loss - self.last_loss).unsigned_abs());
        }
        self.x = x;
        self.p = p;
        self.last_loss = loss;
        self.updates += 1;
        self.pulls += u64::from(pulled);
        Ok(())
    }
}

/// Functional form of [`PullState::step`].
pub fn pull_module_step(
    state: &PullState,
    pulled: bool,
    matched: bool,
    params: &ABParams,
) -> Result<PullState> {
    let mut next = *state;
    next.step(pulled, matched, params)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(p: f64, x: f64, last_loss: i8) -> PullState {
        PullState {
            p,
            x,
            last_loss,
            ..PullState::default()
        }
    }

    #[test]
    fn params_validation() {
        assert!(ABParams::new(0.0, 0.1).is_err());
        assert!(ABParams::new(0.021, 0.1).is_err());
        assert!(ABParams::new(0.01, 1.0).is_err());
        let p = ABParams::default();
        assert_eq!(p.eta(), 0.02);
        assert_eq!(p.lambda_bar(), 0.16);
        assert_eq!(ABParams::with_eta(0.01).unwrap().lambda_bar(), 0.08);
    }

    #[test]
    fn estimator_examples() {
        assert_eq!(loss_estimates(&state(0.5, 0.5, 0), true, true).unwrap(), (0.5, -0.5));
        for p in [0.1, 0.5, 0.9] {
            assert_eq!(loss_estimates(&state(p, 0.5, 0), false, false).unwrap(), (0.5, 0.5));
        }
        assert_eq!(loss_estimates(&state(0.25, 0.5, -1), true, false).unwrap(), (0.0, 4.0));
        assert!(loss_estimates(&state(1.0, 0.5, 0), true, true).is_err());
        assert!(loss_estimates(&state(0.0, 0.5, 0), false, false).is_err());
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(md_closed_form(0.0), 0.5);
        assert_eq!(md_closed_form(1e-12), 0.5);
        // (5 - sqrt 13)/6, mpmath: 0.232408120756001784...
        assert!((md_closed_form(3.0) - 0.232_408_120_756_001_8).abs() < 1e-15);
        for xi in [1e-8, 1e-4, 1e-3, 0.5, 7.0, 1e3, 1e8] {
            assert!((md_closed_form(xi) + md_closed_form(-xi) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_form_agrees_with_direct_formula_away_from_zero() {
        for xi in [-50.0f64, -3.0, -0.01, 0.01, 2.0, 40.0] {
            let direct = (2.0 + xi - (4.0 + xi * xi).sqrt()) / (2.0 * xi);
            assert!((md_closed_form(xi) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn collision_disables_mixing() {
        let params = ABParams::default();
        let s = pull_module_step(&PullState::default(), true, false, &params).unwrap();
        assert_eq!(s.last_loss, 1);
        assert_eq!(s.p, s.x);
    }

    #[test]
    fn match_and_prune_mixing() {
        let params = ABParams::default();
        let s = pull_module_step(&PullState::default(), true, true, &params).unwrap();
        let gamma = 0.32 / 2.32;
        assert!((mixing_weight(-1, 0.16) - 0.137_931_034_482_758_6).abs() < 1e-15);
        assert!((s.p - ((1.0 - gamma) * s.x + gamma)).abs() < 1e-15);
        assert_eq!(s.last_loss, -1);

        let s = pull_module_step(&PullState::default(), false, false, &params).unwrap();
        assert!((mixing_weight(0, 0.16) - 0.074_074_074_074_074_07).abs() < 1e-15);
        assert!((s.p - (1.0 - 0.16 / 2.16) * s.x).abs() < 1e-15);
        assert_eq!(s.last_loss, 0);
    }

    #[test]
    fn fresh_match_step_value() {
        // m = 0, p = 0.5, matched: l_pull = -0.5, l_prune = 0.5, xi = -0.02
        let s = pull_module_step(&PullState::default(), true, true, &ABParams::default()).unwrap();
        let xi: f64 = -0.02;
        let x = (2.0 + xi - (4.0 + xi * xi).sqrt()) / (2.0 * xi);
        assert!((s.x - x).abs() < 1e-14);
        assert!(s.x > 0.5);
    }

    #[test]
    fn unbiased_estimators_on_grid() {
        let ps = [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99];
        for &p in &ps {
            for m in [-1i8, 0, 1] {
                for matched in [false, true] {
                    let st = state(p, 0.5, m);
                    let (pr1, pu1) = loss_estimates(&st, true, matched).unwrap();
                    let (pr0, pu0) = loss_estimates(&st, false, matched).unwrap();
                    let l_pull = if matched { -1.0 } else { 1.0 };
                    let e_pull = p * pu1 + (1.0 - p) * pu0;
                    let e_prune = p * pr1 + (1.0 - p) * pr0;
                    assert!((e_pull - (l_pull + 1.0) / 2.0).abs() < 1e-12);
                    assert!((e_prune - 0.5).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_outcomes_move_p_in_the_right_direction() {
        let params = ABParams::default();
        let mut s = PullState::default();
        let mut prev = s.p;
        for _ in 0..100 {
            s.step(true, false, &params).unwrap();
            assert!(s.p <= prev);
            prev = s.p;
        }
        assert!(s.p < 0.5);

        let mut s = PullState::default();
        let mut prev = s.p;
        for _ in 0..100 {
            s.step(true, true, &params).unwrap();
            assert!(s.p >= prev);
            prev = s.p;
        }
        assert!(s.p > 0.5);
    }

    #[test]
    fn repeated_prune_collide_cycles_drive_p_down() {
        let params = ABParams::default();
        let mut s = PullState::default();
        for _ in 0..2000 {
            s.step(true, false, &params).unwrap();
            s.step(false, false, &params).unwrap();
        }
        assert!(s.p < 0.05, "p = {}", s.p);
    }

    #[test]
    fn path_length_counts_loss_changes() {
        let params = ABParams::default();
        let mut s = PullState::default();
        s.step(true, true, &params).unwrap(); // -1, first: not counted
        s.step(true, false, &params).unwrap(); // +1: |2|
        s.step(false, false, &params).unwrap(); // 0: |1|
        s.step(false, false, &params).unwrap(); // 0: 0
        assert_eq!(s.path_length, 3);
        assert_eq!(s.updates, 4);
        assert_eq!(s.pulls, 2);
    }

    #[test]
    fn long_bernoulli_trace_stays_interior() {
        let params = ABParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for regime in 0..4 {
            let mut s = PullState::default();
            let mut outcomes = 0u64;
            for t in 0..100_000u64 {
                let pulled = rng.random_bool(s.p);
                let match_prob = match regime {
                    0 => 0.0,
                    1 => 1.0,
                    2 => 0.5,
                    _ => if (t / 1000) % 2 == 0 { 0.95 } else { 0.05 },
                };
                let matched = pulled && rng.random_bool(match_prob);
                s.step(pulled, matched, &params).unwrap();
                outcomes += u64::from(pulled);
                assert!(s.p > 0.0 && s.p < 1.0 && s.x > 0.0 && s.x < 1.0);
            }
            assert!(s.path_length <= 4 * outcomes);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn arbitrary_traces_stay_interior(
            trace in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..2000),
            eta in 0.001f64..0.02,
        ) {
            let params = ABParams::with_eta(eta).unwrap();
            let mut s = PullState::default();
            for (pulled, matched) in trace {
                s.step(pulled, matched, &params).unwrap();
                prop_assert!(s.p > 0.0 && s.p < 1.0);
                prop_assert!(s.x > 0.0 && s.x < 1.0);
                prop_assert!(matches!(s.last_loss, -1..=1));
            }
            prop_assert!(s.path_length <= 4 * s.pulls);
        }

        #[test]
        fn closed_form_symmetry(xi in -1e3f64..1e3) {
            prop_assume!(xi != 0.0);
            let y = md_closed_form(xi);
            prop_assert!(y > 0.0 && y < 1.0);
            prop_assert!((y + md_closed_form(-xi) - 1.0).abs() < 1e-12);
        }
    }
}
