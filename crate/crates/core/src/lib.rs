//! Decentralized bandit learning in two-sided matching markets.
//!
//! Agents learn noisy utilities for firms while competing for them. Each
//! agent keeps an index-based stochastic bandit (UCB or Thompson sampling)
//! to rank firms, and one two-arm adversarial learner per firm that decides
//! whether to request the firm or skip it this round. Firms accept their
//! favourite requester; the rest collide and earn nothing.
//!
//! Modules:
//! - [`market`]: market model, deferred acceptance, blocking and fixed pairs,
//!   α-reducibility and market generators.
//! - [`bandit_index`]: match statistics, UCB and Thompson indices.
//! - [`adversarial`]: the request-vs-prune mirror-descent learner.
//! - [`agent`]: the per-round decision loop.
//! - [`simulator`]: the round engine and stable-regret metrics.
//! - [`experiment`]: seeded batch runs, aggregation and result files.
//! - [`oracle`]: independent cross-checks exposed by the `oracle` command.

#![allow(clippy::needless_range_loop)]

pub mod adversarial;
pub mod agent;
pub mod bandit_index;
pub mod error;
pub mod experiment;
pub mod market;
pub mod market_file;
pub mod oracle;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
