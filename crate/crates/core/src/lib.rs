//! Selfish-mining analysis for a bilayer Nakamoto consensus protocol with
//! leader tenures and two-phase macroblocks.
//!
//! * [`probmodel`] maps tenure, difficulty and hashrate to per-round
//!   transition probabilities.
//! * [`markov`] gives the closed-form stationary lead distribution, the
//!   revenue rates and the selfish revenue share, plus a power-iteration
//!   oracle on the truncated chain.
//! * [`simulator`] is a seeded round-level Monte Carlo of the same machine.
//! * [`sweep`] finds the minimum profitable attacker share and maps it over
//!   tenure x difficulty grids.
//! * [`cli`] is the command-line front end.

pub mod cli;
pub mod error;
pub mod markov;
pub mod probmodel;
pub mod simulator;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
pub use markov::{
    analyze, is_profitable, q_at, revenue_rates, revenue_ratio, stationary,
    stationary_truncated_oracle, Analysis, RevenueReport, StationaryDist, TransitionProbs,
};
pub use probmodel::{
    apply_fix, derive_transition_probs, lambda_from_protocol, round_success_probs, MiningParams,
    ProtocolParams, RoundProbs,
};
pub use simulator::{
    compare_to_analytic, simulate, simulate_parallel, Accounting, Comparison, SimConfig, SimResult,
    Variant,
};
pub use sweep::{profit_threshold, resistance_sweep, SweepGrid, SweepRow, ThresholdResult};
