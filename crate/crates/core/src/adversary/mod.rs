//! Deviating Davids, the view simulator, and the weight-extraction attack.

mod cheat;
mod detection;
mod recovery;
mod simulator;
mod views;

pub use cheat::{AdaptiveDavid, CheatStrategy, CheatingDavid};
pub use detection::{
    estimate_detection, oracle_output, run_with_cheat, wilson_interval, DetectionCounts, DetectionReport,
    SessionArgs, TrialOutcome, MIN_TRIALS, WILSON_Z95,
};
pub use recovery::{collect_pairs, count_residuals, linear_recovery_attack, solve_layer, AttackError, ObservedPair, RecoveredLayer};
pub use simulator::{masked_inputs, simulate_view, SimulatedView};
pub use views::{HistogramError, ViewHistograms, MAX_HIST_MODULUS};
