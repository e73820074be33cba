//! Monte-Carlo estimation of how often a cheating David is caught.

use alloc::vec::Vec;

use super::cheat::{CheatStrategy, CheatingDavid};
use crate::decompose::{DavidPart, Decomposition};
use crate::model::{ModelError, QuantizedModel};
use crate::protocol::{precompute_one, run_session, Mode, Outcome, ProtocolError};
use crate::rng;

/// Everything a trial needs besides its index.
#[derive(Debug, Clone, Copy)]
pub struct SessionArgs<'a> {
    pub decomp: &'a Decomposition,
    pub david: &'a DavidPart,
    pub mode: Mode,
    pub check_count: usize,
    pub input: &'a [f64],
    /// Field output `Θ(x)` of the quantized oracle for `input`.
    pub expected: &'a [u64],
    pub seed: u64,
}

/// Computes the oracle output used by [`SessionArgs::expected`].
pub fn oracle_output(oracle: &QuantizedModel, input: &[f64]) -> Result<Vec<u64>, ModelError> {
    let enc = oracle.encode_input(input)?;
    Ok(oracle.forward_field(&enc)?.pop().expect("at least one layer"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrialOutcome {
    AcceptedCorrect,
    AcceptedWrong,
    Aborted,
}

/// Runs trial `trial` with fresh masks and a fresh adversary stream and
/// classifies the result against the oracle.
pub fn run_with_cheat(args: &SessionArgs<'_>, strategy: &CheatStrategy, trial: u64) -> Result<TrialOutcome, ProtocolError> {
    let mut masks = precompute_one(args.decomp, args.mode, args.check_count, args.seed, trial)?;
    let adversary = CheatingDavid::new(strategy.clone(), rng::substream(args.seed, rng::ADVERSARY, trial));
    let result = run_session(args.decomp, args.david, args.mode, args.input, &mut masks, adversary)?;
    Ok(match result.outcome {
        Outcome::Abort => TrialOutcome::Aborted,
        Outcome::Output(out) if out == args.expected => TrialOutcome::AcceptedCorrect,
        Outcome::Output(_) => TrialOutcome::AcceptedWrong,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    pub trials: u64,
    pub aborted: u64,
    pub accepted_wrong: u64,
    pub accepted_correct: u64,
}

impl DetectionCounts {
    pub fn record(&mut self, outcome: TrialOutcome) {
        self.trials += 1;
        match outcome {
            TrialOutcome::Aborted => self.aborted += 1,
            TrialOutcome::AcceptedWrong => self.accepted_wrong += 1,
            TrialOutcome::AcceptedCorrect => self.accepted_correct += 1,
        }
    }

    pub fn merge(mut self, other: DetectionCounts) -> DetectionCounts {
        self.trials += other.trials;
        self.aborted += other.aborted;
        self.accepted_wrong += other.accepted_wrong;
        self.accepted_correct += other.accepted_correct;
        self
    }

    pub fn report(&self) -> DetectionReport {
        DetectionReport {
            counts: *self,
            abort_rate: rate(self.aborted, self.trials),
            accept_wrong_rate: rate(self.accepted_wrong, self.trials),
            abort_ci: wilson_interval(self.aborted, self.trials, WILSON_Z95),
            accept_wrong_ci: wilson_interval(self.accepted_wrong, self.trials, WILSON_Z95),
            // Among sessions that produced an output, how many were wrong.
            wrong_given_output: rate(self.accepted_wrong, self.accepted_wrong + self.accepted_correct),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionReport {
    pub counts: DetectionCounts,
    pub abort_rate: f64,
    pub accept_wrong_rate: f64,
    pub abort_ci: (f64, f64),
    pub accept_wrong_ci: (f64, f64),
    pub wrong_given_output: f64,
}

pub const WILSON_Z95: f64 = 1.959_963_984_540_054;
pub const MIN_TRIALS: u64 = 1000;

fn rate(k: u64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = k as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)) / denom;
    let lo = if k == 0 { 0.0 } else { f64::max(0.0, center - half) };
    let hi = if k == n { 1.0 } else { f64::min(1.0, center + half) };
    (lo, hi)
}

/// Sequential estimate over trials `0..trials`.
///
/// Fewer than [`MIN_TRIALS`] trials is allowed but gives wide intervals.
pub fn estimate_detection(args: &SessionArgs<'_>, strategy: &CheatStrategy, trials: u64) -> Result<DetectionReport, ProtocolError> {
    let mut counts = DetectionCounts::default();
    for t in 0..trials {
        counts.record(run_with_cheat(args, strategy, t)?);
    }
    Ok(counts.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // k=0: upper bound z^2/(n+z^2)
        let (lo, hi) = wilson_interval(0, 100, WILSON_Z95);
        assert_eq!(lo, 0.0);
        let z2 = WILSON_Z95 * WILSON_Z95;
        assert!((hi - z2 / (100.0 + z2)).abs() < 1e-12);
        // symmetric around 1/2 for k = n/2
        let (lo, hi) = wilson_interval(50, 100, WILSON_Z95);
        assert!((lo + hi - 1.0).abs() < 1e-12);
        assert!((hi - 0.5968).abs() < 1e-3);
    }

    #[test]
    fn counts_merge() {
        let mut a = DetectionCounts::default();
        a.record(TrialOutcome::Aborted);
        let mut b = DetectionCounts::default();
        b.record(TrialOutcome::AcceptedWrong);
        b.record(TrialOutcome::AcceptedCorrect);
        let m = a.merge(b);
        assert_eq!((m.trials, m.aborted, m.accepted_wrong, m.accepted_correct), (3, 1, 1, 1));
        assert!((m.report().wrong_given_output - 0.5).abs() < 1e-15);
    }
}
