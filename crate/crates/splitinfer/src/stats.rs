//! Statistical reports: uniformity and distinguishing tests on David's views,
//! Monte-Carlo detection rates, and Poisson acceptance intervals.

use rayon::prelude::*;
use serde::Serialize;
use splitinfer_core::adversary::{
    masked_inputs, run_with_cheat, simulate_view, CheatStrategy, DetectionCounts, DetectionReport, HistogramError,
    SessionArgs, ViewHistograms,
};
use splitinfer_core::decompose::{DavidPart, Decomposition};
use splitinfer_core::protocol::{precompute_one, run_session, Honest, Mode, ProtocolError};
use splitinfer_core::rng;
use statrs::distribution::{ChiSquared, ContinuousCDF, DiscreteCDF, Poisson};

pub const DEFAULT_ALPHA: f64 = 0.001;

/// Upper tail of the chi-square distribution.
pub fn chi_square_p_value(statistic: f64, df: f64) -> f64 {
    ChiSquared::new(df).expect("positive degrees of freedom").sf(statistic)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformityReport {
    pub samples: u64,
    pub coordinates: usize,
    pub modulus: u64,
    /// Sum of the per-coordinate statistics.
    pub pooled_statistic: f64,
    pub pooled_df: f64,
    pub pooled_p_value: f64,
    pub coordinate_p_values: Vec<f64>,
    pub min_coordinate_p_value: f64,
    pub alpha: f64,
    pub rejects_uniformity: bool,
}

pub fn uniformity(h: &ViewHistograms, alpha: f64) -> Result<UniformityReport, HistogramError> {
    let stats = h.chi_square()?;
    if stats.is_empty() {
        return Err(HistogramError::Empty);
    }
    let df = (h.modulus() - 1) as f64;
    let coordinate_p_values: Vec<f64> = stats.iter().map(|&s| chi_square_p_value(s, df)).collect();
    let pooled_statistic: f64 = stats.iter().sum();
    let pooled_df = df * stats.len() as f64;
    let pooled_p_value = chi_square_p_value(pooled_statistic, pooled_df);
    Ok(UniformityReport {
        samples: h.samples(),
        coordinates: stats.len(),
        modulus: h.modulus(),
        pooled_statistic,
        pooled_df,
        pooled_p_value,
        min_coordinate_p_value: coordinate_p_values.iter().copied().fold(1.0, f64::min),
        coordinate_p_values,
        alpha,
        rejects_uniformity: pooled_p_value < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewsReport {
    pub real: UniformityReport,
    pub simulated: UniformityReport,
    pub tv_real_vs_simulated_mean: f64,
    pub tv_real_vs_simulated_max: f64,
    /// Two independent simulated samples against each other.
    pub tv_null_mean: f64,
    /// `√(p / 2N)`.
    pub tv_noise_bound: f64,
    pub within_band: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Compares real and simulated message histograms; `null` is a second,
/// independent simulated sample used for calibration.
pub fn distinguish_views(
    real: &ViewHistograms,
    simulated: &ViewHistograms,
    null: &ViewHistograms,
    alpha: f64,
) -> Result<ViewsReport, HistogramError> {
    if real.samples() != simulated.samples() || null.samples() != simulated.samples() {
        return Err(HistogramError::Incompatible);
    }
    let tv = real.tv_distance(simulated)?;
    let tv_null = null.tv_distance(simulated)?;
    let bound = simulated.tv_noise_bound();
    let (m, n) = (mean(&tv), mean(&tv_null));
    Ok(ViewsReport {
        real: uniformity(real, alpha)?,
        simulated: uniformity(simulated, alpha)?,
        tv_real_vs_simulated_mean: m,
        tv_real_vs_simulated_max: tv.iter().copied().fold(0.0, f64::max),
        tv_null_mean: n,
        tv_noise_bound: bound,
        within_band: m <= bound && n <= bound,
    })
}

const CHUNK: u64 = 1024;

/// Histograms of the masked messages David receives in `sessions` runs on
/// input `x`, each with fresh masks.
pub fn real_view_histograms(
    decomp: &Decomposition,
    david: &DavidPart,
    mode: Mode,
    x: &[f64],
    sessions: u64,
    seed: u64,
) -> Result<ViewHistograms, ViewsError> {
    let modulus = decomp.codec().field().modulus();
    let dims = decomp.dims();
    let chunks = sessions.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = ViewHistograms::new(modulus, &dims)?;
            for j in c * CHUNK..((c + 1) * CHUNK).min(sessions) {
                let mut masks = precompute_one(decomp, mode, 1, seed, j)?;
                let res = run_session(decomp, david, mode, x, &mut masks, Honest)?;
                h.add(masked_inputs(&res.david))?;
            }
            Ok(h)
        })
        .try_reduce_with(|mut a, b| {
            a.merge(&b)?;
            Ok(a)
        })
        .unwrap_or_else(|| Ok(ViewHistograms::new(modulus, &dims)?))
}

/// Histograms of `sessions` simulated views, drawn from the simulator
/// substreams of `seed`.
pub fn simulated_view_histograms(
    input: &[u64],
    output: &[u64],
    david: &DavidPart,
    sessions: u64,
    seed: u64,
) -> Result<ViewHistograms, ViewsError> {
    let chunks = sessions.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut h = ViewHistograms::new(david.modulus, &david.dims)?;
            for j in c * CHUNK..((c + 1) * CHUNK).min(sessions) {
                let mut r = rng::substream(seed, rng::SIMULATOR, j);
                let v = simulate_view(input, output, david, &mut r);
                h.add(v.layer_inputs())?;
            }
            Ok(h)
        })
        .try_reduce_with(|mut a, b| {
            a.merge(&b)?;
            Ok(a)
        })
        .unwrap_or_else(|| Ok(ViewHistograms::new(david.modulus, &david.dims)?))
}

#[derive(Debug, thiserror::Error)]
pub enum ViewsError {
    #[error(transparent)]
    Histogram(#[from] HistogramError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Parallel detection estimate over trials `0..trials`; identical to the
/// sequential estimate for the same arguments.
pub fn estimate_detection_parallel(
    args: &SessionArgs<'_>,
    strategy: &CheatStrategy,
    trials: u64,
) -> Result<DetectionReport, ProtocolError> {
    let counts = (0..trials)
        .into_par_iter()
        .try_fold(DetectionCounts::default, |mut c, t| {
            c.record(run_with_cheat(args, strategy, t)?);
            Ok::<_, ProtocolError>(c)
        })
        .try_reduce(DetectionCounts::default, |a, b| Ok(a.merge(b)))?;
    Ok(counts.report())
}

/// Smallest `[lo, hi]` with `P(X < lo) ≤ (1−level)/2` and
/// `P(X > hi) ≤ (1−level)/2` for `X ~ Poisson(mean)`.
pub fn poisson_interval(mean: f64, level: f64) -> (u64, u64) {
    let dist = Poisson::new(mean).expect("positive mean");
    let tail = (1.0 - level) / 2.0;
    let mut lo = 0;
    while dist.cdf(lo) <= tail {
        lo += 1;
    }
    // P(X < lo) = cdf(lo - 1) ≤ tail, and cdf(lo) > tail.
    let mut hi = lo;
    while dist.sf(hi) > tail {
        hi += 1;
    }
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionJson {
    pub trials: u64,
    pub aborted: u64,
    pub accepted_wrong: u64,
    pub accepted_correct: u64,
    pub abort_rate: f64,
    pub abort_ci: (f64, f64),
    pub accept_wrong_rate: f64,
    pub accept_wrong_ci: (f64, f64),
    pub wrong_given_output: f64,
}

impl From<&DetectionReport> for DetectionJson {
    fn from(r: &DetectionReport) -> Self {
        Self {
            trials: r.counts.trials,
            aborted: r.counts.aborted,
            accepted_wrong: r.counts.accepted_wrong,
            accepted_correct: r.counts.accepted_correct,
            abort_rate: r.abort_rate,
            abort_ci: r.abort_ci,
            accept_wrong_rate: r.accept_wrong_rate,
            accept_wrong_ci: r.accept_wrong_ci,
            wrong_given_output: r.wrong_given_output,
        }
    }
}
