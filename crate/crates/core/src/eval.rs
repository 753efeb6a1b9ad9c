//! Evaluation metrics: per-episode and mixture-test mean sum-rate, WMMSE
//! approximation ratios, and ratio distributions.
//!
//! Ratios may exceed 1 (the policy can beat the local WMMSE solution) and
//! are never clipped. Samples whose oracle rate is degenerate (≤ 0) are
//! excluded from ratio statistics and reported separately.

use rayon::prelude::*;
use serde::Serialize;

use crate::channelgen::ProblemConfig;
use crate::error::{Error, Result};
use crate::policy::{featurize_batch, FeatureNorm, PolicyParams};
use crate::rates::{sum_rate_from_gains, PowerVector};
use crate::wmmse::LabeledSample;

/// Oracle rates at or below this are treated as degenerate.
pub const DEGENERATE_RATE_TOL: f64 = 1e-9;

/// Histogram bin edges, strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct HistSpec {
    pub edges: Vec<f64>,
}

impl HistSpec {
    /// `bins` uniform bins on [lo, hi]; the default report uses 50 on [0, 1.5].
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Self {
        let edges = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect();
        HistSpec { edges }
    }

    pub fn validate(&self) -> Result<()> {
        if self.edges.len() < 2 {
            return Err(Error::InvalidParameter("need at least two bin edges".into()));
        }
        if !self.edges.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidParameter("bin edges must be strictly increasing".into()));
        }
        Ok(())
    }
}

impl Default for HistSpec {
    fn default() -> Self {
        HistSpec::uniform(0.0, 1.5, 50)
    }
}

/// Histogram counts plus the cumulative distribution at the upper bin edges.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub cdf: Vec<f64>,
}

/// Per-episode aggregate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeEval {
    pub episode: u32,
    pub n: usize,
    pub mean_rate: f64,
    pub mean_ratio: f64,
    pub excluded: usize,
}

/// One evaluation snapshot at a timestamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub t: u64,
    pub per_episode: Vec<EpisodeEval>,
    pub mixture_n: usize,
    pub mixture_rate: f64,
    pub mixture_ratio: f64,
    pub excluded: usize,
    pub histogram: Histogram,
}

/// Achieved sum-rate divided by the oracle rate; `None` when the oracle rate
/// is degenerate.
pub fn approx_ratio(
    pred: &PowerVector,
    sample: &LabeledSample,
    cfg: &ProblemConfig,
) -> Result<Option<f64>> {
    pred.validate(cfg)?;
    if sample.oracle_rate <= DEGENERATE_RATE_TOL {
        return Ok(None);
    }
    let gains = sample.channel.gains();
    let rate = sum_rate_from_gains(pred.as_slice(), &gains, sample.channel.k_pairs(), cfg);
    Ok(Some(rate / sample.oracle_rate))
}

/// Histogram counts and right-continuous empirical CDF at the upper edges.
/// Values at or below the first edge land in the first bin, values above the
/// last edge in the last bin, so counts always sum to the input length.
pub fn ratio_distribution(ratios: &[f64], spec: &HistSpec) -> Result<Histogram> {
    spec.validate()?;
    if ratios.is_empty() {
        return Err(Error::EmptyInput("ratio distribution needs at least one value".into()));
    }
    let bins = spec.edges.len() - 1;
    let mut counts = vec![0usize; bins];
    for &r in ratios {
        // bin i covers (edges[i], edges[i+1]]
        let mut idx = bins - 1;
        for i in 0..bins {
            if r <= spec.edges[i + 1] {
                idx = i;
                break;
            }
        }
        counts[idx] += 1;
    }
    let n = ratios.len() as f64;
    let mut cdf = Vec::with_capacity(bins);
    let mut acc = 0usize;
    for &c in &counts {
        acc += c;
        cdf.push(acc as f64 / n);
    }
    Ok(Histogram { edges: spec.edges.clone(), counts, cdf })
}

/// Per-sample (rate, ratio-or-None) for one labeled set under the policy.
fn score_set(
    params: &PolicyParams,
    norm: &FeatureNorm,
    set: &[LabeledSample],
    problem: &ProblemConfig,
) -> Result<Vec<(f64, Option<f64>)>> {
    let features = featurize_batch(set.iter().map(|s| &s.channel), norm);
    let (pred, _) = params.forward(&features)?;
    let k = problem.k_pairs();
    let mut out = vec![(0.0, None); set.len()];
    out.par_iter_mut().enumerate().for_each(|(i, slot)| {
        let gains = set[i].channel.gains();
        let rate = sum_rate_from_gains(pred.row(i), &gains, k, problem);
        let ratio = if set[i].oracle_rate > DEGENERATE_RATE_TOL {
            Some(rate / set[i].oracle_rate)
        } else {
            None
        };
        *slot = (rate, ratio);
    });
    Ok(out)
}

/// Evaluate the policy on every per-episode test set plus their mixture.
/// Read-only: neither params nor the test sets are touched.
pub fn evaluate(
    params: &PolicyParams,
    norm: &FeatureNorm,
    test_sets: &[Vec<LabeledSample>],
    problem: &ProblemConfig,
    bins: &HistSpec,
    t: u64,
) -> Result<EvalReport> {
    if test_sets.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyInput("evaluate needs at least one non-empty test set".into()));
    }
    let mut per_episode = Vec::with_capacity(test_sets.len());
    let mut all_ratios = Vec::new();
    let mut rate_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut n_total = 0usize;
    let mut excluded_total = 0usize;
    for (ep, set) in test_sets.iter().enumerate() {
        if set.is_empty() {
            per_episode.push(EpisodeEval {
                episode: ep as u32,
                n: 0,
                mean_rate: 0.0,
                mean_ratio: 0.0,
                excluded: 0,
            });
            continue;
        }
        let scored = score_set(params, norm, set, problem)?;
        let mut ep_rate = 0.0;
        let mut ep_ratio = 0.0;
        let mut ep_included = 0usize;
        for &(rate, ratio) in &scored {
            ep_rate += rate;
            if let Some(r) = ratio {
                ep_ratio += r;
                ep_included += 1;
                all_ratios.push(r);
            }
        }
        let excluded = set.len() - ep_included;
        rate_sum += ep_rate;
        ratio_sum += ep_ratio;
        n_total += set.len();
        excluded_total += excluded;
        per_episode.push(EpisodeEval {
            episode: ep as u32,
            n: set.len(),
            mean_rate: ep_rate / set.len() as f64,
            mean_ratio: if ep_included > 0 { ep_ratio / ep_included as f64 } else { 0.0 },
            excluded,
        });
    }
    let included = n_total - excluded_total;
    let histogram = ratio_distribution(&all_ratios, bins)?;
    Ok(EvalReport {
        t,
        per_episode,
        mixture_n: n_total,
        mixture_rate: rate_sum / n_total as f64,
        mixture_ratio: if included > 0 { ratio_sum / included as f64 } else { 0.0 },
        excluded: excluded_total,
        histogram,
    })
}
