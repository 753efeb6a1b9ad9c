//! WMMSE oracle solver for the weighted sum-rate problem.
//!
//! Produces the power labels and oracle rates used for supervised training
//! and approximation-ratio evaluation. SISO closed-form block updates on
//! v = √p: receiver, MSE weight, transmitter, each step maximizing the
//! surrogate objective, so the surrogate is non-decreasing across rounds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channelgen::{ChannelSample, ProblemConfig};
use crate::error::{Error, Result};
use crate::rates::{sum_rate_from_gains, PowerVector};

/// Division guard for the transmit update; below this the user is silenced.
const V_DENOM_GUARD: f64 = 1e-30;

/// Solver initialization scheme.
///
/// `FullPower` is the textbook choice but cannot leave symmetric stationary
/// points (a perfectly symmetric instance keeps all users identical forever),
/// so the default also sweeps the K single-user starts and keeps the best
/// final rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WmmseInit {
    FullPower,
    MultiStart,
}

/// Solver settings, recorded verbatim in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmmseConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub init: WmmseInit,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        WmmseConfig { tol: 1e-6, max_iters: 500, init: WmmseInit::MultiStart }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("wmmse tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidParameter("wmmse max_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of one solve.
#[derive(Debug, Clone)]
pub struct WmmseOutcome {
    pub power: PowerVector,
    pub rate: f64,
    pub iters: usize,
    /// Surrogate objective after each completed round, for monotonicity audits.
    pub surrogate_history: Vec<f64>,
}

/// A channel realization with its oracle label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub channel: ChannelSample,
    pub label_power: PowerVector,
    pub oracle_rate: f64,
    pub solver_iters: usize,
}

fn check_inputs(h: &ChannelSample, cfg: &ProblemConfig) -> Result<usize> {
    cfg.validate()?;
    let k = h.k_pairs();
    if cfg.k_pairs() != k {
        return Err(Error::ShapeMismatch(format!(
            "channel side {} vs config pairs {}",
            k,
            cfg.k_pairs()
        )));
    }
    Ok(k)
}

/// Run the block updates from a given starting amplitude vector v0 (√p).
pub fn wmmse_solve_from(
    h: &ChannelSample,
    cfg: &ProblemConfig,
    v0: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<WmmseOutcome> {
    let k = check_inputs(h, cfg)?;
    if v0.len() != k {
        return Err(Error::ShapeMismatch(format!("v0 len {} vs pairs {k}", v0.len())));
    }
    let gains = h.gains();
    if !gains.iter().all(|g| g.is_finite()) {
        return Err(Error::NonFinite("channel gains".into()));
    }
    let v_cap = cfg.p_max.sqrt();
    let a_diag: Vec<f64> = (0..k).map(|d| gains[d * k + d].sqrt()).collect();
    let mut v: Vec<f64> = v0.iter().map(|&x| x.clamp(0.0, v_cap)).collect();
    let mut u = vec![0.0; k];
    let mut w = vec![1.0; k];
    let mut history = Vec::new();
    let mut f_prev = f64::NEG_INFINITY;
    let mut iters = 0;

    for _ in 0..max_iters {
        iters += 1;
        // receiver: u_k = a_kk v_k / (σ_k² + Σ_j |h_kj|² v_j²)
        for rc in 0..k {
            let row = &gains[rc * k..(rc + 1) * k];
            let mut denom = cfg.sigma2[rc];
            for (j, &g) in row.iter().enumerate() {
                denom += g * v[j] * v[j];
            }
            u[rc] = a_diag[rc] * v[rc] / denom;
        }
        // weight: w_k = 1 / (1 − u_k a_kk v_k); MMSE u keeps this in [1, ∞)
        for rc in 0..k {
            w[rc] = 1.0 / (1.0 - u[rc] * a_diag[rc] * v[rc]);
        }
        // transmitter: v_k = α_k w_k u_k a_kk / (Σ_j α_j w_j u_j² |h_jk|²), clipped
        for tx in 0..k {
            let mut denom = 0.0;
            for rc in 0..k {
                denom += cfg.user_weights[rc] * w[rc] * u[rc] * u[rc] * gains[rc * k + tx];
            }
            if denom < V_DENOM_GUARD {
                v[tx] = 0.0;
            } else {
                v[tx] = (cfg.user_weights[tx] * w[tx] * u[tx] * a_diag[tx] / denom)
                    .clamp(0.0, v_cap);
            }
        }
        // surrogate Σ α_k (ln w_k + 1 − w_k e_k) at the fresh (u, w, v)
        let mut f = 0.0;
        for rc in 0..k {
            let row = &gains[rc * k..(rc + 1) * k];
            let mut interference = 0.0;
            for (j, &g) in row.iter().enumerate() {
                if j != rc {
                    interference += g * v[j] * v[j];
                }
            }
            let d = 1.0 - u[rc] * a_diag[rc] * v[rc];
            let e = d * d + u[rc] * u[rc] * (interference + cfg.sigma2[rc]);
            f += cfg.user_weights[rc] * (w[rc].ln() + 1.0 - w[rc] * e);
        }
        history.push(f);
        if (f - f_prev).abs() < tol {
            break;
        }
        f_prev = f;
    }

    let p: Vec<f64> = v.iter().map(|&x| x * x).collect();
    let rate = sum_rate_from_gains(&p, &gains, k, cfg);
    Ok(WmmseOutcome { power: PowerVector(p), rate, iters, surrogate_history: history })
}

/// Solve one instance with the configured initialization and return the
/// feasible power label, its rate, and the iteration count of the winning
/// start.
pub fn wmmse_solve(
    h: &ChannelSample,
    cfg: &ProblemConfig,
    wcfg: &WmmseConfig,
) -> Result<WmmseOutcome> {
    wcfg.validate()?;
    let k = check_inputs(h, cfg)?;
    let v_cap = cfg.p_max.sqrt();
    let full = vec![v_cap; k];
    let mut best = wmmse_solve_from(h, cfg, &full, wcfg.tol, wcfg.max_iters)?;
    if wcfg.init == WmmseInit::MultiStart {
        for active in 0..k {
            let mut v0 = vec![0.0; k];
            v0[active] = v_cap;
            let cand = wmmse_solve_from(h, cfg, &v0, wcfg.tol, wcfg.max_iters)?;
            if cand.rate > best.rate {
                best = cand;
            }
        }
    }
    Ok(best)
}

/// Label every sample of a batch, order preserved. Per-sample solves are
/// independent and fan out across threads.
pub fn label_batch(
    batch: &[ChannelSample],
    cfg: &ProblemConfig,
    wcfg: &WmmseConfig,
) -> Result<Vec<LabeledSample>> {
    let results: Vec<Result<LabeledSample>> = batch
        .par_iter()
        .map(|sample| {
            wmmse_solve(sample, cfg, wcfg)
                .map(|out| LabeledSample {
                    channel: sample.clone(),
                    label_power: out.power,
                    oracle_rate: out.rate,
                    solver_iters: out.iters,
                })
                .map_err(|e| {
                    Error::TrainAbort(format!("labeling sample {} failed: {e}", sample.sample_id))
                })
        })
        .collect();
    results.into_iter().collect()
}
