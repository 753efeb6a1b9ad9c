//! Weighted sum-rate objective and its exact gradient.
//!
//! Rates are in nats (natural log). Only |h|² gains enter the expressions;
//! complex phases never matter here.

use crate::channelgen::{ChannelSample, ProblemConfig};
use crate::error::{Error, Result};

/// Transmit power allocation, one entry per pair, watts.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerVector(pub Vec<f64>);

impl PowerVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Box-constraint check against a problem config.
    pub fn validate(&self, cfg: &ProblemConfig) -> Result<()> {
        if self.0.len() != cfg.k_pairs() {
            return Err(Error::ShapeMismatch(format!(
                "power vector has {} entries, problem has {} pairs",
                self.0.len(),
                cfg.k_pairs()
            )));
        }
        for (k, &p) in self.0.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("p[{k}]")));
            }
            if p < 0.0 || p > cfg.p_max {
                return Err(Error::Infeasible(format!(
                    "p[{k}] = {p} outside [0, {}]",
                    cfg.p_max
                )));
            }
        }
        Ok(())
    }
}

fn check_dims(p: &[f64], h: &ChannelSample, cfg: &ProblemConfig) -> Result<usize> {
    let k = h.k_pairs();
    if p.len() != k || cfg.k_pairs() != k {
        return Err(Error::ShapeMismatch(format!(
            "power len {}, channel side {}, config pairs {}",
            p.len(),
            k,
            cfg.k_pairs()
        )));
    }
    Ok(k)
}

/// Weighted sum rate Σ_k α_k ln(1 + |h_kk|² p_k / (Σ_{j≠k} |h_kj|² p_j + σ_k²)).
pub fn sum_rate(p: &PowerVector, h: &ChannelSample, cfg: &ProblemConfig) -> Result<f64> {
    let k = check_dims(&p.0, h, cfg)?;
    p.validate(cfg)?;
    let g = h.gains();
    Ok(sum_rate_from_gains(&p.0, &g, k, cfg))
}

/// Same objective evaluated on precomputed row-major gains; no validation.
/// Hot-path entry for solvers and training loops that already hold gains.
pub fn sum_rate_from_gains(p: &[f64], gains: &[f64], k: usize, cfg: &ProblemConfig) -> f64 {
    let mut rate = 0.0;
    for rc in 0..k {
        let row = &gains[rc * k..(rc + 1) * k];
        let mut interference = cfg.sigma2[rc];
        for (j, &gkj) in row.iter().enumerate() {
            if j != rc {
                interference += gkj * p[j];
            }
        }
        let signal = row[rc] * p[rc];
        rate += cfg.user_weights[rc] * (1.0 + signal / interference).ln();
    }
    rate
}

/// Exact gradient ∂R/∂p of the weighted sum rate: the own-signal term of
/// user j minus the interference hit its power inflicts on every other user.
pub fn sum_rate_grad(p: &PowerVector, h: &ChannelSample, cfg: &ProblemConfig) -> Result<Vec<f64>> {
    let k = check_dims(&p.0, h, cfg)?;
    p.validate(cfg)?;
    let g = h.gains();
    Ok(sum_rate_grad_from_gains(&p.0, &g, k, cfg))
}

/// Gradient on precomputed gains; no validation.
pub fn sum_rate_grad_from_gains(p: &[f64], gains: &[f64], k: usize, cfg: &ProblemConfig) -> Vec<f64> {
    // per-receiver signal S_k, interference-plus-noise B_k, total T_k = S_k + B_k
    let mut signal = vec![0.0; k];
    let mut base = vec![0.0; k];
    for rc in 0..k {
        let row = &gains[rc * k..(rc + 1) * k];
        let mut b = cfg.sigma2[rc];
        for (j, &gkj) in row.iter().enumerate() {
            if j != rc {
                b += gkj * p[j];
            }
        }
        signal[rc] = row[rc] * p[rc];
        base[rc] = b;
    }
    let mut grad = vec![0.0; k];
    for j in 0..k {
        // own term: α_j |h_jj|² / (S_j + B_j)
        let mut gj = cfg.user_weights[j] * gains[j * k + j] / (signal[j] + base[j]);
        // interference terms: −α_k |h_kj|² S_k / (T_k B_k) for k ≠ j
        for rc in 0..k {
            if rc == j {
                continue;
            }
            let gkj = gains[rc * k + j];
            gj -= cfg.user_weights[rc] * gkj * signal[rc]
                / ((signal[rc] + base[rc]) * base[rc]);
        }
        grad[j] = gj;
    }
    grad
}
