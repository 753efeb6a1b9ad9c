//! Training loss and system-performance loss.

use crate::channelgen::ProblemConfig;
use crate::error::{Error, Result};
use crate::eval::DEGENERATE_RATE_TOL;
use crate::rates::{sum_rate_from_gains, PowerVector};
use crate::wmmse::LabeledSample;

/// Squared Euclidean distance ‖y − π‖² and its gradient 2(π − y) w.r.t. the
/// prediction.
pub fn mse_loss(pred: &[f64], label: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != label.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction len {} vs label len {}",
            pred.len(),
            label.len()
        )));
    }
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &y) in pred.iter().zip(label.iter()) {
        let d = p - y;
        loss += d * d;
        grad.push(2.0 * d);
    }
    Ok((loss, grad))
}

/// System-performance loss g = −R(pred; h)/R̄: the negative per-sample
/// approximation ratio. Larger g means a worse-served sample. Returns `None`
/// for degenerate samples (R̄ ≤ tolerance), which the ascent must keep
/// pinned at weight zero because the 1/R̄ weight is undefined there.
pub fn perf_loss_g(
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
    Ok(Some(-rate / sample.oracle_rate))
}
