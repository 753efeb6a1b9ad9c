//! Euclidean projection onto the probability simplex and the projected
//! ascent step on sample weights.

use crate::error::{Error, Result};

/// Simplex-constrained weight vector λ over a working set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeights(Vec<f64>);

impl SampleWeights {
    /// Uniform weights over `n` samples.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput("weights need at least one sample".into()));
        }
        Ok(SampleWeights(vec![1.0 / n as f64; n]))
    }

    /// Uniform over the included coordinates, zero elsewhere.
    pub fn uniform_over(included: &[bool]) -> Result<Self> {
        let m = included.iter().filter(|&&b| b).count();
        if m == 0 {
            return Err(Error::EmptyInput("no included samples".into()));
        }
        Ok(SampleWeights(
            included.iter().map(|&b| if b { 1.0 / m as f64 } else { 0.0 }).collect(),
        ))
    }

    pub fn from_vec(v: Vec<f64>) -> Result<Self> {
        let w = SampleWeights(v);
        w.validate()?;
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// λ ≥ 0 elementwise and Σλ = 1 to within 1e-12.
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::EmptyInput("weight vector is empty".into()));
        }
        if self.0.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let sum: f64 = self.0.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Euclidean projection of `v` onto the probability simplex via the
/// sort-descending cumulative-threshold method: find
/// ρ = max{j : v_(j) + (1 − Σ_{i≤j} v_(i))/j > 0}, shift by
/// τ = (Σ_{i≤ρ} v_(i) − 1)/ρ, clip at zero.
pub fn project_simplex(v: &[f64]) -> Result<SampleWeights> {
    if v.is_empty() {
        return Err(Error::EmptyInput("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("projection input".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // the shift-and-clip form is exact up to roundoff; renormalization is a
    // last-ulp correction so the Σ = 1e-12 invariant holds verbatim
    let sum: f64 = out.iter().sum();
    let out = if sum > 0.0 && (sum - 1.0).abs() > 1e-15 {
        out.into_iter().map(|x| x / sum).collect()
    } else {
        out
    };
    Ok(SampleWeights(out))
}

/// One projected ascent step λ ← proj(λ + β·g), restricted to the included
/// coordinates; excluded coordinates stay pinned at zero. With nothing
/// included the weights are returned unchanged.
pub fn ascent_step(
    lambda: &SampleWeights,
    g: &[f64],
    beta: f64,
    included: &[bool],
) -> Result<SampleWeights> {
    let n = lambda.len();
    if g.len() != n || included.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "weights {n}, g {}, included {}",
            g.len(),
            included.len()
        )));
    }
    let idx: Vec<usize> = (0..n).filter(|&i| included[i]).collect();
    if idx.is_empty() {
        return Ok(lambda.clone());
    }
    let sub: Vec<f64> = idx.iter().map(|&i| lambda.as_slice()[i] + beta * g[i]).collect();
    let projected = project_simplex(&sub)?;
    let mut out = vec![0.0; n];
    for (slot, &i) in projected.as_slice().iter().zip(idx.iter()) {
        out[i] = *slot;
    }
    Ok(SampleWeights(out))
}
