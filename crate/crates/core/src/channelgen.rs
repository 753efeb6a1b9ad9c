//! Synthetic interference-channel generation and episodic batch streaming.
//!
//! Episodes are contiguous runs of one channel distribution. The stream
//! reveals batches in schedule order without telling consumers where one
//! episode ends and the next begins; samples only carry provenance tags.
//!
//! Every sample is generated from its own counter-based RNG stream keyed by
//! `(master_seed, sample_id)`, so values depend on neither generation order
//! nor parallelism. Field draw order per sample is fixed: Rayleigh/Rician
//! draw entries row-major, re then im; Geometry draws transmitter positions
//! (x, y per pair), then receiver positions, then fading entries row-major.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::sample_rng;

/// One K×K complex interference-channel realization.
///
/// Entry `(k, j)` is the channel from transmitter `j` to receiver `k`;
/// the diagonal holds the direct channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    h: Vec<Complex64>,
    k_pairs: usize,
    pub episode_id: u32,
    pub sample_id: u64,
}

impl ChannelSample {
    pub fn new(h: Vec<Complex64>, k_pairs: usize, episode_id: u32, sample_id: u64) -> Result<Self> {
        if k_pairs == 0 {
            return Err(Error::InvalidDimension("k_pairs must be >= 1".into()));
        }
        if h.len() != k_pairs * k_pairs {
            return Err(Error::ShapeMismatch(format!(
                "channel matrix has {} entries, expected {}",
                h.len(),
                k_pairs * k_pairs
            )));
        }
        if !h.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::NonFinite("channel matrix entry".into()));
        }
        Ok(ChannelSample { h, k_pairs, episode_id, sample_id })
    }

    pub fn k_pairs(&self) -> usize {
        self.k_pairs
    }

    /// Channel from transmitter `j` to receiver `k`.
    pub fn entry(&self, k: usize, j: usize) -> Complex64 {
        self.h[k * self.k_pairs + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.h
    }

    /// Row-major |h_kj|² gains; all that the rate expressions consume.
    pub fn gains(&self) -> Vec<f64> {
        self.h.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Row-major |h_kj| magnitudes; the policy's input features.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.h.iter().map(|c| c.norm()).collect()
    }
}

/// Problem constants of the power-control objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    /// Power budget per transmitter, linear watts.
    pub p_max: f64,
    /// Noise power per receiver, linear watts.
    pub sigma2: Vec<f64>,
    /// Per-user rate weights, all positive.
    pub user_weights: Vec<f64>,
}

impl ProblemConfig {
    /// Uniform weights and equal noise across `k` users.
    pub fn uniform(k: usize, p_max: f64, sigma2: f64) -> Self {
        ProblemConfig { p_max, sigma2: vec![sigma2; k], user_weights: vec![1.0; k] }
    }

    pub fn k_pairs(&self) -> usize {
        self.sigma2.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0) {
            return Err(Error::InvalidParameter(format!("p_max must be > 0, got {}", self.p_max)));
        }
        if self.sigma2.is_empty() || self.sigma2.len() != self.user_weights.len() {
            return Err(Error::ShapeMismatch(format!(
                "sigma2 has {} entries, user_weights {}",
                self.sigma2.len(),
                self.user_weights.len()
            )));
        }
        if !self.sigma2.iter().all(|&s| s > 0.0 && s.is_finite()) {
            return Err(Error::InvalidParameter("all sigma2 must be positive and finite".into()));
        }
        if !self.user_weights.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter("all user_weights must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Channel distribution of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodeKind {
    Rayleigh,
    Rician,
    Geometry { area_side: f64 },
    DiagBoost { boost_factor: f64 },
}

impl EpisodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            EpisodeKind::Rayleigh => "rayleigh",
            EpisodeKind::Rician => "rician",
            EpisodeKind::Geometry { .. } => "geometry",
            EpisodeKind::DiagBoost { .. } => "diag_boost",
        }
    }
}

/// One episode of the stream: a distribution plus its sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    #[serde(flatten)]
    pub kind: EpisodeKind,
    pub n_train: usize,
    pub n_test: usize,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_test < 1 {
            return Err(Error::InvalidParameter("n_test must be >= 1".into()));
        }
        match self.kind {
            EpisodeKind::Geometry { area_side } if !(area_side > 0.0) => Err(
                Error::InvalidParameter(format!("area_side must be > 0, got {area_side}")),
            ),
            EpisodeKind::DiagBoost { boost_factor } if !(boost_factor > 0.0) => Err(
                Error::InvalidParameter(format!("boost_factor must be > 0, got {boost_factor}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Ordered episodes plus the batch size revealed per time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSchedule {
    pub episodes: Vec<EpisodeSpec>,
    pub batch_size: usize,
    pub seed: u64,
}

impl EpisodeSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
        }
        for ep in &self.episodes {
            ep.validate()?;
        }
        Ok(())
    }

    pub fn total_train(&self) -> usize {
        self.episodes.iter().map(|e| e.n_train).sum()
    }

    pub fn total_test(&self) -> usize {
        self.episodes.iter().map(|e| e.n_test).sum()
    }
}

/// Standard Rayleigh fading: Re and Im of every entry i.i.d. N(0,1)/√2,
/// so E|h|² = 1.
pub fn gen_rayleigh(k: usize, rng: &mut ChaCha8Rng) -> Result<ChannelSample> {
    if k == 0 {
        return Err(Error::InvalidDimension("pair count must be >= 1".into()));
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        h.push(Complex64::new(re * inv_sqrt2, im * inv_sqrt2));
    }
    ChannelSample::new(h, k, 0, 0)
}

/// Rician fading with 0 dB K-factor: Re = (1 + N(0,1))/2, Im = (1 + N(0,1))/2.
pub fn gen_rician(k: usize, rng: &mut ChaCha8Rng) -> Result<ChannelSample> {
    if k == 0 {
        return Err(Error::InvalidDimension("pair count must be >= 1".into()));
    }
    let mut h = Vec::with_capacity(k * k);
    for _ in 0..k * k {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        h.push(Complex64::new((1.0 + re) / 2.0, (1.0 + im) / 2.0));
    }
    ChannelSample::new(h, k, 0, 0)
}

/// Geometry channel: transmitters and receivers uniform in an
/// `area_side × area_side` square, pair `k` matching transmitter `k` with
/// receiver `k`; entry (k, j) is `f_kj / √(1 + d²)` with `f_kj ~ CN(0,1)`
/// and `d` the transmitter-`j`-to-receiver-`k` distance, so
/// |h_kj|² = |f_kj|² / (1 + d²).
pub fn gen_geometry(k: usize, area_side: f64, rng: &mut ChaCha8Rng) -> Result<ChannelSample> {
    if k == 0 {
        return Err(Error::InvalidDimension("pair count must be >= 1".into()));
    }
    if !(area_side > 0.0) {
        return Err(Error::InvalidParameter(format!("area_side must be > 0, got {area_side}")));
    }
    let mut tx = Vec::with_capacity(k);
    for _ in 0..k {
        let x: f64 = rng.random_range(0.0..area_side);
        let y: f64 = rng.random_range(0.0..area_side);
        tx.push((x, y));
    }
    let mut rx = Vec::with_capacity(k);
    for _ in 0..k {
        let x: f64 = rng.random_range(0.0..area_side);
        let y: f64 = rng.random_range(0.0..area_side);
        rx.push((x, y));
    }
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = Vec::with_capacity(k * k);
    for rck in 0..k {
        for txj in 0..k {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let f = Complex64::new(re * inv_sqrt2, im * inv_sqrt2);
            let dx = tx[txj].0 - rx[rck].0;
            let dy = tx[txj].1 - rx[rck].1;
            let d2 = dx * dx + dy * dy;
            h.push(f / (1.0 + d2).sqrt());
        }
    }
    ChannelSample::new(h, k, 0, 0)
}

/// Draw a sample from `base`, then scale the direct (diagonal) channels by
/// `boost_factor`. Only a Rayleigh base is supported.
pub fn gen_diag_boost(
    base: &EpisodeKind,
    boost_factor: f64,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelSample> {
    if !(boost_factor > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "boost_factor must be > 0, got {boost_factor}"
        )));
    }
    let mut sample = match base {
        EpisodeKind::Rayleigh => gen_rayleigh(k, rng)?,
        other => {
            return Err(Error::InvalidParameter(format!(
                "diag boost base kind must be rayleigh, got {}",
                other.name()
            )))
        }
    };
    for d in 0..k {
        sample.h[d * k + d] *= boost_factor;
    }
    Ok(sample)
}

/// Generate the sample with the given id from its own counter-based stream
/// and stamp its provenance tags.
pub fn generate_sample(
    kind: &EpisodeKind,
    k: usize,
    master_seed: u64,
    sample_id: u64,
    episode_id: u32,
) -> Result<ChannelSample> {
    let mut rng = sample_rng(master_seed, sample_id);
    let mut sample = match kind {
        EpisodeKind::Rayleigh => gen_rayleigh(k, &mut rng)?,
        EpisodeKind::Rician => gen_rician(k, &mut rng)?,
        EpisodeKind::Geometry { area_side } => gen_geometry(k, *area_side, &mut rng)?,
        EpisodeKind::DiagBoost { boost_factor } => {
            gen_diag_boost(&EpisodeKind::Rayleigh, *boost_factor, k, &mut rng)?
        }
    };
    sample.episode_id = episode_id;
    sample.sample_id = sample_id;
    Ok(sample)
}

/// Position in a training stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StreamCursor {
    pub episode: usize,
    pub offset: usize,
    pub next_sample_id: u64,
}

/// Reveal the next batch of training samples, or `None` at end of stream.
///
/// Batches never straddle episodes: the trailing batch of an episode is
/// emitted short. Sample ids increase monotonically across the stream.
pub fn next_batch(
    schedule: &EpisodeSchedule,
    k: usize,
    cursor: StreamCursor,
) -> Result<Option<(Vec<ChannelSample>, StreamCursor)>> {
    schedule.validate()?;
    let mut cur = cursor;
    // skip any episodes already exhausted (including zero-train episodes)
    while cur.episode < schedule.episodes.len()
        && cur.offset >= schedule.episodes[cur.episode].n_train
    {
        cur.episode += 1;
        cur.offset = 0;
    }
    if cur.episode >= schedule.episodes.len() {
        return Ok(None);
    }
    let spec = &schedule.episodes[cur.episode];
    let remaining = spec.n_train - cur.offset;
    let take = remaining.min(schedule.batch_size);
    let mut batch = Vec::with_capacity(take);
    for i in 0..take {
        batch.push(generate_sample(
            &spec.kind,
            k,
            schedule.seed,
            cur.next_sample_id + i as u64,
            cur.episode as u32,
        )?);
    }
    cur.offset += take;
    cur.next_sample_id += take as u64;
    Ok(Some((batch, cur)))
}

/// Generate the held-out test set of every episode. Test sample ids start
/// after the full training stream so the two ranges never collide.
pub fn generate_test_sets(schedule: &EpisodeSchedule, k: usize) -> Result<Vec<Vec<ChannelSample>>> {
    schedule.validate()?;
    let mut next_id = schedule.total_train() as u64;
    let mut sets = Vec::with_capacity(schedule.episodes.len());
    for (ep_idx, spec) in schedule.episodes.iter().enumerate() {
        let mut set = Vec::with_capacity(spec.n_test);
        for _ in 0..spec.n_test {
            set.push(generate_sample(&spec.kind, k, schedule.seed, next_id, ep_idx as u32)?);
            next_id += 1;
        }
        sets.push(set);
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sample_rng;

    fn mean_and_var(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn rayleigh_unit_mean_square() {
        // Monte Carlo over 1e5 entry draws: E|h|² = 1 ± 0.02, E Re = 0 ± 0.01
        let k = 10;
        let draws = 1000; // 1000 samples × 100 entries = 1e5 draws
        let mut sq = Vec::with_capacity(draws * k * k);
        let mut re = Vec::with_capacity(draws * k * k);
        for id in 0..draws {
            let s = generate_sample(&EpisodeKind::Rayleigh, k, 7, id as u64, 0).unwrap();
            for c in s.entries() {
                sq.push(c.norm_sqr());
                re.push(c.re);
            }
        }
        let (mean_sq, _) = mean_and_var(&sq);
        let (mean_re, _) = mean_and_var(&re);
        assert!((mean_sq - 1.0).abs() < 0.02, "E|h|² = {mean_sq}");
        assert!(mean_re.abs() < 0.01, "E Re = {mean_re}");
    }

    #[test]
    fn rayleigh_rejects_zero_pairs() {
        let mut rng = sample_rng(1, 0);
        assert!(matches!(gen_rayleigh(0, &mut rng), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn rayleigh_deterministic_under_seed() {
        let a = generate_sample(&EpisodeKind::Rayleigh, 4, 99, 5, 0).unwrap();
        let b = generate_sample(&EpisodeKind::Rayleigh, 4, 99, 5, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rician_first_moments() {
        // mean Re = 0.5 ± 0.01, var Re = 0.25 ± 0.01 over 1e5 draws
        let k = 10;
        let mut re = Vec::new();
        for id in 0..1000u64 {
            let s = generate_sample(&EpisodeKind::Rician, k, 11, id, 0).unwrap();
            re.extend(s.entries().iter().map(|c| c.re));
        }
        let (mean, var) = mean_and_var(&re);
        assert!((mean - 0.5).abs() < 0.01, "mean = {mean}");
        assert!((var - 0.25).abs() < 0.01, "var = {var}");
    }

    #[test]
    fn geometry_colocated_pathloss_is_unity() {
        // With d = 0 forced, |h|² is |f|²: unit-mean exponential.
        // Use a tiny area so distances are ~0; pathloss 1/(1+d²) ≈ 1.
        let k = 5;
        let mut sq = Vec::new();
        for id in 0..4000u64 {
            let s = generate_sample(&EpisodeKind::Geometry { area_side: 1e-6 }, k, 3, id, 0).unwrap();
            sq.extend(s.entries().iter().map(|c| c.norm_sqr()));
        }
        let (mean, _) = mean_and_var(&sq);
        assert!((mean - 1.0).abs() < 0.02, "E|h|² = {mean}");
    }

    #[test]
    fn geometry_larger_area_weaker_cross_links() {
        let k = 5;
        let avg = |area: f64, seed: u64| {
            let mut acc = 0.0;
            let mut n = 0usize;
            for id in 0..10_000u64 {
                let s =
                    generate_sample(&EpisodeKind::Geometry { area_side: area }, k, seed, id, 0)
                        .unwrap();
                for r in 0..k {
                    for c in 0..k {
                        if r != c {
                            acc += s.entry(r, c).norm_sqr();
                            n += 1;
                        }
                    }
                }
            }
            acc / n as f64
        };
        let near = avg(10.0, 21);
        let far = avg(50.0, 21);
        assert!(far < near, "off-diagonal |h|²: 50m {far} should be < 10m {near}");
    }

    #[test]
    fn diag_boost_identity_and_scaling() {
        let k = 6;
        let mut rng = sample_rng(5, 1);
        let base = gen_rayleigh(k, &mut rng).unwrap();
        let mut rng = sample_rng(5, 1);
        let boosted =
            gen_diag_boost(&EpisodeKind::Rayleigh, 1.0, k, &mut rng).unwrap();
        assert_eq!(base, boosted); // boost 1 is the identity

        let mut rng = sample_rng(5, 1);
        let five = gen_diag_boost(&EpisodeKind::Rayleigh, 5.0, k, &mut rng).unwrap();
        for r in 0..k {
            for c in 0..k {
                if r == c {
                    assert_eq!(five.entry(r, c), base.entry(r, c) * 5.0);
                } else {
                    assert_eq!(five.entry(r, c), base.entry(r, c));
                }
            }
        }
    }

    #[test]
    fn diag_boost_mean_square_is_factor_squared() {
        // boost 5 ⇒ E|h_kk|² = 25 ± 0.5
        let k = 10;
        let mut sq = Vec::new();
        for id in 0..10_000u64 {
            let s =
                generate_sample(&EpisodeKind::DiagBoost { boost_factor: 5.0 }, k, 13, id, 0)
                    .unwrap();
            for d in 0..k {
                sq.push(s.entry(d, d).norm_sqr());
            }
        }
        let (mean, _) = mean_and_var(&sq);
        assert!((mean - 25.0).abs() < 0.5, "E|h_kk|² = {mean}");
    }

    #[test]
    fn diag_boost_rejects_non_rayleigh_base() {
        let mut rng = sample_rng(1, 0);
        let err = gen_diag_boost(&EpisodeKind::Rician, 5.0, 3, &mut rng);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    fn schedule(sizes: &[usize], batch: usize) -> EpisodeSchedule {
        EpisodeSchedule {
            episodes: sizes
                .iter()
                .map(|&n| EpisodeSpec { kind: EpisodeKind::Rayleigh, n_train: n, n_test: 1 })
                .collect(),
            batch_size: batch,
            seed: 42,
        }
    }

    #[test]
    fn batches_partition_single_episode() {
        let sch = schedule(&[10], 4);
        let mut sizes = Vec::new();
        let mut cur = StreamCursor::default();
        while let Some((batch, next)) = next_batch(&sch, 3, cur).unwrap() {
            sizes.push(batch.len());
            cur = next;
        }
        assert_eq!(sizes, vec![4, 4, 2]);
    }

    #[test]
    fn batches_never_straddle_episodes() {
        let sch = schedule(&[6, 6], 4);
        let mut sizes = Vec::new();
        let mut episodes = Vec::new();
        let mut cur = StreamCursor::default();
        while let Some((batch, next)) = next_batch(&sch, 3, cur).unwrap() {
            sizes.push(batch.len());
            assert!(batch.iter().all(|s| s.episode_id == batch[0].episode_id));
            episodes.push(batch[0].episode_id);
            cur = next;
        }
        assert_eq!(sizes, vec![4, 2, 4, 2]);
        assert_eq!(episodes, vec![0, 0, 1, 1]);
    }

    #[test]
    fn stream_replay_is_identical() {
        let sch = schedule(&[5, 3], 2);
        let run = |sch: &EpisodeSchedule| {
            let mut all = Vec::new();
            let mut cur = StreamCursor::default();
            while let Some((batch, next)) = next_batch(sch, 4, cur).unwrap() {
                all.extend(batch);
                cur = next;
            }
            all
        };
        let a = run(&sch);
        let b = run(&sch);
        assert_eq!(a, b);
        let ids: Vec<u64> = a.iter().map(|s| s.sample_id).collect();
        assert_eq!(ids, (0..8).collect::<Vec<u64>>());
    }

    #[test]
    fn test_ids_start_after_training_stream() {
        let sch = schedule(&[5, 3], 2);
        let sets = generate_test_sets(&sch, 3).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0][0].sample_id, 8);
        assert_eq!(sets[0][0].episode_id, 0);
        assert_eq!(sets[1][0].episode_id, 1);
    }
}
