//! Rehearsal memory: the bounded buffer, the fairness top-M update of the
//! min-max strategies, and classic reservoir sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::wmmse::LabeledSample;

/// One retained sample with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryItem {
    pub sample: LabeledSample,
    /// Timestamp t at which the sample entered a working set.
    pub inserted_at: u64,
}

/// Fixed-capacity set of samples retained for rehearsal.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBuffer {
    capacity: usize,
    items: Vec<MemoryItem>,
}

impl MemoryBuffer {
    pub fn new(capacity: usize) -> Self {
        MemoryBuffer { capacity, items: Vec::new() }
    }

    pub fn from_items(capacity: usize, items: Vec<MemoryItem>) -> Result<Self> {
        if items.len() > capacity {
            return Err(Error::InvalidParameter(format!(
                "{} items exceed capacity {capacity}",
                items.len()
            )));
        }
        let mut ids: Vec<u64> = items.iter().map(|i| i.sample.channel.sample_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate sample_id in memory".into()));
        }
        Ok(MemoryBuffer { capacity, items })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    /// How many retained samples come from each of the first `n_episodes`.
    pub fn episode_composition(&self, n_episodes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; n_episodes];
        for item in &self.items {
            let ep = item.sample.channel.episode_id as usize;
            if ep < n_episodes {
                counts[ep] += 1;
            }
        }
        counts
    }
}

/// The working set G_t = M_t ∪ D_t with stable ordering: memory items first,
/// then the batch in sample_id order. Batch items are stamped with the
/// current timestamp.
#[derive(Debug, Clone)]
pub struct WorkingSet {
    items: Vec<MemoryItem>,
    memory_len: usize,
}

impl WorkingSet {
    pub fn build(memory: &MemoryBuffer, batch: &[LabeledSample], t: u64) -> Result<Self> {
        let mut items: Vec<MemoryItem> = memory.items().to_vec();
        let mut batch_items: Vec<MemoryItem> = batch
            .iter()
            .map(|s| MemoryItem { sample: s.clone(), inserted_at: t })
            .collect();
        batch_items.sort_by_key(|i| i.sample.channel.sample_id);
        items.extend(batch_items);
        let mut ids: Vec<u64> = items.iter().map(|i| i.sample.channel.sample_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate sample_id in working set".into()));
        }
        Ok(WorkingSet { items, memory_len: memory.len() })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn memory_len(&self) -> usize {
        self.memory_len
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &LabeledSample> + Clone {
        self.items.iter().map(|i| &i.sample)
    }
}

/// Fairness memory update: keep the whole working set while it still fits
/// (|G_t| < M), otherwise the M samples with the largest weights. Ties break
/// toward larger current g (worse-served), then later insertion, then larger
/// sample_id.
pub fn update_memory_top_m(
    lambda: &[f64],
    g: &[f64],
    working: &WorkingSet,
    m: usize,
) -> Result<MemoryBuffer> {
    if lambda.len() != working.len() || g.len() != working.len() {
        return Err(Error::ShapeMismatch(format!(
            "weights {}, g {}, working set {}",
            lambda.len(),
            g.len(),
            working.len()
        )));
    }
    if working.len() < m {
        return MemoryBuffer::from_items(m, working.items().to_vec());
    }
    let mut order: Vec<usize> = (0..working.len()).collect();
    order.sort_by(|&a, &b| {
        lambda[b]
            .total_cmp(&lambda[a])
            .then(g[b].total_cmp(&g[a]))
            .then(working.items()[b].inserted_at.cmp(&working.items()[a].inserted_at))
            .then(
                working.items()[b]
                    .sample
                    .channel
                    .sample_id
                    .cmp(&working.items()[a].sample.channel.sample_id),
            )
    });
    let kept: Vec<MemoryItem> =
        order.into_iter().take(m).map(|i| working.items()[i].clone()).collect();
    MemoryBuffer::from_items(m, kept)
}

/// Classic reservoir rule: the first M samples fill the buffer; afterwards
/// the n-th sample replaces a uniformly chosen slot with probability M/n.
/// `seen_count` counts all samples observed so far, including this one.
pub fn reservoir_update(
    memory: &mut MemoryBuffer,
    sample: LabeledSample,
    seen_count: u64,
    rng: &mut ChaCha8Rng,
    t: u64,
) -> Result<()> {
    if seen_count < 1 {
        return Err(Error::InvalidParameter("seen_count must be >= 1".into()));
    }
    if memory.capacity == 0 {
        return Ok(());
    }
    if memory.items.len() < memory.capacity {
        memory.items.push(MemoryItem { sample, inserted_at: t });
        return Ok(());
    }
    let j = rng.random_range(0..seen_count);
    if (j as usize) < memory.capacity {
        memory.items[j as usize] = MemoryItem { sample, inserted_at: t };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::{generate_sample, EpisodeKind};
    use crate::rates::PowerVector;
    use crate::rng::domain_rng;

    pub(crate) fn toy_sample(id: u64, episode: u32) -> LabeledSample {
        let ch = generate_sample(&EpisodeKind::Rayleigh, 2, 1, id, episode).unwrap();
        LabeledSample {
            channel: ch,
            label_power: PowerVector(vec![1.0, 1.0]),
            oracle_rate: 1.0,
            solver_iters: 1,
        }
    }

    fn working(ids: &[u64], t: u64) -> WorkingSet {
        let mem = MemoryBuffer::new(0);
        let batch: Vec<LabeledSample> = ids.iter().map(|&i| toy_sample(i, 0)).collect();
        WorkingSet::build(&mem, &batch, t).unwrap()
    }

    #[test]
    fn top_m_keeps_largest_weights() {
        let w = working(&[0, 1, 2], 1);
        let mem = update_memory_top_m(&[0.5, 0.3, 0.2], &[0.0; 3], &w, 2).unwrap();
        let mut ids: Vec<u64> = mem.items().iter().map(|i| i.sample.channel.sample_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![0, 1]);
    }

    #[test]
    fn small_working_set_is_kept_whole() {
        let w = working(&[0, 1, 2], 1);
        let mem = update_memory_top_m(&[0.4, 0.3, 0.3], &[0.0; 3], &w, 5).unwrap();
        assert_eq!(mem.len(), 3);
        assert_eq!(mem.capacity(), 5);
    }

    #[test]
    fn ties_prefer_larger_g_then_recency() {
        // equal λ: keep the two with larger g
        let w = working(&[0, 1, 2, 3], 1);
        let mem =
            update_memory_top_m(&[0.25; 4], &[0.1, 0.9, 0.5, 0.2], &w, 2).unwrap();
        let mut ids: Vec<u64> = mem.items().iter().map(|i| i.sample.channel.sample_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![1, 2]);

        // equal λ and g: keep the more recent (larger inserted_at), then larger id
        let mem_items = vec![
            MemoryItem { sample: toy_sample(10, 0), inserted_at: 0 },
            MemoryItem { sample: toy_sample(11, 0), inserted_at: 0 },
        ];
        let old = MemoryBuffer::from_items(2, mem_items).unwrap();
        let batch = vec![toy_sample(20, 1), toy_sample(21, 1)];
        let ws = WorkingSet::build(&old, &batch, 3).unwrap();
        let mem = update_memory_top_m(&[0.25; 4], &[0.0; 4], &ws, 2).unwrap();
        let mut ids: Vec<u64> = mem.items().iter().map(|i| i.sample.channel.sample_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, vec![20, 21]);
    }

    #[test]
    fn working_set_orders_memory_first() {
        let mem_items = vec![MemoryItem { sample: toy_sample(50, 0), inserted_at: 0 }];
        let mem = MemoryBuffer::from_items(1, mem_items).unwrap();
        let batch = vec![toy_sample(7, 1), toy_sample(3, 1)];
        let ws = WorkingSet::build(&mem, &batch, 1).unwrap();
        let ids: Vec<u64> = ws.items().iter().map(|i| i.sample.channel.sample_id).collect();
        assert_eq!(ids, vec![50, 3, 7]); // memory first, batch by sample_id
        assert_eq!(ws.memory_len(), 1);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mem_items = vec![MemoryItem { sample: toy_sample(7, 0), inserted_at: 0 }];
        let mem = MemoryBuffer::from_items(1, mem_items).unwrap();
        let batch = vec![toy_sample(7, 1)];
        assert!(WorkingSet::build(&mem, &batch, 1).is_err());
    }

    #[test]
    fn reservoir_fill_phase_inserts_everything() {
        let mut mem = MemoryBuffer::new(3);
        let mut rng = domain_rng(1, 9, 0);
        for i in 0..3u64 {
            reservoir_update(&mut mem, toy_sample(i, 0), i + 1, &mut rng, 0).unwrap();
        }
        assert_eq!(mem.len(), 3);
    }

    #[test]
    fn reservoir_zero_capacity_stays_empty() {
        let mut mem = MemoryBuffer::new(0);
        let mut rng = domain_rng(1, 9, 1);
        for i in 0..10u64 {
            reservoir_update(&mut mem, toy_sample(i, 0), i + 1, &mut rng, 0).unwrap();
        }
        assert!(mem.is_empty());
    }

    #[test]
    fn reservoir_inclusion_is_uniform() {
        // stream 2,000 items, capacity 20, 200 trials: per-item inclusion
        // frequency ≈ 0.01. With 2,000 simultaneous per-item checks a few
        // items must fall outside any 3σ band by chance, so the assertion is
        // on the outlier fraction staying at chance level and on the overall
        // mean being exact.
        let n = 2000u64;
        let cap = 20usize;
        let trials = 200usize;
        let mut inclusion = vec![0usize; n as usize];
        for trial in 0..trials {
            let mut mem = MemoryBuffer::new(cap);
            let mut rng = domain_rng(77, 5, trial as u64);
            for i in 0..n {
                reservoir_update(&mut mem, toy_sample(i, 0), i + 1, &mut rng, 0).unwrap();
            }
            for item in mem.items() {
                inclusion[item.sample.channel.sample_id as usize] += 1;
            }
        }
        let p = cap as f64 / n as f64;
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        let expected = trials as f64 * p;
        let outside = inclusion
            .iter()
            .filter(|&&c| (c as f64 - expected).abs() > 3.0 * sigma)
            .count();
        // two-sided tail mass of Binomial(200, 0.01) beyond 3σ is ≈ 0.45%;
        // allow twice that
        let budget = (2.0 * 0.009 * n as f64).ceil() as usize;
        assert!(outside <= budget, "{outside} of {n} items outside 3σ, budget {budget}");
        let total: usize = inclusion.iter().sum();
        let mean = total as f64 / (n as usize * trials) as f64;
        // the buffer always holds exactly cap items, so the mean is exact
        assert!((mean - p).abs() < 1e-12, "mean inclusion {mean} vs {p}");
    }

    #[test]
    fn episode_composition_counts() {
        let items = vec![
            MemoryItem { sample: toy_sample(0, 0), inserted_at: 0 },
            MemoryItem { sample: toy_sample(1, 1), inserted_at: 0 },
            MemoryItem { sample: toy_sample(2, 1), inserted_at: 0 },
        ];
        let mem = MemoryBuffer::from_items(3, items).unwrap();
        assert_eq!(mem.episode_composition(2), vec![1, 2]);
    }
}
