//! The continual-learning engine: PGDA inner loop, strategy dispatch, and
//! the boundary-free stream loop.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channelgen::ProblemConfig;
use crate::clcore::memory::{
    reservoir_update, update_memory_top_m, MemoryBuffer, WorkingSet,
};
use crate::clcore::simplex::{ascent_step, SampleWeights};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport, HistSpec, DEGENERATE_RATE_TOL};
use crate::linalg::Mat;
use crate::policy::{
    featurize_batch, init_policy, FeatureNorm, PolicyGrad, PolicyParams,
};
use crate::rates::{sum_rate_from_gains, sum_rate_grad_from_gains};
use crate::rng::{domain, domain_rng};
use crate::wmmse::LabeledSample;

/// Training strategy for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Algorithm 1 with MSE training loss and the adaptive weighted
    /// negative sum-rate as the selection loss (the bi-level path).
    MinMaxBilevel,
    /// Algorithm 1 with the selection loss used for training as well
    /// (the pure min-max path).
    MinMaxShared,
    /// Uniform rehearsal with reservoir-sampled memory.
    Reservoir,
    /// Fine-tune on the current batch only.
    Transfer,
    /// Retrain on all accumulated data; the memory-unconstrained upper bound.
    Joint,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::MinMaxBilevel,
        Strategy::MinMaxShared,
        Strategy::Reservoir,
        Strategy::Transfer,
        Strategy::Joint,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::MinMaxBilevel => "min_max_bilevel",
            Strategy::MinMaxShared => "min_max_shared",
            Strategy::Reservoir => "reservoir",
            Strategy::Transfer => "transfer",
            Strategy::Joint => "joint",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "min_max_bilevel" => Ok(Strategy::MinMaxBilevel),
            "min_max_shared" => Ok(Strategy::MinMaxShared),
            "reservoir" => Ok(Strategy::Reservoir),
            "transfer" => Ok(Strategy::Transfer),
            "joint" => Ok(Strategy::Joint),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub strategy: Strategy,
    /// Model step size α.
    pub alpha: f64,
    /// Weight step size β.
    pub beta: f64,
    /// PGDA inner iterations R per epoch.
    pub inner_rounds: usize,
    /// Passes per batch.
    pub epochs: usize,
    /// Memory capacity M.
    pub memory_capacity: usize,
    /// Mini-batch size for the uniform strategies.
    pub minibatch: usize,
    /// Momentum coefficient; 0 is plain descent.
    pub momentum: f64,
    /// Hidden layer widths; the full architecture is [K², hidden..., K].
    pub hidden_dims: Vec<usize>,
    pub init_seed: u64,
    pub train_seed: u64,
}

impl TrainerConfig {
    pub fn defaults(strategy: Strategy) -> Self {
        TrainerConfig {
            strategy,
            alpha: 1e-3,
            beta: 1e-2,
            inner_rounds: 20,
            epochs: 100,
            memory_capacity: 2000,
            minibatch: 100,
            momentum: 0.0,
            hidden_dims: vec![200, 200],
            init_seed: 0,
            train_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step sizes must be positive: alpha {}, beta {}",
                self.alpha, self.beta
            )));
        }
        if self.inner_rounds < 1 || self.epochs < 1 || self.minibatch < 1 {
            return Err(Error::InvalidParameter(
                "inner_rounds, epochs and minibatch must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter("hidden layer widths must be nonzero".into()));
        }
        Ok(())
    }
}

/// Mutable state of one strategy run.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub params: PolicyParams,
    /// Frozen at the first training batch.
    pub norm: Option<FeatureNorm>,
    pub memory: MemoryBuffer,
    /// Joint strategy only: everything seen since t = 0.
    pub joint_store: Vec<LabeledSample>,
    /// All samples observed so far (reservoir accounting).
    pub seen_count: u64,
    /// Timestamps processed.
    pub t: u64,
    pub last_train_loss: f64,
    shuffle_rng: ChaCha8Rng,
    reservoir_rng: ChaCha8Rng,
    velocity: Option<PolicyGrad>,
}

impl TrainerState {
    pub fn new(cfg: &TrainerConfig, problem: &ProblemConfig) -> Result<Self> {
        cfg.validate()?;
        problem.validate()?;
        let k = problem.k_pairs();
        let mut dims = Vec::with_capacity(cfg.hidden_dims.len() + 2);
        dims.push(k * k);
        dims.extend_from_slice(&cfg.hidden_dims);
        dims.push(k);
        let params = init_policy(&dims, problem.p_max, cfg.init_seed)?;
        Ok(TrainerState {
            params,
            norm: None,
            memory: MemoryBuffer::new(cfg.memory_capacity),
            joint_store: Vec::new(),
            seen_count: 0,
            t: 0,
            last_train_loss: 0.0,
            shuffle_rng: domain_rng(cfg.train_seed, domain::SHUFFLE, 0),
            reservoir_rng: domain_rng(cfg.train_seed, domain::RESERVOIR, 0),
            velocity: None,
        })
    }

    fn norm(&self) -> &FeatureNorm {
        self.norm.as_ref().expect("feature norm frozen before training")
    }

    fn step(&mut self, grad: PolicyGrad, alpha: f64, momentum: f64) -> Result<()> {
        if momentum > 0.0 {
            match &mut self.velocity {
                Some(v) => v.scale_add(momentum, &grad),
                None => self.velocity = Some(grad),
            }
            let v = self.velocity.clone().unwrap();
            self.params.apply_update(&v, alpha)
        } else {
            self.params.apply_update(&grad, alpha)
        }
    }
}

/// A working set with everything the inner loop needs precomputed:
/// standardized features, label matrix, per-sample gains and oracle rates.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub features: Mat,
    pub labels: Mat,
    pub gains: Vec<Vec<f64>>,
    pub oracle_rates: Vec<f64>,
    pub ids: Vec<u64>,
    /// Samples with a usable (non-degenerate) oracle rate.
    pub included: Vec<bool>,
}

impl PreparedSet {
    pub fn from_working_set(working: &WorkingSet, norm: &FeatureNorm, k: usize) -> Self {
        Self::from_samples(working.samples(), norm, k)
    }

    pub fn from_samples<'a>(
        samples: impl ExactSizeIterator<Item = &'a LabeledSample> + Clone,
        norm: &FeatureNorm,
        k: usize,
    ) -> Self {
        let n = samples.len();
        let features = featurize_batch(samples.clone().map(|s| &s.channel), norm);
        let mut labels = Mat::zeros(n, k);
        let mut gains = Vec::with_capacity(n);
        let mut oracle_rates = Vec::with_capacity(n);
        let mut ids = Vec::with_capacity(n);
        let mut included = Vec::with_capacity(n);
        for (i, s) in samples.enumerate() {
            labels.row_mut(i).copy_from_slice(s.label_power.as_slice());
            gains.push(s.channel.gains());
            oracle_rates.push(s.oracle_rate);
            ids.push(s.channel.sample_id);
            included.push(s.oracle_rate > DEGENERATE_RATE_TOL);
        }
        PreparedSet { features, labels, gains, oracle_rates, ids, included }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Outcome of one PGDA round.
#[derive(Debug, Clone)]
pub struct PgdaRoundStats {
    /// Weighted training loss Σ λ_i ℓ_i before the descent step.
    pub weighted_loss: f64,
    /// Selection losses g_i at the updated model (0 for excluded samples).
    pub g: Vec<f64>,
}

/// One inner iteration of Algorithm 1: a descent step on the model under
/// the current weights, then a projected ascent step on the weights using
/// the selection losses at the updated model.
pub fn pgda_round(
    params: &mut PolicyParams,
    lambda: &mut SampleWeights,
    prep: &PreparedSet,
    cfg: &TrainerConfig,
    problem: &ProblemConfig,
    velocity: &mut Option<PolicyGrad>,
) -> Result<PgdaRoundStats> {
    if prep.is_empty() {
        return Err(Error::EmptyInput("pgda round needs a non-empty working set".into()));
    }
    if lambda.len() != prep.len() {
        return Err(Error::ShapeMismatch(format!(
            "lambda len {} vs working set {}",
            lambda.len(),
            prep.len()
        )));
    }
    let k = problem.k_pairs();
    let n = prep.len();
    let (pred, cache) = params.forward(&prep.features)?;

    // descent direction Σ_i λ_i ∇ℓ_i, baked into the output gradient rows
    let mut out_grad = Mat::zeros(n, k);
    let mut weighted_loss = 0.0;
    let lam = lambda.as_slice();
    match cfg.strategy {
        Strategy::MinMaxShared => {
            // ℓ = g = −R(π)/R̄
            for i in 0..n {
                if !prep.included[i] {
                    continue;
                }
                let p = pred.row(i);
                let rate = sum_rate_from_gains(p, &prep.gains[i], k, problem);
                weighted_loss += lam[i] * (-rate / prep.oracle_rates[i]);
                if lam[i] == 0.0 {
                    continue;
                }
                let rg = sum_rate_grad_from_gains(p, &prep.gains[i], k, problem);
                let scale = -lam[i] / prep.oracle_rates[i];
                for (slot, d) in out_grad.row_mut(i).iter_mut().zip(rg.iter()) {
                    *slot = scale * d;
                }
            }
        }
        _ => {
            // ℓ = MSE against the oracle label
            for i in 0..n {
                let p = pred.row(i);
                let y = prep.labels.row(i);
                let mut loss = 0.0;
                let row = out_grad.row_mut(i);
                for j in 0..k {
                    let d = p[j] - y[j];
                    loss += d * d;
                    row[j] = lam[i] * 2.0 * d;
                }
                weighted_loss += lam[i] * loss;
            }
        }
    }
    if !weighted_loss.is_finite() {
        let bad = (0..n).find(|&i| !pred.row(i).iter().all(|v| v.is_finite()));
        return Err(Error::TrainAbort(format!(
            "non-finite loss at t-round (sample_id {:?})",
            bad.map(|i| prep.ids[i])
        )));
    }
    let grad = params.backward(&cache, &out_grad)?;
    if !grad.is_finite() {
        return Err(Error::TrainAbort("non-finite policy gradient in pgda round".into()));
    }
    if cfg.momentum > 0.0 {
        match velocity {
            Some(v) => v.scale_add(cfg.momentum, &grad),
            None => *velocity = Some(grad.clone()),
        }
        params.apply_update(velocity.as_ref().unwrap(), cfg.alpha)?;
    } else {
        params.apply_update(&grad, cfg.alpha)?;
    }

    // ascent on λ with the selection losses at the updated model
    let (pred2, _) = params.forward(&prep.features)?;
    let mut g = vec![0.0; n];
    for i in 0..n {
        if !prep.included[i] {
            continue;
        }
        let rate = sum_rate_from_gains(pred2.row(i), &prep.gains[i], k, problem);
        let gi = -rate / prep.oracle_rates[i];
        if !gi.is_finite() {
            return Err(Error::TrainAbort(format!(
                "non-finite selection loss (sample_id {})",
                prep.ids[i]
            )));
        }
        g[i] = gi;
    }
    *lambda = ascent_step(lambda, &g, cfg.beta, &prep.included)?;
    Ok(PgdaRoundStats { weighted_loss, g })
}

/// Mini-batch supervised descent with uniform weights; returns the mean MSE
/// over the data after the final epoch.
fn supervised_epochs(
    state: &mut TrainerState,
    data: &[&LabeledSample],
    cfg: &TrainerConfig,
    problem: &ProblemConfig,
) -> Result<f64> {
    let k = problem.k_pairs();
    let n = data.len();
    if n == 0 {
        return Ok(0.0);
    }
    let norm = *state.norm();
    let prep = PreparedSet::from_samples(data.iter().copied(), &norm, k);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut state.shuffle_rng);
        for chunk in order.chunks(cfg.minibatch) {
            let m = chunk.len();
            let mut x = Mat::zeros(m, prep.features.cols());
            let mut y = Mat::zeros(m, k);
            for (row, &idx) in chunk.iter().enumerate() {
                x.row_mut(row).copy_from_slice(prep.features.row(idx));
                y.row_mut(row).copy_from_slice(prep.labels.row(idx));
            }
            let (pred, cache) = state.params.forward(&x)?;
            let mut out_grad = Mat::zeros(m, k);
            let inv = 1.0 / m as f64;
            for r in 0..m {
                let row = out_grad.row_mut(r);
                for j in 0..k {
                    row[j] = 2.0 *(pred.get(r, j) - y.get(r, j)) * inv;
                }
            }
            let grad = state.params.backward(&cache, &out_grad)?;
            if !grad.is_finite() {
                return Err(Error::TrainAbort("non-finite gradient in supervised step".into()));
            }
            state.step(grad, cfg.alpha, cfg.momentum)?;
        }
    }
    // final mean MSE over the full data for the log
    let (pred, _) = state.params.forward(&prep.features)?;
    let mut total = 0.0;
    for i in 0..n {
        let p = pred.row(i);
        let y = prep.labels.row(i);
        total += p.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Train on one revealed batch according to the configured strategy.
/// Episode boundaries are never consulted; provenance tags on the samples
/// are carried through for reporting only.
pub fn train_on_batch(
    state: &mut TrainerState,
    batch: &[LabeledSample],
    cfg: &TrainerConfig,
    problem: &ProblemConfig,
) -> Result<()> {
    cfg.validate()?;
    if state.norm.is_none() {
        state.norm = Some(FeatureNorm::fit(batch.iter().map(|s| &s.channel)));
    }
    let t = state.t + 1;
    match cfg.strategy {
        Strategy::Transfer => {
            let data: Vec<&LabeledSample> = batch.iter().collect();
            state.last_train_loss = supervised_epochs(state, &data, cfg, problem)?;
        }
        Strategy::Joint => {
            state.joint_store.extend(batch.iter().cloned());
            let data = state.joint_store.clone();
            let refs: Vec<&LabeledSample> = data.iter().collect();
            state.last_train_loss = supervised_epochs(state, &refs, cfg, problem)?;
        }
        Strategy::Reservoir => {
            let working: Vec<LabeledSample> = state
                .memory
                .items()
                .iter()
                .map(|i| i.sample.clone())
                .chain(batch.iter().cloned())
                .collect();
            let refs: Vec<&LabeledSample> = working.iter().collect();
            state.last_train_loss = supervised_epochs(state, &refs, cfg, problem)?;
            for sample in batch {
                state.seen_count += 1;
                let seen = state.seen_count;
                reservoir_update(&mut state.memory, sample.clone(), seen, &mut state.reservoir_rng, t)?;
            }
        }
        Strategy::MinMaxBilevel | Strategy::MinMaxShared => {
            let working = WorkingSet::build(&state.memory, batch, t)?;
            if working.is_empty() {
                state.t = t;
                return Ok(());
            }
            let norm = *state.norm();
            let prep = PreparedSet::from_working_set(&working, &norm, problem.k_pairs());
            // λ restarts uniform over the usable samples at every timestamp
            let mut lambda = match SampleWeights::uniform_over(&prep.included) {
                Ok(l) => l,
                Err(_) => {
                    // every sample degenerate; nothing to select or train on
                    state.t = t;
                    return Ok(());
                }
            };
            let mut last = PgdaRoundStats { weighted_loss: 0.0, g: vec![0.0; prep.len()] };
            let mut velocity = state.velocity.take();
            for _ in 0..cfg.epochs {
                for _ in 0..cfg.inner_rounds {
                    last = pgda_round(
                        &mut state.params,
                        &mut lambda,
                        &prep,
                        cfg,
                        problem,
                        &mut velocity,
                    )?;
                }
            }
            state.velocity = velocity;
            state.last_train_loss = last.weighted_loss;
            state.memory =
                update_memory_top_m(lambda.as_slice(), &last.g, &working, cfg.memory_capacity)?;
        }
    }
    state.seen_count = match cfg.strategy {
        Strategy::Reservoir => state.seen_count, // already counted per sample
        _ => state.seen_count + batch.len() as u64,
    };
    state.t = t;
    Ok(())
}

/// One row of the metric log.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub t: u64,
    pub samples_seen: u64,
    pub strategy: Strategy,
    pub batch_episode: u32,
    pub train_loss: f64,
    pub per_episode_rate: Vec<f64>,
    pub per_episode_ratio: Vec<f64>,
    pub mixture_rate: f64,
    pub mixture_ratio: f64,
    pub memory_per_episode: Vec<usize>,
    pub memory_size: usize,
}

/// Full log of one strategy run.
#[derive(Debug, Clone)]
pub struct RunLog {
    pub strategy: Strategy,
    pub n_episodes: usize,
    pub rows: Vec<MetricRow>,
    pub final_report: Option<EvalReport>,
}

/// Final state plus log of one strategy run.
#[derive(Debug)]
pub struct RunOutput {
    pub log: RunLog,
    pub state: TrainerState,
}

/// Split per-episode labeled data into stream batches that never straddle
/// episode boundaries; trailing partial batches are emitted short.
pub fn batches_from_episodes(
    episodes: &[Vec<LabeledSample>],
    batch_size: usize,
) -> Result<Vec<Vec<LabeledSample>>> {
    if batch_size < 1 {
        return Err(Error::InvalidParameter("batch_size must be >= 1".into()));
    }
    let mut batches = Vec::new();
    for ep in episodes {
        for chunk in ep.chunks(batch_size) {
            if !chunk.is_empty() {
                batches.push(chunk.to_vec());
            }
        }
    }
    Ok(batches)
}

/// Drive one strategy over a labeled batch stream: train on each batch,
/// evaluate on the per-episode test sets every `eval_every` timestamps and
/// always at the final one, and emit a deterministic metric log.
pub fn run_stream(
    batches: &[Vec<LabeledSample>],
    test_sets: &[Vec<LabeledSample>],
    cfg: &TrainerConfig,
    problem: &ProblemConfig,
    eval_every: usize,
    bins: &HistSpec,
    mut on_row: impl FnMut(&MetricRow),
) -> Result<RunOutput> {
    if eval_every < 1 {
        return Err(Error::InvalidParameter("eval cadence must be >= 1".into()));
    }
    let n_episodes = test_sets.len();
    let mut state = TrainerState::new(cfg, problem)?;
    let mut rows = Vec::new();
    let mut final_report = None;
    let mut samples_seen = 0u64;
    let total = batches.len();
    for (i, batch) in batches.iter().enumerate() {
        let t = (i + 1) as u64;
        train_on_batch(&mut state, batch, cfg, problem)
            .map_err(|e| Error::TrainAbort(format!("t={t}: {e}")))?;
        samples_seen += batch.len() as u64;
        if t as usize % eval_every == 0 || i + 1 == total {
            let norm = state.norm.unwrap_or_else(FeatureNorm::identity);
            let report = evaluate(&state.params, &norm, test_sets, problem, bins, t)?;
            let row = MetricRow {
                t,
                samples_seen,
                strategy: cfg.strategy,
                batch_episode: batch.first().map(|s| s.channel.episode_id).unwrap_or(0),
                train_loss: state.last_train_loss,
                per_episode_rate: report.per_episode.iter().map(|e| e.mean_rate).collect(),
                per_episode_ratio: report.per_episode.iter().map(|e| e.mean_ratio).collect(),
                mixture_rate: report.mixture_rate,
                mixture_ratio: report.mixture_ratio,
                memory_per_episode: state.memory.episode_composition(n_episodes),
                memory_size: state.memory.len(),
            };
            on_row(&row);
            rows.push(row);
            if i + 1 == total {
                final_report = Some(report);
            }
        }
    }
    Ok(RunOutput {
        log: RunLog { strategy: cfg.strategy, n_episodes, rows, final_report },
        state,
    })
}
