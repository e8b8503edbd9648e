//! Dataset splitting, the training loop, top-k evaluation and baselines.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::OWN_BUILDS;
use crate::encoder::{Dataset, FeatureGroupMask, StateVector, STATE_DIM};
use crate::error::TrainError;
use crate::nn::{AdamConfig, AdamState, Gradients, Network, NetworkTopology, Workspace};

/// The k values reported throughout: top-1, top-3, top-10.
pub const STANDARD_KS: [usize; 3] = [1, 3, 10];

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub mask: FeatureGroupMask,
    pub split_fraction: f64,
    pub topology: NetworkTopology,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 100,
            learning_rate: 1e-4,
            seed: 0,
            mask: FeatureGroupMask::FULL,
            split_fraction: 0.8,
            topology: NetworkTopology::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(TrainError::Config(format!("split_fraction {} not in (0, 1)", self.split_fraction)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::Config(format!("learning_rate {} must be positive", self.learning_rate)));
        }
        if self.topology.inputs() != STATE_DIM || self.topology.outputs() != OWN_BUILDS {
            return Err(TrainError::Config(format!(
                "topology must map {STATE_DIM} inputs to {OWN_BUILDS} classes"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Metrics {
    pub examples: usize,
    /// Fraction of examples whose label is outside the k best-ranked classes.
    pub top_k_error: BTreeMap<usize, f64>,
    pub train_top1_error: Option<f64>,
    /// Label counts over the evaluated examples.
    pub class_frequency: Vec<u64>,
}

impl Metrics {
    pub fn error(&self, k: usize) -> Option<f64> {
        self.top_k_error.get(&k).copied()
    }
}

/// Anything that assigns a score per class to an input; higher ranks first.
pub trait Scorer {
    fn score(&mut self, input: &StateVector, out: &mut [f64]);
}

/// Scores with a network after applying the input mask it was trained with.
pub struct NetworkScorer<'a> {
    net: &'a Network,
    mask: FeatureGroupMask,
    ws: Workspace,
    buf: StateVector,
}

impl<'a> NetworkScorer<'a> {
    pub fn new(net: &'a Network, mask: FeatureGroupMask) -> Self {
        NetworkScorer { net, mask, ws: net.workspace(), buf: StateVector::zeros() }
    }
}

impl Scorer for NetworkScorer<'_> {
    fn score(&mut self, input: &StateVector, out: &mut [f64]) {
        self.buf.0 = input.0;
        self.mask.apply_in_place(&mut self.buf.0);
        let dist = self.net.forward_into(&self.buf.0, &mut self.ws).expect("state vectors match the input layer");
        out.copy_from_slice(dist);
    }
}

/// Uniformly random ranking of the classes for every example.
pub struct RandomScorer {
    rng: ChaCha8Rng,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Scorer for RandomScorer {
    fn score(&mut self, _input: &StateVector, out: &mut [f64]) {
        out.iter_mut().for_each(|s| *s = self.rng.gen());
    }
}

/// Fixed scores regardless of input.
pub struct ConstantScorer(pub Vec<f64>);

impl Scorer for ConstantScorer {
    fn score(&mut self, _input: &StateVector, out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// 0-based rank of `label`; ties go to the lower index.
#[inline]
pub fn rank_of(scores: &[f64], label: usize) -> usize {
    let s = scores[label];
    scores.iter().enumerate().filter(|&(j, &v)| v > s || (v == s && j < label)).count()
}

/// Top-k error for each `k` in `ks` (each in `1..58`).
pub fn evaluate_topk(scorer: &mut impl Scorer, test: &Dataset, ks: &[usize]) -> Metrics {
    assert!(!ks.is_empty(), "at least one k");
    assert!(ks.iter().all(|&k| (1..OWN_BUILDS).contains(&k)), "k must lie in 1..{OWN_BUILDS}");
    let mut misses = vec![0u64; ks.len()];
    let mut class_frequency = vec![0u64; OWN_BUILDS];
    let mut scores = [0.0; OWN_BUILDS];
    let mut n = 0usize;
    for sample in test.samples() {
        let label = usize::from(sample.action);
        scorer.score(&sample.state, &mut scores);
        let rank = rank_of(&scores, label);
        for (miss, &k) in misses.iter_mut().zip(ks) {
            if rank >= k {
                *miss += 1;
            }
        }
        class_frequency[label] += 1;
        n += 1;
    }
    let denom = n.max(1) as f64;
    Metrics {
        examples: n,
        top_k_error: ks.iter().zip(&misses).map(|(&k, &m)| (k, m as f64 / denom)).collect(),
        train_top1_error: None,
        class_frequency,
    }
}

/// Splits at the whole-game boundary nearest `fraction` of all pairs,
/// keeping game order. Both sides get at least one game.
pub fn split_dataset(d: &Dataset, fraction: f64) -> Result<(Dataset, Dataset), TrainError> {
    if d.games.len() < 2 {
        return Err(TrainError::TooFewGames(d.games.len()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TrainError::Config(format!("split fraction {fraction} not in (0, 1)")));
    }
    let target = fraction * d.pair_count() as f64;
    let mut cumulative = 0usize;
    let mut best = (f64::INFINITY, 1);
    for (g, game) in d.games[..d.games.len() - 1].iter().enumerate() {
        cumulative += game.samples.len();
        let distance = (cumulative as f64 - target).abs();
        if distance < best.0 {
            best = (distance, g + 1);
        }
    }
    let boundary = best.1;
    Ok((
        Dataset { games: d.games[..boundary].to_vec() },
        Dataset { games: d.games[boundary..].to_vec() },
    ))
}

/// One epoch's record. Loss and training error are accumulated online from
/// the forward passes made while training.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_top1_error: f64,
    pub test: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochRecord>,
}

pub fn train(train_set: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    train_monitored(train_set, None, config)
}

/// Mini-batch Adam on cross-entropy. The training set is reshuffled every
/// epoch with a seeded generator; the last partial batch is kept. When a
/// test set is given it is evaluated after each epoch.
pub fn train_monitored(
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let samples: Vec<_> = train_set.samples().collect();
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut network = Network::init(config.topology.clone(), config.seed);
    let mut adam = AdamState::new(&network, AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() });
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);

    let mut order: Vec<u32> = (0..samples.len() as u32).collect();
    let mut ws = network.workspace();
    let mut grads = Gradients::zeros_like(&network);
    let mut input = StateVector::zeros();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut wrong = 0usize;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &idx in batch {
                let sample = samples[idx as usize];
                input.0 = sample.state.0;
                config.mask.apply_in_place(&mut input.0);
                let target = usize::from(sample.action);
                loss_sum += network.accumulate_gradient(&input.0, target, &mut ws, &mut grads)?;
                if rank_of(ws.output(), target) != 0 {
                    wrong += 1;
                }
            }
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut network, &grads)?;
        }
        let test = test_set.map(|t| evaluate_topk(&mut NetworkScorer::new(&network, config.mask), t, &STANDARD_KS));
        let record = EpochRecord {
            epoch: epoch + 1,
            mean_loss: loss_sum / samples.len() as f64,
            train_top1_error: wrong as f64 / samples.len() as f64,
            test,
        };
        log::debug!("epoch {}: loss {:.4} train top-1 {:.4}", record.epoch, record.mean_loss, record.train_top1_error);
        history.push(record);
    }
    Ok(TrainOutcome { network, history })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BaselineMode {
    /// Always the single most frequent class; the error is identical for every k.
    #[default]
    SingleClass,
    /// Top-k guesses are the k most frequent classes.
    RankByFrequency,
}

pub fn class_counts(d: &Dataset) -> Vec<u64> {
    let mut counts = vec![0u64; OWN_BUILDS];
    for s in d.samples() {
        counts[usize::from(s.action)] += 1;
    }
    counts
}

/// Most-frequent-class predictor fitted on `train`, evaluated on `test`.
pub fn baseline_most_frequent(train: &Dataset, test: &Dataset, ks: &[usize], mode: BaselineMode) -> Metrics {
    let counts = class_counts(train);
    match mode {
        BaselineMode::SingleClass => {
            let best = (0..OWN_BUILDS).fold(0, |b, j| if counts[j] > counts[b] { j } else { b });
            let n = test.pair_count();
            let hits = test.samples().filter(|s| usize::from(s.action) == best).count();
            let error = if n == 0 { 0.0 } else { (n - hits) as f64 / n as f64 };
            Metrics {
                examples: n,
                top_k_error: ks.iter().map(|&k| (k, error)).collect(),
                train_top1_error: None,
                class_frequency: class_counts(test),
            }
        }
        BaselineMode::RankByFrequency => {
            let scores = counts.iter().map(|&c| c as f64).collect();
            evaluate_topk(&mut ConstantScorer(scores), test, ks)
        }
    }
}

/// Uniformly random guessing.
pub fn baseline_uniform_random(test: &Dataset, ks: &[usize], seed: u64) -> Metrics {
    evaluate_topk(&mut RandomScorer::new(seed), test, ks)
}

/// Mean and sample standard deviation of repeated runs for one mask.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub mask: FeatureGroupMask,
    pub runs: Vec<Metrics>,
    pub mean: BTreeMap<usize, f64>,
    pub std: BTreeMap<usize, f64>,
}

impl AblationRow {
    pub fn from_runs(mask: FeatureGroupMask, runs: Vec<Metrics>) -> Self {
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        let ks: Vec<usize> = runs.first().map(|m| m.top_k_error.keys().copied().collect()).unwrap_or_default();
        for k in ks {
            let values: Vec<f64> = runs.iter().filter_map(|m| m.error(k)).collect();
            let (mu, sd) = mean_and_sample_std(&values);
            mean.insert(k, mu);
            std.insert(k, sd);
        }
        AblationRow { mask, runs, mean, std }
    }
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, libm::sqrt(var))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub most_frequent: Metrics,
    pub random: Metrics,
}

/// Trains and evaluates one grid cell: `mask` with seed `base.seed + repeat`.
pub fn run_cell(
    train_set: &Dataset,
    test_set: &Dataset,
    mask: FeatureGroupMask,
    base: &TrainConfig,
    repeat: u64,
) -> Result<Metrics, TrainError> {
    let config = TrainConfig { mask, seed: base.seed.wrapping_add(repeat), ..base.clone() };
    let outcome = train(train_set, &config)?;
    let mut metrics = evaluate_topk(&mut NetworkScorer::new(&outcome.network, mask), test_set, &STANDARD_KS);
    metrics.train_top1_error = outcome.history.last().map(|r| r.train_top1_error);
    Ok(metrics)
}

/// Fixed game-boundary split, `repeats` seeds per mask, plus both baselines.
pub fn run_ablation_grid(
    d: &Dataset,
    masks: &[FeatureGroupMask],
    base: &TrainConfig,
    repeats: usize,
) -> Result<AblationTable, TrainError> {
    if repeats == 0 {
        return Err(TrainError::Config("repeats must be at least 1".into()));
    }
    let (train_set, test_set) = split_dataset(d, base.split_fraction)?;
    let mut rows = Vec::with_capacity(masks.len());
    for &mask in masks {
        let runs = (0..repeats as u64)
            .map(|r| run_cell(&train_set, &test_set, mask, base, r))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(AblationRow::from_runs(mask, runs));
    }
    Ok(AblationTable {
        rows,
        most_frequent: baseline_most_frequent(&train_set, &test_set, &STANDARD_KS, BaselineMode::SingleClass),
        random: baseline_uniform_random(&test_set, &STANDARD_KS, base.seed),
    })
}
