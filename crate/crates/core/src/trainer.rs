//! Two-phase training with sparse seeding, acquisition and quenching.
//!
//! 1. Seed phase: pick the seed rows, read their annotations from the
//!    oracle and train from the initial weights (st0) to the seeded status.
//! 2. Active phase: request annotations for the least confident rows,
//!    pseudo-label the confident remainder, then train in segments of
//!    `quench_period` epochs. Each quench refreshes the pseudo labels from
//!    the current predictor, restores the st0 weights and clears momentum.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    AcquisitionScores, LabelPool, Oracle, Strategy, assign_pseudo_labels, score_pool,
    select_requests,
};
use crate::data::{AnnotationRecord, Dataset, FeatureMatrix};
use crate::error::{Error, Result};
use crate::eval::{MetricReport, evaluate};
use crate::predictor::{
    AttrInput, GradientFlow, HierarchicalPredictor, OptimizerState, PredictorOptions, cosine_lr,
    kv_enum, restore_st0, sgd_step,
};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::seeding::{DEFAULT_RESTARTS, SeedCandidates, kmeans_restarts, select_seeds_with};
use crate::stats::MeanStd;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedingMode {
    /// K-means clusters, cosine-nearest sample per centroid.
    #[default]
    Sparse,
    /// Uniform random training rows.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    Off,
    /// Assigned once at the seeded status, never refreshed.
    Static,
    /// Refreshed from the current predictor at every segment boundary.
    #[default]
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    /// Cosine schedule restarts after every quench.
    #[default]
    PerSegment,
    /// One cosine schedule over all resumed epochs.
    FullSpan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionRounds {
    /// All requests at the seeded status.
    #[default]
    Once,
    /// Request budget split evenly over the seeded status and every segment boundary.
    EveryQuench,
}

kv_enum!(SeedingMode { Sparse => "sparse", Random => "random" });
kv_enum!(PseudoMode { Off => "off", Static => "static", Dynamic => "dynamic" });
kv_enum!(ScheduleMode { PerSegment => "per_segment", FullSpan => "full_span" });
kv_enum!(AcquisitionRounds { Once => "once", EveryQuench => "every_quench" });

/// Everything that governs one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed_fraction: f64,
    pub request_fraction: f64,
    pub seed_epochs: usize,
    pub resume_epochs: usize,
    pub quench_period: usize,
    pub confidence_threshold: f64,
    pub strategy: Strategy,
    pub batch_size: usize,
    pub momentum: f64,
    pub base_lr: f64,
    pub rng_seed: u64,
    pub seeding: SeedingMode,
    pub kmeans_restarts: usize,
    pub seed_candidates: SeedCandidates,
    pub pseudo: PseudoMode,
    pub quench: bool,
    pub schedule: ScheduleMode,
    pub acquisition_rounds: AcquisitionRounds,
    pub attr_input: AttrInput,
    pub gradient_flow: GradientFlow,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed_fraction: 0.01,
            request_fraction: 0.0,
            seed_epochs: 100,
            resume_epochs: 50,
            quench_period: 10,
            confidence_threshold: 0.7,
            strategy: Strategy::LeastConfidence,
            batch_size: 128,
            momentum: 0.9,
            base_lr: 0.00025,
            rng_seed: 0,
            seeding: SeedingMode::Sparse,
            kmeans_restarts: DEFAULT_RESTARTS,
            seed_candidates: SeedCandidates::WithinCluster,
            pseudo: PseudoMode::Dynamic,
            quench: true,
            schedule: ScheduleMode::PerSegment,
            acquisition_rounds: AcquisitionRounds::Once,
            attr_input: AttrInput::Probabilities,
            gradient_flow: GradientFlow::StopGradient,
        }
    }
}

/// Fraction of `n` rounded up, with a small tolerance so that products such
/// as `0.09 * 500` do not round up past the intended integer.
pub fn budget_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let c = (raw - 1e-9).ceil();
    if c <= 0.0 { 0 } else { c as usize }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside [0, 1]")))
            }
        };
        unit("seed_fraction", self.seed_fraction)?;
        unit("request_fraction", self.request_fraction)?;
        if self.seed_fraction <= 0.0 {
            return Err(Error::config("seed_fraction", "must be positive"));
        }
        if self.seed_fraction + self.request_fraction > 1.0 + 1e-12 {
            return Err(Error::config(
                "seed_fraction",
                format!(
                    "seed_fraction + request_fraction = {} exceeds 1",
                    self.seed_fraction + self.request_fraction
                ),
            ));
        }
        if !(0.5..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::config("confidence_threshold", "must lie in [0.5, 1]"));
        }
        if self.quench_period == 0 {
            return Err(Error::config("quench_period", "must be at least 1"));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::config("kmeans_restarts", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::config("base_lr", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn seed_count(&self, n_train: usize) -> usize {
        budget_count(self.seed_fraction, n_train).max(1)
    }

    pub fn request_count(&self, n_train: usize) -> usize {
        budget_count(self.request_fraction, n_train)
    }

    pub fn predictor_options(&self) -> PredictorOptions {
        PredictorOptions { attr_input: self.attr_input, gradient_flow: self.gradient_flow }
    }

    /// Whether the resumed phase is cut into `quench_period` segments.
    fn segmented(&self) -> bool {
        self.quench
            || self.pseudo == PseudoMode::Dynamic
            || self.acquisition_rounds == AcquisitionRounds::EveryQuench
    }

    /// Epoch counts of the resumed-phase segments; a trailing remainder
    /// forms a shorter last segment.
    pub fn segments(&self) -> Vec<usize> {
        if self.resume_epochs == 0 {
            return Vec::new();
        }
        if !self.segmented() {
            return vec![self.resume_epochs];
        }
        let full = self.resume_epochs / self.quench_period;
        let rest = self.resume_epochs % self.quench_period;
        let mut segs = vec![self.quench_period; full];
        if rest > 0 {
            segs.push(rest);
        }
        segs
    }
}

/// Hooks into a run, used by tests and tooling to inspect quench events.
pub trait TrainObserver {
    fn on_quench(&mut self, _event: &QuenchEvent<'_>) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// State right after a quench.
pub struct QuenchEvent<'a> {
    /// 0 for the first quench at the seeded status.
    pub index: usize,
    /// Resumed-phase epoch at which the quench happens.
    pub epoch: usize,
    /// Predictor whose outputs produced the current pseudo labels.
    pub pre_quench: &'a HierarchicalPredictor,
    pub predictor: &'a HierarchicalPredictor,
    pub optimizer: &'a OptimizerState,
    pub pool: &'a LabelPool,
    pub features: &'a FeatureMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub row: usize,
    pub id: String,
    /// Cluster index, absent for random seeding.
    pub cluster: Option<usize>,
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMetrics {
    /// 1 for the seeded status, incremented after every resumed segment.
    pub status: usize,
    pub resume_epoch: usize,
    pub n_seed: usize,
    pub n_requested: usize,
    pub n_pseudo: usize,
    pub malignancy_accuracy: f64,
    pub per_attribute_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seed_phase_ms: f64,
    pub active_phase_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub n_train: usize,
    pub n_test: usize,
    pub seed_count: usize,
    pub requested_count: usize,
    pub oracle_reads: usize,
    pub quench_events: usize,
    pub per_status: Vec<StatusMetrics>,
    pub final_metrics: MetricReport,
    /// Wall-clock timing; kept out of serialized reports so they stay
    /// reproducible byte for byte.
    #[serde(skip)]
    pub timing: Timing,
}

pub struct SeedPhase {
    pub predictor: HierarchicalPredictor,
    pub optimizer: OptimizerState,
    pub pool: LabelPool,
    pub seeds: Vec<SeedRecord>,
}

pub struct RunOutcome {
    pub predictor: HierarchicalPredictor,
    pub report: RunReport,
    pub seeds: Vec<SeedRecord>,
    pub traces: Vec<StatusTrace>,
    pub pool: LabelPool,
    /// `(status label, predictor)` at every status, seeded first.
    pub checkpoints: Vec<(String, HierarchicalPredictor)>,
    /// Oracle rows in read order.
    pub oracle_log: Vec<usize>,
}

fn train_epoch(
    pred: &mut HierarchicalPredictor,
    opt: &mut OptimizerState,
    features: &FeatureMatrix,
    set: &[(usize, &AnnotationRecord)],
    lr: f64,
    rng: &mut impl rand::Rng,
) {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.shuffle(rng);
    for chunk in order.chunks(opt.batch_size) {
        let grads = pred.compute_gradients(chunk.iter().map(|&i| (features.row(set[i].0), set[i].1)));
        sgd_step(pred, opt, &grads, lr);
    }
}

fn status_metrics(
    status: usize,
    resume_epoch: usize,
    pred: &HierarchicalPredictor,
    dataset: &Dataset,
    pool: &LabelPool,
) -> Result<StatusMetrics> {
    let m = evaluate(pred, dataset, dataset.test_rows())?;
    Ok(StatusMetrics {
        status,
        resume_epoch,
        n_seed: pool.seed_rows().len(),
        n_requested: pool.requested_rows().len(),
        n_pseudo: pool.pseudo().len(),
        malignancy_accuracy: m.malignancy_accuracy,
        per_attribute_accuracy: m.per_attribute_accuracy,
    })
}

/// Chooses seed rows according to `config.seeding`.
pub fn choose_seeds(dataset: &Dataset, config: &RunConfig) -> Result<Vec<SeedRecord>> {
    let train = dataset.train_rows();
    let n_seed = config.seed_count(train.len());
    if n_seed > train.len() {
        return Err(Error::Budget(format!("{n_seed} seeds exceed {} training rows", train.len())));
    }
    let record = |row: usize, cluster, similarity| SeedRecord {
        row,
        id: dataset.id(row).to_string(),
        cluster,
        similarity,
    };
    match config.seeding {
        SeedingMode::Sparse => {
            let points: Vec<&[f64]> = train.iter().map(|&r| dataset.features().row(r)).collect();
            let clustering =
                kmeans_restarts(&points, n_seed, config.rng_seed, config.kmeans_restarts)?;
            let choices = select_seeds_with(&points, &clustering, config.seed_candidates)?;
            Ok(choices
                .into_iter()
                .map(|c| record(train[c.index], Some(c.cluster), Some(c.similarity)))
                .collect())
        }
        SeedingMode::Random => {
            let mut rng = stream_rng(config.rng_seed, &[stream::SEEDING, 1]);
            let picked = rand::seq::index::sample(&mut rng, train.len(), n_seed);
            Ok(picked.into_iter().map(|i| record(train[i], None, None)).collect())
        }
    }
}

/// Seed phase with seeds chosen by `config.seeding`.
pub fn run_seed_phase(dataset: &Dataset, config: &RunConfig, oracle: &Oracle<'_>) -> Result<SeedPhase> {
    config.validate()?;
    let seeds = choose_seeds(dataset, config)?;
    run_seed_phase_with(dataset, config, oracle, seeds)
}

/// Seed phase on an explicit seed set.
pub fn run_seed_phase_with(
    dataset: &Dataset,
    config: &RunConfig,
    oracle: &Oracle<'_>,
    seeds: Vec<SeedRecord>,
) -> Result<SeedPhase> {
    if seeds.is_empty() {
        return Err(Error::Budget("seed set is empty".into()));
    }
    let mut pool = LabelPool::new(dataset.len(), dataset.train_rows());
    let rows: Vec<usize> = seeds.iter().map(|s| s.row).collect();
    pool.add_seeds(&rows, oracle)?;

    let mut pred = HierarchicalPredictor::new(
        dataset.dim(),
        &dataset.schema().class_counts(),
        config.predictor_options(),
        config.rng_seed,
    );
    let mut opt = OptimizerState::new(&pred, config.momentum, config.base_lr, config.batch_size);
    let set = pool.training_set();
    for epoch in 0..config.seed_epochs {
        let lr = cosine_lr(epoch, config.seed_epochs, config.base_lr)?;
        let mut rng = stream_rng(config.rng_seed, &[stream::SHUFFLE, 0, epoch as u64]);
        train_epoch(&mut pred, &mut opt, dataset.features(), &set, lr, &mut rng);
    }
    Ok(SeedPhase { predictor: pred, optimizer: opt, pool, seeds })
}

/// Splits `total` as evenly as possible over `rounds`.
fn round_share(total: usize, rounds: usize, round: usize) -> usize {
    total * (round + 1) / rounds - total * round / rounds
}

fn request_round(
    pred: &HierarchicalPredictor,
    dataset: &Dataset,
    pool: &mut LabelPool,
    oracle: &Oracle<'_>,
    config: &RunConfig,
    k: usize,
    round: usize,
) -> Result<()> {
    if k == 0 {
        return Ok(());
    }
    let scores = score_pool(pred, dataset.features(), &pool.candidate_rows());
    let seed = derive_seed(config.rng_seed, &[stream::ACQUISITION, round as u64]);
    let rows = select_requests(&scores, config.strategy, k, seed)?;
    pool.add_requests(&rows, oracle)
}

/// Label groups in force after a status's acquisition and pseudo labelling,
/// with the scores of every training row under that status's predictor.
#[derive(Debug, Clone)]
pub struct StatusTrace {
    pub status: usize,
    pub pool: LabelPool,
    pub scores: AcquisitionScores,
}

pub struct ActiveOutcome {
    pub predictor: HierarchicalPredictor,
    pub pool: LabelPool,
    pub traces: Vec<StatusTrace>,
    pub per_status: Vec<StatusMetrics>,
    pub quench_events: usize,
    pub checkpoints: Vec<(String, HierarchicalPredictor)>,
}

/// Acquisition at the seeded status followed by the segmented resumed phase.
pub fn run_active_phase(
    seeded: SeedPhase,
    dataset: &Dataset,
    config: &RunConfig,
    oracle: &Oracle<'_>,
    observer: &mut dyn TrainObserver,
) -> Result<ActiveOutcome> {
    config.validate()?;
    let SeedPhase { predictor: mut pred, optimizer: mut opt, mut pool, .. } = seeded;
    let features = dataset.features();
    let n_train = dataset.train_rows().len();
    let k_total = config.request_count(n_train);
    if pool.annotated().len() + k_total > n_train {
        return Err(Error::Budget(format!(
            "{} seeds plus {k_total} requests exceed {n_train} training rows",
            pool.annotated().len()
        )));
    }

    let segments = config.segments();
    let rounds = match config.acquisition_rounds {
        AcquisitionRounds::Once => 1,
        AcquisitionRounds::EveryQuench => segments.len().max(1),
    };

    let mut per_status = vec![status_metrics(1, 0, &pred, dataset, &pool)?];
    let mut checkpoints = vec![("st1".to_string(), pred.clone())];
    request_round(&pred, dataset, &mut pool, oracle, config, round_share(k_total, rounds, 0), 0)?;
    if config.pseudo != PseudoMode::Off {
        assign_pseudo_labels(&pred, features, &mut pool, config.confidence_threshold)?;
    }
    let trace = |status: usize, pred: &HierarchicalPredictor, pool: &LabelPool| StatusTrace {
        status,
        pool: pool.clone(),
        scores: score_pool(pred, features, dataset.train_rows()),
    };
    let mut traces = vec![trace(1, &pred, &pool)];

    let mut quench_events = 0;
    let mut quench = |pred: &mut HierarchicalPredictor,
                      opt: &mut OptimizerState,
                      pool: &LabelPool,
                      epoch: usize,
                      observer: &mut dyn TrainObserver| {
        let pre = pred.clone();
        restore_st0(pred, opt);
        observer.on_quench(&QuenchEvent {
            index: quench_events,
            epoch,
            pre_quench: &pre,
            predictor: pred,
            optimizer: opt,
            pool,
            features,
        });
        quench_events += 1;
    };
    if config.quench {
        quench(&mut pred, &mut opt, &pool, 0, observer);
    }

    let mut epoch = 0;
    for (seg, &len) in segments.iter().enumerate() {
        if seg > 0 {
            if config.acquisition_rounds == AcquisitionRounds::EveryQuench {
                let k = round_share(k_total, rounds, seg);
                request_round(&pred, dataset, &mut pool, oracle, config, k, seg)?;
            }
            if config.pseudo == PseudoMode::Dynamic {
                assign_pseudo_labels(&pred, features, &mut pool, config.confidence_threshold)?;
            }
            traces.push(trace(seg + 1, &pred, &pool));
            if config.quench {
                quench(&mut pred, &mut opt, &pool, epoch, observer);
            }
        }
        if pool.pseudo().is_empty() && config.pseudo != PseudoMode::Off {
            log::warn!(
                "no sample reached confidence {}; training on annotated rows only",
                config.confidence_threshold
            );
        }
        let set = pool.training_set();
        for e in 0..len {
            let (pos, span) = match (config.quench, config.schedule) {
                (true, ScheduleMode::PerSegment) => (e, len),
                _ => (epoch + e, config.resume_epochs),
            };
            let lr = cosine_lr(pos, span, config.base_lr)?;
            let mut rng = stream_rng(
                config.rng_seed,
                &[stream::SHUFFLE, seg as u64 + 1, (epoch + e) as u64],
            );
            train_epoch(&mut pred, &mut opt, features, &set, lr, &mut rng);
        }
        epoch += len;
        per_status.push(status_metrics(seg + 2, epoch, &pred, dataset, &pool)?);
        checkpoints.push((format!("st{}", seg + 2), pred.clone()));
    }

    Ok(ActiveOutcome { predictor: pred, pool, traces, per_status, quench_events, checkpoints })
}

/// One complete run with its own oracle.
pub fn run_once(dataset: &Dataset, config: &RunConfig) -> Result<RunOutcome> {
    run_once_observed(dataset, config, &mut NoObserver)
}

pub fn run_once_observed(
    dataset: &Dataset,
    config: &RunConfig,
    observer: &mut dyn TrainObserver,
) -> Result<RunOutcome> {
    let oracle = Oracle::new(dataset);
    let t0 = Instant::now();
    let seeded = run_seed_phase(dataset, config, &oracle)?;
    let seed_phase_ms = t0.elapsed().as_secs_f64() * 1e3;
    let seeds = seeded.seeds.clone();
    let t1 = Instant::now();
    let active = run_active_phase(seeded, dataset, config, &oracle, observer)?;
    let active_phase_ms = t1.elapsed().as_secs_f64() * 1e3;

    let final_metrics = evaluate(&active.predictor, dataset, dataset.test_rows())?;
    let report = RunReport {
        config: config.clone(),
        n_train: dataset.train_rows().len(),
        n_test: dataset.test_rows().len(),
        seed_count: active.pool.seed_rows().len(),
        requested_count: active.pool.requested_rows().len(),
        oracle_reads: oracle.read_count(),
        quench_events: active.quench_events,
        per_status: active.per_status,
        final_metrics,
        timing: Timing { seed_phase_ms, active_phase_ms },
    };
    Ok(RunOutcome {
        predictor: active.predictor,
        report,
        seeds,
        traces: active.traces,
        pool: active.pool,
        checkpoints: active.checkpoints,
        oracle_log: oracle.reads(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n_repeats: usize,
    pub malignancy_accuracy: MeanStd,
    pub attribute_names: Vec<String>,
    pub per_attribute_accuracy: Vec<MeanStd>,
    pub k_correct_probs: Vec<MeanStd>,
    pub runs: Vec<RunReport>,
}

impl AggregateReport {
    pub fn from_runs(runs: Vec<RunReport>) -> Self {
        let collect = |f: &dyn Fn(&RunReport) -> f64| -> MeanStd {
            MeanStd::from_values(&runs.iter().map(f).collect::<Vec<_>>())
        };
        let first = &runs[0].final_metrics;
        let m = first.per_attribute_accuracy.len();
        Self {
            n_repeats: runs.len(),
            malignancy_accuracy: collect(&|r| r.final_metrics.malignancy_accuracy),
            attribute_names: first.attribute_names.clone(),
            per_attribute_accuracy: (0..m)
                .map(|i| collect(&|r| r.final_metrics.per_attribute_accuracy[i]))
                .collect(),
            k_correct_probs: (0..=m)
                .map(|k| collect(&|r| r.final_metrics.k_correct_probs[k]))
                .collect(),
            runs,
        }
    }

    /// One-line summary in the layout of a results table: attributes, then
    /// malignancy, as `mean±std` percentages.
    pub fn table_row(&self) -> String {
        self.per_attribute_accuracy
            .iter()
            .chain(std::iter::once(&self.malignancy_accuracy))
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join("  ")
    }
}

/// Repeat `i` runs with `rng_seed + i`; results are ordered by repeat index
/// whether or not repeats run in parallel.
pub fn run_experiment(
    dataset: &Dataset,
    config: &RunConfig,
    n_repeats: usize,
    parallel: bool,
) -> Result<AggregateReport> {
    Ok(AggregateReport::from_runs(
        run_repeats(dataset, config, n_repeats, parallel)?
            .into_iter()
            .map(|o| o.report)
            .collect(),
    ))
}

pub fn run_repeats(
    dataset: &Dataset,
    config: &RunConfig,
    n_repeats: usize,
    parallel: bool,
) -> Result<Vec<RunOutcome>> {
    if n_repeats == 0 {
        return Err(Error::InvalidArgument("n_repeats must be at least 1".into()));
    }
    let repeat = |i: usize| {
        let cfg = RunConfig { rng_seed: config.rng_seed.wrapping_add(i as u64), ..config.clone() };
        run_once(dataset, &cfg)
    };
    if parallel {
        (0..n_repeats).into_par_iter().map(repeat).collect()
    } else {
        (0..n_repeats).map(repeat).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_rounding() {
        assert_eq!(budget_count(0.01, 518), 6);
        assert_eq!(budget_count(0.01, 500), 5);
        assert_eq!(budget_count(0.09, 500), 45);
        assert_eq!(budget_count(0.10, 500), 50);
        assert_eq!(budget_count(0.0, 500), 0);
        let cfg = RunConfig { seed_fraction: 0.001, ..Default::default() };
        assert_eq!(cfg.seed_count(10), 1);
    }

    #[test]
    fn segment_layout() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.segments(), vec![10; 5]);
        let cfg = RunConfig { quench_period: 7, ..Default::default() };
        assert_eq!(cfg.segments(), vec![7, 7, 7, 7, 7, 7, 7, 1]);
        let cfg = RunConfig { quench: false, pseudo: PseudoMode::Static, ..Default::default() };
        assert_eq!(cfg.segments(), vec![50]);
        let cfg = RunConfig { resume_epochs: 0, ..Default::default() };
        assert!(cfg.segments().is_empty());
    }

    #[test]
    fn round_shares_sum_to_total() {
        for total in 0..20 {
            for rounds in 1..7 {
                let sum: usize = (0..rounds).map(|r| round_share(total, rounds, r)).sum();
                assert_eq!(sum, total);
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = [
            RunConfig { seed_fraction: 1.5, ..Default::default() },
            RunConfig { seed_fraction: 0.6, request_fraction: 0.5, ..Default::default() },
            RunConfig { confidence_threshold: 0.3, ..Default::default() },
            RunConfig { quench_period: 0, ..Default::default() },
            RunConfig { seed_fraction: 0.0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
