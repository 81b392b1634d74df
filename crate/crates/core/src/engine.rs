//! The bilevel search loop.
//!
//! Each outer step `T` runs one inner period: every trajectory takes `I` SGD
//! steps on the same batch schedule, sampling one policy operation per image
//! from a frozen copy of the distribution. At the barrier all trajectories are
//! evaluated on the validation split, the distribution takes one Adam ascent
//! step on the mean-baseline score-function gradient, and the most accurate
//! trajectory's weights are copied to every trajectory.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::data::{apply_pipeline, load_cifar10, split_validation, synthetic_bandit_dataset, Dataset, PreprocSpec};
use crate::error::{Error, Result};
use crate::kernels::{AugOperation, Sign, NUM_OPERATIONS};
use crate::learner::{
    argmax, cosine_lr, sgd_step, Batch, Checkpoint, InputShape, ModelWeights, Network, Standardizer,
    TrainHyper,
};
use crate::policy::{entropy, PolicyParams, SampleCounts, Sampler};
use crate::policy_optim::{adam_ascent_step, score_gradient, AdamState, Baseline};
use crate::rng::{stream, stream_rng};

pub use crate::cost::cost_iterations;

/// One inner-loop worker.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub id: usize,
    pub weights: ModelWeights,
    pub velocity: Vec<f64>,
    pub counts: SampleCounts,
    pub last_acc: f64,
    /// SHA-256 (hex) of the `(index, label)` sequence consumed in the last period.
    pub schedule_digest: String,
}

impl Trajectory {
    pub fn new(id: usize, weights: ModelWeights, num_operations: usize) -> Self {
        let n = weights.len();
        Self {
            id,
            weights,
            velocity: vec![0.0; n],
            counts: SampleCounts::new(num_operations),
            last_acc: 0.0,
            schedule_digest: String::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    #[serde(rename = "T")]
    pub t: usize,
    pub accs: Vec<f64>,
    pub broadcast_source: usize,
    pub policy_entropy: f64,
    pub lr_inner: f64,
    /// Only recorded when wall-clock logging is enabled.
    pub wall_ms: Option<u64>,
    pub config_hash: String,
}

impl MetricsRecord {
    /// One line of the metrics log, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::format("metrics record", e.to_string()))
    }
}

#[derive(Clone, Debug)]
pub struct OuterState {
    /// Completed outer steps.
    pub t: usize,
    pub theta: PolicyParams,
    pub adam: AdamState,
    pub best_weights: ModelWeights,
    pub history: Vec<MetricsRecord>,
}

/// Training-set indices for each inner step of one period.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSchedule {
    pub batches: Vec<Vec<usize>>,
}

/// `inner_steps` batches of `batch_size` indices taken from consecutive seeded
/// permutations of the training split. Identical for every trajectory.
pub fn batch_schedule(seed: u64, t: usize, train_len: usize, inner_steps: usize, batch_size: usize) -> BatchSchedule {
    let needed = inner_steps * batch_size;
    let mut flat = Vec::with_capacity(needed);
    let mut epoch = 0u64;
    while flat.len() < needed {
        let mut perm: Vec<usize> = (0..train_len).collect();
        perm.shuffle(&mut stream_rng(seed, &[stream::SCHEDULE, t as u64, epoch]));
        flat.extend(perm.into_iter().take(needed - flat.len()));
        epoch += 1;
    }
    BatchSchedule {
        batches: flat.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect(),
    }
}

/// Everything an inner period reads but never writes.
pub struct PeriodContext<'a> {
    pub net: &'a Network,
    pub train: &'a Dataset,
    pub standardizer: &'a Standardizer,
    /// `None` trains without policy operations.
    pub sampler: Option<&'a Sampler>,
    pub operations: &'a [AugOperation],
    pub preproc: &'a PreprocSpec,
    pub hyper: &'a TrainHyper,
    pub seed: u64,
    /// 1-based outer step this period belongs to.
    pub outer_step: usize,
    /// Inner steps per period, for the global learning-rate position.
    pub inner_steps: usize,
    pub signed_geometry: bool,
}

fn preproc_active(spec: &PreprocSpec) -> bool {
    spec.flip || spec.crop || spec.cutout
}

/// Runs one period of SGD for one trajectory. Operation draws come from the
/// trajectory's own stream; flip, crop and Cutout draws are shared by all
/// trajectories.
pub fn run_inner_period(traj: &mut Trajectory, ctx: &PeriodContext<'_>, schedule: &BatchSchedule) -> Result<()> {
    let t = ctx.outer_step as u64;
    let mut rng = stream_rng(ctx.seed, &[stream::TRAJECTORY, t, traj.id as u64]);
    let mut digest = Sha256::new();
    let input_len = ctx.net.input_shape().len();
    for (i, indices) in schedule.batches.iter().enumerate() {
        let mut inputs = Vec::with_capacity(indices.len() * input_len);
        let mut labels = Vec::with_capacity(indices.len());
        for (slot, &idx) in indices.iter().enumerate() {
            let label = ctx.train.labels[idx];
            digest.update((idx as u64).to_le_bytes());
            digest.update((label as u64).to_le_bytes());
            let policy = ctx.sampler.map(|s| {
                let k = s.sample(&mut rng);
                traj.counts.record(k);
                let signs = if ctx.signed_geometry {
                    [rng.random::<bool>(), rng.random::<bool>()]
                        .map(|b| if b { Sign::Plus } else { Sign::Minus })
                } else {
                    [Sign::Plus; 2]
                };
                (&ctx.operations[k], signs)
            });
            let img = &ctx.train.images[idx];
            let img = if preproc_active(ctx.preproc) {
                let mut base = stream_rng(ctx.seed, &[stream::PREPROCESS, t, i as u64, slot as u64]);
                apply_pipeline(img, ctx.preproc, policy, &mut base)
            } else {
                match policy {
                    Some((op, signs)) => crate::kernels::apply_operation(img, op, signs),
                    None => img.clone(),
                }
            };
            ctx.standardizer.apply_into(&img, &mut inputs);
            labels.push(label);
        }
        let batch = Batch::new(inputs, labels, input_len)?;
        let inner_step = (ctx.outer_step - 1) * ctx.inner_steps + i;
        let (_, grad) = ctx.net.loss_and_grad(&traj.weights, &batch).map_err(|e| match e {
            Error::NonFiniteLoss { loss, .. } => Error::NonFiniteLoss {
                loss,
                trajectory: traj.id,
                outer_step: ctx.outer_step,
                inner_step: i,
            },
            other => other,
        })?;
        let lr = cosine_lr(inner_step, ctx.hyper)?;
        sgd_step(&mut traj.weights, &grad, &mut traj.velocity, lr, ctx.hyper)?;
    }
    traj.schedule_digest = digest
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(())
}

/// Barrier-time options for [`outer_step`].
#[derive(Clone, Debug)]
pub struct OuterOptions {
    pub baseline: Baseline,
    pub zero_velocity_on_broadcast: bool,
    pub lr_inner: f64,
    pub config_hash: String,
    pub wall_ms: Option<u64>,
}

/// Evaluates every trajectory, updates the distribution, broadcasts the best
/// weights and appends a metrics record.
pub fn outer_step(
    state: &mut OuterState,
    trajs: &mut [Trajectory],
    net: &Network,
    val: &Batch,
    opts: &OuterOptions,
) -> Result<MetricsRecord> {
    if trajs.is_empty() {
        return Err(Error::InvalidArgument("no trajectories".into()));
    }
    if val.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let total = trajs[0].counts.total();
    if trajs.iter().any(|tr| tr.counts.total() != total) {
        return Err(Error::Shape("trajectories finished different periods".into()));
    }
    let accs = trajs
        .par_iter()
        .map(|tr| net.evaluate_accuracy(&tr.weights, val))
        .collect::<Result<Vec<f64>>>()?;
    if total > 0 {
        let counts: Vec<SampleCounts> = trajs.iter().map(|tr| tr.counts.clone()).collect();
        let grad = score_gradient(&state.theta, &counts, &accs, opts.baseline)?;
        adam_ascent_step(&mut state.theta, &grad, &mut state.adam)?;
    }
    let src = argmax(&accs);
    let best = trajs[src].weights.clone();
    let best_velocity = trajs[src].velocity.clone();
    for (tr, &acc) in trajs.iter_mut().zip(&accs) {
        tr.last_acc = acc;
        tr.weights.clone_from(&best);
        if opts.zero_velocity_on_broadcast {
            tr.velocity.iter_mut().for_each(|v| *v = 0.0);
        } else {
            tr.velocity.clone_from(&best_velocity);
        }
        tr.counts.reset();
    }
    state.best_weights = best;
    state.t += 1;
    let record = MetricsRecord {
        t: state.t,
        accs,
        broadcast_source: src,
        policy_entropy: entropy(&state.theta),
        lr_inner: opts.lr_inner,
        wall_ms: opts.wall_ms,
        config_hash: opts.config_hash.clone(),
    };
    state.history.push(record.clone());
    Ok(record)
}

/// Training and validation data prepared for a search.
#[derive(Clone, Debug)]
pub struct SearchData {
    pub train: Dataset,
    pub val: Dataset,
    pub standardizer: Standardizer,
    /// Standardized validation images, subsampled if configured.
    pub val_batch: Batch,
    pub input: InputShape,
}

pub fn prepare_data(cfg: &RunConfig) -> Result<SearchData> {
    let full = match cfg.dataset.as_str() {
        "synthetic" => synthetic_bandit_dataset(&cfg.synthetic_spec()?)?,
        "cifar10" => {
            let dir = cfg
                .data_dir
                .as_ref()
                .ok_or_else(|| Error::Config(vec!["data_dir: required for cifar10".into()]))?;
            load_cifar10(dir)?.0
        }
        other => return Err(Error::Config(vec![format!("dataset: unknown {other:?}")])),
    };
    let val_size = cfg
        .val_size
        .ok_or_else(|| Error::Config(vec!["val_size: unresolved".into()]))?;
    let (train, val) = split_validation(&full, val_size, cfg.seed)?;
    let standardizer = Standardizer::fit(&train.images)?;
    let mut val_idx: Vec<usize> = (0..val.len()).collect();
    if cfg.val_subsample > 0 && cfg.val_subsample < val.len() {
        val_idx.shuffle(&mut stream_rng(cfg.seed, &[stream::VAL_SUBSAMPLE]));
        val_idx.truncate(cfg.val_subsample);
        val_idx.sort_unstable();
    }
    let images: Vec<_> = val_idx.iter().map(|&i| val.images[i].clone()).collect();
    let labels: Vec<_> = val_idx.iter().map(|&i| val.labels[i]).collect();
    let val_batch = standardizer.batch(&images, &labels)?;
    let (h, w, c) = train.image_shape().expect("non-empty split");
    Ok(SearchData {
        train,
        val,
        standardizer,
        val_batch,
        input: InputShape {
            height: h,
            width: w,
            channels: c,
        },
    })
}

/// Per-trajectory bookkeeping of the most recent period, captured before the
/// barrier resets it.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeriodSummary {
    pub counts: Vec<SampleCounts>,
    pub schedule_digests: Vec<String>,
}

/// A search in progress. Drive it with [`Search::step`].
pub struct Search {
    cfg: RunConfig,
    data: SearchData,
    net: Network,
    operations: Vec<AugOperation>,
    hyper: TrainHyper,
    preproc: PreprocSpec,
    inner_steps: usize,
    trajectories: Vec<Trajectory>,
    state: OuterState,
    last_period: PeriodSummary,
    hash: String,
    pool: rayon::ThreadPool,
}

/// What a finished search returns.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub weights: ModelWeights,
    pub theta: PolicyParams,
    pub history: Vec<MetricsRecord>,
    pub checkpoint: Checkpoint,
}

impl Search {
    /// `cfg` must already be resolved (see [`RunConfig::resolve`]).
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let data = prepare_data(&cfg)?;
        Self::with_data(cfg, data)
    }

    pub fn with_data(cfg: RunConfig, data: SearchData) -> Result<Self> {
        let net = Network::new(cfg.architecture(), data.input, data.train.class_count)?;
        let hyper = cfg.train_hyper();
        hyper.validate()?;
        let init = net.init_weights(&mut stream_rng(cfg.seed, &[stream::INIT]));
        let operations = (0..NUM_OPERATIONS)
            .map(|k| AugOperation::from_index(k, cfg.signed_geometry))
            .collect::<Result<Vec<_>>>()?;
        let trajectories = (0..cfg.trajectories)
            .map(|n| Trajectory::new(n, init.clone(), NUM_OPERATIONS))
            .collect();
        let state = OuterState {
            t: 0,
            theta: PolicyParams::uniform_operations(),
            adam: AdamState::new(
                NUM_OPERATIONS,
                cfg.policy_lr,
                cfg.adam_beta1,
                cfg.adam_beta2,
                cfg.adam_eps,
            ),
            best_weights: init,
            history: Vec::new(),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.worker_count())
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self {
            inner_steps: cfg.inner_steps_resolved(),
            preproc: cfg.preproc(),
            hash: cfg.hash(),
            cfg,
            data,
            net,
            operations,
            hyper,
            trajectories,
            state,
            last_period: PeriodSummary::default(),
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn data(&self) -> &SearchData {
        &self.data
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn state(&self) -> &OuterState {
        &self.state
    }

    pub fn last_period(&self) -> &PeriodSummary {
        &self.last_period
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    pub fn is_done(&self) -> bool {
        self.state.t >= self.cfg.outer_steps
    }

    /// Runs one inner period and the following barrier.
    pub fn step(&mut self) -> Result<&MetricsRecord> {
        if self.is_done() {
            return Err(Error::InvalidArgument("search already finished".into()));
        }
        let started = Instant::now();
        let t = self.state.t + 1;
        let schedule = batch_schedule(
            self.cfg.seed,
            t,
            self.data.train.len(),
            self.inner_steps,
            self.cfg.batch_size,
        );
        let sampler = self.cfg.augment.then(|| Sampler::new(&self.state.theta));
        let ctx = PeriodContext {
            net: &self.net,
            train: &self.data.train,
            standardizer: &self.data.standardizer,
            sampler: sampler.as_ref(),
            operations: &self.operations,
            preproc: &self.preproc,
            hyper: &self.hyper,
            seed: self.cfg.seed,
            outer_step: t,
            inner_steps: self.inner_steps,
            signed_geometry: self.cfg.signed_geometry,
        };
        let trajectories = &mut self.trajectories;
        self.pool.install(|| {
            trajectories
                .par_iter_mut()
                .try_for_each(|tr| run_inner_period(tr, &ctx, &schedule))
        })?;
        self.last_period = PeriodSummary {
            counts: self.trajectories.iter().map(|tr| tr.counts.clone()).collect(),
            schedule_digests: self
                .trajectories
                .iter()
                .map(|tr| tr.schedule_digest.clone())
                .collect(),
        };
        let lr_inner = cosine_lr(t * self.inner_steps - 1, &self.hyper)?;
        let mut opts = OuterOptions {
            baseline: self.cfg.baseline(),
            zero_velocity_on_broadcast: self.cfg.zero_velocity_on_broadcast,
            lr_inner,
            config_hash: self.hash.clone(),
            wall_ms: None,
        };
        if self.cfg.log_wall_time {
            // Includes the inner period; evaluation time is negligible by comparison.
            opts.wall_ms = Some(started.elapsed().as_millis() as u64);
        }
        let (state, trajs, net, val) = (
            &mut self.state,
            &mut self.trajectories,
            &self.net,
            &self.data.val_batch,
        );
        self.pool.install(|| outer_step(state, trajs, net, val, &opts))?;
        Ok(self.state.history.last().expect("just pushed"))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            architecture: self.net.architecture(),
            input: self.data.input,
            classes: self.net.classes(),
            standardizer: self.data.standardizer.clone(),
            weights: self.state.best_weights.clone(),
        }
    }

    pub fn finish(self) -> SearchOutcome {
        let checkpoint = self.checkpoint();
        SearchOutcome {
            weights: self.state.best_weights,
            theta: self.state.theta,
            history: self.state.history,
            checkpoint,
        }
    }
}

/// Runs all configured outer steps, calling `observer` after each barrier.
pub fn run_search(
    cfg: RunConfig,
    mut observer: impl FnMut(&Search, &MetricsRecord) -> Result<()>,
) -> Result<SearchOutcome> {
    let mut search = Search::new(cfg)?;
    while !search.is_done() {
        let record = search.step()?.clone();
        observer(&search, &record)?;
    }
    Ok(search.finish())
}
