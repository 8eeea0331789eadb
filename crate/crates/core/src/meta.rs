//! Episodic N-way K-shot meta-learning over (scenario, view) tasks.
//!
//! A task's inner adaptation is `inner_steps` plain gradient-descent steps on
//! the mean composite loss of its training pairs. The meta-objective sums,
//! over tasks, the adapted model's mean loss on the task's validation pairs.
//! Its exact gradient through the inner updates is
//!
//! ```text
//! ∇θ = Π_k (I − α·H(θ_k)) · ∇L_val(θ′)
//! ```
//!
//! evaluated right to left with Hessian-vector products of the training
//! loss, each obtained by running the backward pass on dual numbers.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Dual, Real};
use crate::dataset::{FrameStore, Label, Manifest, SplitSpec, TemporalBlock};
use crate::error::{Error, Result};
use crate::predictor::{
    check_block, init_predictor, loss_and_grad, loss_value, CompositeLoss, FramePredictor,
    LossConfig, PredictorConfig,
};

/// How tasks are drawn for an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerMode {
    /// N distinct scenarios, then one view inside each.
    #[default]
    Scenario,
    /// N distinct (scenario, view) pairs, ignoring scenario grouping.
    View,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OuterOptimizer {
    #[default]
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub val_size: usize,
    pub inner_lr: f64,
    pub inner_steps: usize,
    pub outer_lr: f64,
    /// Tasks per outer update; drawn from as many episodes as needed.
    pub meta_batch_tasks: usize,
    pub epochs: usize,
    pub sampler_mode: SamplerMode,
    pub second_order: bool,
    pub optimizer: OuterOptimizer,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            n_way: 7,
            k_shot: 10,
            val_size: 10,
            inner_lr: 0.05,
            inner_steps: 1,
            outer_lr: 0.01,
            meta_batch_tasks: 7,
            epochs: 1500,
            sampler_mode: SamplerMode::Scenario,
            second_order: false,
            optimizer: OuterOptimizer::Sgd,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_way == 0 || self.k_shot == 0 || self.val_size == 0 {
            return bad("n_way, k_shot and val_size must be >= 1");
        }
        if self.inner_steps == 0 || self.meta_batch_tasks == 0 {
            return bad("inner_steps and meta_batch_tasks must be >= 1");
        }
        if !(self.inner_lr >= 0.0) || !(self.outer_lr >= 0.0) {
            return bad("learning rates must be >= 0");
        }
        Ok(())
    }
}

/// One task: disjoint training and validation blocks from a single
/// (scenario, view).
#[derive(Clone, Debug)]
pub struct EpisodeTask {
    pub scenario_id: String,
    pub view_id: String,
    pub train_pairs: Vec<TemporalBlock>,
    pub val_pairs: Vec<TemporalBlock>,
}

/// Random state for iteration `iteration` of a run seeded with `seed`.
/// Each iteration owns an independent ChaCha stream.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

type ViewIndex<'a> = BTreeMap<&'a str, BTreeMap<&'a str, Vec<&'a str>>>;

/// Normal training videos grouped by scenario and view.
fn training_views<'a>(manifest: &'a Manifest, split: &SplitSpec) -> Result<ViewIndex<'a>> {
    let mut idx: ViewIndex<'a> = BTreeMap::new();
    for id in &split.train_ids {
        let r = manifest.record(id)?;
        if r.label != Label::Normal {
            continue;
        }
        idx.entry(r.scenario_id.as_str())
            .or_default()
            .entry(r.view_id.as_str())
            .or_default()
            .push(r.video_id.as_str());
    }
    Ok(idx)
}

/// Draws one N-way episode. Block windows follow `window`; frames come from
/// `store`, which must hold every normal training video.
pub fn sample_episode(
    manifest: &Manifest,
    split: &SplitSpec,
    store: &FrameStore,
    config: &MetaConfig,
    window: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpisodeTask>> {
    let views = training_views(manifest, split)?;
    let n = config.n_way;
    let picks: Vec<(&str, &str)> = match config.sampler_mode {
        SamplerMode::Scenario => {
            let scenarios: Vec<&str> = views.keys().copied().collect();
            if scenarios.len() < n {
                return Err(Error::InsufficientScenarios {
                    needed: n,
                    available: scenarios.len(),
                });
            }
            index::sample(rng, scenarios.len(), n)
                .into_iter()
                .map(|i| {
                    let s = scenarios[i];
                    let vs: Vec<&str> = views[s].keys().copied().collect();
                    (s, vs[rng.random_range(0..vs.len())])
                })
                .collect()
        }
        SamplerMode::View => {
            let pairs: Vec<(&str, &str)> = views
                .iter()
                .flat_map(|(s, vs)| vs.keys().map(move |v| (*s, *v)))
                .collect();
            if pairs.len() < n {
                return Err(Error::InsufficientScenarios {
                    needed: n,
                    available: pairs.len(),
                });
            }
            index::sample(rng, pairs.len(), n)
                .into_iter()
                .map(|i| pairs[i])
                .collect()
        }
    };

    let need = config.k_shot + config.val_size;
    picks
        .into_iter()
        .map(|(s, v)| {
            // Every (video, start) block of the view, in a fixed order.
            let mut slots: Vec<(&str, usize)> = Vec::new();
            for &vid in &views[s][v] {
                let fc = manifest.record(vid)?.frame_count;
                if fc >= window {
                    slots.extend((1..=fc - window + 1).map(|st| (vid, st)));
                }
            }
            if slots.len() < need {
                return Err(Error::InsufficientBlocks {
                    scenario_id: s.to_string(),
                    view_id: v.to_string(),
                    needed: need,
                    available: slots.len(),
                });
            }
            let chosen = index::sample(rng, slots.len(), need);
            let mut blocks = chosen
                .into_iter()
                .map(|i| {
                    let (vid, st) = slots[i];
                    TemporalBlock::new(store.get(vid)?, st, window)
                })
                .collect::<Result<Vec<_>>>()?;
            let val_pairs = blocks.split_off(config.k_shot);
            Ok(EpisodeTask {
                scenario_id: s.to_string(),
                view_id: v.to_string(),
                train_pairs: blocks,
                val_pairs,
            })
        })
        .collect()
}

/// Mean loss and gradient over `pairs` at `theta`.
fn mean_loss_grad<S: Real>(
    model: &FramePredictor,
    theta: &[S],
    pairs: &[TemporalBlock],
    loss: &CompositeLoss,
) -> (S, Vec<S>) {
    let mut total = S::zero();
    let mut grad = vec![S::zero(); theta.len()];
    for p in pairs {
        let (l, g) = loss_and_grad(model, theta, p, loss);
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let inv = 1.0 / pairs.len() as f64;
    (
        total.scale(inv),
        grad.into_iter().map(|g| g.scale(inv)).collect(),
    )
}

/// Mean composite loss over `pairs` and its gradient.
pub fn mean_composite_loss(
    model: &FramePredictor,
    pairs: &[TemporalBlock],
    loss: &CompositeLoss,
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    for p in pairs {
        check_block(model, p)?;
    }
    Ok(mean_loss_grad(model, model.parameters(), pairs, loss))
}

/// Mean composite loss over `pairs`, value only.
pub fn mean_loss(
    model: &FramePredictor,
    pairs: &[TemporalBlock],
    loss: &CompositeLoss,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for p in pairs {
        check_block(model, p)?;
        total += loss_value(model, p, loss);
    }
    Ok(total / pairs.len() as f64)
}

/// Hessian of the mean loss at `theta` applied to `v`.
fn hessian_vector(
    model: &FramePredictor,
    theta: &[f64],
    v: &[f64],
    pairs: &[TemporalBlock],
    loss: &CompositeLoss,
) -> Vec<f64> {
    let dual: Vec<Dual> = theta
        .iter()
        .zip(v)
        .map(|(&t, &d)| Dual::new(t, d))
        .collect();
    let (_, g) = mean_loss_grad(model, &dual, pairs, loss);
    g.into_iter().map(|x| x.du).collect()
}

/// Parameter iterates θ_0 = θ, …, θ_steps of the inner descent.
fn inner_trajectory(
    model: &FramePredictor,
    pairs: &[TemporalBlock],
    loss: &CompositeLoss,
    lr: f64,
    steps: usize,
) -> Vec<Vec<f64>> {
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(model.parameters().to_vec());
    for _ in 0..steps {
        let theta = traj.last().expect("non-empty");
        let (_, g) = mean_loss_grad(model, theta, pairs, loss);
        let next = theta.iter().zip(&g).map(|(t, gi)| t - lr * gi).collect();
        traj.push(next);
    }
    traj
}

/// Task-adapted copy of `model`; the input model is left untouched.
pub fn inner_adapt(
    model: &FramePredictor,
    task: &EpisodeTask,
    config: &MetaConfig,
    loss: &CompositeLoss,
) -> Result<FramePredictor> {
    adapt_on_pairs(
        model,
        &task.train_pairs,
        config.inner_lr,
        config.inner_steps,
        loss,
    )
}

fn adapt_on_pairs(
    model: &FramePredictor,
    pairs: &[TemporalBlock],
    lr: f64,
    steps: usize,
    loss: &CompositeLoss,
) -> Result<FramePredictor> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    for p in pairs {
        check_block(model, p)?;
    }
    let mut traj = inner_trajectory(model, pairs, loss, lr, steps);
    Ok(model.with_parameters(traj.pop().expect("non-empty")))
}

/// Sum of per-task `(loss, gradient)` terms in a canonical order, so the
/// result does not depend on the order tasks were listed in.
pub fn sum_task_terms(mut terms: Vec<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    terms.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then_with(|| {
            a.1.iter()
                .zip(&b.1)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let n = terms.first().map_or(0, |t| t.1.len());
    let mut loss = 0.0;
    let mut grad = vec![0.0; n];
    for (l, g) in terms {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    (loss, grad)
}

/// Meta-objective value and meta-gradient.
pub fn meta_objective(
    model: &FramePredictor,
    tasks: &[EpisodeTask],
    config: &MetaConfig,
    loss: &CompositeLoss,
) -> Result<(f64, Vec<f64>)> {
    if tasks.is_empty() {
        return Err(Error::EmptyTaskSet);
    }
    let mut terms = Vec::with_capacity(tasks.len());
    for task in tasks {
        if task.train_pairs.is_empty() || task.val_pairs.is_empty() {
            return Err(Error::EmptyInput);
        }
        for p in task.train_pairs.iter().chain(&task.val_pairs) {
            check_block(model, p)?;
        }
        let traj = inner_trajectory(
            model,
            &task.train_pairs,
            loss,
            config.inner_lr,
            config.inner_steps,
        );
        let adapted = traj.last().expect("non-empty");
        let (val_loss, mut v) = mean_loss_grad(model, adapted, &task.val_pairs, loss);
        if config.second_order {
            for theta_k in traj[..traj.len() - 1].iter().rev() {
                let hv = hessian_vector(model, theta_k, &v, &task.train_pairs, loss);
                for (vi, h) in v.iter_mut().zip(hv) {
                    *vi -= config.inner_lr * h;
                }
            }
        }
        terms.push((val_loss, v));
    }
    Ok(sum_task_terms(terms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iteration: usize,
    pub meta_loss: f64,
    pub wall_ms: u128,
}

/// Per-iteration meta-loss record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub entries: Vec<LogEntry>,
}

impl TrainingLog {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.meta_loss).collect()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["iteration", "meta_loss", "wall_ms"])?;
        for e in &self.entries {
            w.write_record([
                e.iteration.to_string(),
                e.meta_loss.to_string(),
                e.wall_ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Draws `config.meta_batch_tasks` tasks for iteration `iteration`.
pub fn sample_meta_batch(
    manifest: &Manifest,
    split: &SplitSpec,
    store: &FrameStore,
    config: &MetaConfig,
    window: usize,
    iteration: u64,
) -> Result<Vec<EpisodeTask>> {
    let mut rng = iteration_rng(config.seed, iteration);
    let mut tasks = Vec::with_capacity(config.meta_batch_tasks);
    while tasks.len() < config.meta_batch_tasks {
        tasks.extend(sample_episode(
            manifest, split, store, config, window, &mut rng,
        )?);
    }
    tasks.truncate(config.meta_batch_tasks);
    Ok(tasks)
}

/// Meta-trains a freshly initialized predictor. `progress` is called after
/// every outer update.
pub fn meta_train(
    manifest: &Manifest,
    split: &SplitSpec,
    store: &FrameStore,
    config: &MetaConfig,
    predictor: &PredictorConfig,
    init_seed: u64,
    mut progress: impl FnMut(&LogEntry),
) -> Result<(FramePredictor, TrainingLog)> {
    config.validate()?;
    let mut model = init_predictor(predictor.clone(), init_seed)?;
    let loss = CompositeLoss::new(&config.loss, predictor.frame_size)?;
    let window = predictor.window();
    let mut log = TrainingLog::default();
    let mut adam = Adam::new(model.parameter_count());
    let started = Instant::now();
    for it in 0..config.epochs {
        let tasks = sample_meta_batch(manifest, split, store, config, window, it as u64)?;
        let (meta_loss, grad) = meta_objective(&model, &tasks, config, &loss)?;
        let mut params = model.parameters().to_vec();
        match config.optimizer {
            OuterOptimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(&grad) {
                    *p -= config.outer_lr * g;
                }
            }
            OuterOptimizer::Adam => adam.step(&mut params, &grad, config.outer_lr),
        }
        model = model.with_parameters(params);
        let entry = LogEntry {
            iteration: it,
            meta_loss,
            wall_ms: started.elapsed().as_millis(),
        };
        progress(&entry);
        log.entries.push(entry);
    }
    Ok((model, log))
}

/// Result of adapting to a target video.
#[derive(Clone, Debug)]
pub struct AdaptedModel {
    pub model: FramePredictor,
    /// Last frame used for adaptation (`K + T′ − 1`); scores after it are
    /// free of adaptation data.
    pub adaptation_boundary: usize,
}

/// Adapts on the first `k_shot` blocks of `video`.
pub fn adapt_to_target(
    model: &FramePredictor,
    video: &crate::dataset::LoadedVideo,
    config: &MetaConfig,
) -> Result<AdaptedModel> {
    let window = model.config().window();
    let boundary = config.k_shot + window - 1;
    if video.record.frame_count < boundary {
        return Err(Error::VideoTooShort {
            video_id: video.video_id().to_string(),
            frame_count: video.record.frame_count,
            required: boundary,
        });
    }
    let pairs = (1..=config.k_shot)
        .map(|s| TemporalBlock::new(video, s, window))
        .collect::<Result<Vec<_>>>()?;
    let loss = CompositeLoss::new(&config.loss, model.config().frame_size)?;
    let adapted = adapt_on_pairs(model, &pairs, config.inner_lr, config.inner_steps, &loss)?;
    Ok(AdaptedModel {
        model: adapted,
        adaptation_boundary: boundary,
    })
}

/// Writes `config` as pretty JSON.
pub fn write_config_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}
