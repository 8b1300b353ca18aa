//! Proximal policy optimization for lot dispatching.
//!
//! Workers run simulations in which the controlled tools sample lots from
//! `softmax(scores)`. Every sampled decision becomes a [`Transition`]; its
//! reward is the windowed KPI reward at the end of the decision's hour.
//! Updates run `epochs` passes of minibatch Adam steps on the clipped
//! surrogate plus value loss minus an entropy bonus.
//!
//! In truncated mode each worker pauses its simulation after collecting
//! `rollouts_per_update * horizon` decisions with known rewards; in
//! complete-episode mode all decisions of an episode are kept until it ends.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{heuristic_decision, HeuristicId};
use crate::kpi::{reward_ppo, rolling_window, throughput_improvement_pct, tardiness_improvement_pct, RewardVariant};
use crate::model::{CompiledModel, LotId};
use crate::policy::{
    featurize_fab, log_softmax, observe, select_ppo, softmax, Checkpoint, ControlSet, Descriptor, FabStateFeatures,
    Forward, LotFeatures, Normalizer, PolicyParams, RunningStats, FAB_FEATURES, LOT_FEATURES,
};
use crate::sim::{Decision, DispatchContext, Dispatcher, ReferenceRun, RunStatus, SimOptions, Simulation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    /// Rollout fragment length T.
    pub horizon: usize,
    /// Fragments per worker between updates in truncated mode.
    pub rollouts_per_update: usize,
    pub workers: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub complete_episodes: bool,
    pub reward: RewardVariant,
    /// Rolling reward window in hours.
    pub reward_window: f64,
    /// Divide rewards by their running standard deviation.
    pub scale_rewards: bool,
    /// Global gradient-norm clip; `None` disables it.
    pub max_grad_norm: Option<f64>,
    /// Episodes per worker.
    pub episodes: usize,
    /// Stored floats allowed per worker in complete-episode mode.
    pub capacity: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            epochs: 4,
            minibatch: 128,
            horizon: 16,
            rollouts_per_update: 50,
            workers: 1,
            value_coef: 0.5,
            entropy_coef: 0.01,
            learning_rate: 3e-4,
            complete_episodes: true,
            reward: RewardVariant::D,
            reward_window: 24.0,
            scale_rewards: true,
            max_grad_norm: Some(0.5),
            episodes: 40,
            capacity: 64 << 20,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("ppo: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return bad("gamma and lambda must be in [0, 1]");
        }
        if self.clip < 0.0 {
            return bad("clip must be >= 0");
        }
        if self.horizon == 0 || self.rollouts_per_update == 0 {
            return bad("horizon and rollouts_per_update must be >= 1");
        }
        if self.minibatch == 0 || self.workers == 0 {
            return bad("minibatch and workers must be >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Normalized observation of one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub lots: Vec<LotFeatures>,
    pub fab: FabStateFeatures,
}

impl Observation {
    fn floats(&self) -> usize {
        self.lots.len() * LOT_FEATURES + FAB_FEATURES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub log_prob_old: f64,
    pub value_old: f64,
    pub reward: f64,
    pub done: bool,
    pub time: f64,
}

/// Training sample after advantage estimation.
#[derive(Debug, Clone)]
pub struct Sample<'a> {
    pub obs: &'a Observation,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Generalized advantage estimation. `values` carries one bootstrap value
/// after the last transition; a `done` transition does not bootstrap.
/// Returns `(advantages, returns)` with `returns = advantages + values`.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(values.len(), rewards.len() + 1);
    assert_eq!(dones.len(), rewards.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut gae = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        gae = delta + gamma * lambda * live * gae;
        adv[t] = gae;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Shifts and scales to zero mean and unit standard deviation. Only
/// centers when the spread is negligible.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-8 {
            *a /= std;
        }
    }
}

/// `min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    /// Mean clipped surrogate (to be maximized).
    pub surrogate: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Minibatch loss `-L_clip + c_v * MSE - c_e * entropy` (means over the
/// batch) and its gradient with respect to every parameter.
pub fn ppo_loss(params: &PolicyParams, batch: &[Sample<'_>], cfg: &PpoConfig) -> Result<(LossParts, Vec<f64>)> {
    let mut grad = vec![0.0; params.len()];
    let mut parts = LossParts::default();
    let inv_b = 1.0 / batch.len() as f64;
    let mut fwd = Forward::default();
    for s in batch {
        fwd.run(params, &s.obs.lots);
        let scores = fwd.scores();
        let logp = log_softmax(&scores);
        let p = softmax(&scores);
        let entropy: f64 = -p.iter().zip(&logp).map(|(pi, lp)| if *pi > 0.0 { pi * lp } else { 0.0 }).sum::<f64>();
        let ratio = (logp[s.action] - s.log_prob_old).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * s.advantage;
        let surrogate = unclipped.min(clipped);
        if clipped < unclipped {
            parts.clip_fraction += inv_b;
        }
        let value = fwd.value(params, &s.obs.fab)?;
        let verr = value - s.value_target;

        parts.surrogate += surrogate * inv_b;
        parts.value += verr * verr * inv_b;
        parts.entropy += entropy * inv_b;

        // d(loss)/d(log pi(a)) through the surrogate.
        let g_logp = if unclipped <= clipped { -ratio * s.advantage * inv_b } else { 0.0 };
        let mut ds: Vec<f64> = p.iter().map(|pi| -g_logp * pi).collect();
        ds[s.action] += g_logp;
        // Entropy: dH/ds_i = -p_i (log p_i + H).
        for (i, d) in ds.iter_mut().enumerate() {
            let dh = if p[i] > 0.0 { -p[i] * (logp[i] + entropy) } else { 0.0 };
            *d -= cfg.entropy_coef * inv_b * dh;
        }
        let dvalue = 2.0 * cfg.value_coef * verr * inv_b;
        fwd.backward(params, &ds, dvalue, &mut grad);
    }
    parts.total = -parts.surrogate + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    if !parts.total.is_finite() {
        return Err(Error::NonFiniteLoss(batch.len()));
    }
    Ok((parts, grad))
}

/// Adam optimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Dispatcher that samples decisions at controlled tools and records them.
pub struct PpoCollector {
    params: Arc<PolicyParams>,
    lot_norm: Arc<Normalizer>,
    fab_norm: Arc<Normalizer>,
    controlled: Arc<ControlSet>,
    fallback: HeuristicId,
    rng: ChaCha8Rng,
    pub transitions: Vec<Transition>,
    pub lot_stats: RunningStats,
    pub fab_stats: RunningStats,
    /// Pause once this many transitions have a known reward.
    pause_after: Option<usize>,
    capacity: Option<usize>,
    stored: usize,
    clock: f64,
    fwd: Forward,
    sorted: Vec<LotId>,
}

impl PpoCollector {
    pub fn new(
        params: Arc<PolicyParams>,
        lot_norm: Arc<Normalizer>,
        fab_norm: Arc<Normalizer>,
        controlled: Arc<ControlSet>,
        fallback: HeuristicId,
        rng: ChaCha8Rng,
    ) -> Self {
        PpoCollector {
            params,
            lot_norm,
            fab_norm,
            controlled,
            fallback,
            rng,
            transitions: Vec::new(),
            lot_stats: RunningStats::new(LOT_FEATURES),
            fab_stats: RunningStats::new(FAB_FEATURES),
            pause_after: None,
            capacity: None,
            stored: 0,
            clock: 0.0,
            fwd: Forward::default(),
            sorted: Vec::new(),
        }
    }

    /// Transitions whose reward hour has been recorded.
    fn ready(&self) -> usize {
        self.transitions.partition_point(|t| t.time.floor() + 1.0 < self.clock)
    }

    fn set_policy(&mut self, params: Arc<PolicyParams>, lot_norm: Arc<Normalizer>, fab_norm: Arc<Normalizer>) {
        self.params = params;
        self.lot_norm = lot_norm;
        self.fab_norm = fab_norm;
    }
}

impl Dispatcher for PpoCollector {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        self.clock = ctx.now();
        let group = ctx.model.tools[ctx.tool].group;
        if !self.controlled.contains(group) || ctx.queue.len() == 1 {
            return Ok(heuristic_decision(self.fallback, ctx));
        }
        let lots = observe(ctx, &self.lot_norm, &mut self.lot_stats, &mut self.sorted);
        let fab_raw = featurize_fab(ctx.model, ctx.state, ctx.reference, ctx.tool);
        self.fab_stats.push(&fab_raw);
        let fab = self.fab_norm.apply_array(&fab_raw);
        self.fwd.run(&self.params, &lots);
        let scores = self.fwd.scores();
        let (action, log_prob_old) = select_ppo(&scores, &mut self.rng);
        let value_old = self.fwd.value(&self.params, &fab)?;
        let obs = Observation { lots, fab };
        self.stored += obs.floats() + 5;
        if let Some(budget) = self.capacity {
            if self.stored > budget {
                return Err(Error::Capacity {
                    needed: self.stored,
                    budget,
                });
            }
        }
        self.transitions.push(Transition {
            obs,
            action,
            log_prob_old,
            value_old,
            reward: f64::NAN,
            done: false,
            time: ctx.now(),
        });
        Ok(Decision::Start(vec![self.sorted[action]]))
    }

    fn wants_pause(&self) -> bool {
        self.pause_after.is_some_and(|n| self.transitions.len() >= n && self.ready() >= n)
    }
}

/// Reward of a decision at `time`: the windowed reward at the end of its
/// hour, so all decisions within one hour share it.
pub fn decision_reward(
    snapshots: &[crate::kpi::KpiSnapshot],
    time: f64,
    horizon: f64,
    window: f64,
    variant: RewardVariant,
) -> f64 {
    let end = (time.floor() + 1.0).min(horizon);
    let w = rolling_window(snapshots, end, window);
    let r = reward_ppo(&w, variant);
    match variant {
        RewardVariant::B => -r,
        _ => r,
    }
}

/// Completed training episode, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PpoEpisodeLog {
    pub episode: usize,
    pub worker: usize,
    pub seed: u64,
    pub tardiness_pct: f64,
    pub throughput_pct: f64,
    pub decisions: usize,
    pub mean_reward: f64,
    pub updates: u64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Inputs of a PPO training run.
pub struct PpoSetup {
    pub model: Arc<CompiledModel>,
    pub controlled: ControlSet,
    pub fallback: HeuristicId,
    pub horizon: f64,
    /// Training seeds and their reference runs, cycled over episodes.
    pub seeds: Vec<(u64, Arc<ReferenceRun>)>,
    /// Starting normalizer for lot features.
    pub lot_normalizer: Normalizer,
}

pub struct PpoOutcome {
    pub log: Vec<PpoEpisodeLog>,
    pub checkpoint: Checkpoint,
}

struct Worker {
    index: usize,
    episode: usize,
    seed: u64,
    reference: Arc<ReferenceRun>,
    sim: Simulation,
    collector: PpoCollector,
    rewards_seen: Vec<f64>,
}

struct Segment {
    transitions: Vec<Transition>,
    bootstrap: f64,
}

/// Runs PPO training. Worker count comes from `cfg.workers`; workers run
/// on the ambient rayon pool.
pub fn run_ppo_training(setup: &PpoSetup, cfg: &PpoConfig) -> Result<PpoOutcome> {
    cfg.validate()?;
    if setup.seeds.is_empty() {
        return Err(Error::Config("ppo needs at least one training seed".into()));
    }
    for g in 0..setup.model.groups.len() {
        if setup.controlled.contains(g) && setup.model.groups[g].batch.is_some() {
            return Err(Error::Config(format!(
                "ppo cannot control batch tool group `{}`",
                setup.model.groups[g].id
            )));
        }
    }
    let mut trainer_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = PolicyParams::init(Descriptor::PPO, &mut trainer_rng);
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut lot_norm = setup.lot_normalizer.clone();
    lot_norm.frozen = false;
    let mut fab_norm = Normalizer::new(FAB_FEATURES);
    let mut reward_stats = RunningStats::new(1);
    let controlled = Arc::new(setup.controlled.clone());

    let snapshot = |p: &PolicyParams, l: &Normalizer, f: &Normalizer| {
        (Arc::new(p.clone()), Arc::new(l.frozen_copy()), Arc::new(f.frozen_copy()))
    };
    let (mut p_arc, mut l_arc, mut f_arc) = snapshot(&params, &lot_norm, &fab_norm);

    let start_episode = |index: usize, episode: usize, p: &Arc<PolicyParams>, l: &Arc<Normalizer>, f: &Arc<Normalizer>| {
        let (seed, reference) = setup.seeds[(episode * cfg.workers + index) % setup.seeds.len()].clone();
        let sim = Simulation::new(
            setup.model.clone(),
            seed,
            setup.horizon,
            Some(reference.clone()),
            SimOptions::default(),
        )?;
        // One sampling stream per (trainer seed, episode seed), advanced per
        // episode so repeated visits of a seed draw fresh actions.
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(seed);
        rng.set_word_pos((episode as u128) << 40);
        let mut collector = PpoCollector::new(p.clone(), l.clone(), f.clone(), controlled.clone(), setup.fallback, rng);
        if cfg.complete_episodes {
            collector.capacity = Some(cfg.capacity);
        } else {
            collector.pause_after = Some(cfg.rollouts_per_update * cfg.horizon + 1);
        }
        Ok::<_, Error>(Worker {
            index,
            episode,
            seed,
            reference,
            sim,
            collector,
            rewards_seen: Vec::new(),
        })
    };

    let mut workers: Vec<Worker> = (0..cfg.workers)
        .map(|w| start_episode(w, 0, &p_arc, &l_arc, &f_arc))
        .collect::<Result<_>>()?;
    let mut log = Vec::new();
    let mut last_parts = LossParts::default();
    let mut updates = 0u64;

    while !workers.is_empty() {
        // Collect.
        let statuses: Vec<Result<RunStatus>> = workers
            .par_iter_mut()
            .map(|w| w.sim.run(&mut w.collector))
            .collect();
        let mut segments = Vec::new();
        let mut finished = Vec::new();
        for (w, status) in workers.iter_mut().zip(statuses) {
            let status = status?;
            let horizon = w.sim.state().horizon();
            let snaps = w.sim.state().snapshots();
            let take = match status {
                RunStatus::Finished => w.collector.transitions.len(),
                RunStatus::Paused => w.collector.ready() - 1,
            };
            let mut segment: Vec<Transition> = w.collector.transitions.drain(..take).collect();
            for t in segment.iter_mut() {
                t.reward = decision_reward(snaps, t.time, horizon, cfg.reward_window, cfg.reward);
                w.rewards_seen.push(t.reward);
            }
            let bootstrap = match status {
                RunStatus::Finished => {
                    if let Some(last) = segment.last_mut() {
                        last.done = true;
                    }
                    finished.push(w.index);
                    0.0
                }
                RunStatus::Paused => w.collector.transitions[0].value_old,
            };
            segments.push(Segment {
                transitions: segment,
                bootstrap,
            });
            w.collector.stored = w.collector.transitions.iter().map(|t| t.obs.floats() + 5).sum();
            lot_norm.merge(&std::mem::replace(&mut w.collector.lot_stats, RunningStats::new(LOT_FEATURES)));
            fab_norm.merge(&std::mem::replace(&mut w.collector.fab_stats, RunningStats::new(FAB_FEATURES)));
        }

        // Update.
        if segments.iter().any(|s| !s.transitions.is_empty()) {
            for s in &segments {
                for t in &s.transitions {
                    reward_stats.push(&[t.reward]);
                }
            }
            let scale = if cfg.scale_rewards && reward_stats.count >= 2 && reward_stats.std(0) > 0.0 {
                1.0 / reward_stats.std(0)
            } else {
                1.0
            };
            let mut obs_refs = Vec::new();
            let mut adv_all = Vec::new();
            let mut target_all = Vec::new();
            for s in &segments {
                if s.transitions.is_empty() {
                    continue;
                }
                let rewards: Vec<f64> = s.transitions.iter().map(|t| t.reward * scale).collect();
                let mut values: Vec<f64> = s.transitions.iter().map(|t| t.value_old).collect();
                values.push(s.bootstrap);
                let dones: Vec<bool> = s.transitions.iter().map(|t| t.done).collect();
                let (adv, ret) = compute_gae(&rewards, &values, &dones, cfg.gamma, cfg.lambda);
                adv_all.extend(adv);
                target_all.extend(ret);
                obs_refs.extend(s.transitions.iter());
            }
            normalize_advantages(&mut adv_all);
            let samples: Vec<Sample<'_>> = obs_refs
                .iter()
                .zip(adv_all.iter().zip(&target_all))
                .map(|(t, (&a, &v))| Sample {
                    obs: &t.obs,
                    action: t.action,
                    log_prob_old: t.log_prob_old,
                    advantage: a,
                    value_target: v,
                })
                .collect();
            let mut order: Vec<usize> = (0..samples.len()).collect();
            for _ in 0..cfg.epochs {
                order.shuffle(&mut trainer_rng);
                for chunk in order.chunks(cfg.minibatch) {
                    let batch: Vec<Sample<'_>> = chunk.iter().map(|&i| samples[i].clone()).collect();
                    let (parts, mut grad) = ppo_loss(&params, &batch, cfg)?;
                    if let Some(max) = cfg.max_grad_norm {
                        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                        if norm > max {
                            grad.iter_mut().for_each(|g| *g *= max / norm);
                        }
                    }
                    adam.step(params.as_mut_slice(), &grad);
                    last_parts = parts;
                    updates += 1;
                }
            }
        }

        // Broadcast.
        (p_arc, l_arc, f_arc) = snapshot(&params, &lot_norm, &fab_norm);
        let mut next = Vec::new();
        for mut w in workers.into_iter() {
            if finished.contains(&w.index) {
                let episode_result = w.sim.into_result();
                let reference = &w.reference.kpi;
                let n = w.rewards_seen.len();
                log.push(PpoEpisodeLog {
                    episode: w.episode,
                    worker: w.index,
                    seed: w.seed,
                    tardiness_pct: tardiness_improvement_pct(episode_result.kpi.tardiness(), reference.tardiness()),
                    throughput_pct: throughput_improvement_pct(episode_result.kpi.tp, reference.tp),
                    decisions: n,
                    mean_reward: if n == 0 { 0.0 } else { w.rewards_seen.iter().sum::<f64>() / n as f64 },
                    updates,
                    surrogate: last_parts.surrogate,
                    value_loss: last_parts.value,
                    entropy: last_parts.entropy,
                    clip_fraction: last_parts.clip_fraction,
                });
                log::info!(
                    "ppo episode {} worker {}: tardiness {:+.2}%, throughput {:+.2}%",
                    w.episode,
                    w.index,
                    log.last().unwrap().tardiness_pct,
                    log.last().unwrap().throughput_pct
                );
                if w.episode + 1 < cfg.episodes {
                    next.push(start_episode(w.index, w.episode + 1, &p_arc, &l_arc, &f_arc)?);
                }
            } else {
                w.collector.set_policy(p_arc.clone(), l_arc.clone(), f_arc.clone());
                next.push(w);
            }
        }
        workers = next;
    }

    log.sort_by_key(|l| (l.episode, l.worker));
    let mut checkpoint = Checkpoint::new(params, lot_norm.frozen_copy(), Some(fab_norm.frozen_copy()));
    checkpoint.iteration = updates;
    Ok(PpoOutcome { log, checkpoint })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_telescopes_without_discount() {
        let (adv, ret) = compute_gae(&[1.0, 1.0], &[0.0, 0.0, 0.0], &[false, false], 1.0, 1.0);
        assert_eq!(adv, vec![2.0, 1.0]);
        assert_eq!(ret, vec![2.0, 1.0]);
    }

    #[test]
    fn gae_zero_inputs() {
        let (adv, _) = compute_gae(&[0.0; 3], &[0.0; 4], &[false; 3], 0.99, 0.95);
        assert_eq!(adv, vec![0.0; 3]);
    }

    #[test]
    fn gae_without_discount_is_td_error() {
        let r = [0.5, -1.0, 2.0];
        let v = [0.1, 0.2, 0.3, 0.4];
        let (adv, _) = compute_gae(&r, &v, &[false; 3], 0.0, 0.95);
        for t in 0..3 {
            assert_eq!(adv[t], r[t] - v[t]);
        }
    }

    #[test]
    fn done_stops_bootstrap() {
        let (adv, _) = compute_gae(&[1.0], &[0.0, 100.0], &[true], 0.99, 0.95);
        assert_eq!(adv, vec![1.0]);
    }

    #[test]
    fn surrogate_clip_examples() {
        assert_eq!(clipped_surrogate(1.0, 1.0, 0.2), 1.0);
        assert_eq!(clipped_surrogate(1.5, 1.0, 0.2), 1.2);
        assert_eq!(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
    }

    #[test]
    fn advantages_normalized() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let mean: f64 = a.iter().sum::<f64>() / 4.0;
        let var: f64 = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut adam = Adam::new(2, 0.1);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[1.0, -1.0]);
        assert!(p[0] < 1.0 && p[1] > -1.0);
    }
}
