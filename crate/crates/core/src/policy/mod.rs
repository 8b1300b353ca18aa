//! Lot and fab-state featurization, running z-score normalization, the
//! attention scoring network and action selection.

mod features;
mod network;
mod normalizer;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heuristics::{heuristic_decision, HeuristicId};
use crate::model::{CompiledModel, LotId};
use crate::sim::{form_batch, Decision, DispatchContext, Dispatcher};

pub use features::{
    fab_state_features, featurize_fab, featurize_queue, FabStateFeatures, LotFeatures, FAB_FEATURES, LOT_FEATURES,
};
pub use network::{log_softmax, softmax, softmax_in_place, CriticShape, Descriptor, Forward, Layout, Linear, PolicyParams};
pub use normalizer::{Normalizer, RunningStats, STD_EPS};

/// Index of the highest score; ties go to the lowest index.
pub fn select_es(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Samples an index from `softmax(scores)` and returns it with its
/// log-probability.
pub fn select_ppo<R: Rng + ?Sized>(scores: &[f64], rng: &mut R) -> (usize, f64) {
    let logp = log_softmax(scores);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return (i, *lp);
        }
    }
    // Rounding left `acc` slightly below one.
    let last = logp
        .iter()
        .rposition(|lp| lp.is_finite() && *lp > f64::NEG_INFINITY)
        .unwrap_or(logp.len() - 1);
    (last, logp[last])
}

/// Which tool groups the policy decides for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSet {
    groups: Vec<bool>,
}

impl ControlSet {
    pub fn all(model: &CompiledModel) -> Self {
        ControlSet {
            groups: vec![true; model.groups.len()],
        }
    }

    pub fn none(model: &CompiledModel) -> Self {
        ControlSet {
            groups: vec![false; model.groups.len()],
        }
    }

    /// Groups by id. `"all"` selects every group.
    pub fn from_ids<S: AsRef<str>>(model: &CompiledModel, ids: &[S]) -> Result<Self> {
        let mut set = Self::none(model);
        for id in ids {
            let id = id.as_ref();
            if id == "all" {
                return Ok(Self::all(model));
            }
            let g = model
                .group_by_id(id)
                .ok_or_else(|| Error::Config(format!("unknown tool group `{id}`")))?;
            set.groups[g] = true;
        }
        Ok(set)
    }

    pub fn contains(&self, group: usize) -> bool {
        self.groups.get(group).copied().unwrap_or(false)
    }

    pub fn ids<'m>(&self, model: &'m CompiledModel) -> Vec<&'m str> {
        model
            .groups
            .iter()
            .zip(&self.groups)
            .filter(|(_, &c)| c)
            .map(|(g, _)| g.id.as_str())
            .collect()
    }

    pub fn count(&self) -> usize {
        self.groups.iter().filter(|&&c| c).count()
    }

    /// Share of tools that are in controlled groups.
    pub fn tool_share(&self, model: &CompiledModel) -> f64 {
        let controlled = model.tools.iter().filter(|t| self.contains(t.group)).count();
        controlled as f64 / model.tools.len() as f64
    }
}

/// Greedy ES dispatcher: scores the queue, starts the argmax lot and fills
/// batches with the next best compatible lots. Uncontrolled groups use the
/// fallback heuristic.
pub struct PolicyDispatcher<'a> {
    params: &'a PolicyParams,
    normalizer: &'a Normalizer,
    controlled: &'a ControlSet,
    fallback: HeuristicId,
    /// Raw lot features seen at controlled tools.
    pub observed: RunningStats,
    fwd: Forward,
    queue: Vec<LotId>,
}

impl<'a> PolicyDispatcher<'a> {
    pub fn new(
        params: &'a PolicyParams,
        normalizer: &'a Normalizer,
        controlled: &'a ControlSet,
        fallback: HeuristicId,
    ) -> Self {
        PolicyDispatcher {
            params,
            normalizer,
            controlled,
            fallback,
            observed: RunningStats::new(LOT_FEATURES),
            fwd: Forward::default(),
            queue: Vec::new(),
        }
    }
}

/// Normalized features of `queue` and an id-sorted copy of the queue.
pub(crate) fn observe(
    ctx: &DispatchContext<'_>,
    normalizer: &Normalizer,
    observed: &mut RunningStats,
    sorted: &mut Vec<LotId>,
) -> Vec<LotFeatures> {
    sorted.clear();
    sorted.extend_from_slice(ctx.queue);
    sorted.sort_unstable();
    let mut feats = featurize_queue(ctx.model, ctx.state, ctx.tool, sorted);
    for f in feats.iter_mut() {
        observed.push(f);
        *f = normalizer.apply_array(f);
    }
    feats
}

impl Dispatcher for PolicyDispatcher<'_> {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        let group = ctx.model.tools[ctx.tool].group;
        if !self.controlled.contains(group) {
            return Ok(heuristic_decision(self.fallback, ctx));
        }
        let feats = observe(ctx, self.normalizer, &mut self.observed, &mut self.queue);
        self.fwd.run(self.params, &feats);
        let scores = self.fwd.scores();
        let selection = self.queue[select_es(&scores)];
        match ctx.model.groups[group].batch {
            Some(limits) => Ok(Decision::Start(form_batch(
                selection,
                &self.queue,
                &scores,
                |id| ctx.step_of(id).batch_family,
                limits,
            ))),
            None => Ok(Decision::Start(vec![selection])),
        }
    }
}

/// Records raw lot features at controlled tools while a heuristic decides.
/// Used to warm up a normalizer from reference runs.
pub struct ObservingDispatcher<'a> {
    pub heuristic: HeuristicId,
    pub controlled: &'a ControlSet,
    pub observed: RunningStats,
}

impl<'a> ObservingDispatcher<'a> {
    pub fn new(heuristic: HeuristicId, controlled: &'a ControlSet) -> Self {
        ObservingDispatcher {
            heuristic,
            controlled,
            observed: RunningStats::new(LOT_FEATURES),
        }
    }
}

impl Dispatcher for ObservingDispatcher<'_> {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        if self.controlled.contains(ctx.model.tools[ctx.tool].group) {
            for f in featurize_queue(ctx.model, ctx.state, ctx.tool, ctx.queue) {
                self.observed.push(&f);
            }
        }
        Ok(heuristic_decision(self.heuristic, ctx))
    }
}

pub const CHECKPOINT_FORMAT: u32 = 1;

/// A policy with the normalization it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub architecture: String,
    pub params: PolicyParams,
    pub lot_normalizer: Normalizer,
    #[serde(default)]
    pub fab_normalizer: Option<Normalizer>,
    /// Optimizer iteration at which this checkpoint was written.
    #[serde(default)]
    pub iteration: u64,
}

impl Checkpoint {
    pub fn new(params: PolicyParams, lot_normalizer: Normalizer, fab_normalizer: Option<Normalizer>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT,
            architecture: params.descriptor.to_string(),
            params,
            lot_normalizer,
            fab_normalizer,
            iteration: 0,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint and checks it against the expected architecture.
    pub fn load(path: &Path, expected: Descriptor) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        let want = expected.to_string();
        if ck.architecture != want || ck.params.descriptor != expected {
            return Err(Error::Descriptor {
                expected: want,
                found: ck.architecture,
            });
        }
        if ck.params.len() != expected.param_count() {
            return Err(Error::ParamLength {
                expected: expected.param_count(),
                actual: ck.params.len(),
            });
        }
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn argmax_examples() {
        assert_eq!(select_es(&[0.1, 0.9, 0.3]), 1);
        assert_eq!(select_es(&[0.5, 0.5]), 0);
        assert_eq!(select_es(&[-3.0]), 0);
    }

    #[test]
    fn uniform_scores_uniform_probabilities() {
        let p = softmax(&[1.5; 4]);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn extreme_scores_pick_first() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (i, lp) = select_ppo(&[800.0, -800.0], &mut rng);
            assert_eq!(i, 0);
            assert!(lp.abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_frequencies_match_softmax() {
        // softmax([0, 0, ln 2]) = [1/4, 1/4, 1/2]
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let scores = [0.0, 0.0, 2f64.ln()];
        let mut counts = [0usize; 3];
        for _ in 0..10_000 {
            counts[select_ppo(&scores, &mut rng).0] += 1;
        }
        let expect = [0.25, 0.25, 0.5];
        for (c, e) in counts.iter().zip(expect) {
            assert!((*c as f64 / 10_000.0 - e).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn checkpoint_round_trip_and_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ck = Checkpoint::new(
            PolicyParams::init(Descriptor::ES, &mut rng),
            Normalizer::new(LOT_FEATURES),
            None,
        );
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path, Descriptor::ES).unwrap(), ck);
        let err = Checkpoint::load(&path, Descriptor::PPO).unwrap_err();
        assert!(matches!(err, Error::Descriptor { .. }));
    }
}
