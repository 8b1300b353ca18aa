//! Experiment orchestration: configuration, reference runs, ES training,
//! baselines, evaluation on held-out seeds and scenarios, and timing.
//!
//! All CSV files start with a `# fabrl <kind> v<version>` comment line
//! followed by a header row.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cmaes::{Cmaes, CmaesConfig};
use crate::error::{Error, Result};
use crate::heuristics::{HeuristicDispatcher, HeuristicId, Rule};
use crate::kpi::{episode_cost, throughput_improvement_pct, tardiness_improvement_pct, CostConfig, EpisodeKpis};
use crate::model::{build_midifab, build_minifab, load_model, CompiledModel, FabModel, HOURS_PER_DAY};
use crate::policy::{
    Checkpoint, ControlSet, Descriptor, Normalizer, ObservingDispatcher, PolicyDispatcher, PolicyParams, RunningStats,
    LOT_FEATURES,
};
use crate::ppo::{run_ppo_training, PpoConfig, PpoEpisodeLog, PpoSetup};
use crate::sim::{run_episode, ReferenceRun};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FABRL_OUTPUT";
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// `$FABRL_OUTPUT`, or `runs` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Cmaes,
    Ppo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    pub iterations: usize,
    #[serde(flatten)]
    pub cmaes: CmaesConfig,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig {
            iterations: 200,
            cmaes: CmaesConfig::default(),
        }
    }
}

/// A variation of the base model used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Model source; the experiment's model when absent.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub horizon_days: Option<f64>,
    /// Multiplies every periodic release rate.
    #[serde(default = "unit")]
    pub load: f64,
    /// Whether training used this scenario.
    #[serde(default)]
    pub trained: bool,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    /// `builtin:minifab`, `builtin:midifab` or a model file path.
    pub model: String,
    /// Seed of the Minifab processing-time draw.
    pub model_seed: u64,
    pub baseline: HeuristicId,
    /// Tool group ids, or `["all"]`.
    pub controlled: Vec<String>,
    pub optimizer: Optimizer,
    pub es: EsConfig,
    pub ppo: PpoConfig,
    pub cost: CostConfig,
    pub train_seeds: Vec<u64>,
    pub test_seeds: Vec<u64>,
    pub scenarios: Vec<Scenario>,
    pub horizon_days: f64,
    pub output: Option<PathBuf>,
    /// Thread count; all CPUs when absent.
    pub workers: Option<usize>,
    /// ES state file to resume from.
    pub resume: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "run".into(),
            model: "builtin:minifab".into(),
            model_seed: 0,
            baseline: HeuristicId::Plain(Rule::Srpt),
            controlled: vec!["all".into()],
            optimizer: Optimizer::Cmaes,
            es: EsConfig::default(),
            ppo: PpoConfig::default(),
            cost: CostConfig::default(),
            train_seeds: vec![0],
            test_seeds: vec![100, 101, 102, 103, 104],
            scenarios: Vec::new(),
            horizon_days: 50.0,
            output: None,
            workers: None,
            resume: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if let Some(s) = self.test_seeds.iter().find(|s| self.train_seeds.contains(s)) {
            return Err(Error::Config(format!("seed {s} is in both training and test sets")));
        }
        if !(self.horizon_days > 0.0) {
            return Err(Error::Config("horizon_days must be positive".into()));
        }
        self.es.cmaes.validate()?;
        self.ppo.validate()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon_days * HOURS_PER_DAY
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| output_root().join(&self.name))
    }

    pub fn fab_model(&self) -> Result<FabModel> {
        load_model_source(&self.model, self.model_seed)
    }

    pub fn compiled_model(&self) -> Result<Arc<CompiledModel>> {
        Ok(Arc::new(self.fab_model()?.compile()?))
    }

    pub fn thread_pool(&self) -> Result<rayon::ThreadPool> {
        thread_pool(self.workers.unwrap_or_else(num_cpus))
    }
}

pub fn num_cpus() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Resolves `builtin:minifab`, `builtin:midifab` or a file path.
pub fn load_model_source(source: &str, seed: u64) -> Result<FabModel> {
    match source {
        "builtin:minifab" | "minifab" => Ok(build_minifab(seed)),
        "builtin:midifab" | "midifab" => Ok(build_midifab()),
        path => load_model(path),
    }
}

impl Scenario {
    pub fn build(&self, base: &ExperimentConfig) -> Result<(Arc<CompiledModel>, f64)> {
        let mut model = match &self.model {
            Some(src) => load_model_source(src, base.model_seed)?,
            None => base.fab_model()?,
        };
        if !(self.load > 0.0) {
            return Err(Error::Config(format!("scenario `{}`: load must be positive", self.name)));
        }
        for r in model.releases.iter_mut() {
            if let Some(every) = r.every_hours.as_mut() {
                *every /= self.load;
            }
        }
        let horizon = self.horizon_days.unwrap_or(base.horizon_days) * HOURS_PER_DAY;
        Ok((Arc::new(model.compile()?), horizon))
    }
}

/// Reference runs of one model under the baseline heuristic, keyed by seed.
pub struct ReferenceCache {
    model: Arc<CompiledModel>,
    heuristic: HeuristicId,
    horizon: f64,
    runs: Mutex<BTreeMap<u64, Arc<ReferenceRun>>>,
}

impl ReferenceCache {
    pub fn new(model: Arc<CompiledModel>, heuristic: HeuristicId, horizon: f64) -> Self {
        ReferenceCache {
            model,
            heuristic,
            horizon,
            runs: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn get(&self, seed: u64) -> Result<Arc<ReferenceRun>> {
        if let Some(r) = self.runs.lock().unwrap().get(&seed) {
            return Ok(r.clone());
        }
        let mut d = HeuristicDispatcher::new(self.heuristic);
        let result = run_episode(&self.model, &mut d, seed, self.horizon, None)?;
        let run = Arc::new(ReferenceRun::from(&result));
        Ok(self.runs.lock().unwrap().entry(seed).or_insert(run).clone())
    }

    /// Runs missing seeds in parallel on the ambient pool.
    pub fn get_many(&self, seeds: &[u64]) -> Result<Vec<(u64, Arc<ReferenceRun>)>> {
        seeds.par_iter().map(|&s| Ok((s, self.get(s)?))).collect()
    }
}

/// Lot-feature statistics at controlled tools under a heuristic.
pub fn warm_up_normalizer(
    model: &Arc<CompiledModel>,
    controlled: &ControlSet,
    heuristic: HeuristicId,
    seeds: &[u64],
    horizon: f64,
) -> Result<Normalizer> {
    let stats: Vec<RunningStats> = seeds
        .par_iter()
        .map(|&s| {
            let mut d = ObservingDispatcher::new(heuristic, controlled);
            run_episode(model, &mut d, s, horizon, None)?;
            Ok(d.observed)
        })
        .collect::<Result<_>>()?;
    let mut n = Normalizer::new(LOT_FEATURES);
    for s in &stats {
        n.merge(s);
    }
    Ok(n)
}

/// One policy episode scored against its reference run.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub seed: u64,
    pub cost: f64,
    pub kpi: EpisodeKpis,
    pub reference: EpisodeKpis,
    pub observed: RunningStats,
}

impl Evaluation {
    pub fn tardiness_pct(&self) -> f64 {
        tardiness_improvement_pct(self.kpi.tardiness(), self.reference.tardiness())
    }

    pub fn throughput_pct(&self) -> f64 {
        throughput_improvement_pct(self.kpi.tp, self.reference.tp)
    }
}

/// What a policy episode needs besides the parameters.
pub struct PolicyEnv<'a> {
    pub model: &'a Arc<CompiledModel>,
    pub controlled: &'a ControlSet,
    pub fallback: HeuristicId,
    pub horizon: f64,
    pub cost: &'a CostConfig,
}

impl PolicyEnv<'_> {
    pub fn evaluate(
        &self,
        params: &PolicyParams,
        normalizer: &Normalizer,
        seed: u64,
        reference: &Arc<ReferenceRun>,
    ) -> Result<Evaluation> {
        let mut d = PolicyDispatcher::new(params, normalizer, self.controlled, self.fallback);
        let result = run_episode(self.model, &mut d, seed, self.horizon, Some(reference))?;
        Ok(Evaluation {
            seed,
            cost: episode_cost(&result.kpi, &reference.kpi, self.cost)?,
            kpi: result.kpi,
            reference: reference.kpi,
            observed: d.observed,
        })
    }
}

/// One ES iteration, as logged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsLogRow {
    pub iteration: u64,
    pub best_cost: f64,
    pub mean_cost: f64,
    pub iteration_best_cost: f64,
    /// Of the iteration's best candidate, averaged over training seeds.
    pub tardiness_pct: f64,
    pub throughput_pct: f64,
    pub sigma: f64,
    pub seconds: f64,
}

/// Resumable ES training state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EsState {
    pub cmaes: Cmaes,
    pub normalizer: Normalizer,
    pub best: Option<Checkpoint>,
    pub best_cost: f64,
}

impl EsState {
    pub fn new(cfg: &CmaesConfig, normalizer: Normalizer) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = PolicyParams::init(Descriptor::ES, &mut rng);
        Ok(EsState {
            cmaes: Cmaes::new(init.flatten(), *cfg)?,
            normalizer,
            best: None,
            best_cost: f64::INFINITY,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs `iterations` ES iterations on the ambient pool. Every candidate is
/// scored by the mean cost over `seeds`.
///
/// The lot normalizer is frozen within an iteration and afterwards absorbs
/// the features observed by all candidates, merged in candidate order. The
/// best checkpoint keeps the normalizer its parameters were scored with.
pub fn run_es_training(
    env: &PolicyEnv<'_>,
    seeds: &[(u64, Arc<ReferenceRun>)],
    state: &mut EsState,
    iterations: usize,
    mut on_iteration: impl FnMut(&EsLogRow, &EsState) -> Result<()>,
) -> Result<Vec<EsLogRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("es training needs at least one seed".into()));
    }
    let mut log = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        let frozen = state.normalizer.frozen_copy();
        let population = state.cmaes.ask();
        let jobs: Vec<(usize, usize)> = (0..population.len())
            .flat_map(|c| (0..seeds.len()).map(move |s| (c, s)))
            .collect();
        let evals: Vec<Evaluation> = jobs
            .par_iter()
            .map(|&(c, s)| {
                let params = PolicyParams::unflatten(Descriptor::ES, population[c].clone())?;
                env.evaluate(&params, &frozen, seeds[s].0, &seeds[s].1)
            })
            .collect::<Result<_>>()?;

        let n_seeds = seeds.len() as f64;
        let mut costs = vec![0.0; population.len()];
        let mut td = vec![0.0; population.len()];
        let mut tp = vec![0.0; population.len()];
        for (&(c, _), e) in jobs.iter().zip(&evals) {
            costs[c] += e.cost / n_seeds;
            td[c] += e.tardiness_pct() / n_seeds;
            tp[c] += e.throughput_pct() / n_seeds;
            state.normalizer.merge(&e.observed);
        }
        state.cmaes.tell(&costs)?;

        let finite: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
        let mean_cost = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let ib = (0..costs.len()).fold(0, |b, i| if costs[i] < costs[b] { i } else { b });
        if costs[ib] < state.best_cost {
            state.best_cost = costs[ib];
            let params = PolicyParams::unflatten(Descriptor::ES, population[ib].clone())?;
            let mut ck = Checkpoint::new(params, frozen, None);
            ck.iteration = state.cmaes.iteration();
            state.best = Some(ck);
        }
        let row = EsLogRow {
            iteration: state.cmaes.iteration(),
            best_cost: state.best_cost,
            mean_cost,
            iteration_best_cost: costs[ib],
            tardiness_pct: td[ib],
            throughput_pct: tp[ib],
            sigma: state.cmaes.sigma(),
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!(
            "es iteration {}: best {:.4}, mean {:.4}, tardiness {:+.2}%, throughput {:+.2}%",
            row.iteration,
            row.best_cost,
            row.mean_cost,
            row.tardiness_pct,
            row.throughput_pct
        );
        on_iteration(&row, state)?;
        log.push(row);
    }
    Ok(log)
}

/// Writes a versioned CSV: comment line, header, rows.
pub fn write_csv<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "# fabrl {kind} v{CSV_SCHEMA_VERSION}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by [`write_csv`].
pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median of a slice; NaN when empty.
pub fn median_of(values: &[f64]) -> f64 {
    median(&mut values.to_vec())
}

/// One heuristic on one seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRun {
    pub heuristic: HeuristicId,
    pub seed: u64,
    pub tardiness: f64,
    pub td_out: f64,
    pub td_in: f64,
    pub completed_wafers: f64,
    pub completed_lots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub heuristic: HeuristicId,
    pub median_tardiness: f64,
    pub median_wafers: f64,
    /// Percent of the highest median tardiness.
    pub tardiness_norm: f64,
    /// Percent of the highest median completed wafers.
    pub wafers_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineTable {
    pub runs: Vec<BaselineRun>,
    pub summary: Vec<BaselineSummary>,
}

impl BaselineTable {
    pub fn row(&self, h: HeuristicId) -> Option<&BaselineSummary> {
        self.summary.iter().find(|s| s.heuristic == h)
    }
}

/// The five plain rules.
pub fn plain_heuristics() -> Vec<HeuristicId> {
    Rule::ALL.into_iter().map(HeuristicId::Plain).collect()
}

/// The hierarchical composite with each tie-break.
pub fn hier_heuristics() -> Vec<HeuristicId> {
    Rule::ALL.into_iter().map(HeuristicId::Hier).collect()
}

/// Runs every heuristic on every seed, on the ambient pool.
pub fn cmd_baseline(
    model: &Arc<CompiledModel>,
    heuristics: &[HeuristicId],
    seeds: &[u64],
    horizon: f64,
) -> Result<BaselineTable> {
    let jobs: Vec<(HeuristicId, u64)> = heuristics
        .iter()
        .flat_map(|&h| seeds.iter().map(move |&s| (h, s)))
        .collect();
    let runs: Vec<BaselineRun> = jobs
        .par_iter()
        .map(|&(h, s)| {
            let mut d = HeuristicDispatcher::new(h);
            let r = run_episode(model, &mut d, s, horizon, None)?;
            Ok(BaselineRun {
                heuristic: h,
                seed: s,
                tardiness: r.kpi.tardiness(),
                td_out: r.kpi.td_out,
                td_in: r.kpi.td_in,
                completed_wafers: r.kpi.tp,
                completed_lots: r.kpi.completed_lots,
            })
        })
        .collect::<Result<_>>()?;
    let mut summary: Vec<BaselineSummary> = heuristics
        .iter()
        .map(|&h| {
            let of = |f: fn(&BaselineRun) -> f64| {
                let v: Vec<f64> = runs.iter().filter(|r| r.heuristic == h).map(f).collect();
                median_of(&v)
            };
            BaselineSummary {
                heuristic: h,
                median_tardiness: of(|r| r.tardiness),
                median_wafers: of(|r| r.completed_wafers),
                tardiness_norm: 0.0,
                wafers_norm: 0.0,
            }
        })
        .collect();
    let max_td = summary.iter().map(|s| s.median_tardiness).fold(0.0, f64::max);
    let max_wf = summary.iter().map(|s| s.median_wafers).fold(0.0, f64::max);
    for s in summary.iter_mut() {
        s.tardiness_norm = if max_td > 0.0 { 100.0 * s.median_tardiness / max_td } else { 0.0 };
        s.wafers_norm = if max_wf > 0.0 { 100.0 * s.median_wafers / max_wf } else { 0.0 };
    }
    Ok(BaselineTable { runs, summary })
}

/// Files written by [`cmd_train`].
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub dir: PathBuf,
    pub best: Checkpoint,
    pub es_log: Vec<EsLogRow>,
    pub ppo_log: Vec<PpoEpisodeLog>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct ReferenceRow {
    seed: u64,
    td_out: f64,
    td_in: f64,
    tp: f64,
    completed_lots: u64,
}

/// Reference runs, then ES or PPO training. Writes the config echo,
/// references, training log, best checkpoint and a plot script under the
/// run directory.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;

    let model = cfg.compiled_model()?;
    let controlled = ControlSet::from_ids(&model, &cfg.controlled)?;
    let horizon = cfg.horizon();
    let pool = cfg.thread_pool()?;
    pool.install(|| {
        let cache = ReferenceCache::new(model.clone(), cfg.baseline, horizon);
        let seeds = cache.get_many(&cfg.train_seeds)?;
        let rows: Vec<ReferenceRow> = seeds
            .iter()
            .map(|(s, r)| ReferenceRow {
                seed: *s,
                td_out: r.kpi.td_out,
                td_in: r.kpi.td_in,
                tp: r.kpi.tp,
                completed_lots: r.kpi.completed_lots,
            })
            .collect();
        write_csv(&dir.join("references.csv"), "references", &rows)?;
        let normalizer = warm_up_normalizer(&model, &controlled, cfg.baseline, &cfg.train_seeds, horizon)?;

        match cfg.optimizer {
            Optimizer::Cmaes => {
                let env = PolicyEnv {
                    model: &model,
                    controlled: &controlled,
                    fallback: cfg.baseline,
                    horizon,
                    cost: &cfg.cost,
                };
                let mut state = match &cfg.resume {
                    Some(path) => EsState::load(path)?,
                    None => EsState::new(&cfg.es.cmaes, normalizer)?,
                };
                let log_path = dir.join("train_log.csv");
                let mut log: Vec<EsLogRow> = match &cfg.resume {
                    Some(_) if log_path.exists() => read_csv(&log_path)?,
                    _ => Vec::new(),
                };
                log.retain(|r| r.iteration <= state.cmaes.iteration());
                let done = state.cmaes.iteration() as usize;
                let remaining = cfg.es.iterations.saturating_sub(done);
                let state_path = dir.join("es_state.json");
                let new_rows = run_es_training(&env, &seeds, &mut state, remaining, |_, st| {
                    if st.cmaes.iteration() % 10 == 0 {
                        st.save(&state_path)?;
                    }
                    Ok(())
                })?;
                log.extend(new_rows);
                state.save(&state_path)?;
                write_csv(&log_path, "es-train", &log)?;
                let best = state
                    .best
                    .clone()
                    .ok_or_else(|| Error::Config("es training ran zero iterations".into()))?;
                best.save(&dir.join("best.json"))?;
                write_plot_script(&dir, "train_log.csv", "iteration")?;
                Ok(TrainArtifacts {
                    dir: dir.clone(),
                    best,
                    es_log: log,
                    ppo_log: Vec::new(),
                })
            }
            Optimizer::Ppo => {
                let setup = PpoSetup {
                    model: model.clone(),
                    controlled: controlled.clone(),
                    fallback: cfg.baseline,
                    horizon,
                    seeds,
                    lot_normalizer: normalizer,
                };
                let outcome = run_ppo_training(&setup, &cfg.ppo)?;
                write_csv(&dir.join("train_log.csv"), "ppo-train", &outcome.log)?;
                outcome.checkpoint.save(&dir.join("best.json"))?;
                write_plot_script(&dir, "train_log.csv", "episode")?;
                Ok(TrainArtifacts {
                    dir: dir.clone(),
                    best: outcome.checkpoint,
                    es_log: Vec::new(),
                    ppo_log: outcome.log,
                })
            }
        }
    })
}

fn write_plot_script(dir: &Path, csv: &str, x: &str) -> Result<()> {
    let script = format!(
        "import pandas as pd\nimport matplotlib.pyplot as plt\n\n\
         df = pd.read_csv(\"{csv}\", comment=\"#\")\n\
         ax = df.plot(x=\"{x}\", y=[\"tardiness_pct\", \"throughput_pct\"])\n\
         ax.set_ylabel(\"improvement vs reference [%]\")\n\
         plt.savefig(\"{stem}.png\", dpi=150)\n",
        stem = csv.trim_end_matches(".csv")
    );
    let path = dir.join("plot.py");
    std::fs::write(&path, script).map_err(|e| Error::io(&path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub scenario: String,
    pub seed: u64,
    /// `train` when both the seed and the scenario were used in training.
    pub split: String,
    pub tardiness_pct: f64,
    pub throughput_pct: f64,
    pub cost: f64,
}

/// Runs a frozen checkpoint over training and test seeds on every scenario.
/// Without configured scenarios the experiment's model and horizon form a
/// single trained scenario.
pub fn cmd_eval(checkpoint: &Checkpoint, cfg: &ExperimentConfig) -> Result<Vec<EvalRow>> {
    cfg.validate()?;
    if cfg.test_seeds.is_empty() {
        return Err(Error::Config("evaluation needs at least one test seed".into()));
    }
    let expected = match cfg.optimizer {
        Optimizer::Cmaes => Descriptor::ES,
        Optimizer::Ppo => Descriptor::PPO,
    };
    if checkpoint.params.descriptor != expected {
        return Err(Error::Descriptor {
            expected: expected.to_string(),
            found: checkpoint.architecture.clone(),
        });
    }
    let scenarios = if cfg.scenarios.is_empty() {
        vec![Scenario {
            name: "base".into(),
            model: None,
            horizon_days: None,
            load: 1.0,
            trained: true,
        }]
    } else {
        cfg.scenarios.clone()
    };
    let seeds: Vec<u64> = cfg.train_seeds.iter().chain(&cfg.test_seeds).copied().collect();
    let pool = cfg.thread_pool()?;
    let mut rows = Vec::new();
    for sc in &scenarios {
        let (model, horizon) = sc.build(cfg)?;
        let controlled = ControlSet::from_ids(&model, &cfg.controlled)?;
        let env = PolicyEnv {
            model: &model,
            controlled: &controlled,
            fallback: cfg.baseline,
            horizon,
            cost: &cfg.cost,
        };
        let evals: Vec<Evaluation> = pool.install(|| {
            let cache = ReferenceCache::new(model.clone(), cfg.baseline, horizon);
            seeds
                .par_iter()
                .map(|&s| env.evaluate(&checkpoint.params, &checkpoint.lot_normalizer, s, &cache.get(s)?))
                .collect::<Result<_>>()
        })?;
        for e in evals {
            let train = sc.trained && cfg.train_seeds.contains(&e.seed);
            rows.push(EvalRow {
                scenario: sc.name.clone(),
                seed: e.seed,
                split: if train { "train" } else { "test" }.into(),
                tardiness_pct: e.tardiness_pct(),
                throughput_pct: e.throughput_pct(),
                cost: e.cost,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub model: String,
    pub controlled: String,
    pub controlled_tool_share: f64,
    pub workers: usize,
    pub iterations: usize,
    pub episodes: usize,
    pub total_seconds: f64,
    pub seconds_per_iteration: f64,
    pub seconds_per_episode: f64,
}

/// Wall-clock of `iterations` ES iterations for every worker count and
/// controlled-group set. Zero iterations yield an empty report.
pub fn cmd_timing(
    cfg: &ExperimentConfig,
    worker_counts: &[usize],
    control_sets: &[Vec<String>],
    iterations: usize,
) -> Result<Vec<TimingRow>> {
    if iterations == 0 {
        return Ok(Vec::new());
    }
    let model = cfg.compiled_model()?;
    let horizon = cfg.horizon();
    let cache = ReferenceCache::new(model.clone(), cfg.baseline, horizon);
    let seeds = cache.get_many(&cfg.train_seeds)?;
    let mut rows = Vec::new();
    for set in control_sets {
        let controlled = ControlSet::from_ids(&model, set)?;
        let normalizer = warm_up_normalizer(&model, &controlled, cfg.baseline, &cfg.train_seeds, horizon)?;
        let env = PolicyEnv {
            model: &model,
            controlled: &controlled,
            fallback: cfg.baseline,
            horizon,
            cost: &cfg.cost,
        };
        for &w in worker_counts {
            let pool = thread_pool(w)?;
            let mut state = EsState::new(&cfg.es.cmaes, normalizer.clone())?;
            let start = Instant::now();
            pool.install(|| run_es_training(&env, &seeds, &mut state, iterations, |_, _| Ok(())))?;
            let total = start.elapsed().as_secs_f64();
            let episodes = iterations * cfg.es.cmaes.population * seeds.len();
            rows.push(TimingRow {
                model: model.name.clone(),
                controlled: set.join("+"),
                controlled_tool_share: controlled.tool_share(&model),
                workers: w,
                iterations,
                episodes,
                total_seconds: total,
                seconds_per_iteration: total / iterations as f64,
                seconds_per_episode: total * w as f64 / episodes as f64,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overlapping_seed_sets_rejected() {
        let cfg = ExperimentConfig {
            train_seeds: vec![1, 2],
            test_seeds: vec![2],
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn zero_workers_rejected() {
        let cfg = ExperimentConfig {
            workers: Some(0),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(median_of(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median_of(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median_of(&[]).is_nan());
    }

    #[test]
    fn csv_round_trip_skips_version_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let rows = vec![EsLogRow {
            iteration: 1,
            best_cost: 0.9,
            mean_cost: 1.1,
            iteration_best_cost: 0.9,
            tardiness_pct: 3.0,
            throughput_pct: 0.5,
            sigma: 0.4,
            seconds: 0.01,
        }];
        write_csv(&path, "es-train", &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# fabrl es-train v1\n"));
        assert_eq!(read_csv::<EsLogRow>(&path).unwrap(), rows);
    }

    #[test]
    fn single_heuristic_one_row() {
        let model = Arc::new(build_minifab(0).compile().unwrap());
        let t = cmd_baseline(&model, &[HeuristicId::Plain(Rule::Fifo)], &[0], 240.0).unwrap();
        assert_eq!(t.summary.len(), 1);
        assert_eq!(t.summary[0].wafers_norm, 100.0);
    }

    #[test]
    fn zero_iterations_empty_timing() {
        let cfg = ExperimentConfig::default();
        assert!(cmd_timing(&cfg, &[1], &[vec!["all".into()]], 0).unwrap().is_empty());
    }
}
