use std::sync::Arc;

use fabrl::harness::{
    cmd_eval, cmd_train, run_es_training, thread_pool, warm_up_normalizer, EsState, ExperimentConfig, Optimizer,
    PolicyEnv, ReferenceCache,
};
use fabrl::heuristics::{HeuristicDispatcher, HeuristicId, Rule};
use fabrl::kpi::CostConfig;
use fabrl::model::build_minifab;
use fabrl::policy::{ControlSet, Descriptor, Normalizer, PolicyParams, LOT_FEATURES};
use fabrl::ppo::{run_ppo_training, PpoConfig, PpoSetup};
use fabrl::sim::{run_episode, ReferenceRun};
use fabrl::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SRPT: HeuristicId = HeuristicId::Plain(Rule::Srpt);

fn minifab() -> Arc<fabrl::model::CompiledModel> {
    Arc::new(build_minifab(0).compile().unwrap())
}

#[test]
fn cached_reference_matches_fresh_run() {
    let model = minifab();
    let cache = ReferenceCache::new(model.clone(), SRPT, 1200.0);
    let cached = cache.get(5).unwrap();
    let again = cache.get(5).unwrap();
    assert!(Arc::ptr_eq(&cached, &again));
    let mut d = HeuristicDispatcher::new(SRPT);
    let fresh = ReferenceRun::from(&run_episode(&model, &mut d, 5, 1200.0, None).unwrap());
    assert_eq!(*cached, fresh);
}

fn es_run(threads: usize, controlled: &[&str], iterations: usize) -> (Vec<f64>, EsState) {
    let model = minifab();
    let controlled = ControlSet::from_ids(&model, controlled).unwrap();
    let cost = CostConfig::default();
    let env = PolicyEnv {
        model: &model,
        controlled: &controlled,
        fallback: SRPT,
        horizon: 600.0,
        cost: &cost,
    };
    let pool = thread_pool(threads).unwrap();
    pool.install(|| {
        let cache = ReferenceCache::new(model.clone(), SRPT, 600.0);
        let seeds = cache.get_many(&[0, 1]).unwrap();
        let norm = warm_up_normalizer(&model, &controlled, SRPT, &[0, 1], 600.0).unwrap();
        let mut state = EsState::new(&Default::default(), norm).unwrap();
        let log = run_es_training(&env, &seeds, &mut state, iterations, |_, _| Ok(())).unwrap();
        (log.iter().map(|r| r.iteration_best_cost).collect(), state)
    })
}

#[test]
fn es_results_independent_of_worker_count() {
    let (a, sa) = es_run(1, &["all"], 3);
    let (b, sb) = es_run(3, &["all"], 3);
    assert_eq!(a, b);
    assert_eq!(sa.cmaes.mean(), sb.cmaes.mean());
    assert_eq!(sa.normalizer, sb.normalizer);
}

#[test]
fn es_log_has_one_row_per_iteration_and_monotone_best() {
    let (_, state) = es_run(1, &["litho"], 0);
    assert_eq!(state.cmaes.iteration(), 0);
    let model = minifab();
    let controlled = ControlSet::from_ids(&model, &["litho"]).unwrap();
    let cost = CostConfig::default();
    let env = PolicyEnv {
        model: &model,
        controlled: &controlled,
        fallback: SRPT,
        horizon: 1200.0,
        cost: &cost,
    };
    let cache = ReferenceCache::new(model.clone(), SRPT, 1200.0);
    let seeds = cache.get_many(&[0]).unwrap();
    let mut state = EsState::new(&Default::default(), Normalizer::new(LOT_FEATURES)).unwrap();
    let log = run_es_training(&env, &seeds, &mut state, 40, |_, _| Ok(())).unwrap();
    assert_eq!(log.len(), 40);
    assert!(log.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
    assert!(state.best.is_some());
}

#[test]
fn empty_control_set_costs_one() {
    let (costs, _) = es_run(1, &[], 2);
    assert!(costs.iter().all(|&c| (c - 1.0).abs() < 1e-12), "{costs:?}");
}

fn ppo_setup(controlled: &[&str]) -> PpoSetup {
    let model = minifab();
    let controlled = ControlSet::from_ids(&model, controlled).unwrap();
    let cache = ReferenceCache::new(model.clone(), SRPT, 300.0);
    PpoSetup {
        seeds: cache.get_many(&[0]).unwrap(),
        model,
        controlled,
        fallback: SRPT,
        horizon: 300.0,
        lot_normalizer: Normalizer::new(LOT_FEATURES),
    }
}

#[test]
fn ppo_rejects_batch_tool_control() {
    let err = run_ppo_training(&ppo_setup(&["diffusion"]), &PpoConfig::default()).err().unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn ppo_zero_epochs_leave_parameters_unchanged() {
    let cfg = PpoConfig {
        epochs: 0,
        episodes: 2,
        seed: 3,
        ..Default::default()
    };
    let out = run_ppo_training(&ppo_setup(&["litho"]), &cfg).unwrap();
    let init = PolicyParams::init(Descriptor::PPO, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(out.checkpoint.params, init);
    assert_eq!(out.log.len(), 2);
}

#[test]
fn ppo_truncated_mode_runs_and_is_reproducible() {
    let cfg = PpoConfig {
        complete_episodes: false,
        rollouts_per_update: 2,
        workers: 2,
        episodes: 1,
        ..Default::default()
    };
    let a = run_ppo_training(&ppo_setup(&["litho"]), &cfg).unwrap();
    let b = run_ppo_training(&ppo_setup(&["litho"]), &cfg).unwrap();
    assert_eq!(a.log.len(), 2);
    assert!(a.checkpoint.iteration > 2, "several updates per episode");
    assert_eq!(a.checkpoint.params, b.checkpoint.params);
}

#[test]
fn ppo_capacity_exceeded_is_an_error() {
    let cfg = PpoConfig {
        capacity: 100,
        episodes: 1,
        ..Default::default()
    };
    let err = run_ppo_training(&ppo_setup(&["litho"]), &cfg).err().unwrap();
    assert!(matches!(err, Error::Capacity { .. }), "{err}");
}

#[test]
fn train_resume_and_eval_round_trip() -> Result<()> {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        controlled: vec!["litho".into()],
        horizon_days: 10.0,
        test_seeds: vec![9],
        output: Some(dir.path().to_path_buf()),
        workers: Some(1),
        ..Default::default()
    };
    cfg.es.iterations = 3;
    let first = cmd_train(&cfg)?;
    assert_eq!(first.es_log.len(), 3);
    for f in ["config.toml", "references.csv", "train_log.csv", "best.json", "es_state.json", "plot.py"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let echoed = ExperimentConfig::load(&dir.path().join("config.toml"))?;
    assert_eq!(echoed, cfg);

    cfg.es.iterations = 5;
    cfg.resume = Some(dir.path().join("es_state.json"));
    let resumed = cmd_train(&cfg)?;
    let iters: Vec<u64> = resumed.es_log.iter().map(|r| r.iteration).collect();
    assert_eq!(iters, vec![1, 2, 3, 4, 5]);

    let rows = cmd_eval(&resumed.best, &cfg)?;
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].split, "train");
    assert_eq!(rows[1].split, "test");

    cfg.optimizer = Optimizer::Ppo;
    assert!(matches!(cmd_eval(&resumed.best, &cfg), Err(Error::Descriptor { .. })));
    cfg.optimizer = Optimizer::Cmaes;
    cfg.test_seeds.clear();
    assert!(cmd_eval(&resumed.best, &cfg).is_err());
    Ok(())
}

#[test]
fn ppo_train_via_harness_rejects_batch_tools() {
    let cfg = ExperimentConfig {
        optimizer: Optimizer::Ppo,
        controlled: vec!["all".into()],
        horizon_days: 5.0,
        output: Some(tempfile::tempdir().unwrap().path().to_path_buf()),
        ..Default::default()
    };
    assert!(matches!(cmd_train(&cfg), Err(Error::Config(_))));
}
