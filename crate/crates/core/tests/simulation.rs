mod common;

use std::sync::Arc;

use fabrl::heuristics::{HeuristicDispatcher, HeuristicId, ModelDefaultDispatcher, Rule};
use fabrl::model::build_minifab;
use fabrl::policy::{ControlSet, Descriptor, Normalizer, PolicyDispatcher, PolicyParams, LOT_FEATURES};
use fabrl::sim::{run_episode, run_episode_with, ReferenceRun, RunStatus, SimOptions, Simulation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn recording() -> SimOptions {
    SimOptions {
        record_decisions: true,
        record_trace: true,
        check_invariants: true,
    }
}

#[test]
fn same_seed_bit_identical_episode() {
    let model = Arc::new(build_minifab(3).compile().unwrap());
    for seed in [0, 7, 42] {
        let mut a = HeuristicDispatcher::new(HeuristicId::Plain(Rule::Srpt));
        let mut b = HeuristicDispatcher::new(HeuristicId::Plain(Rule::Srpt));
        let ra = run_episode_with(&model, &mut a, seed, 600.0, None, recording()).unwrap();
        let rb = run_episode_with(&model, &mut b, seed, 600.0, None, recording()).unwrap();
        assert_eq!(ra, rb);
        assert!(!ra.trace.is_empty() && !ra.decisions.is_empty());
    }
}

#[test]
fn same_seed_bit_identical_policy_episode() {
    let model = Arc::new(build_minifab(0).compile().unwrap());
    let params = PolicyParams::init(Descriptor::ES, &mut ChaCha8Rng::seed_from_u64(5));
    let norm = Normalizer::new(LOT_FEATURES);
    let all = ControlSet::all(&model);
    let fallback = HeuristicId::Plain(Rule::Srpt);
    let mut first = None;
    for _ in 0..2 {
        let mut d = PolicyDispatcher::new(&params, &norm, &all, fallback);
        let r = run_episode_with(&model, &mut d, 11, 400.0, None, recording()).unwrap();
        match &first {
            None => first = Some(r),
            Some(f) => assert_eq!(f, &r),
        }
    }
}

#[test]
fn different_seeds_differ() {
    let model = Arc::new(build_minifab(0).compile().unwrap());
    let mut d = HeuristicDispatcher::new(HeuristicId::Plain(Rule::Fifo));
    let a = run_episode(&model, &mut d, 1, 600.0, None).unwrap();
    let b = run_episode(&model, &mut d, 2, 600.0, None).unwrap();
    assert_ne!(a.kpi, b.kpi);
}

#[test]
fn conservation_on_fuzzed_models() {
    for seed in 0..500 {
        let fab = common::fuzz_model(seed);
        let model = Arc::new(fab.compile().unwrap_or_else(|e| panic!("fuzz model {seed}: {e}")));
        let mut d = ModelDefaultDispatcher;
        let opts = SimOptions {
            check_invariants: true,
            ..Default::default()
        };
        let mut sim = Simulation::new(model.clone(), seed, fab.horizon_hours, None, opts).unwrap();
        let status = sim.run(&mut d).unwrap_or_else(|e| panic!("fuzz model {seed}: {e}"));
        assert_eq!(status, RunStatus::Finished);
        let s = sim.state();
        assert_eq!(
            s.released_lots(),
            s.kpi().completed_lots + s.wip_lots().count() as u64,
            "fuzz model {seed}"
        );
    }
}

#[test]
fn policy_keeps_conservation_on_fuzzed_models() {
    let params = PolicyParams::init(Descriptor::ES, &mut ChaCha8Rng::seed_from_u64(1));
    let norm = Normalizer::new(LOT_FEATURES);
    for seed in 0..100 {
        let fab = common::fuzz_model(seed);
        let model = Arc::new(fab.compile().unwrap());
        let all = ControlSet::all(&model);
        let mut d = PolicyDispatcher::new(&params, &norm, &all, HeuristicId::Plain(Rule::Fifo));
        let opts = SimOptions {
            check_invariants: true,
            ..Default::default()
        };
        run_episode_with(&model, &mut d, seed, fab.horizon_hours, None, opts)
            .unwrap_or_else(|e| panic!("fuzz model {seed}: {e}"));
    }
}

#[test]
fn empty_control_set_reproduces_reference() {
    let model = Arc::new(build_minifab(0).compile().unwrap());
    let srpt = HeuristicId::Plain(Rule::Srpt);
    let mut h = HeuristicDispatcher::new(srpt);
    let reference = run_episode(&model, &mut h, 4, 1200.0, None).unwrap();
    let params = PolicyParams::init(Descriptor::ES, &mut ChaCha8Rng::seed_from_u64(0));
    let norm = Normalizer::new(LOT_FEATURES);
    let none = ControlSet::none(&model);
    let mut d = PolicyDispatcher::new(&params, &norm, &none, srpt);
    let r = run_episode(&model, &mut d, 4, 1200.0, Some(&Arc::new(ReferenceRun::from(&reference)))).unwrap();
    assert_eq!(r.kpi, reference.kpi);
}
