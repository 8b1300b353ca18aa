#![allow(dead_code)]

use std::collections::BTreeMap;

use fabrl::heuristics::{HeuristicId, Rule};
use fabrl::model::{
    BatchRule, FabModel, Priority, Product, Release, Route, SetupChange, Step, Tool, ToolGroup,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A small random model exercising batching, setups, dedication, time
/// constraints and priorities.
pub fn fuzz_model(seed: u64) -> FabModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_groups = rng.gen_range(1..=4);
    let rules = Rule::ALL;
    let mut tool_groups = Vec::new();
    for g in 0..n_groups {
        let n_tools = rng.gen_range(1..=3);
        let batching = (rng.gen_bool(0.3)).then(|| {
            let max_size = rng.gen_range(2..=4);
            BatchRule {
                max_size,
                min_size: rng.gen_range(1..=max_size),
                families: Vec::new(),
            }
        });
        let dispatch = if rng.gen_bool(0.5) {
            HeuristicId::Plain(rules[rng.gen_range(0..5)])
        } else {
            HeuristicId::Hier(rules[rng.gen_range(0..5)])
        };
        let tools = (0..n_tools)
            .map(|t| Tool {
                id: format!("g{g}t{t}"),
                mtbf_hours: rng.gen_range(20.0..200.0),
                mttr_hours: rng.gen_range(0.0..8.0),
                setup: None,
                setup_changes: vec![
                    SetupChange {
                        from: "*".into(),
                        to: "s0".into(),
                        hours: rng.gen_range(0.0..1.0),
                    },
                    SetupChange {
                        from: "*".into(),
                        to: "s1".into(),
                        hours: rng.gen_range(0.0..1.0),
                    },
                ],
            })
            .collect();
        tool_groups.push(ToolGroup {
            id: format!("g{g}"),
            dispatch,
            batching,
            tools,
        });
    }

    let n_products = rng.gen_range(1..=3);
    let mut products = Vec::new();
    let mut routes = BTreeMap::new();
    let mut releases = Vec::new();
    for p in 0..n_products {
        let n_steps = rng.gen_range(1..=6);
        let mut steps = Vec::new();
        for s in 0..n_steps {
            let g = &tool_groups[rng.gen_range(0..n_groups)];
            let mut times = BTreeMap::new();
            for t in &g.tools {
                if times.is_empty() || rng.gen_bool(0.7) {
                    times.insert(t.id.clone(), rng.gen_range(0.1..3.0));
                }
            }
            steps.push(Step {
                tool_group: g.id.clone(),
                processing_time_hours: times,
                setup: rng.gen_bool(0.3).then(|| format!("s{}", rng.gen_range(0..2))),
                batch_eligible: g.batching.is_some() && rng.gen_bool(0.7),
                time_constraint_hours: (s > 0 && rng.gen_bool(0.2)).then(|| rng.gen_range(0.5..10.0)),
            });
        }
        let id = format!("p{p}");
        routes.insert(format!("r{p}"), Route { steps });
        products.push(Product {
            id: id.clone(),
            route: format!("r{p}"),
        });
        releases.push(Release {
            product: id.clone(),
            at_hours: rng.gen_range(0.0..5.0),
            priority: [Priority::Regular, Priority::Hot, Priority::SuperHot][rng.gen_range(0..3)],
            wafers: rng.gen_range(1..=25),
            every_hours: Some(rng.gen_range(1.0..12.0)),
            until_hours: None,
        });
    }
    FabModel {
        name: format!("fuzz{seed}"),
        horizon_hours: rng.gen_range(24.0..200.0),
        products,
        tool_groups,
        routes,
        releases,
    }
}

/// Random feature rows with occasional duplicates.
pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, width: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..width).map(|_| rng.gen_range(-3.0..3.0)).collect())
        .collect();
    if n > 1 && rng.gen_bool(0.2) {
        rows[n - 1] = rows[0].clone();
    }
    rows
}
