use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{parse_model, BatchRule, FabModel, Product, Release, Route, Step, Tool, ToolGroup, HOURS_PER_DAY};
use crate::heuristics::{HeuristicId, Rule};

/// (tool group, base hours) for the six Minifab steps.
const ROUTE: [(&str, f64); 6] = [
    ("diffusion", 1.2),
    ("implant", 1.8),
    ("litho", 0.85),
    ("diffusion", 1.4),
    ("implant", 2.05),
    ("litho", 0.45),
];

/// (product id, release interval hours, wafers per lot).
const PRODUCTS: [(&str, f64, u32); 3] = [("pa", 4.35, 25), ("pb", 5.3, 25), ("tw", 12.3, 12)];

/// Relative per-product, per-tool processing-time variation.
const TIME_SPREAD: f64 = 0.4;

/// Builds the five-tool, three-group Minifab with product-dependent
/// processing times drawn from `seed`.
///
/// Implant and diffusion tools are shared by all products; product `tw` is
/// dedicated to the first implant tool at its first implant step.
pub fn build_minifab(seed: u64) -> FabModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tool_groups = vec![
        group("implant", &["imp_c", "imp_d"], 150.0, 4.0, None),
        group("litho", &["litho_e"], 115.0, 3.0, None),
        group(
            "diffusion",
            &["diff_a", "diff_b"],
            230.0,
            6.0,
            Some(BatchRule {
                max_size: 3,
                min_size: 1,
                families: Vec::new(),
            }),
        ),
    ];

    let mut routes = BTreeMap::new();
    let mut products = Vec::new();
    let mut releases = Vec::new();
    for (pi, &(pid, every, wafers)) in PRODUCTS.iter().enumerate() {
        let product_factor = 1.0 + rng.gen_range(-TIME_SPREAD..=TIME_SPREAD) * 0.5;
        let steps = ROUTE
            .iter()
            .enumerate()
            .map(|(si, &(g, base))| {
                let group = tool_groups.iter().find(|tg| tg.id == g).unwrap();
                let mut times = BTreeMap::new();
                for t in &group.tools {
                    if pid == "tw" && si == 1 && t.id == "imp_d" {
                        continue;
                    }
                    let tool_factor = 1.0 + rng.gen_range(-TIME_SPREAD..=TIME_SPREAD) * 0.5;
                    let h = base * product_factor * tool_factor;
                    times.insert(t.id.clone(), (h * 1e4).round() / 1e4);
                }
                Step {
                    tool_group: g.to_string(),
                    processing_time_hours: times,
                    setup: None,
                    batch_eligible: g == "diffusion",
                    time_constraint_hours: None,
                }
            })
            .collect();
        routes.insert(format!("r_{pid}"), Route { steps });
        products.push(Product {
            id: pid.to_string(),
            route: format!("r_{pid}"),
        });
        releases.push(Release {
            product: pid.to_string(),
            at_hours: pi as f64 * 0.5,
            priority: Default::default(),
            wafers,
            every_hours: Some(every),
            until_hours: None,
        });
    }

    FabModel {
        name: "minifab".into(),
        horizon_hours: 50.0 * HOURS_PER_DAY,
        products,
        tool_groups,
        routes,
        releases,
    }
}

fn group(id: &str, tools: &[&str], mtbf: f64, mttr: f64, batching: Option<BatchRule>) -> ToolGroup {
    ToolGroup {
        id: id.into(),
        dispatch: HeuristicId::Plain(Rule::Srpt),
        batching,
        tools: tools
            .iter()
            .map(|t| Tool {
                id: t.to_string(),
                mtbf_hours: mtbf,
                mttr_hours: mttr,
                setup: None,
                setup_changes: Vec::new(),
            })
            .collect(),
    }
}

/// The bundled scaled SMT2020-style instance.
pub fn build_midifab() -> FabModel {
    parse_model(super::MIDIFAB_TOML).expect("bundled midifab model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_matches_minifab() {
        let m = build_minifab(0);
        let sizes: Vec<usize> = m.tool_groups.iter().map(|g| g.tools.len()).collect();
        assert_eq!(sizes, vec![2, 1, 2]);
        assert_eq!(m.tool_count(), 5);
        assert_eq!(m.products.len(), 3);
        assert_eq!(m.group("diffusion").unwrap().batching.as_ref().unwrap().max_size, 3);
        m.validate().unwrap();
    }

    #[test]
    fn every_route_has_six_steps() {
        for seed in 0..20 {
            let m = build_minifab(seed);
            assert!(m.routes.values().all(|r| r.steps.len() == 6));
        }
    }

    #[test]
    fn same_seed_same_model() {
        assert_eq!(build_minifab(0), build_minifab(0));
        assert_ne!(build_minifab(0), build_minifab(1));
    }

    #[test]
    fn processing_times_differ_between_products() {
        let m = build_minifab(0);
        let a = &m.routes["r_pa"].steps[2].processing_time_hours["litho_e"];
        let b = &m.routes["r_pb"].steps[2].processing_time_hours["litho_e"];
        assert_ne!(a, b);
    }
}
