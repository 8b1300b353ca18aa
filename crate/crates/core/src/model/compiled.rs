use std::collections::HashMap;

use super::{FabModel, Priority};
use crate::heuristics::HeuristicId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchLimits {
    pub max_size: usize,
    pub min_size: usize,
}

#[derive(Debug, Clone)]
pub struct GroupInfo {
    pub id: String,
    pub tools: Vec<usize>,
    pub batch: Option<BatchLimits>,
    pub dispatch: HeuristicId,
}

#[derive(Debug, Clone)]
pub struct ToolInfo {
    pub id: String,
    pub group: usize,
    pub mtbf_hours: f64,
    pub mttr_hours: f64,
    pub initial_setup: Option<u32>,
    setup_exact: HashMap<(u32, u32), f64>,
    setup_any: HashMap<u32, f64>,
}

impl ToolInfo {
    /// Time needed to switch from `from` to `to`; zero when already set up
    /// or when no change duration is configured.
    pub fn setup_time(&self, from: Option<u32>, to: u32) -> f64 {
        if from == Some(to) {
            return 0.0;
        }
        if let Some(f) = from {
            if let Some(&h) = self.setup_exact.get(&(f, to)) {
                return h;
            }
        }
        self.setup_any.get(&to).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct StepInfo {
    pub group: usize,
    /// Qualified tools with their processing times, sorted by tool index.
    pub times: Vec<(usize, f64)>,
    pub min_time: f64,
    pub setup: Option<u32>,
    /// Batch-compatibility family; `None` for steps that never batch.
    pub batch_family: Option<u32>,
    pub time_constraint: Option<f64>,
}

impl StepInfo {
    pub fn time_on(&self, tool: usize) -> Option<f64> {
        self.times.iter().find(|(t, _)| *t == tool).map(|&(_, h)| h)
    }

    pub fn qualifies(&self, tool: usize) -> bool {
        self.times.iter().any(|(t, _)| *t == tool)
    }
}

#[derive(Debug, Clone)]
pub struct ProductInfo {
    pub id: String,
    pub steps: Vec<StepInfo>,
    pub raw_process_time: f64,
    /// `remaining_min[k]` = sum of minimal processing times of steps `k..`.
    pub remaining_min: Vec<f64>,
}

/// One expanded release: a lot entering the fab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleaseOrder {
    pub time: f64,
    pub product: usize,
    pub priority: Priority,
    pub wafers: u32,
}

/// Index-based view of a validated [`FabModel`]. Immutable; share it across
/// workers behind an `Arc`.
#[derive(Debug, Clone)]
pub struct CompiledModel {
    pub name: String,
    pub horizon_hours: f64,
    pub groups: Vec<GroupInfo>,
    pub tools: Vec<ToolInfo>,
    pub products: Vec<ProductInfo>,
    pub setup_families: Vec<String>,
    pub source: FabModel,
}

impl CompiledModel {
    pub(super) fn build(m: &FabModel) -> Self {
        let mut families: Vec<String> = Vec::new();
        let intern = |name: &str, families: &mut Vec<String>| -> u32 {
            match families.iter().position(|f| f == name) {
                Some(i) => i as u32,
                None => {
                    families.push(name.to_string());
                    (families.len() - 1) as u32
                }
            }
        };

        let mut tools = Vec::new();
        let mut groups = Vec::new();
        let mut tool_index = HashMap::new();
        for (gi, g) in m.tool_groups.iter().enumerate() {
            let mut members = Vec::new();
            for t in &g.tools {
                let idx = tools.len();
                tool_index.insert(t.id.clone(), idx);
                members.push(idx);
                let initial_setup = t.setup.as_deref().map(|s| intern(s, &mut families));
                let mut setup_exact = HashMap::new();
                let mut setup_any = HashMap::new();
                for sc in &t.setup_changes {
                    let to = intern(&sc.to, &mut families);
                    if sc.from == "*" {
                        setup_any.insert(to, sc.hours);
                    } else {
                        let from = intern(&sc.from, &mut families);
                        setup_exact.insert((from, to), sc.hours);
                    }
                }
                tools.push(ToolInfo {
                    id: t.id.clone(),
                    group: gi,
                    mtbf_hours: t.mtbf_hours,
                    mttr_hours: t.mttr_hours,
                    initial_setup,
                    setup_exact,
                    setup_any,
                });
            }
            groups.push(GroupInfo {
                id: g.id.clone(),
                tools: members,
                batch: g.batching.as_ref().map(|b| BatchLimits {
                    max_size: b.max_size,
                    min_size: b.min_size,
                }),
                dispatch: g.dispatch,
            });
        }
        let group_index: HashMap<&str, usize> =
            m.tool_groups.iter().enumerate().map(|(i, g)| (g.id.as_str(), i)).collect();

        // Batch families: listed partitions first, then one family per
        // unlisted batch-eligible (product, step).
        let mut batch_family: HashMap<(String, usize), u32> = HashMap::new();
        let mut next_family = 0u32;
        for g in &m.tool_groups {
            if let Some(b) = &g.batching {
                for fam in &b.families {
                    for member in &fam.members {
                        batch_family.insert((member.0.clone(), member.1), next_family);
                    }
                    next_family += 1;
                }
            }
        }

        let mut products = Vec::new();
        for p in &m.products {
            let route = &m.routes[&p.route];
            let mut steps = Vec::new();
            for (si, s) in route.steps.iter().enumerate() {
                let mut times: Vec<(usize, f64)> =
                    s.processing_time_hours.iter().map(|(t, &h)| (tool_index[t], h)).collect();
                times.sort_by_key(|&(t, _)| t);
                let family = if s.batch_eligible {
                    Some(*batch_family.entry((p.id.clone(), si)).or_insert_with(|| {
                        next_family += 1;
                        next_family - 1
                    }))
                } else {
                    None
                };
                steps.push(StepInfo {
                    group: group_index[s.tool_group.as_str()],
                    min_time: s.min_processing_time(),
                    times,
                    setup: s.setup.as_deref().map(|f| intern(f, &mut families)),
                    batch_family: family,
                    time_constraint: s.time_constraint_hours,
                });
            }
            let mut remaining_min = vec![0.0; steps.len() + 1];
            for k in (0..steps.len()).rev() {
                remaining_min[k] = remaining_min[k + 1] + steps[k].min_time;
            }
            let raw_process_time = steps.iter().map(|s| s.min_time).sum();
            products.push(ProductInfo {
                id: p.id.clone(),
                steps,
                raw_process_time,
                remaining_min,
            });
        }

        CompiledModel {
            name: m.name.clone(),
            horizon_hours: m.horizon_hours,
            groups,
            tools,
            products,
            setup_families: families,
            source: m.clone(),
        }
    }

    pub fn tool_by_id(&self, id: &str) -> Option<usize> {
        self.tools.iter().position(|t| t.id == id)
    }

    pub fn group_by_id(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.id == id)
    }

    pub fn step(&self, product: usize, step: usize) -> &StepInfo {
        &self.products[product].steps[step]
    }

    /// All releases with `time <= horizon`, ordered by time and then by the
    /// order of the release entries in the model.
    pub fn release_schedule(&self, horizon: f64) -> Vec<ReleaseOrder> {
        let mut out: Vec<(f64, usize, ReleaseOrder)> = Vec::new();
        for (ri, r) in self.source.releases.iter().enumerate() {
            let product = self.source.product_index(&r.product).expect("validated");
            let end = r.until_hours.unwrap_or(f64::INFINITY).min(horizon);
            let mut k = 0u64;
            loop {
                let t = match r.every_hours {
                    Some(e) => r.at_hours + e * k as f64,
                    None if k == 0 => r.at_hours,
                    None => break,
                };
                if t > end {
                    break;
                }
                out.push((
                    t,
                    ri,
                    ReleaseOrder {
                        time: t,
                        product,
                        priority: r.priority,
                        wafers: r.wafers,
                    },
                ));
                k += 1;
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out.into_iter().map(|(_, _, r)| r).collect()
    }

    /// Number of eligible tools that qualify for a step.
    pub fn qualified_tools(&self, product: usize, step: usize) -> usize {
        self.products[product].steps[step].times.len()
    }
}
