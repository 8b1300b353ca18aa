//! Static fab description: products, routes, tool groups, release schedule.
//!
//! A [`FabModel`] is the serializable, string-keyed form that model files map
//! onto. It is validated once and then compiled into an index-based
//! [`CompiledModel`] that the simulator and dispatchers work against.

mod compiled;
mod due_dates;
mod file;
mod minifab;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::heuristics::HeuristicId;

pub use compiled::{BatchLimits, CompiledModel, GroupInfo, ProductInfo, ReleaseOrder, StepInfo, ToolInfo};
pub use due_dates::{assign_due_dates, sample_flow_factor, FLOW_FACTOR_RANGE};
pub use file::{emit_model, load_model, parse_model, MIDIFAB_TOML};
pub use minifab::{build_midifab, build_minifab};

/// Hours in a simulated day.
pub const HOURS_PER_DAY: f64 = 24.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FabModel {
    pub name: String,
    pub horizon_hours: f64,
    pub products: Vec<Product>,
    pub tool_groups: Vec<ToolGroup>,
    pub routes: BTreeMap<String, Route>,
    pub releases: Vec<Release>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub route: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub tool_group: String,
    /// Per-tool processing time. Tools absent from the map are not qualified
    /// for the step (dedication).
    pub processing_time_hours: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub batch_eligible: bool,
    /// Maximum wait in the queue of this step before the lot has to repeat
    /// the previous step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_constraint_hours: Option<f64>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolGroup {
    pub id: String,
    pub dispatch: HeuristicId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batching: Option<BatchRule>,
    pub tools: Vec<Tool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub id: String,
    pub mtbf_hours: f64,
    pub mttr_hours: f64,
    /// Setup family the tool is configured for at time zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setup: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub setup_changes: Vec<SetupChange>,
}

/// Duration of switching a tool from one setup family to another. `from = "*"`
/// matches any current family, including none.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupChange {
    pub from: String,
    pub to: String,
    pub hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRule {
    pub max_size: usize,
    #[serde(default = "one")]
    pub min_size: usize,
    /// Batch-compatibility partition. A batch-eligible step not listed in any
    /// family only batches with lots of the same product at the same step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<BatchFamily>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchFamily {
    pub name: String,
    pub members: Vec<StepRef>,
}

/// `(product id, zero-based step index)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StepRef(pub String, pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    #[default]
    Regular,
    Hot,
    SuperHot,
}

/// One release entry. With `every_hours` set it is a periodic stream starting
/// at `at_hours`, optionally ending at `until_hours`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Release {
    pub product: String,
    pub at_hours: f64,
    #[serde(default, skip_serializing_if = "is_regular")]
    pub priority: Priority,
    pub wafers: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every_hours: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_hours: Option<f64>,
}

fn is_regular(p: &Priority) -> bool {
    *p == Priority::Regular
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LotId(pub u32);

impl std::fmt::Display for LotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}", self.0)
    }
}

/// A lot instance flowing through its product route.
#[derive(Debug, Clone, PartialEq)]
pub struct Lot {
    pub id: LotId,
    pub product: usize,
    pub priority: Priority,
    pub wafers: u32,
    pub release_time: f64,
    pub due_date: f64,
    pub flow_factor: f64,
    /// Planned completion time of each step; the last entry equals `due_date`.
    pub step_due_dates: Vec<f64>,
    pub current_step: usize,
    pub step_arrival_time: f64,
    pub completion_time: Option<f64>,
}

impl Lot {
    pub fn new(id: LotId, product: usize, priority: Priority, wafers: u32, release_time: f64) -> Self {
        Lot {
            id,
            product,
            priority,
            wafers,
            release_time,
            due_date: f64::NAN,
            flow_factor: f64::NAN,
            step_due_dates: Vec::new(),
            current_step: 0,
            step_arrival_time: release_time,
            completion_time: None,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completion_time.is_some()
    }

    /// Step due date of the step the lot is currently waiting for or in.
    pub fn current_step_due_date(&self) -> f64 {
        let idx = self.current_step.min(self.step_due_dates.len().saturating_sub(1));
        self.step_due_dates[idx]
    }
}

impl FabModel {
    pub fn product_index(&self, id: &str) -> Option<usize> {
        self.products.iter().position(|p| p.id == id)
    }

    pub fn group(&self, id: &str) -> Option<&ToolGroup> {
        self.tool_groups.iter().find(|g| g.id == id)
    }

    pub fn route_of(&self, product: &str) -> Option<&Route> {
        let p = self.products.iter().find(|p| p.id == product)?;
        self.routes.get(&p.route)
    }

    /// Sum over the route of the minimal processing time of each step.
    pub fn raw_process_time_hours(&self, product: &str) -> Option<f64> {
        let route = self.route_of(product)?;
        Some(route.steps.iter().map(Step::min_processing_time).sum())
    }

    pub fn tool_count(&self) -> usize {
        self.tool_groups.iter().map(|g| g.tools.len()).sum()
    }

    /// Checks every structural invariant. Model files and builders both go
    /// through this before a model is compiled.
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.horizon_hours > 0.0) {
            return Err(ModelError::schema("horizon_hours", "must be > 0"));
        }
        if self.products.is_empty() {
            return Err(ModelError::schema("products", "must be nonempty"));
        }
        if self.tool_groups.is_empty() {
            return Err(ModelError::schema("tool_groups", "must be nonempty"));
        }

        let mut group_ids = HashSet::new();
        let mut tool_ids = HashSet::new();
        for (gi, g) in self.tool_groups.iter().enumerate() {
            let field = format!("tool_groups[{gi}]");
            if !group_ids.insert(g.id.as_str()) {
                return Err(ModelError::schema(format!("{field}.id"), format!("duplicate group id `{}`", g.id)));
            }
            if g.tools.is_empty() {
                return Err(ModelError::schema(format!("{field}.tools"), "must be nonempty"));
            }
            if let Some(b) = &g.batching {
                if b.max_size < 2 {
                    return Err(ModelError::schema(format!("{field}.batching.max_size"), "must be >= 2"));
                }
                if b.min_size < 1 || b.min_size > b.max_size {
                    return Err(ModelError::schema(
                        format!("{field}.batching.min_size"),
                        "must satisfy 1 <= min_size <= max_size",
                    ));
                }
            }
            for (ti, t) in g.tools.iter().enumerate() {
                let tf = format!("{field}.tools[{ti}]");
                if !tool_ids.insert(t.id.as_str()) {
                    return Err(ModelError::schema(format!("{tf}.id"), format!("duplicate tool id `{}`", t.id)));
                }
                if !(t.mtbf_hours > 0.0) {
                    return Err(ModelError::schema(format!("{tf}.mtbf_hours"), "must be > 0"));
                }
                if !(t.mttr_hours >= 0.0) || !t.mttr_hours.is_finite() {
                    return Err(ModelError::schema(format!("{tf}.mttr_hours"), "must be >= 0"));
                }
                for (si, s) in t.setup_changes.iter().enumerate() {
                    if !(s.hours >= 0.0) || !s.hours.is_finite() {
                        return Err(ModelError::schema(format!("{tf}.setup_changes[{si}].hours"), "must be >= 0"));
                    }
                }
            }
        }

        let mut product_ids = HashSet::new();
        for (pi, p) in self.products.iter().enumerate() {
            if !product_ids.insert(p.id.as_str()) {
                return Err(ModelError::schema(format!("products[{pi}].id"), format!("duplicate product id `{}`", p.id)));
            }
            if !self.routes.contains_key(&p.route) {
                return Err(ModelError::dangling(format!("products[{pi}].route"), &p.route));
            }
        }

        for (rid, route) in &self.routes {
            let field = format!("routes.{rid}");
            if route.steps.is_empty() {
                return Err(ModelError::schema(format!("{field}.steps"), "must be nonempty"));
            }
            for (si, step) in route.steps.iter().enumerate() {
                let sf = format!("{field}.steps[{si}]");
                let group = self
                    .group(&step.tool_group)
                    .ok_or_else(|| ModelError::dangling(format!("{sf}.tool_group"), &step.tool_group))?;
                if step.processing_time_hours.is_empty() {
                    return Err(ModelError::schema(format!("{sf}.processing_time_hours"), "must be nonempty"));
                }
                for (tool, &h) in &step.processing_time_hours {
                    if !group.tools.iter().any(|t| &t.id == tool) {
                        return Err(ModelError::dangling(
                            format!("{sf}.processing_time_hours"),
                            format!("{tool} (in group {})", group.id),
                        ));
                    }
                    if !(h > 0.0) || !h.is_finite() {
                        return Err(ModelError::schema(
                            format!("{sf}.processing_time_hours.{tool}"),
                            "must be > 0",
                        ));
                    }
                }
                if step.batch_eligible && group.batching.is_none() {
                    return Err(ModelError::schema(
                        format!("{sf}.batch_eligible"),
                        format!("group `{}` has no batching rule", group.id),
                    ));
                }
                if let Some(tc) = step.time_constraint_hours {
                    if !(tc > 0.0) {
                        return Err(ModelError::schema(format!("{sf}.time_constraint_hours"), "must be > 0"));
                    }
                    if si == 0 {
                        return Err(ModelError::schema(
                            format!("{sf}.time_constraint_hours"),
                            "the first step has no previous step to repeat",
                        ));
                    }
                }
            }
        }

        for (gi, g) in self.tool_groups.iter().enumerate() {
            let Some(b) = &g.batching else { continue };
            let mut seen = BTreeSet::new();
            for (fi, fam) in b.families.iter().enumerate() {
                for (mi, StepRef(product, step)) in fam.members.iter().enumerate() {
                    let mf = format!("tool_groups[{gi}].batching.families[{fi}].members[{mi}]");
                    let route = self.route_of(product).ok_or_else(|| ModelError::dangling(&mf, product))?;
                    let s = route
                        .steps
                        .get(*step)
                        .ok_or_else(|| ModelError::dangling(&mf, format!("{product} step {step}")))?;
                    if s.tool_group != g.id || !s.batch_eligible {
                        return Err(ModelError::schema(
                            &mf,
                            format!("{product} step {step} is not a batch-eligible step of `{}`", g.id),
                        ));
                    }
                    if !seen.insert((product.clone(), *step)) {
                        return Err(ModelError::schema(&mf, "step listed in more than one batch family"));
                    }
                }
            }
        }

        for (ri, r) in self.releases.iter().enumerate() {
            let field = format!("releases[{ri}]");
            if !product_ids.contains(r.product.as_str()) {
                return Err(ModelError::dangling(format!("{field}.product"), &r.product));
            }
            if !(r.at_hours >= 0.0) || !r.at_hours.is_finite() {
                return Err(ModelError::schema(format!("{field}.at_hours"), "must be >= 0"));
            }
            if r.wafers == 0 {
                return Err(ModelError::schema(format!("{field}.wafers"), "must be > 0"));
            }
            if let Some(e) = r.every_hours {
                if !(e > 0.0) || !e.is_finite() {
                    return Err(ModelError::schema(format!("{field}.every_hours"), "must be > 0"));
                }
            }
            if let Some(u) = r.until_hours {
                if !(u >= r.at_hours) {
                    return Err(ModelError::schema(format!("{field}.until_hours"), "must be >= at_hours"));
                }
            }
        }
        Ok(())
    }

    /// Validates and compiles into the index-based form used by the simulator.
    pub fn compile(&self) -> Result<CompiledModel, ModelError> {
        self.validate()?;
        Ok(CompiledModel::build(self))
    }
}

impl Step {
    pub fn min_processing_time(&self) -> f64 {
        self.processing_time_hours.values().copied().fold(f64::INFINITY, f64::min)
    }
}
