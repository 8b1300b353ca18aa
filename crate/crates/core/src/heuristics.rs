//! Static dispatching rules and the hierarchical composite used for
//! SMT2020-style models.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{CompiledModel, Lot, LotId, Priority};
use crate::sim::{form_batch, Decision, DispatchContext, Dispatcher};

/// A single-criterion dispatching rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    Fifo,
    /// Critical ratio: time to due date over expected remaining work.
    Cr,
    /// Shortest remaining processing time over the remaining route.
    Srpt,
    /// Shortest processing time of the next step on the deciding tool.
    Spt,
    Edd,
}

impl Rule {
    pub const ALL: [Rule; 5] = [Rule::Fifo, Rule::Cr, Rule::Srpt, Rule::Spt, Rule::Edd];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Fifo => "fifo",
            Rule::Cr => "cr",
            Rule::Srpt => "srpt",
            Rule::Spt => "spt",
            Rule::Edd => "edd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeuristicId {
    Plain(Rule),
    /// Time-constrained lots, then super-hot, then hot, then setup match,
    /// then the tie-break rule.
    Hier(Rule),
}

impl HeuristicId {
    pub fn tie_rule(self) -> Rule {
        match self {
            HeuristicId::Plain(r) | HeuristicId::Hier(r) => r,
        }
    }
}

impl fmt::Display for HeuristicId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeuristicId::Plain(r) => f.write_str(r.name()),
            HeuristicId::Hier(r) => write!(f, "hier-{}", r.name()),
        }
    }
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown dispatching rule `{s}`")))
    }
}

impl FromStr for HeuristicId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        match lower.strip_prefix("hier-").or_else(|| lower.strip_prefix("hier:")) {
            Some(tie) => Ok(HeuristicId::Hier(tie.parse()?)),
            None => Ok(HeuristicId::Plain(lower.parse()?)),
        }
    }
}

impl Serialize for HeuristicId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HeuristicId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sort key: ascending `value`, ties by lot id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorityKey {
    pub value: f64,
    pub lot: LotId,
}

impl Eq for PriorityKey {}

impl Ord for PriorityKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value.total_cmp(&other.value).then(self.lot.cmp(&other.lot))
    }
}

impl PartialOrd for PriorityKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Sum of minimal processing times from the lot's current step to the end.
pub fn remaining_work(model: &CompiledModel, lot: &Lot) -> f64 {
    model.products[lot.product].remaining_min[lot.current_step]
}

/// `(due date - now) / remaining work`; `-inf` when no work is left.
pub fn critical_ratio(due_date: f64, now: f64, remaining: f64) -> f64 {
    if remaining <= 0.0 {
        f64::NEG_INFINITY
    } else {
        (due_date - now) / remaining
    }
}

/// Key of `rule` for a lot queued at `tool`. Smaller goes first.
pub fn priority_key(rule: Rule, model: &CompiledModel, lot: &Lot, now: f64, tool: usize) -> PriorityKey {
    let value = match rule {
        Rule::Fifo => lot.step_arrival_time,
        Rule::Cr => critical_ratio(lot.due_date, now, remaining_work(model, lot)),
        Rule::Srpt => remaining_work(model, lot),
        Rule::Spt => {
            let step = model.step(lot.product, lot.current_step);
            step.time_on(tool).unwrap_or(step.min_time)
        }
        Rule::Edd => lot.due_date,
    };
    PriorityKey { value, lot: lot.id }
}

/// Hierarchy flags, `false` sorting first.
fn hier_flags(model: &CompiledModel, lot: &Lot, tool_setup: Option<u32>) -> [bool; 4] {
    let step = model.step(lot.product, lot.current_step);
    let setup_match = match step.setup {
        None => true,
        Some(f) => tool_setup == Some(f),
    };
    [
        step.time_constraint.is_none(),
        lot.priority != Priority::SuperHot,
        lot.priority != Priority::Hot,
        !setup_match,
    ]
}

/// Orders lots by the hierarchical composite. The result does not depend on
/// the input order.
pub fn hierarchical_order(
    model: &CompiledModel,
    lots: &[&Lot],
    tool: usize,
    tool_setup: Option<u32>,
    now: f64,
    tie: Rule,
) -> Vec<LotId> {
    let mut keyed: Vec<([bool; 4], PriorityKey)> = lots
        .iter()
        .map(|l| (hier_flags(model, l, tool_setup), priority_key(tie, model, l, now, tool)))
        .collect();
    keyed.sort();
    keyed.into_iter().map(|(_, k)| k.lot).collect()
}

/// Orders lots by a heuristic, best first.
pub fn order_queue(
    h: HeuristicId,
    model: &CompiledModel,
    lots: &[&Lot],
    tool: usize,
    tool_setup: Option<u32>,
    now: f64,
) -> Vec<LotId> {
    match h {
        HeuristicId::Plain(rule) => {
            let mut keys: Vec<PriorityKey> = lots.iter().map(|l| priority_key(rule, model, l, now, tool)).collect();
            keys.sort();
            keys.into_iter().map(|k| k.lot).collect()
        }
        HeuristicId::Hier(tie) => hierarchical_order(model, lots, tool, tool_setup, now, tie),
    }
}

/// Picks the best lot and, on batch tools, fills the batch greedily with
/// compatible lots in the same order.
pub fn heuristic_decision(h: HeuristicId, ctx: &DispatchContext<'_>) -> Decision {
    let lots: Vec<&Lot> = ctx.queue.iter().map(|&id| ctx.lot(id)).collect();
    let setup = ctx.state.machine(ctx.tool).setup_family;
    let order = order_queue(h, ctx.model, &lots, ctx.tool, setup, ctx.now());
    let selection = order[0];
    let limits = ctx.model.groups[ctx.model.tools[ctx.tool].group].batch;
    match limits {
        Some(limits) if ctx.step_of(selection).batch_family.is_some() => {
            let rank_score: Vec<f64> = ctx
                .queue
                .iter()
                .map(|id| -(order.iter().position(|o| o == id).unwrap() as f64))
                .collect();
            let batch = form_batch(
                selection,
                ctx.queue,
                &rank_score,
                |id| ctx.step_of(id).batch_family,
                limits,
            );
            Decision::Start(batch)
        }
        _ => Decision::Start(vec![selection]),
    }
}

/// Applies one heuristic on every tool.
#[derive(Debug, Clone, Copy)]
pub struct HeuristicDispatcher {
    pub heuristic: HeuristicId,
}

impl HeuristicDispatcher {
    pub fn new(heuristic: HeuristicId) -> Self {
        HeuristicDispatcher { heuristic }
    }
}

impl Dispatcher for HeuristicDispatcher {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        Ok(heuristic_decision(self.heuristic, ctx))
    }
}

/// Applies each work center's own default rule from the model file.
#[derive(Debug, Clone, Copy, Default)]
pub struct ModelDefaultDispatcher;

impl Dispatcher for ModelDefaultDispatcher {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        let h = ctx.model.groups[ctx.model.tools[ctx.tool].group].dispatch;
        Ok(heuristic_decision(h, ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_minifab;

    fn lot(id: u32, due: f64, arrival: f64) -> Lot {
        let mut l = Lot::new(LotId(id), 0, Priority::Regular, 25, 0.0);
        l.due_date = due;
        l.step_arrival_time = arrival;
        l.step_due_dates = vec![due; 6];
        l
    }

    #[test]
    fn critical_ratio_formula() {
        assert_eq!(critical_ratio(30.0, 10.0, 10.0), 2.0);
        assert_eq!(critical_ratio(30.0, 10.0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn fifo_orders_by_arrival() {
        let model = build_minifab(0).compile().unwrap();
        let a = lot(2, 0.0, 3.0);
        let b = lot(1, 0.0, 5.0);
        let order = order_queue(HeuristicId::Plain(Rule::Fifo), &model, &[&b, &a], 0, None, 10.0);
        assert_eq!(order, vec![LotId(2), LotId(1)]);
    }

    #[test]
    fn srpt_prefers_less_remaining_work() {
        let model = build_minifab(0).compile().unwrap();
        let mut a = lot(1, 0.0, 0.0);
        a.current_step = 4;
        let b = lot(2, 0.0, 0.0);
        assert!(remaining_work(&model, &a) < remaining_work(&model, &b));
        let order = order_queue(HeuristicId::Plain(Rule::Srpt), &model, &[&b, &a], 0, None, 0.0);
        assert_eq!(order[0], LotId(1));
    }

    #[test]
    fn ties_break_by_lot_id() {
        let model = build_minifab(0).compile().unwrap();
        let a = lot(7, 50.0, 1.0);
        let b = lot(3, 50.0, 1.0);
        let order = order_queue(HeuristicId::Plain(Rule::Edd), &model, &[&a, &b], 0, None, 0.0);
        assert_eq!(order, vec![LotId(3), LotId(7)]);
    }

    #[test]
    fn hot_lot_beats_earlier_due_date() {
        let model = build_minifab(0).compile().unwrap();
        let regular = lot(1, 10.0, 0.0);
        let mut hot = lot(2, 90.0, 0.0);
        hot.priority = Priority::Hot;
        let mut super_hot = lot(3, 95.0, 0.0);
        super_hot.priority = Priority::SuperHot;
        let order = hierarchical_order(&model, &[&regular, &hot, &super_hot], 0, None, 0.0, Rule::Edd);
        assert_eq!(order, vec![LotId(3), LotId(2), LotId(1)]);
    }

    #[test]
    fn parses_and_prints_ids() {
        for s in ["fifo", "cr", "srpt", "spt", "edd", "hier-cr", "hier-fifo"] {
            let h: HeuristicId = s.parse().unwrap();
            assert_eq!(h.to_string(), s);
        }
        assert_eq!("SRPT".parse::<HeuristicId>().unwrap(), HeuristicId::Plain(Rule::Srpt));
        assert!("hier-hier-cr".parse::<HeuristicId>().is_err());
        assert!("lifo".parse::<HeuristicId>().is_err());
    }
}
