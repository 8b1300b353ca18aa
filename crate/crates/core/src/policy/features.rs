use crate::kpi::KpiSnapshot;
use crate::model::{CompiledModel, LotId};
use crate::sim::{ReferenceRun, SimState};

pub const LOT_FEATURES: usize = 11;
pub const FAB_FEATURES: usize = 8;

/// Raw per-lot observation, in hours or counts.
///
/// Order: time to fab due date, time to step due date, waiting time at the
/// current step, alternative tools, faster tool exists, processing time on
/// the deciding tool, setup time, expected remaining cycle time, wafers,
/// batch tool flag, share of a full batch available.
pub type LotFeatures = [f64; LOT_FEATURES];

/// Fab-wide observation as differences to the reference run.
///
/// Order: work-center WIP, completed wafers, total tardiness, tardy lots,
/// mean tardiness, tardiness std, mean cycle time, mean fab WIP.
pub type FabStateFeatures = [f64; FAB_FEATURES];

/// Features of every lot in `queue` as seen by `tool`.
pub fn featurize_queue(model: &CompiledModel, state: &SimState, tool: usize, queue: &[LotId]) -> Vec<LotFeatures> {
    let now = state.clock();
    let info = &model.tools[tool];
    let batch = model.groups[info.group].batch;
    let setup_now = state.machine(tool).setup_family;

    // Lots per batch family present in the queue.
    let mut family_counts: Vec<(u32, usize)> = Vec::new();
    if batch.is_some() {
        for &id in queue {
            let lot = state.lot(id);
            if let Some(f) = model.step(lot.product, lot.current_step).batch_family {
                match family_counts.iter_mut().find(|(g, _)| *g == f) {
                    Some((_, c)) => *c += 1,
                    None => family_counts.push((f, 1)),
                }
            }
        }
    }

    queue
        .iter()
        .map(|&id| {
            let lot = state.lot(id);
            let product = &model.products[lot.product];
            let step = &product.steps[lot.current_step];
            let time_here = step.time_on(tool).unwrap_or(step.min_time);
            let setup = step.setup.map_or(0.0, |f| info.setup_time(setup_now, f));
            let (is_batch, pct) = match (batch, step.batch_family) {
                (Some(limits), Some(f)) => {
                    let present = family_counts.iter().find(|(g, _)| *g == f).map_or(1, |&(_, c)| c);
                    (1.0, (present as f64 / limits.max_size as f64).min(1.0))
                }
                (Some(_), None) => (1.0, 0.0),
                _ => (0.0, 0.0),
            };
            [
                lot.due_date - now,
                lot.current_step_due_date() - now,
                now - lot.step_arrival_time,
                (step.times.len() - 1) as f64,
                if step.times.iter().any(|&(_, h)| h < time_here) { 1.0 } else { 0.0 },
                time_here,
                setup,
                product.remaining_min[lot.current_step] * lot.flow_factor,
                lot.wafers as f64,
                is_batch,
                pct,
            ]
        })
        .collect()
}

/// Difference of `now` to `reference`; `reference` of `None` compares
/// against an empty fab.
pub fn fab_state_features(now: &KpiSnapshot, reference: Option<&KpiSnapshot>, group: usize) -> FabStateFeatures {
    let raw = |s: &KpiSnapshot| -> FabStateFeatures {
        [
            s.group_wip.get(group).copied().unwrap_or(0) as f64,
            s.completed_wafers_cum as f64,
            s.total_tardiness(),
            s.tardy_lot_count as f64,
            s.avg_tardiness,
            s.std_tardiness,
            s.avg_ct,
            s.avg_fab_wip,
        ]
    };
    let mut out = raw(now);
    if let Some(r) = reference {
        for (o, r) in out.iter_mut().zip(raw(r)) {
            *o -= r;
        }
    }
    out
}

/// Fab-state features at the current clock for a decision at `tool`.
pub fn featurize_fab(
    model: &CompiledModel,
    state: &SimState,
    reference: Option<&ReferenceRun>,
    tool: usize,
) -> FabStateFeatures {
    let snap = state.snapshot_now();
    let r = reference.and_then(|r| r.at(state.clock()));
    fab_state_features(&snap, r, model.tools[tool].group)
}
