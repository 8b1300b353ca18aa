//! Discrete-event engine for one episode.
//!
//! Events are executed in `(time, sequence)` order. Whenever a tool is idle
//! and lots qualified for it are waiting, the [`Dispatcher`] is asked for a
//! decision. Randomness comes from per-purpose streams derived from the
//! episode seed, so a different dispatching policy never changes the
//! breakdown or due-date draws.

mod batch;
mod breakdowns;
mod dispatch;
mod event;

use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kpi::{EpisodeKpis, KpiAccumulator, KpiSnapshot};
use crate::model::{assign_due_dates, CompiledModel, Lot, LotId};

pub use batch::form_batch;
pub use breakdowns::sample_breakdowns;
pub use dispatch::{Decision, DispatchContext, Dispatcher};
pub use event::{Event, EventKind};

/// Named random streams derived from an episode seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Release,
    Breakdown(usize),
    Policy,
}

pub fn rng_stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(match stream {
        Stream::Release => 1,
        Stream::Policy => 2,
        Stream::Breakdown(tool) => 1_000 + tool as u64,
    });
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MachineStatus {
    Idle,
    Setup,
    Processing,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub status: MachineStatus,
    /// Lots on the machine. Kept while a breakdown suspends the job.
    pub current_batch: Vec<LotId>,
    pub busy_until: f64,
    pub setup_family: Option<u32>,
    process_hours: f64,
    gen: u64,
    suspended: Option<(MachineStatus, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LotLocation {
    NotReleased,
    Queued,
    InProcess(usize),
    Done,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub record_decisions: bool,
    pub record_trace: bool,
    /// Verify lot conservation and machine invariants after every event.
    pub check_invariants: bool,
}

/// One dispatching decision, as logged by the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub time: f64,
    pub tool: u32,
    pub queue_len: u32,
    pub selected: LotId,
    pub batch_size: u32,
}

/// Hourly KPI series and final KPIs of a baseline run, used to normalize
/// training episodes and to build fab-state features.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    pub horizon: f64,
    pub snapshots: Vec<KpiSnapshot>,
    pub kpi: EpisodeKpis,
}

impl ReferenceRun {
    /// Latest snapshot at or before `t`.
    pub fn at(&self, t: f64) -> Option<&KpiSnapshot> {
        let n = self.snapshots.partition_point(|s| s.t <= t);
        n.checked_sub(1).map(|i| &self.snapshots[i])
    }
}

impl From<&EpisodeResult> for ReferenceRun {
    fn from(r: &EpisodeResult) -> Self {
        ReferenceRun {
            horizon: r.horizon,
            snapshots: r.snapshots.clone(),
            kpi: r.kpi,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub seed: u64,
    pub horizon: f64,
    pub kpi: EpisodeKpis,
    pub snapshots: Vec<KpiSnapshot>,
    pub decisions: Vec<DecisionRecord>,
    /// Final KPIs of the reference run, when one was supplied.
    pub reference: Option<EpisodeKpis>,
    pub events_executed: u64,
    pub trace: Vec<Event>,
}

/// The mutable world of one episode.
#[derive(Debug, Clone)]
pub struct SimState {
    clock: f64,
    horizon: f64,
    seed: u64,
    events: BinaryHeap<Event>,
    next_seq: u64,
    queues: Vec<Vec<LotId>>,
    machines: Vec<MachineState>,
    lots: Vec<Lot>,
    location: Vec<LotLocation>,
    visits: Vec<u32>,
    wip: Vec<u32>,
    wip_pos: Vec<usize>,
    group_wip: Vec<u64>,
    kpi: KpiAccumulator,
    snapshots: Vec<KpiSnapshot>,
    released: u64,
}

impl SimState {
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn lot(&self, id: LotId) -> &Lot {
        &self.lots[id.0 as usize]
    }

    pub fn lots(&self) -> &[Lot] {
        &self.lots
    }

    pub fn location(&self, id: LotId) -> LotLocation {
        self.location[id.0 as usize]
    }

    pub fn machine(&self, tool: usize) -> &MachineState {
        &self.machines[tool]
    }

    /// Lots waiting at a work center, in arrival order.
    pub fn queue(&self, group: usize) -> &[LotId] {
        &self.queues[group]
    }

    /// Wafers waiting at or in process on a work center.
    pub fn group_wip(&self, group: usize) -> u64 {
        self.group_wip[group]
    }

    pub fn kpi(&self) -> &KpiAccumulator {
        &self.kpi
    }

    pub fn snapshots(&self) -> &[KpiSnapshot] {
        &self.snapshots
    }

    pub fn released_lots(&self) -> u64 {
        self.released
    }

    /// Released, not yet completed lots.
    pub fn wip_lots(&self) -> impl Iterator<Item = &Lot> + '_ {
        self.wip.iter().map(move |&i| &self.lots[i as usize])
    }

    /// `(td_in, td_out)` at the current clock.
    pub fn tardiness(&self) -> (f64, f64) {
        (self.td_in_at(self.clock).0, self.kpi.td_out)
    }

    fn td_in_at(&self, t: f64) -> (f64, u64) {
        let mut td = 0.0;
        let mut tardy = 0;
        for lot in self.wip_lots() {
            let late = (t - lot.current_step_due_date()).max(0.0);
            if late > 0.0 {
                tardy += 1;
            }
            td += late;
        }
        (td, tardy)
    }

    /// KPI snapshot at the current clock. Window fields cover the past 24 h of
    /// recorded hourly snapshots.
    pub fn snapshot_now(&self) -> KpiSnapshot {
        let t = self.clock;
        let (td_in, tardy_wip) = self.td_in_at(t);
        let (avg_td, std_td) = self.kpi.tardiness_moments();
        let mut snap = KpiSnapshot {
            t,
            wip_wafers: self.kpi.wip_wafers,
            wip_lots: self.kpi.wip_lots,
            completed_wafers_cum: self.kpi.completed_wafers,
            completed_lots_cum: self.kpi.completed_lots,
            td_out_cum: self.kpi.td_out,
            td_in_t: td_in,
            tp_24h: 0,
            td_out_24h: 0.0,
            avg_ct: self.kpi.avg_ct(),
            avg_fab_wip: self.kpi.avg_fab_wip(t),
            tardy_lot_count: self.kpi.tardy_completed + tardy_wip,
            avg_tardiness: avg_td,
            std_tardiness: std_td,
            group_wip: self.group_wip.clone(),
        };
        if let Some(start) = self
            .snapshots
            .iter()
            .rev()
            .find(|s| s.t <= t - 24.0)
            .or(self.snapshots.first())
        {
            snap.tp_24h = snap.completed_wafers_cum - start.completed_wafers_cum;
            snap.td_out_24h = snap.td_out_cum - start.td_out_cum;
        }
        snap
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.events.push(Event {
            time,
            sequence: self.next_seq,
            kind,
        });
        self.next_seq += 1;
    }
}

/// Lots at the tool's work center whose current step qualifies this tool,
/// in queue order.
pub fn eligible_queue(state: &SimState, model: &CompiledModel, tool: usize) -> Vec<LotId> {
    let mut out = Vec::new();
    fill_eligible(state, model, tool, &mut out);
    out
}

fn fill_eligible(state: &SimState, model: &CompiledModel, tool: usize, out: &mut Vec<LotId>) {
    out.clear();
    let group = model.tools[tool].group;
    out.extend(state.queues[group].iter().copied().filter(|&id| {
        let lot = state.lot(id);
        model.step(lot.product, lot.current_step).qualifies(tool)
    }));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Finished,
    Paused,
}

/// A resumable episode.
pub struct Simulation {
    model: Arc<CompiledModel>,
    reference: Option<Arc<ReferenceRun>>,
    state: SimState,
    opts: SimOptions,
    decisions: Vec<DecisionRecord>,
    trace: Vec<Event>,
    events_executed: u64,
    finished: bool,
    scratch: Vec<LotId>,
}

impl Simulation {
    pub fn new(
        model: Arc<CompiledModel>,
        seed: u64,
        horizon: f64,
        reference: Option<Arc<ReferenceRun>>,
        opts: SimOptions,
    ) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be finite and >= 0, got {horizon}")));
        }
        if let Some(r) = &reference {
            if r.horizon < horizon {
                return Err(Error::Config(format!(
                    "reference run covers {}h but the episode runs {}h",
                    r.horizon, horizon
                )));
            }
        }

        let mut release_rng = rng_stream(seed, Stream::Release);
        let mut lots = Vec::new();
        let mut state_events = Vec::new();
        for (i, order) in model.release_schedule(horizon).into_iter().enumerate() {
            let lot = Lot::new(LotId(i as u32), order.product, order.priority, order.wafers, order.time);
            lots.push(assign_due_dates(&model, lot, &mut release_rng));
            state_events.push((order.time, EventKind::Release { lot: i as u32 }));
        }
        let n_lots = lots.len();

        let machines = model
            .tools
            .iter()
            .map(|t| MachineState {
                status: MachineStatus::Idle,
                current_batch: Vec::new(),
                busy_until: 0.0,
                setup_family: t.initial_setup,
                process_hours: 0.0,
                gen: 0,
                suspended: None,
            })
            .collect();

        let mut state = SimState {
            clock: 0.0,
            horizon,
            seed,
            events: BinaryHeap::new(),
            next_seq: 0,
            queues: vec![Vec::new(); model.groups.len()],
            machines,
            lots,
            location: vec![LotLocation::NotReleased; n_lots],
            visits: vec![0; n_lots],
            wip: Vec::new(),
            wip_pos: vec![usize::MAX; n_lots],
            group_wip: vec![0; model.groups.len()],
            kpi: KpiAccumulator::default(),
            snapshots: Vec::new(),
            released: 0,
        };
        for (t, kind) in state_events {
            state.push(t, kind);
        }
        for (ti, tool) in model.tools.iter().enumerate() {
            let mut rng = rng_stream(seed, Stream::Breakdown(ti));
            for (down, up) in sample_breakdowns(tool, &mut rng, horizon) {
                state.push(down, EventKind::Breakdown { tool: ti as u32 });
                state.push(up, EventKind::Repair { tool: ti as u32 });
            }
        }
        state.push(0.0, EventKind::KpiTick);

        Ok(Simulation {
            model,
            reference,
            state,
            opts,
            decisions: Vec::new(),
            trace: Vec::new(),
            events_executed: 0,
            finished: false,
            scratch: Vec::new(),
        })
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn model(&self) -> &CompiledModel {
        &self.model
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    /// Executes events up to the horizon, or until the dispatcher asks to
    /// pause.
    pub fn run(&mut self, dispatcher: &mut dyn Dispatcher) -> Result<RunStatus> {
        while !self.finished {
            if dispatcher.wants_pause() {
                return Ok(RunStatus::Paused);
            }
            let next = match self.state.events.peek() {
                Some(ev) if ev.time <= self.state.horizon => self.state.events.pop().unwrap(),
                _ => {
                    self.state.clock = self.state.horizon;
                    self.finished = true;
                    break;
                }
            };
            debug_assert!(next.time >= self.state.clock);
            self.state.clock = next.time;
            if self.opts.record_trace {
                self.trace.push(next);
            }
            self.handle(next, dispatcher)?;
            self.events_executed += 1;
            if self.opts.check_invariants {
                self.check_invariants()?;
            }
        }
        Ok(RunStatus::Finished)
    }

    /// Final KPIs and logs. Call after [`Simulation::run`] returned
    /// `Finished`.
    pub fn into_result(self) -> EpisodeResult {
        let s = &self.state;
        let (td_in, _) = s.td_in_at(s.horizon);
        EpisodeResult {
            seed: s.seed,
            horizon: s.horizon,
            kpi: EpisodeKpis {
                td_in,
                td_out: s.kpi.td_out,
                tp: s.kpi.completed_wafers as f64,
                completed_lots: s.kpi.completed_lots,
                released_lots: s.released,
                wip_wafers: s.kpi.wip_wafers,
            },
            snapshots: self.state.snapshots,
            decisions: self.decisions,
            reference: self.reference.as_ref().map(|r| r.kpi),
            events_executed: self.events_executed,
            trace: self.trace,
        }
    }

    fn handle(&mut self, ev: Event, d: &mut dyn Dispatcher) -> Result<()> {
        let now = ev.time;
        match ev.kind {
            EventKind::Release { lot } => {
                let id = LotId(lot);
                let wafers = self.state.lots[lot as usize].wafers;
                self.state.kpi.on_release(now, wafers);
                self.state.released += 1;
                self.state.wip_pos[lot as usize] = self.state.wip.len();
                self.state.wip.push(lot);
                let g = self.enqueue(id, now);
                self.dispatch_group(g, d)?;
            }
            EventKind::SetupDone { tool, gen } => {
                let tool = tool as usize;
                if self.state.machines[tool].gen != gen {
                    return Ok(());
                }
                let first = self.state.machines[tool].current_batch[0];
                let lot = self.state.lot(first);
                let fam = self.model.step(lot.product, lot.current_step).setup;
                let m = &mut self.state.machines[tool];
                if fam.is_some() {
                    m.setup_family = fam;
                }
                m.status = MachineStatus::Processing;
                m.busy_until = now + m.process_hours;
                let (t, g) = (m.busy_until, m.gen);
                self.state.push(t, EventKind::ProcessDone { tool: tool as u32, gen: g });
            }
            EventKind::ProcessDone { tool, gen } => {
                let tool = tool as usize;
                if self.state.machines[tool].gen != gen {
                    return Ok(());
                }
                let m = &mut self.state.machines[tool];
                let batch = std::mem::take(&mut m.current_batch);
                m.status = MachineStatus::Idle;
                let group = self.model.tools[tool].group;
                let mut arrivals = Vec::new();
                for id in batch {
                    let i = id.0 as usize;
                    self.state.group_wip[group] -= self.state.lots[i].wafers as u64;
                    self.state.lots[i].current_step += 1;
                    let n_steps = self.model.products[self.state.lots[i].product].steps.len();
                    if self.state.lots[i].current_step >= n_steps {
                        self.complete(id, now);
                    } else {
                        let g = self.enqueue(id, now);
                        if !arrivals.contains(&g) {
                            arrivals.push(g);
                        }
                    }
                }
                self.dispatch_group(group, d)?;
                for g in arrivals {
                    if g != group {
                        self.dispatch_group(g, d)?;
                    }
                }
            }
            EventKind::Breakdown { tool } => {
                let m = &mut self.state.machines[tool as usize];
                if matches!(m.status, MachineStatus::Setup | MachineStatus::Processing) {
                    m.suspended = Some((m.status, m.busy_until - now));
                    m.gen += 1;
                }
                m.status = MachineStatus::Down;
            }
            EventKind::Repair { tool } => {
                let t = tool as usize;
                let m = &mut self.state.machines[t];
                if m.status != MachineStatus::Down {
                    return Ok(());
                }
                match m.suspended.take() {
                    Some((phase, remaining)) => {
                        m.status = phase;
                        m.busy_until = now + remaining;
                        let (at, g) = (m.busy_until, m.gen);
                        let kind = match phase {
                            MachineStatus::Setup => EventKind::SetupDone { tool, gen: g },
                            _ => EventKind::ProcessDone { tool, gen: g },
                        };
                        self.state.push(at, kind);
                    }
                    None => {
                        m.status = MachineStatus::Idle;
                        self.dispatch_tool(t, d)?;
                    }
                }
            }
            EventKind::KpiTick => {
                let snap = self.state.snapshot_now();
                self.state.snapshots.push(snap);
                if now + 1.0 <= self.state.horizon {
                    self.state.push(now + 1.0, EventKind::KpiTick);
                }
            }
            EventKind::TimeConstraint { lot, visit } => {
                let i = lot as usize;
                if self.state.visits[i] != visit || self.state.location[i] != LotLocation::Queued {
                    return Ok(());
                }
                let id = LotId(lot);
                let l = &self.state.lots[i];
                let group = self.model.step(l.product, l.current_step).group;
                let wafers = l.wafers as u64;
                self.state.queues[group].retain(|&x| x != id);
                self.state.group_wip[group] -= wafers;
                self.state.lots[i].current_step -= 1;
                let g = self.enqueue(id, now);
                self.dispatch_group(g, d)?;
            }
        }
        Ok(())
    }

    /// Puts a lot into the queue of its current step; returns the group.
    fn enqueue(&mut self, id: LotId, now: f64) -> usize {
        let i = id.0 as usize;
        let lot = &mut self.state.lots[i];
        lot.step_arrival_time = now;
        let step = self.model.step(lot.product, lot.current_step);
        let wafers = lot.wafers as u64;
        self.state.queues[step.group].push(id);
        self.state.group_wip[step.group] += wafers;
        self.state.location[i] = LotLocation::Queued;
        self.state.visits[i] += 1;
        if let Some(tc) = step.time_constraint {
            let visit = self.state.visits[i];
            self.state.push(now + tc, EventKind::TimeConstraint { lot: id.0, visit });
        }
        step.group
    }

    fn complete(&mut self, id: LotId, now: f64) {
        let i = id.0 as usize;
        self.state.lots[i].completion_time = Some(now);
        self.state.location[i] = LotLocation::Done;
        let pos = self.state.wip_pos[i];
        self.state.wip.swap_remove(pos);
        if let Some(&moved) = self.state.wip.get(pos) {
            self.state.wip_pos[moved as usize] = pos;
        }
        self.state.wip_pos[i] = usize::MAX;
        let lot = &self.state.lots[i];
        self.state.kpi.on_complete(now, lot);
    }

    fn dispatch_group(&mut self, group: usize, d: &mut dyn Dispatcher) -> Result<()> {
        for k in 0..self.model.groups[group].tools.len() {
            if self.state.queues[group].is_empty() {
                break;
            }
            let tool = self.model.groups[group].tools[k];
            self.dispatch_tool(tool, d)?;
        }
        Ok(())
    }

    fn dispatch_tool(&mut self, tool: usize, d: &mut dyn Dispatcher) -> Result<()> {
        if self.state.machines[tool].status != MachineStatus::Idle {
            return Ok(());
        }
        let mut queue = std::mem::take(&mut self.scratch);
        fill_eligible(&self.state, &self.model, tool, &mut queue);
        if queue.is_empty() {
            self.scratch = queue;
            return Ok(());
        }
        let decision = {
            let ctx = DispatchContext {
                model: &self.model,
                state: &self.state,
                reference: self.reference.as_deref(),
                tool,
                queue: &queue,
            };
            d.dispatch(&ctx)
        };
        let result = match decision {
            Ok(Decision::Defer) => Ok(()),
            Ok(Decision::Start(lots)) => self.validate(tool, &queue, &lots).map(|_| {
                if self.opts.record_decisions {
                    self.decisions.push(DecisionRecord {
                        time: self.state.clock,
                        tool: tool as u32,
                        queue_len: queue.len() as u32,
                        selected: lots[0],
                        batch_size: lots.len() as u32,
                    });
                }
                self.start(tool, lots);
            }),
            Err(e) => Err(e),
        };
        self.scratch = queue;
        result
    }

    fn validate(&self, tool: usize, queue: &[LotId], lots: &[LotId]) -> Result<()> {
        let fail = |message: String| Error::Contract {
            time: self.state.clock,
            tool: self.model.tools[tool].id.clone(),
            message,
        };
        let Some(&first) = lots.first() else {
            return Err(fail("empty selection".into()));
        };
        for (k, id) in lots.iter().enumerate() {
            if !queue.contains(id) {
                return Err(fail(format!("{id} is not in the eligible queue")));
            }
            if lots[..k].contains(id) {
                return Err(fail(format!("{id} selected twice")));
            }
        }
        if lots.len() > 1 {
            let limits = self.model.groups[self.model.tools[tool].group].batch;
            let Some(limits) = limits else {
                return Err(fail(format!("{} lots on a non-batch tool", lots.len())));
            };
            if lots.len() > limits.max_size {
                return Err(fail(format!("batch of {} exceeds max size {}", lots.len(), limits.max_size)));
            }
            let fam = |id: LotId| {
                let l = self.state.lot(id);
                self.model.step(l.product, l.current_step).batch_family
            };
            let f0 = fam(first);
            if f0.is_none() || lots.iter().any(|&l| fam(l) != f0) {
                return Err(fail("co-batched lots are not batch compatible".into()));
            }
        }
        Ok(())
    }

    fn start(&mut self, tool: usize, lots: Vec<LotId>) {
        let now = self.state.clock;
        let group = self.model.tools[tool].group;
        self.state.queues[group].retain(|l| !lots.contains(l));
        let mut process_hours: f64 = 0.0;
        for &id in &lots {
            let lot = self.state.lot(id);
            let step = self.model.step(lot.product, lot.current_step);
            process_hours = process_hours.max(step.time_on(tool).expect("eligible"));
            self.state.location[id.0 as usize] = LotLocation::InProcess(tool);
        }
        let first = self.state.lot(lots[0]);
        let fam = self.model.step(first.product, first.current_step).setup;
        let setup = match fam {
            Some(f) => self.model.tools[tool].setup_time(self.state.machines[tool].setup_family, f),
            None => 0.0,
        };
        let m = &mut self.state.machines[tool];
        m.current_batch = lots;
        m.process_hours = process_hours;
        m.gen += 1;
        let g = m.gen;
        if setup > 0.0 {
            m.status = MachineStatus::Setup;
            m.busy_until = now + setup;
            let at = m.busy_until;
            self.state.push(at, EventKind::SetupDone { tool: tool as u32, gen: g });
        } else {
            if fam.is_some() {
                m.setup_family = fam;
            }
            m.status = MachineStatus::Processing;
            m.busy_until = now + process_hours;
            let at = m.busy_until;
            self.state.push(at, EventKind::ProcessDone { tool: tool as u32, gen: g });
        }
    }

    fn check_invariants(&self) -> Result<()> {
        let s = &self.state;
        let fail = |m: String| Err(Error::Invariant(format!("t={}: {m}", s.clock)));
        let mut queued = 0u64;
        let mut in_process = 0u64;
        let mut done = 0u64;
        for (i, loc) in s.location.iter().enumerate() {
            match loc {
                LotLocation::NotReleased => {}
                LotLocation::Queued => {
                    queued += 1;
                    let l = &s.lots[i];
                    let g = self.model.step(l.product, l.current_step).group;
                    if !s.queues[g].contains(&LotId(i as u32)) {
                        return fail(format!("L{i} queued but missing from queue {g}"));
                    }
                }
                LotLocation::InProcess(t) => {
                    in_process += 1;
                    if !s.machines[*t].current_batch.contains(&LotId(i as u32)) {
                        return fail(format!("L{i} in process but not on tool {t}"));
                    }
                }
                LotLocation::Done => done += 1,
            }
        }
        if s.released != queued + in_process + done {
            return fail(format!(
                "conservation: released {} != queued {queued} + in process {in_process} + done {done}",
                s.released
            ));
        }
        if s.queues.iter().map(Vec::len).sum::<usize>() as u64 != queued {
            return fail("queue lengths disagree with lot locations".into());
        }
        if s.kpi.completed_lots != done || s.wip.len() as u64 != queued + in_process {
            return fail("KPI counters disagree with lot locations".into());
        }
        for (t, m) in s.machines.iter().enumerate() {
            let busy = matches!(m.status, MachineStatus::Setup | MachineStatus::Processing);
            let suspended = m.status == MachineStatus::Down && m.suspended.is_some();
            if (busy || suspended) == m.current_batch.is_empty() {
                return fail(format!("tool {t} status {:?} with batch {:?}", m.status, m.current_batch));
            }
            let max = self.model.groups[self.model.tools[t].group]
                .batch
                .map_or(1, |b| b.max_size);
            if m.current_batch.len() > max {
                return fail(format!("tool {t} holds {} lots", m.current_batch.len()));
            }
        }
        Ok(())
    }
}

/// Runs one full episode.
pub fn run_episode(
    model: &Arc<CompiledModel>,
    dispatcher: &mut dyn Dispatcher,
    seed: u64,
    horizon: f64,
    reference: Option<&Arc<ReferenceRun>>,
) -> Result<EpisodeResult> {
    run_episode_with(model, dispatcher, seed, horizon, reference, SimOptions::default())
}

pub fn run_episode_with(
    model: &Arc<CompiledModel>,
    dispatcher: &mut dyn Dispatcher,
    seed: u64,
    horizon: f64,
    reference: Option<&Arc<ReferenceRun>>,
    opts: SimOptions,
) -> Result<EpisodeResult> {
    let mut sim = Simulation::new(model.clone(), seed, horizon, reference.cloned(), opts)?;
    // A pause request with nobody to resume would loop forever; treat it as
    // a no-op here.
    struct NoPause<'a>(&'a mut dyn Dispatcher);
    impl Dispatcher for NoPause<'_> {
        fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
            self.0.dispatch(ctx)
        }
    }
    sim.run(&mut NoPause(dispatcher))?;
    Ok(sim.into_result())
}
