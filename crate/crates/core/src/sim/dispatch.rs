use crate::error::Result;
use crate::kpi::KpiSnapshot;
use crate::model::{CompiledModel, Lot, LotId, StepInfo};

use super::{ReferenceRun, SimState};

/// What a dispatcher wants a freed tool to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    /// Start the listed lots; the first one is the selection and any others
    /// are co-batched with it.
    Start(Vec<LotId>),
    /// Leave the tool idle until the next arrival at its work center.
    Defer,
}

/// Everything a dispatcher may look at when a tool asks for work.
pub struct DispatchContext<'a> {
    pub model: &'a CompiledModel,
    pub state: &'a SimState,
    pub reference: Option<&'a ReferenceRun>,
    pub tool: usize,
    /// Lots at the tool's work center that qualify for this tool, in queue
    /// order. Never empty.
    pub queue: &'a [LotId],
}

impl<'a> DispatchContext<'a> {
    pub fn now(&self) -> f64 {
        self.state.clock()
    }

    pub fn lot(&self, id: LotId) -> &'a Lot {
        self.state.lot(id)
    }

    pub fn step_of(&self, id: LotId) -> &'a StepInfo {
        let lot = self.state.lot(id);
        self.model.step(lot.product, lot.current_step)
    }

    pub fn is_batch_tool(&self) -> bool {
        self.model.groups[self.model.tools[self.tool].group].batch.is_some()
    }

    /// Reference snapshot at the current time (latest hourly snapshot at or
    /// before now).
    pub fn reference_now(&self) -> Option<&'a KpiSnapshot> {
        self.reference.and_then(|r| r.at(self.now()))
    }
}

/// Chooses lots for tools. Implementations see a read-only snapshot and may
/// keep their own mutable state (RNG streams, sample buffers).
pub trait Dispatcher {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision>;

    /// Checked after every handled event; returning `true` makes
    /// [`super::Simulation::run`] return early so the caller can act on
    /// collected data and resume later.
    fn wants_pause(&self) -> bool {
        false
    }
}

impl<D: Dispatcher + ?Sized> Dispatcher for &mut D {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        (**self).dispatch(ctx)
    }

    fn wants_pause(&self) -> bool {
        (**self).wants_pause()
    }
}

impl<D: Dispatcher + ?Sized> Dispatcher for Box<D> {
    fn dispatch(&mut self, ctx: &DispatchContext<'_>) -> Result<Decision> {
        (**self).dispatch(ctx)
    }

    fn wants_pause(&self) -> bool {
        (**self).wants_pause()
    }
}
