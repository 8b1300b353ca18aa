use std::cmp::Ordering;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EventKind {
    Release { lot: u32 },
    SetupDone { tool: u32, gen: u64 },
    ProcessDone { tool: u32, gen: u64 },
    Breakdown { tool: u32 },
    Repair { tool: u32 },
    KpiTick,
    /// The lot's wait at a time-constrained step expires.
    TimeConstraint { lot: u32, visit: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub sequence: u64,
    pub kind: EventKind,
}

impl Eq for Event {}

// Reversed so that `BinaryHeap` pops the earliest (time, sequence) first.
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BinaryHeap;

    #[test]
    fn heap_pops_by_time_then_sequence() {
        let mut heap = BinaryHeap::new();
        for (time, sequence) in [(2.0, 0), (1.0, 3), (1.0, 1), (0.5, 9)] {
            heap.push(Event {
                time,
                sequence,
                kind: EventKind::KpiTick,
            });
        }
        let order: Vec<_> = std::iter::from_fn(|| heap.pop()).map(|e| (e.time, e.sequence)).collect();
        assert_eq!(order, vec![(0.5, 9), (1.0, 1), (1.0, 3), (2.0, 0)]);
    }
}
