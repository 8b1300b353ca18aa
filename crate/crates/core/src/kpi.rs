//! Tardiness and throughput accounting, reference normalization, the
//! episode cost functions for ES and the windowed PPO rewards.
//!
//! Tardiness is counted per lot in lot-hours and is never negative: a lot
//! ahead of schedule contributes zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Lot;

/// Floor applied to reward denominators.
pub const REWARD_EPS: f64 = 1e-9;

/// Hourly state of the fab. Cumulative fields make any window a difference
/// of two snapshots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSnapshot {
    pub t: f64,
    pub wip_wafers: u64,
    pub wip_lots: u64,
    pub completed_wafers_cum: u64,
    pub completed_lots_cum: u64,
    pub td_out_cum: f64,
    pub td_in_t: f64,
    pub tp_24h: u64,
    pub td_out_24h: f64,
    pub avg_ct: f64,
    pub avg_fab_wip: f64,
    /// Completed lots that finished late plus WIP lots behind their step due date.
    pub tardy_lot_count: u64,
    pub avg_tardiness: f64,
    pub std_tardiness: f64,
    /// Wafers queued at or in process on each tool group.
    #[serde(skip)]
    pub group_wip: Vec<u64>,
}

impl KpiSnapshot {
    pub fn total_tardiness(&self) -> f64 {
        self.td_in_t + self.td_out_cum
    }
}

/// Aggregate of a window ending at `t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KpiWindow {
    pub t: f64,
    pub span: f64,
    /// Wafers completed in the window.
    pub tp: f64,
    /// Tardiness of lots completed in the window.
    pub td_out: f64,
    /// Wafers in the fab at `t`.
    pub wip: f64,
    /// Tardiness of WIP at `t`.
    pub td_in: f64,
}

/// Episode-level KPIs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeKpis {
    pub td_in: f64,
    pub td_out: f64,
    /// Wafers completed during the episode.
    pub tp: f64,
    pub completed_lots: u64,
    pub released_lots: u64,
    pub wip_wafers: u64,
}

impl EpisodeKpis {
    pub fn tardiness(&self) -> f64 {
        self.td_in + self.td_out
    }
}

/// Running totals maintained by the simulator as lots move.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KpiAccumulator {
    pub completed_lots: u64,
    pub completed_wafers: u64,
    pub td_out: f64,
    pub tardy_completed: u64,
    tard_sum: f64,
    tard_sumsq: f64,
    ct_sum: f64,
    pub wip_wafers: u64,
    pub wip_lots: u64,
    wip_integral: f64,
    last_change: f64,
}

impl KpiAccumulator {
    fn advance(&mut self, now: f64) {
        self.wip_integral += self.wip_wafers as f64 * (now - self.last_change);
        self.last_change = now;
    }

    pub fn on_release(&mut self, now: f64, wafers: u32) {
        self.advance(now);
        self.wip_wafers += wafers as u64;
        self.wip_lots += 1;
    }

    pub fn on_complete(&mut self, now: f64, lot: &Lot) {
        self.advance(now);
        self.wip_wafers -= lot.wafers as u64;
        self.wip_lots -= 1;
        self.completed_lots += 1;
        self.completed_wafers += lot.wafers as u64;
        let td = lot_tardiness(now, lot.due_date);
        if td > 0.0 {
            self.tardy_completed += 1;
        }
        self.td_out += td;
        self.tard_sum += td;
        self.tard_sumsq += td * td;
        self.ct_sum += now - lot.release_time;
    }

    pub fn avg_ct(&self) -> f64 {
        if self.completed_lots == 0 {
            0.0
        } else {
            self.ct_sum / self.completed_lots as f64
        }
    }

    /// Time-averaged wafers in the fab over `[0, now]`.
    pub fn avg_fab_wip(&self, now: f64) -> f64 {
        if now <= 0.0 {
            return self.wip_wafers as f64;
        }
        let integral = self.wip_integral + self.wip_wafers as f64 * (now - self.last_change);
        integral / now
    }

    /// Mean and population standard deviation of completed-lot tardiness.
    pub fn tardiness_moments(&self) -> (f64, f64) {
        if self.completed_lots == 0 {
            return (0.0, 0.0);
        }
        let n = self.completed_lots as f64;
        let mean = self.tard_sum / n;
        let var = (self.tard_sumsq / n - mean * mean).max(0.0);
        (mean, var.sqrt())
    }
}

/// Per-lot tardiness: `max(0, actual - planned)`.
pub fn lot_tardiness(actual: f64, planned: f64) -> f64 {
    (actual - planned).max(0.0)
}

/// `(td_in, td_out)` at time `t`: WIP lots against the step due date of their
/// current step, completed lots against their fab due date.
pub fn tardiness<'a>(lots: impl IntoIterator<Item = &'a Lot>, t: f64) -> (f64, f64) {
    let mut td_in = 0.0;
    let mut td_out = 0.0;
    for lot in lots {
        match lot.completion_time {
            Some(tc) => td_out += lot_tardiness(tc, lot.due_date),
            None if lot.release_time <= t => td_in += lot_tardiness(t, lot.current_step_due_date()),
            None => {}
        }
    }
    (td_in, td_out)
}

/// Aggregates `snapshots` (hourly, ascending) over `[t - span, t]`. At the
/// start of an episode the window is truncated to `[0, t]`.
pub fn rolling_window(snapshots: &[KpiSnapshot], t: f64, span: f64) -> KpiWindow {
    let Some(end) = last_at_or_before(snapshots, t) else {
        return KpiWindow {
            t,
            span,
            ..Default::default()
        };
    };
    let start = last_at_or_before(snapshots, t - span).unwrap_or(0);
    let (a, b) = (&snapshots[start], &snapshots[end]);
    KpiWindow {
        t,
        span,
        tp: (b.completed_wafers_cum - a.completed_wafers_cum) as f64,
        td_out: b.td_out_cum - a.td_out_cum,
        wip: b.wip_wafers as f64,
        td_in: b.td_in_t,
    }
}

fn last_at_or_before(snapshots: &[KpiSnapshot], t: f64) -> Option<usize> {
    let n = snapshots.partition_point(|s| s.t <= t);
    n.checked_sub(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostVariant {
    #[default]
    Standard,
    Industry,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub alpha1: f64,
    pub alpha2: f64,
    pub variant: CostVariant,
    /// Replaces a zero reference denominator. `None` turns a zero reference
    /// into an error.
    pub reference_floor: Option<f64>,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig {
            alpha1: 10.0,
            alpha2: 10.0,
            variant: CostVariant::Standard,
            reference_floor: Some(1e-6),
        }
    }
}

fn reference_value(value: f64, name: &'static str, floor: Option<f64>) -> Result<f64> {
    if value > 0.0 {
        return Ok(value);
    }
    match floor {
        Some(eps) => {
            log::warn!("reference {name} is {value}; using floor {eps}");
            Ok(eps)
        }
        None => Err(Error::ZeroReference(name)),
    }
}

/// Episode cost for ES (lower is better). Penalties for worse inner
/// tardiness or throughput compose multiplicatively.
pub fn cost_es(kpi: &EpisodeKpis, reference: &EpisodeKpis, cfg: &CostConfig) -> Result<f64> {
    let td_out_ref = reference_value(reference.td_out, "td_out", cfg.reference_floor)?;
    let td_in_ref = reference_value(reference.td_in, "td_in", cfg.reference_floor)?;
    let tp_ref = reference_value(reference.tp, "tp", cfg.reference_floor)?;
    let mut cost = kpi.td_out / td_out_ref;
    if kpi.td_in > td_in_ref {
        cost *= cfg.alpha1 * kpi.td_in / td_in_ref;
    }
    if kpi.tp < tp_ref {
        if kpi.tp <= 0.0 {
            return Ok(f64::INFINITY);
        }
        cost *= cfg.alpha2 * tp_ref / kpi.tp;
    }
    Ok(cost)
}

/// Cost variant combining both tardiness components with a squared
/// throughput ratio. Zero throughput yields `f64::INFINITY`.
pub fn cost_es_industry(kpi: &EpisodeKpis, reference: &EpisodeKpis, cfg: &CostConfig) -> Result<f64> {
    let td_ref = reference_value(reference.td_out + reference.td_in, "td_out + td_in", cfg.reference_floor)?;
    let tp_ref = reference_value(reference.tp, "tp", cfg.reference_floor)?;
    if kpi.tp <= 0.0 {
        log::warn!("episode completed no wafers; cost is infinite");
        return Ok(f64::INFINITY);
    }
    let ratio = tp_ref / kpi.tp;
    Ok((kpi.td_out + kpi.td_in) / td_ref * ratio * ratio)
}

/// Dispatches on `cfg.variant`.
pub fn episode_cost(kpi: &EpisodeKpis, reference: &EpisodeKpis, cfg: &CostConfig) -> Result<f64> {
    match cfg.variant {
        CostVariant::Standard => cost_es(kpi, reference, cfg),
        CostVariant::Industry => cost_es_industry(kpi, reference, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum RewardVariant {
    /// Throughput.
    A,
    /// Inner tardiness, reported as-is; callers wanting a reward negate it.
    B,
    C,
    #[default]
    D,
}

impl std::str::FromStr for RewardVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(RewardVariant::A),
            "B" => Ok(RewardVariant::B),
            "C" => Ok(RewardVariant::C),
            "D" => Ok(RewardVariant::D),
            _ => Err(Error::Config(format!("unknown reward variant `{s}`"))),
        }
    }
}

pub fn reward_ppo(w: &KpiWindow, variant: RewardVariant) -> f64 {
    let weighted_td = w.tp * w.td_out + w.wip * w.td_in;
    match variant {
        RewardVariant::A => w.tp,
        RewardVariant::B => w.td_in,
        RewardVariant::C => w.tp * (w.wip + w.tp) / weighted_td.max(REWARD_EPS),
        RewardVariant::D => w.tp / (weighted_td * (w.wip + w.tp)).max(REWARD_EPS),
    }
}

/// `100 * (ref - value) / ref`: positive when tardiness went down.
pub fn tardiness_improvement_pct(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        return if value == 0.0 { 0.0 } else { -100.0 };
    }
    100.0 * (reference - value) / reference
}

/// `100 * (value - ref) / ref`: positive when throughput went up.
pub fn throughput_improvement_pct(value: f64, reference: f64) -> f64 {
    if reference == 0.0 {
        return 0.0;
    }
    100.0 * (value - reference) / reference
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LotId, Priority};

    fn kpis(td_out: f64, td_in: f64, tp: f64) -> EpisodeKpis {
        EpisodeKpis {
            td_in,
            td_out,
            tp,
            ..Default::default()
        }
    }

    fn lot(due: f64, completion: Option<f64>) -> Lot {
        let mut l = Lot::new(LotId(0), 0, Priority::Regular, 25, 0.0);
        l.due_date = due;
        l.step_due_dates = vec![due / 2.0, due];
        l.completion_time = completion;
        if completion.is_some() {
            l.current_step = 2;
        }
        l
    }

    #[test]
    fn completed_lot_tardiness() {
        assert_eq!(tardiness([&lot(100.0, Some(110.0))], 200.0), (0.0, 10.0));
        assert_eq!(tardiness([&lot(100.0, Some(90.0))], 200.0), (0.0, 0.0));
        assert_eq!(tardiness(std::iter::empty(), 5.0), (0.0, 0.0));
    }

    #[test]
    fn wip_tardiness_uses_current_step_due_date() {
        let l = lot(100.0, None);
        assert_eq!(tardiness([&l], 60.0), (10.0, 0.0));
        assert_eq!(tardiness([&l], 40.0), (0.0, 0.0));
    }

    #[test]
    fn cost_examples() {
        let cfg = CostConfig::default();
        let r = kpis(100.0, 50.0, 1000.0);
        assert_eq!(cost_es(&kpis(100.0, 50.0, 1000.0), &r, &cfg).unwrap(), 1.0);
        assert_eq!(cost_es(&kpis(80.0, 40.0, 1100.0), &r, &cfg).unwrap(), 0.8);
        let c = cost_es(&kpis(80.0, 55.0, 1000.0), &r, &cfg).unwrap();
        assert!((c - 8.8).abs() < 1e-12, "{c}");
    }

    #[test]
    fn both_penalties_compose() {
        let cfg = CostConfig::default();
        let r = kpis(100.0, 50.0, 1000.0);
        let c = cost_es(&kpis(100.0, 100.0, 500.0), &r, &cfg).unwrap();
        assert!((c - 10.0 * 2.0 * 10.0 * 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_reference_without_floor_errors() {
        let cfg = CostConfig {
            reference_floor: None,
            ..Default::default()
        };
        let err = cost_es(&kpis(1.0, 1.0, 1.0), &kpis(0.0, 1.0, 1.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::ZeroReference("td_out")));
        assert!(cost_es(&kpis(1.0, 1.0, 1.0), &kpis(0.0, 1.0, 1.0), &CostConfig::default()).is_ok());
    }

    #[test]
    fn industry_cost_examples() {
        let cfg = CostConfig::default();
        let r = kpis(60.0, 40.0, 1000.0);
        assert_eq!(cost_es_industry(&kpis(60.0, 40.0, 1000.0), &r, &cfg).unwrap(), 1.0);
        let c = cost_es_industry(&kpis(70.0, 30.0, 900.0), &r, &cfg).unwrap();
        assert!((c - 1.0 / 0.81).abs() < 1e-12);
        assert_eq!(cost_es_industry(&kpis(30.0, 20.0, 1000.0), &r, &cfg).unwrap(), 0.5);
        assert_eq!(cost_es_industry(&kpis(30.0, 20.0, 0.0), &r, &cfg).unwrap(), f64::INFINITY);
    }

    #[test]
    fn reward_examples() {
        let w = KpiWindow {
            tp: 100.0,
            td_out: 2.0,
            wip: 400.0,
            td_in: 10.0,
            ..Default::default()
        };
        let rd = reward_ppo(&w, RewardVariant::D);
        assert!((rd - 100.0 / 2_100_000.0).abs() / rd < 1e-12);
        let rc = reward_ppo(&w, RewardVariant::C);
        assert!((rc - rd * 500.0 * 500.0).abs() / rc < 1e-12);
        assert_eq!(reward_ppo(&KpiWindow::default(), RewardVariant::A), 0.0);
        assert_eq!(reward_ppo(&w, RewardVariant::B), 10.0);
    }

    fn snap(t: f64, completed: u64, td_out: f64) -> KpiSnapshot {
        KpiSnapshot {
            t,
            wip_wafers: 7,
            wip_lots: 1,
            completed_wafers_cum: completed,
            completed_lots_cum: 0,
            td_out_cum: td_out,
            td_in_t: t,
            tp_24h: 0,
            td_out_24h: 0.0,
            avg_ct: 0.0,
            avg_fab_wip: 0.0,
            tardy_lot_count: 0,
            avg_tardiness: 0.0,
            std_tardiness: 0.0,
            group_wip: vec![],
        }
    }

    #[test]
    fn rolling_window_constant_rate() {
        let snaps: Vec<_> = (0..=48).map(|h| snap(h as f64, 4 * h, 0.5 * h as f64)).collect();
        let w = rolling_window(&snaps, 40.0, 24.0);
        assert_eq!(w.tp, 96.0);
        assert_eq!(w.td_out, 12.0);
        assert_eq!(w.td_in, 40.0);
        assert_eq!(w.wip, 7.0);
        let w1 = rolling_window(&snaps, 40.0, 1.0);
        assert_eq!(w1.tp, 4.0);
    }

    #[test]
    fn rolling_window_truncates_at_start() {
        let snaps: Vec<_> = (0..=48).map(|h| snap(h as f64, 4 * h, 0.0)).collect();
        assert_eq!(rolling_window(&snaps, 1.0, 24.0).tp, 4.0);
        // every decision within one hour sees the same window
        assert_eq!(rolling_window(&snaps, 5.1, 24.0), KpiWindow { t: 5.1, ..rolling_window(&snaps, 5.9, 24.0) });
    }

    #[test]
    fn improvement_percentages() {
        assert_eq!(tardiness_improvement_pct(80.0, 100.0), 20.0);
        assert_eq!(throughput_improvement_pct(110.0, 100.0), 10.0);
    }
}
