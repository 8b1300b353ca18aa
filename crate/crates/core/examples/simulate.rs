//! One Minifab episode under each plain heuristic.

use std::sync::Arc;

use fabrl::heuristics::{HeuristicDispatcher, HeuristicId, Rule};
use fabrl::model::build_minifab;
use fabrl::sim::run_episode;

fn main() -> fabrl::Result<()> {
    let model = Arc::new(build_minifab(0).compile()?);
    let horizon = 50.0 * 24.0;
    println!("{:<6} {:>12} {:>12} {:>8} {:>8}", "rule", "td_out", "td_in", "wafers", "lots");
    for rule in Rule::ALL {
        let mut d = HeuristicDispatcher::new(HeuristicId::Plain(rule));
        let r = run_episode(&model, &mut d, 7, horizon, None)?;
        println!(
            "{:<6} {:>12.1} {:>12.1} {:>8} {:>8}",
            rule.name(),
            r.kpi.td_out,
            r.kpi.td_in,
            r.kpi.tp,
            r.kpi.completed_lots
        );
    }
    Ok(())
}
