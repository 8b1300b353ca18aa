//! Parse a fab model from TOML, then round-trip it through `emit_model`.

use std::sync::Arc;

use fabrl::heuristics::ModelDefaultDispatcher;
use fabrl::model::{emit_model, parse_model};
use fabrl::sim::run_episode;

const MODEL: &str = r#"
name = "two-step"
horizon_hours = 720.0

[[products]]
id = "a"
route = "r"

[[tool_groups]]
id = "oven"
dispatch = "fifo"
batching = { max_size = 3 }
tools = [{ id = "oven1", mtbf_hours = 200.0, mttr_hours = 4.0 }]

[[tool_groups]]
id = "litho"
dispatch = "hier-cr"
tools = [
    { id = "l1", mtbf_hours = 100.0, mttr_hours = 2.0, setup_changes = [{ from = "*", to = "m1", hours = 0.5 }] },
    { id = "l2", mtbf_hours = 100.0, mttr_hours = 2.0 },
]

[routes.r]
steps = [
    { tool_group = "oven", processing_time_hours = { oven1 = 6.0 }, batch_eligible = true },
    { tool_group = "litho", processing_time_hours = { l1 = 1.0, l2 = 1.2 }, setup = "m1", time_constraint_hours = 12.0 },
]

[[releases]]
product = "a"
at_hours = 0.0
every_hours = 2.5
wafers = 25

[[releases]]
product = "a"
at_hours = 100.0
wafers = 12
priority = "hot"
"#;

fn main() -> fabrl::Result<()> {
    let fab = parse_model(MODEL)?;
    let again = parse_model(&emit_model(&fab))?;
    assert_eq!(fab, again);
    let model = Arc::new(fab.compile()?);
    let r = run_episode(&model, &mut ModelDefaultDispatcher, 0, fab.horizon_hours, None)?;
    println!(
        "{} lots released, {} completed, {} wafers out, tardiness {:.1} h",
        r.kpi.released_lots,
        r.kpi.completed_lots,
        r.kpi.tp,
        r.kpi.tardiness()
    );
    Ok(())
}
