//! Median KPIs of the plain and hierarchical heuristics over ten seeds.
//!
//! `cargo run --release --example baseline -- midifab`

use std::sync::Arc;

use fabrl::harness::{cmd_baseline, hier_heuristics, plain_heuristics};
use fabrl::model::{build_midifab, build_minifab};

fn main() -> fabrl::Result<()> {
    let midifab = std::env::args().nth(1).as_deref() == Some("midifab");
    let model = Arc::new(if midifab { build_midifab() } else { build_minifab(0) }.compile()?);
    let mut heuristics = plain_heuristics();
    heuristics.extend(hier_heuristics());
    let seeds: Vec<u64> = (0..10).collect();
    let table = cmd_baseline(&model, &heuristics, &seeds, 50.0 * 24.0)?;
    for s in &table.summary {
        println!(
            "{:<10} median tardiness {:>10.1}  median wafers {:>8.1}",
            s.heuristic.to_string(),
            s.median_tardiness,
            s.median_wafers
        );
    }
    Ok(())
}
