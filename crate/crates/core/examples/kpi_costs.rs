//! Cost and reward functions on hand-made KPIs.

use fabrl::kpi::{cost_es, cost_es_industry, reward_ppo, CostConfig, EpisodeKpis, KpiWindow, RewardVariant};

fn main() -> fabrl::Result<()> {
    let k = |td_out, td_in, tp| EpisodeKpis {
        td_out,
        td_in,
        tp,
        ..Default::default()
    };
    let cfg = CostConfig::default();
    let reference = k(100.0, 50.0, 1000.0);
    for policy in [k(80.0, 50.0, 1000.0), k(80.0, 55.0, 1000.0), k(100.0, 50.0, 1100.0)] {
        println!(
            "td_out {:>5} td_in {:>4} tp {:>6}: cost {:.3}, industry cost {:.3}",
            policy.td_out,
            policy.td_in,
            policy.tp,
            cost_es(&policy, &reference, &cfg)?,
            cost_es_industry(&policy, &reference, &cfg)?
        );
    }
    let w = KpiWindow {
        tp: 100.0,
        td_out: 2.0,
        wip: 400.0,
        td_in: 10.0,
        ..Default::default()
    };
    for v in [RewardVariant::A, RewardVariant::B, RewardVariant::C, RewardVariant::D] {
        println!("reward {v:?}: {:.4e}", reward_ppo(&w, v));
    }
    Ok(())
}
