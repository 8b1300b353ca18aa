//! PPO on the Minifab litho group with complete episodes.

use fabrl::harness::{cmd_train, median_of, ExperimentConfig, Optimizer};
use fabrl::kpi::RewardVariant;

fn main() -> fabrl::Result<()> {
    let mut cfg = ExperimentConfig {
        name: "example-ppo".into(),
        controlled: vec!["litho".into()],
        optimizer: Optimizer::Ppo,
        ..Default::default()
    };
    cfg.ppo.episodes = 40;
    cfg.ppo.reward = RewardVariant::D;
    let art = cmd_train(&cfg)?;
    for l in &art.ppo_log {
        println!(
            "episode {:>3}: tardiness {:+6.2}%, throughput {:+6.2}%, {} decisions, clip fraction {:.3}",
            l.episode, l.tardiness_pct, l.throughput_pct, l.decisions, l.clip_fraction
        );
    }
    let tail: Vec<f64> = art.ppo_log.iter().rev().take(4).map(|l| l.tardiness_pct).collect();
    println!("median of last 4 episodes {:+.2}%", median_of(&tail));
    Ok(())
}
