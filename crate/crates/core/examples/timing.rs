//! Seconds per ES iteration for 1, 2 and 4 workers.

use fabrl::harness::{cmd_timing, num_cpus, ExperimentConfig};

fn main() -> fabrl::Result<()> {
    let cfg = ExperimentConfig::default();
    println!("{} CPUs available", num_cpus());
    let sets = [vec!["all".to_string()], vec!["litho".to_string()]];
    for r in cmd_timing(&cfg, &[1, 2, 4], &sets, 2)? {
        println!(
            "{:<8} {} workers: {:.3} s/iteration, {:.4} s/episode",
            r.controlled, r.workers, r.seconds_per_iteration, r.seconds_per_episode
        );
    }
    Ok(())
}
