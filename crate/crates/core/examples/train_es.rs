//! Train the ES policy on the Minifab litho group, then evaluate it on
//! held-out seeds. Artifacts go under `$FABRL_OUTPUT/example-es`.

use fabrl::harness::{cmd_eval, cmd_train, median_of, ExperimentConfig};

fn main() -> fabrl::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ExperimentConfig {
        name: "example-es".into(),
        controlled: vec!["litho".into()],
        train_seeds: vec![0],
        test_seeds: vec![100, 101, 102],
        ..Default::default()
    };
    cfg.es.iterations = 20;
    let art = cmd_train(&cfg)?;
    for row in art.es_log.iter().step_by(5) {
        println!(
            "iteration {:>3}: best cost {:.4}, iteration-best tardiness {:+.2}%",
            row.iteration, row.best_cost, row.tardiness_pct
        );
    }
    let rows = cmd_eval(&art.best, &cfg)?;
    let held_out: Vec<f64> = rows.iter().filter(|r| r.split == "test").map(|r| r.tardiness_pct).collect();
    println!("held-out median tardiness improvement {:+.2}%", median_of(&held_out));
    println!("run directory {}", art.dir.display());
    Ok(())
}
