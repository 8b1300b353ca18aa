//! Build an experiment config with a scenario sweep and print it as TOML.

use fabrl::harness::{ExperimentConfig, Scenario};

fn main() -> fabrl::Result<()> {
    let cfg = ExperimentConfig {
        name: "sweep".into(),
        model: "builtin:midifab".into(),
        controlled: vec!["litho".into(), "implant".into()],
        scenarios: vec![
            Scenario {
                name: "high-load".into(),
                model: None,
                horizon_days: None,
                load: 1.1,
                trained: false,
            },
            Scenario {
                name: "short".into(),
                model: None,
                horizon_days: Some(20.0),
                load: 1.0,
                trained: false,
            },
        ],
        ..Default::default()
    };
    cfg.validate()?;
    let text = cfg.to_toml();
    print!("{text}");
    assert_eq!(ExperimentConfig::from_toml(&text)?.scenarios.len(), 2);
    println!("# run directory: {}", cfg.run_dir().display());
    Ok(())
}
