use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use fabrl::harness::{
    cmd_baseline, cmd_eval, cmd_timing, cmd_train, hier_heuristics, load_model_source, plain_heuristics, write_csv,
    ExperimentConfig, Optimizer,
};
use fabrl::heuristics::HeuristicId;
use fabrl::model::emit_model;
use fabrl::policy::{Checkpoint, Descriptor};
use fabrl::{Error, Result};

#[derive(Parser)]
#[command(name = "fabrl", version, about = "Fab dispatching simulation and policy training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). Flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `builtin:minifab`, `builtin:midifab` or a model file.
    #[arg(long)]
    model: Option<String>,
    /// Seeds as `a..b` or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    test_seeds: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    horizon_days: Option<f64>,
    /// Controlled tool groups, comma separated, or `all`.
    #[arg(long)]
    controlled: Option<String>,
    #[arg(long, value_parser = ["cmaes", "ppo"])]
    optimizer: Option<String>,
    /// Run directory; defaults to `$FABRL_OUTPUT/<name>`.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run heuristics over seeds and print medians.
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Heuristics, comma separated; `plain` or `hier` for the five-rule sets.
        #[arg(long, default_value = "plain")]
        heuristics: String,
    },
    /// Train a policy with CMA-ES or PPO.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        /// ES state file to resume from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on training and held-out seeds.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Measure ES wall-clock per iteration for several worker counts.
    Timing {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        worker_counts: Vec<usize>,
        /// Controlled-group sets separated by `;`, groups by `,`.
        #[arg(long, default_value = "all")]
        sets: String,
        #[arg(long, default_value_t = 3)]
        iterations: usize,
    },
    /// Print a model as TOML.
    EmitModel {
        #[arg(long, default_value = "builtin:minifab")]
        model: String,
        #[arg(long, default_value_t = 0)]
        model_seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list `{s}`"));
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()
}

fn experiment(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(m) = &c.model {
        cfg.model = m.clone();
    }
    if let Some(s) = &c.seeds {
        cfg.train_seeds = parse_seeds(s)?;
    }
    if let Some(s) = &c.test_seeds {
        cfg.test_seeds = parse_seeds(s)?;
    }
    if c.workers.is_some() {
        cfg.workers = c.workers;
    }
    if let Some(h) = c.horizon_days {
        cfg.horizon_days = h;
    }
    if let Some(g) = &c.controlled {
        cfg.controlled = split_list(g);
    }
    if let Some(o) = &c.optimizer {
        cfg.optimizer = if o == "ppo" { Optimizer::Ppo } else { Optimizer::Cmaes };
    }
    if c.output.is_some() {
        cfg.output = c.output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Baseline { common, heuristics } => {
            let cfg = experiment(&common)?;
            let hs: Vec<HeuristicId> = match heuristics.as_str() {
                "plain" => plain_heuristics(),
                "hier" => hier_heuristics(),
                list => split_list(list).iter().map(|h| h.parse()).collect::<Result<_>>()?,
            };
            let model = cfg.compiled_model()?;
            let table = cfg
                .thread_pool()?
                .install(|| cmd_baseline(&model, &hs, &cfg.train_seeds, cfg.horizon()))?;
            println!(
                "{:<12} {:>16} {:>14} {:>10} {:>10}",
                "heuristic", "median_tardiness", "median_wafers", "td_norm", "wf_norm"
            );
            for s in &table.summary {
                println!(
                    "{:<12} {:>16.1} {:>14.1} {:>10.1} {:>10.1}",
                    s.heuristic.to_string(),
                    s.median_tardiness,
                    s.median_wafers,
                    s.tardiness_norm,
                    s.wafers_norm
                );
            }
            let dir = cfg.run_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_csv(&dir.join("baseline_runs.csv"), "baseline-runs", &table.runs)?;
            write_csv(&dir.join("baseline_summary.csv"), "baseline-summary", &table.summary)?;
        }
        Command::Train {
            common,
            iterations,
            resume,
        } => {
            let mut cfg = experiment(&common)?;
            if let Some(n) = iterations {
                cfg.es.iterations = n;
                cfg.ppo.episodes = n;
            }
            if resume.is_some() {
                cfg.resume = resume;
            }
            let art = cmd_train(&cfg)?;
            println!("wrote {}", art.dir.display());
            if let Some(last) = art.es_log.last() {
                println!(
                    "iteration {}: best cost {:.4}, tardiness {:+.2}%, throughput {:+.2}%",
                    last.iteration, last.best_cost, last.tardiness_pct, last.throughput_pct
                );
            }
            if let Some(last) = art.ppo_log.last() {
                println!(
                    "episode {}: tardiness {:+.2}%, throughput {:+.2}%",
                    last.episode, last.tardiness_pct, last.throughput_pct
                );
            }
        }
        Command::Eval { common, checkpoint } => {
            let cfg = experiment(&common)?;
            let expected = match cfg.optimizer {
                Optimizer::Cmaes => Descriptor::ES,
                Optimizer::Ppo => Descriptor::PPO,
            };
            let ck = Checkpoint::load(&checkpoint, expected)?;
            let rows = cmd_eval(&ck, &cfg)?;
            println!("{:<12} {:>6} {:>6} {:>12} {:>12}", "scenario", "seed", "split", "tardiness%", "throughput%");
            for r in &rows {
                println!(
                    "{:<12} {:>6} {:>6} {:>12.2} {:>12.2}",
                    r.scenario, r.seed, r.split, r.tardiness_pct, r.throughput_pct
                );
            }
            let dir = cfg.run_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_csv(&dir.join("eval.csv"), "eval", &rows)?;
        }
        Command::Timing {
            common,
            worker_counts,
            sets,
            iterations,
        } => {
            let cfg = experiment(&common)?;
            let sets: Vec<Vec<String>> = sets.split(';').map(split_list).collect();
            let rows = cmd_timing(&cfg, &worker_counts, &sets, iterations)?;
            println!("{:<16} {:>8} {:>12} {:>12}", "controlled", "workers", "s/iteration", "s/episode");
            for r in &rows {
                println!(
                    "{:<16} {:>8} {:>12.3} {:>12.4}",
                    r.controlled, r.workers, r.seconds_per_iteration, r.seconds_per_episode
                );
            }
            let dir = cfg.run_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_csv(&dir.join("timing.csv"), "timing", &rows)?;
        }
        Command::EmitModel { model, model_seed, out } => {
            let text = emit_model(&load_model_source(&model, model_seed)?);
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
