//! CMA-ES on a 10-dimensional sphere.

use fabrl::cmaes::{Cmaes, CmaesConfig};

fn main() -> fabrl::Result<()> {
    let mut es = Cmaes::new(vec![1.0; 10], CmaesConfig::default())?;
    for it in 1..=200 {
        let pop = es.ask();
        let costs: Vec<f64> = pop.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
        es.tell(&costs)?;
        let best = es.best().map_or(f64::INFINITY, |b| b.1);
        if it % 20 == 0 {
            println!("iteration {it:>3}: best {best:.3e}");
        }
        if best < 1e-10 {
            break;
        }
    }
    Ok(())
}
