use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::model::ToolInfo;

/// Alternating up/down intervals for one tool over `[0, horizon)`: up times
/// are `Exp(mtbf)`, repairs `Exp(mttr)`. Returns sorted, non-overlapping
/// `(down_at, up_at)` pairs with `up_at` capped at `horizon`.
pub fn sample_breakdowns<R: Rng + ?Sized>(tool: &ToolInfo, rng: &mut R, horizon: f64) -> Vec<(f64, f64)> {
    sample_intervals(tool.mtbf_hours, tool.mttr_hours, rng, horizon)
}

pub(crate) fn sample_intervals<R: Rng + ?Sized>(mtbf: f64, mttr: f64, rng: &mut R, horizon: f64) -> Vec<(f64, f64)> {
    assert!(mtbf > 0.0, "mtbf must be positive");
    let mut out = Vec::new();
    if horizon <= 0.0 {
        return out;
    }
    let up = Exp::new(1.0 / mtbf).expect("positive rate");
    let down = (mttr > 0.0).then(|| Exp::new(1.0 / mttr).expect("positive rate"));
    let mut t = 0.0;
    loop {
        let down_at = t + up.sample(rng);
        if down_at >= horizon {
            break;
        }
        let repair = down.map_or(0.0, |d| d.sample(rng));
        let up_at = (down_at + repair).min(horizon);
        out.push((down_at, up_at));
        t = down_at + repair;
        if t >= horizon {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_horizon_is_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_intervals(10.0, 1.0, &mut rng, 0.0).is_empty());
    }

    #[test]
    fn zero_mttr_gives_instant_repairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let iv = sample_intervals(10.0, 0.0, &mut rng, 1000.0);
        assert!(!iv.is_empty());
        assert!(iv.iter().all(|(a, b)| a == b));
    }

    #[test]
    fn intervals_sorted_and_disjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let iv = sample_intervals(20.0, 5.0, &mut rng, 5000.0);
        for w in iv.windows(2) {
            assert!(w[0].1 <= w[1].0);
        }
        assert!(iv.iter().all(|&(a, b)| a <= b && b <= 5000.0));
    }

    #[test]
    fn breakdown_count_matches_poisson_rate() {
        // With instantaneous repairs the count over 10 000 h is Poisson(100).
        let mut total = 0usize;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            total += sample_intervals(100.0, 0.0, &mut rng, 10_000.0).len();
        }
        let mean = total as f64 / 100.0;
        assert!((mean - 100.0).abs() <= 10.0, "mean {mean}");
    }
}
