use rand::Rng;

use super::{CompiledModel, Lot};

/// Planned flow factor range; planned cycle time = flow factor x raw process time.
pub const FLOW_FACTOR_RANGE: (f64, f64) = (2.1, 2.5);

pub fn sample_flow_factor<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.gen_range(FLOW_FACTOR_RANGE.0..=FLOW_FACTOR_RANGE.1)
}

/// Draws a flow factor and sets the fab due date and the per-step due dates.
///
/// Step due dates are built backwards from the due date, subtracting the
/// planned cycle time (flow factor x minimal processing time) of each later
/// step, so the last one is exactly the due date.
pub fn assign_due_dates<R: Rng + ?Sized>(model: &CompiledModel, mut lot: Lot, rng: &mut R) -> Lot {
    let ff = sample_flow_factor(rng);
    set_due_dates(model, &mut lot, ff);
    lot
}

pub(crate) fn set_due_dates(model: &CompiledModel, lot: &mut Lot, ff: f64) {
    let product = &model.products[lot.product];
    lot.flow_factor = ff;
    lot.due_date = lot.release_time + ff * product.raw_process_time;
    let n = product.steps.len();
    let mut sdd = vec![0.0; n];
    sdd[n - 1] = lot.due_date;
    for k in (0..n - 1).rev() {
        sdd[k] = sdd[k + 1] - ff * product.steps[k + 1].min_time;
    }
    lot.step_due_dates = sdd;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_minifab, LotId, Priority};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lot_for(release: f64) -> Lot {
        Lot::new(LotId(0), 0, Priority::Regular, 25, release)
    }

    #[test]
    fn planned_ct_at_range_bounds() {
        let model = build_minifab(0).compile().unwrap();
        let raw = model.products[0].raw_process_time;
        for ff in [2.1, 2.5] {
            let mut lot = lot_for(5.0);
            set_due_dates(&model, &mut lot, ff);
            assert!((lot.due_date - 5.0 - ff * raw).abs() < 1e-12);
        }
        // raw CT 10 h
        assert_eq!(2.1 * 10.0, 21.0);
        assert_eq!(2.5 * 10.0, 25.0);
    }

    #[test]
    fn step_due_dates_end_exactly_at_due_date() {
        let model = build_minifab(3).compile().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in 0..model.products.len() {
            let mut lot = lot_for(17.25);
            lot.product = p;
            let lot = assign_due_dates(&model, lot, &mut rng);
            assert_eq!(*lot.step_due_dates.last().unwrap(), lot.due_date);
            assert!(lot.step_due_dates.windows(2).all(|w| w[0] <= w[1]));
            let span = (lot.due_date - lot.release_time) / model.products[p].raw_process_time;
            assert!((2.1 - 1e-12..=2.5 + 1e-12).contains(&span));
        }
    }

    #[test]
    fn flow_factor_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let ff = sample_flow_factor(&mut rng);
            assert!((2.1..=2.5).contains(&ff));
            sum += ff;
        }
        let mean = sum / n as f64;
        assert!((mean - 2.3).abs() < 0.01, "mean {mean}");
    }
}
