use crate::model::{BatchLimits, LotId};

/// Builds a batch around `selection`: the selection first, then the
/// highest-scoring lots of the same batch family (ties to the lower lot id),
/// up to `limits.max_size`. When fewer than `limits.min_size` lots are
/// available the batch is just the selection.
///
/// `scores` is aligned with `queue`; `family` maps a lot to its
/// batch-compatibility family.
pub fn form_batch(
    selection: LotId,
    queue: &[LotId],
    scores: &[f64],
    family: impl Fn(LotId) -> Option<u32>,
    limits: BatchLimits,
) -> Vec<LotId> {
    debug_assert_eq!(queue.len(), scores.len());
    debug_assert!(queue.contains(&selection));
    let Some(fam) = family(selection) else {
        return vec![selection];
    };
    let mut others: Vec<(f64, LotId)> = queue
        .iter()
        .zip(scores)
        .filter(|&(&lot, _)| lot != selection && family(lot) == Some(fam))
        .map(|(&lot, &s)| (s, lot))
        .collect();
    others.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut batch = vec![selection];
    batch.extend(others.into_iter().take(limits.max_size - 1).map(|(_, l)| l));
    if batch.len() < limits.min_size {
        batch.truncate(1);
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIMITS: BatchLimits = BatchLimits { max_size: 3, min_size: 1 };

    fn ids(v: &[u32]) -> Vec<LotId> {
        v.iter().map(|&i| LotId(i)).collect()
    }

    #[test]
    fn picks_top_two_compatible_by_score() {
        let queue = ids(&[1, 2, 3, 4, 5]);
        let scores = [0.9, 0.1, 0.5, 0.7, 0.3];
        let batch = form_batch(LotId(1), &queue, &scores, |_| Some(0), LIMITS);
        assert_eq!(batch, ids(&[1, 4, 3]));
    }

    #[test]
    fn incompatible_lots_are_skipped() {
        let queue = ids(&[1, 2, 3]);
        let batch = form_batch(LotId(2), &queue, &[1.0, 1.0, 1.0], |l| Some(l.0 % 2), LIMITS);
        assert_eq!(batch, ids(&[2]));
    }

    #[test]
    fn ties_go_to_lower_lot_id() {
        let queue = ids(&[9, 7, 8, 1]);
        let batch = form_batch(LotId(1), &queue, &[0.5, 0.5, 0.5, 0.0], |_| Some(0), LIMITS);
        assert_eq!(batch, ids(&[1, 7, 8]));
    }

    #[test]
    fn below_min_size_falls_back_to_selection() {
        let limits = BatchLimits { max_size: 4, min_size: 3 };
        let queue = ids(&[1, 2]);
        assert_eq!(form_batch(LotId(1), &queue, &[0.0, 0.0], |_| Some(0), limits), ids(&[1]));
    }

    #[test]
    fn non_batching_step_is_single() {
        let queue = ids(&[1, 2]);
        assert_eq!(form_batch(LotId(2), &queue, &[0.0, 0.0], |_| None, LIMITS), ids(&[2]));
    }
}
