use serde::{Deserialize, Serialize};

/// Floor on the standard deviation used by [`Normalizer::apply`].
pub const STD_EPS: f64 = 1e-6;

/// Streaming per-feature mean and variance that can be merged across
/// workers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub mean: Vec<f64>,
    /// Sum of squared deviations from the mean.
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        RunningStats {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let n = self.count as f64;
        for ((m, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *m2 += d * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        debug_assert_eq!(other.dim(), self.dim());
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.dim() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.count += other.count;
    }

    /// Sample variance; zero below two observations.
    pub fn variance(&self, i: usize) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2[i] / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        self.variance(i).sqrt()
    }
}

/// z-score normalization with statistics gathered from simulations.
///
/// With fewer than two observations `apply` only centers. A frozen
/// normalizer ignores updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub stats: RunningStats,
    pub frozen: bool,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Normalizer {
            stats: RunningStats::new(dim),
            frozen: false,
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        if !self.frozen {
            self.stats.push(x);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if !self.frozen {
            self.stats.merge(other);
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn frozen_copy(&self) -> Normalizer {
        Normalizer {
            stats: self.stats.clone(),
            frozen: true,
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            let std = if self.stats.count < 2 {
                1.0
            } else {
                self.stats.std(i).max(STD_EPS)
            };
            out[i] = (x[i] - self.stats.mean[i]) / std;
        }
    }

    pub fn apply_array<const N: usize>(&self, x: &[f64; N]) -> [f64; N] {
        let mut out = [0.0; N];
        self.apply(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_stream() {
        let mut n = Normalizer::new(1);
        n.update(&[0.0]);
        n.update(&[2.0]);
        assert_eq!(n.stats.mean[0], 1.0);
        assert!((n.stats.std(0) - 2f64.sqrt()).abs() < 1e-15);
        let z = n.apply_array(&[2.0]);
        assert!((z[0] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn constant_stream_maps_to_zero() {
        let mut n = Normalizer::new(2);
        for _ in 0..10 {
            n.update(&[3.0, -1.0]);
        }
        assert_eq!(n.apply_array(&[3.0, -1.0]), [0.0, 0.0]);
    }

    #[test]
    fn frozen_ignores_updates() {
        let mut n = Normalizer::new(1);
        n.update(&[1.0]);
        n.update(&[5.0]);
        let before = n.clone();
        n.freeze();
        n.update(&[100.0]);
        n.merge(&before.stats);
        assert_eq!(n.stats, before.stats);
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let mut a = RunningStats::new(1);
        a.push(&[4.0]);
        let snapshot = a.clone();
        a.merge(&RunningStats::new(1));
        assert_eq!(a, snapshot);
        let mut e = RunningStats::new(1);
        e.merge(&snapshot);
        assert_eq!(e, snapshot);
    }
}
