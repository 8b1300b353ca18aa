//! Covariance matrix adaptation evolution strategy.
//!
//! [`Cmaes::ask`] samples a population from `N(mean, sigma^2 C)` and
//! [`Cmaes::tell`] takes the matching costs (lower is better). Three
//! covariance modes are available:
//!
//! * `Full`: cumulative step-size adaptation plus rank-one and rank-mu
//!   covariance updates, with a lazily refreshed eigendecomposition.
//! * `Diagonal`: the same updates restricted to the diagonal, with learning
//!   rates scaled up by `(n + 2) / 3`. Used for large parameter vectors.
//! * `Simplified`: `C` stays the identity, the mean moves to the elite mean
//!   and `sigma` becomes the norm of the mean elite displacement.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many parameters `Auto` picks the diagonal mode.
pub const FULL_COVARIANCE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    #[default]
    Auto,
    Full,
    Diagonal,
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Recombination {
    /// Plain mean of the elite.
    #[default]
    Equal,
    /// Log-rank weights `ln((mu + 1) / 2) - ln(i)`.
    LogRank,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmaesConfig {
    pub population: usize,
    pub elite: usize,
    pub sigma0: f64,
    pub mode: CovarianceMode,
    pub recombination: Recombination,
    /// Lower bound on sigma in the simplified mode.
    pub sigma_floor: f64,
    pub seed: u64,
}

impl Default for CmaesConfig {
    fn default() -> Self {
        CmaesConfig {
            population: 16,
            elite: 8,
            sigma0: 0.5,
            mode: CovarianceMode::Auto,
            recombination: Recombination::Equal,
            sigma_floor: 1e-8,
            seed: 0,
        }
    }
}

impl CmaesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("cmaes population must be at least 2".into()));
        }
        if self.elite == 0 || self.elite > self.population {
            return Err(Error::Config(format!(
                "cmaes elite count {} must be in 1..={}",
                self.elite, self.population
            )));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::Config("cmaes sigma0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Covariance {
    Full {
        c: DMatrix<f64>,
        /// Eigenvectors of `c`.
        b: DMatrix<f64>,
        /// Square roots of the eigenvalues.
        d: DVector<f64>,
        eigen_iteration: u64,
    },
    Diagonal(DVector<f64>),
    Identity,
}

/// Optimizer state. Serializable for checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cmaes {
    cfg: CmaesConfig,
    mode: CovarianceMode,
    dim: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: Covariance,
    ps: DVector<f64>,
    pc: DVector<f64>,
    weights: Vec<f64>,
    mueff: f64,
    cs: f64,
    damps: f64,
    cc: f64,
    c1: f64,
    cmu: f64,
    chi_n: f64,
    iteration: u64,
    rng: ChaCha8Rng,
    /// Standardized steps `(x - mean) / sigma` of the last ask.
    pending: Option<Vec<DVector<f64>>>,
    best: Option<(Vec<f64>, f64)>,
}

impl Cmaes {
    pub fn new(mean0: Vec<f64>, cfg: CmaesConfig) -> Result<Self> {
        cfg.validate()?;
        let n = mean0.len();
        if n == 0 {
            return Err(Error::Config("cmaes needs at least one dimension".into()));
        }
        let mode = match cfg.mode {
            CovarianceMode::Auto if n > FULL_COVARIANCE_LIMIT => CovarianceMode::Diagonal,
            CovarianceMode::Auto => CovarianceMode::Full,
            m => m,
        };
        let mu = cfg.elite;
        let raw: Vec<f64> = match cfg.recombination {
            Recombination::Equal => vec![1.0; mu],
            Recombination::LogRank => (1..=mu)
                .map(|i| ((mu as f64 + 1.0) / 2.0).ln() - (i as f64).ln())
                .map(|w| w.max(1e-12))
                .collect(),
        };
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let mut c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let mut cmu = (2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff)).min(1.0 - c1);
        if mode == CovarianceMode::Diagonal {
            let scale = (nf + 2.0) / 3.0;
            c1 = (c1 * scale).min(0.5);
            cmu = (cmu * scale).min(1.0 - c1);
        }
        let cov = match mode {
            CovarianceMode::Full => Covariance::Full {
                c: DMatrix::identity(n, n),
                b: DMatrix::identity(n, n),
                d: DVector::from_element(n, 1.0),
                eigen_iteration: 0,
            },
            CovarianceMode::Diagonal => Covariance::Diagonal(DVector::from_element(n, 1.0)),
            _ => Covariance::Identity,
        };
        Ok(Cmaes {
            cfg,
            mode,
            dim: n,
            mean: DVector::from_vec(mean0),
            sigma: cfg.sigma0,
            cov,
            ps: DVector::zeros(n),
            pc: DVector::zeros(n),
            weights,
            mueff,
            cs,
            damps,
            cc,
            c1,
            cmu,
            chi_n: nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf)),
            iteration: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            pending: None,
            best: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mode(&self) -> CovarianceMode {
        self.mode
    }

    pub fn config(&self) -> &CmaesConfig {
        &self.cfg
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Best candidate seen so far and its cost.
    pub fn best(&self) -> Option<(&[f64], f64)> {
        self.best.as_ref().map(|(x, f)| (x.as_slice(), *f))
    }

    /// Samples `population` candidates.
    pub fn ask(&mut self) -> Vec<Vec<f64>> {
        let n = self.dim;
        let mut steps = Vec::with_capacity(self.cfg.population);
        let mut out = Vec::with_capacity(self.cfg.population);
        for _ in 0..self.cfg.population {
            let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)));
            let y = match &self.cov {
                Covariance::Full { b, d, .. } => b * z.component_mul(d),
                Covariance::Diagonal(c) => z.component_mul(&c.map(f64::sqrt)),
                Covariance::Identity => z,
            };
            out.push((&self.mean + &y * self.sigma).data.into());
            steps.push(y);
        }
        self.pending = Some(steps);
        out
    }

    /// Updates the state with the costs of the last [`Cmaes::ask`], in the
    /// same order. Non-finite costs rank last; ties go to the lower index.
    pub fn tell(&mut self, costs: &[f64]) -> Result<()> {
        let expected = self.cfg.population;
        if costs.len() != expected {
            return Err(Error::FitnessCount {
                expected,
                actual: costs.len(),
            });
        }
        let steps = self
            .pending
            .take()
            .ok_or_else(|| Error::Config("tell called without a preceding ask".into()))?;
        let key = |f: f64| if f.is_finite() { f } else { f64::INFINITY };
        let mut order: Vec<usize> = (0..expected).collect();
        order.sort_by(|&a, &b| key(costs[a]).total_cmp(&key(costs[b])).then(a.cmp(&b)));

        let best_idx = order[0];
        if costs[best_idx].is_finite() && self.best.as_ref().map_or(true, |(_, f)| costs[best_idx] < *f) {
            let x = &self.mean + &steps[best_idx] * self.sigma;
            self.best = Some((x.data.into(), costs[best_idx]));
        }

        let n = self.dim;
        let mut yw = DVector::zeros(n);
        for (w, &i) in self.weights.iter().zip(&order) {
            yw.axpy(*w, &steps[i], 1.0);
        }
        let old_mean = self.mean.clone();
        self.mean.axpy(self.sigma, &yw, 1.0);
        self.iteration += 1;

        if self.mode == CovarianceMode::Simplified {
            let shift = (&self.mean - &old_mean).norm();
            self.sigma = shift.max(self.cfg.sigma_floor);
            return Ok(());
        }

        // C^{-1/2} y_w
        let inv_sqrt_yw = match &self.cov {
            Covariance::Full { b, d, .. } => b * (b.transpose() * &yw).component_div(d),
            Covariance::Diagonal(c) => yw.component_div(&c.map(f64::sqrt)),
            Covariance::Identity => yw.clone(),
        };
        let cs = self.cs;
        self.ps = &self.ps * (1.0 - cs) + inv_sqrt_yw * (cs * (2.0 - cs) * self.mueff).sqrt();
        let ps_norm = self.ps.norm();
        let t = self.iteration as f64;
        let hsig = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * t)).sqrt() / self.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let cc = self.cc;
        let h = if hsig { 1.0 } else { 0.0 };
        self.pc = &self.pc * (1.0 - cc) + &yw * (h * (cc * (2.0 - cc) * self.mueff).sqrt());

        let (c1, cmu) = (self.c1, self.cmu);
        let keep = 1.0 - c1 - cmu + (1.0 - h) * c1 * cc * (2.0 - cc);
        match &mut self.cov {
            Covariance::Full { c, .. } => {
                *c *= keep;
                c.ger(c1, &self.pc, &self.pc, 1.0);
                for (w, &i) in self.weights.iter().zip(&order) {
                    c.ger(cmu * w, &steps[i], &steps[i], 1.0);
                }
            }
            Covariance::Diagonal(c) => {
                for k in 0..n {
                    let mut rank_mu = 0.0;
                    for (w, &i) in self.weights.iter().zip(&order) {
                        rank_mu += w * steps[i][k] * steps[i][k];
                    }
                    c[k] = keep * c[k] + c1 * self.pc[k] * self.pc[k] + cmu * rank_mu;
                }
            }
            Covariance::Identity => {}
        }

        self.sigma *= ((cs / self.damps) * (ps_norm / self.chi_n - 1.0)).exp();
        self.refresh_eigen();
        Ok(())
    }

    fn refresh_eigen(&mut self) {
        let n = self.dim as f64;
        let gap = ((1.0 / (10.0 * n * (self.c1 + self.cmu))).floor() as u64).max(1);
        let iteration = self.iteration;
        if let Covariance::Full {
            c,
            b,
            d,
            eigen_iteration,
        } = &mut self.cov
        {
            if iteration - *eigen_iteration < gap {
                return;
            }
            *eigen_iteration = iteration;
            // Enforce symmetry before decomposing.
            let sym = (&*c + c.transpose()) * 0.5;
            *c = sym.clone();
            let eig = SymmetricEigen::new(sym);
            *b = eig.eigenvectors;
            *d = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());
        }
    }

    /// Covariance diagonal, for diagnostics.
    pub fn covariance_diagonal(&self) -> Vec<f64> {
        match &self.cov {
            Covariance::Full { c, .. } => c.diagonal().data.into(),
            Covariance::Diagonal(c) => c.data.as_vec().clone(),
            Covariance::Identity => vec![1.0; self.dim],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn tiny_sigma_replicates_mean() {
        let cfg = CmaesConfig {
            sigma0: 1e-12,
            ..Default::default()
        };
        let mean = vec![0.3, -1.0, 2.0];
        let mut es = Cmaes::new(mean.clone(), cfg).unwrap();
        for x in es.ask() {
            for (a, b) in x.iter().zip(&mean) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_population() {
        let mut a = Cmaes::new(vec![0.0; 4], CmaesConfig::default()).unwrap();
        let mut b = Cmaes::new(vec![0.0; 4], CmaesConfig::default()).unwrap();
        assert_eq!(a.ask(), b.ask());
    }

    #[test]
    fn full_elite_moves_to_population_mean() {
        let cfg = CmaesConfig {
            population: 6,
            elite: 6,
            ..Default::default()
        };
        let mut es = Cmaes::new(vec![1.0, 2.0], cfg).unwrap();
        let pop = es.ask();
        let costs: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
        es.tell(&costs).unwrap();
        for k in 0..2 {
            let m: f64 = pop.iter().map(|x| x[k]).sum::<f64>() / 6.0;
            assert!((es.mean()[k] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_costs_select_lowest_indices() {
        let cfg = CmaesConfig {
            population: 6,
            elite: 2,
            mode: CovarianceMode::Simplified,
            ..Default::default()
        };
        let mut es = Cmaes::new(vec![0.0; 3], cfg).unwrap();
        let pop = es.ask();
        es.tell(&[1.0; 6]).unwrap();
        for k in 0..3 {
            assert!((es.mean()[k] - (pop[0][k] + pop[1][k]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_fitness_count_is_rejected() {
        let mut es = Cmaes::new(vec![0.0; 2], CmaesConfig::default()).unwrap();
        es.ask();
        assert!(matches!(es.tell(&[0.0; 3]), Err(Error::FitnessCount { expected: 16, actual: 3 })));
    }

    #[test]
    fn nan_costs_rank_last() {
        let cfg = CmaesConfig {
            population: 4,
            elite: 1,
            ..Default::default()
        };
        let mut es = Cmaes::new(vec![0.0; 2], cfg).unwrap();
        let pop = es.ask();
        es.tell(&[f64::NAN, 5.0, f64::INFINITY, 7.0]).unwrap();
        let (best, cost) = es.best().unwrap();
        assert_eq!(cost, 5.0);
        assert_eq!(best, pop[1].as_slice());
    }

    #[test]
    fn diagonal_mode_converges_on_sphere() {
        let cfg = CmaesConfig {
            mode: CovarianceMode::Diagonal,
            ..Default::default()
        };
        let mut es = Cmaes::new(vec![1.0; 10], cfg).unwrap();
        for _ in 0..300 {
            let pop = es.ask();
            let costs: Vec<f64> = pop.iter().map(|x| sphere(x)).collect();
            es.tell(&costs).unwrap();
        }
        assert!(es.best().unwrap().1 < 1e-3);
    }

    #[test]
    fn auto_mode_switches_on_size() {
        let es = Cmaes::new(vec![0.0; 10], CmaesConfig::default()).unwrap();
        assert_eq!(es.mode(), CovarianceMode::Full);
        let es = Cmaes::new(vec![0.0; FULL_COVARIANCE_LIMIT + 1], CmaesConfig::default()).unwrap();
        assert_eq!(es.mode(), CovarianceMode::Diagonal);
    }
}
