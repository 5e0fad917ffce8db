//! Covariance matrix adaptation evolution strategy with the usual default
//! strategy parameters (weighted recombination of the best half, cumulative
//! step-size adaptation, rank-one plus rank-mu covariance update).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EsConfig {
    pub population: usize,
    pub generations: usize,
    pub sigma0: f64,
}

impl Default for EsConfig {
    fn default() -> Self {
        EsConfig { population: 10, generations: 20, sigma0: 1.0 }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("es.population must be at least 2".into()));
        }
        if self.generations < 1 {
            return Err(Error::InvalidConfig("es.generations must be at least 1".into()));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(Error::InvalidConfig("es.sigma0 must be positive and finite".into()));
        }
        Ok(())
    }
}

/// Strategy parameters derived from the dimension and population size.
#[derive(Clone, Debug)]
struct Params {
    lambda: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
}

impl Params {
    fn new(n: usize, lambda: usize) -> Self {
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Params { lambda, weights, mu_eff, c_sigma, d_sigma, c_c, c_1, c_mu, chi_n }
    }
}

#[derive(Clone, Debug)]
pub struct EsState {
    params: Params,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    /// Eigenvectors of `cov`.
    basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    scales: DVector<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
}

const MIN_SIGMA: f64 = 1e-300;
const MAX_SIGMA: f64 = 1e300;

impl EsState {
    pub fn new(mean: &[f64], cfg: &EsConfig) -> Result<Self> {
        cfg.validate()?;
        if mean.is_empty() {
            return Err(Error::InvalidConfig("CMA-ES needs at least one dimension".into()));
        }
        let n = mean.len();
        Ok(EsState {
            params: Params::new(n, cfg.population),
            mean: DVector::from_column_slice(mean),
            sigma: cfg.sigma0,
            cov: DMatrix::identity(n, n),
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn lambda(&self) -> usize {
        self.params.lambda
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Draws `lambda` candidates from `N(mean, sigma^2 C)`.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..self.params.lambda)
            .map(|_| {
                let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let y = &self.basis * z.component_mul(&self.scales);
                (&self.mean + y * self.sigma).as_slice().to_vec()
            })
            .collect()
    }

    /// Updates the distribution from `candidates` ranked by ascending `losses`.
    /// Ties keep candidate order.
    pub fn tell(&mut self, candidates: &[Vec<f64>], losses: &[f64]) -> Result<()> {
        let n = self.dim();
        let p = &self.params;
        if candidates.len() != p.lambda || losses.len() != p.lambda {
            return Err(Error::LengthMismatch { expected: p.lambda, actual: candidates.len().min(losses.len()) });
        }
        if let Some(bad) = candidates.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch { expected: n, actual: bad.len() });
        }
        let mut order: Vec<usize> = (0..p.lambda).collect();
        order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]));

        let steps: Vec<DVector<f64>> = order[..p.weights.len()]
            .iter()
            .map(|&i| (DVector::from_column_slice(&candidates[i]) - &self.mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in p.weights.iter().zip(&steps) {
            y_w += y * *w;
        }
        let new_mean = &self.mean + &y_w * self.sigma;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_scales = self.scales.map(|d| 1.0 / d);
        let whitened = &self.basis * (self.basis.transpose() * &y_w).component_mul(&inv_scales);
        self.p_sigma = &self.p_sigma * (1.0 - p.c_sigma) + whitened * (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();

        let g = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - p.c_sigma).powf(2.0 * g)).sqrt()
            < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n;
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - p.c_c) + &y_w * (h * (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt());

        let delta = (1.0 - h) * p.c_c * (2.0 - p.c_c);
        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, y) in p.weights.iter().zip(&steps) {
            rank_mu += y * y.transpose() * *w;
        }
        self.cov = &self.cov * (1.0 - p.c_1 - p.c_mu)
            + (&self.p_c * self.p_c.transpose() + &self.cov * delta) * p.c_1
            + rank_mu * p.c_mu;

        self.sigma *= ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp();
        self.sigma = if self.sigma.is_finite() { self.sigma.clamp(MIN_SIGMA, MAX_SIGMA) } else { MAX_SIGMA };
        self.mean = new_mean;
        if !self.mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("CMA-ES mean became non-finite".into()));
        }
        self.generation += 1;
        self.refresh_decomposition();
        Ok(())
    }

    /// Re-symmetrises `C`, floors its spectrum, and resets it to the identity
    /// if it stopped being finite.
    fn refresh_decomposition(&mut self) {
        let n = self.dim();
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        if !sym.iter().all(|v| v.is_finite()) {
            self.reset_covariance();
            return;
        }
        let eig = SymmetricEigen::new(sym);
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        if !(max_ev > 0.0 && max_ev.is_finite()) {
            self.reset_covariance();
            return;
        }
        let floor = max_ev * 1e-14;
        let evs = eig.eigenvalues.map(|v| v.max(floor));
        self.basis = eig.eigenvectors;
        self.scales = evs.map(f64::sqrt);
        self.cov = &self.basis * DMatrix::from_diagonal(&evs) * self.basis.transpose();
        debug_assert_eq!(self.cov.nrows(), n);
    }

    fn reset_covariance(&mut self) {
        let n = self.dim();
        self.cov = DMatrix::identity(n, n);
        self.basis = DMatrix::identity(n, n);
        self.scales = DVector::from_element(n, 1.0);
        self.p_c = DVector::zeros(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn sphere(x: &[f64], target: &[f64]) -> f64 {
        x.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum()
    }

    #[test]
    fn default_parameters_for_lambda_ten() {
        let p = Params::new(6, 10);
        assert_eq!(p.weights.len(), 5);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.weights.windows(2).all(|w| w[0] > w[1]));
        // Reference values for n = 6, lambda = 10.
        assert!((p.mu_eff - 3.1672992).abs() < 1e-6, "{}", p.mu_eff);
        assert!((p.c_sigma - (p.mu_eff + 2.0) / (6.0 + p.mu_eff + 5.0)).abs() < 1e-15);
        assert!(p.c_1 + p.c_mu <= 1.0);
        assert!((p.chi_n - 6f64.sqrt() * (1.0 - 1.0 / 24.0 + 1.0 / 756.0)).abs() < 1e-15);
    }

    #[test]
    fn ask_shape() {
        let s = EsState::new(&[1.0; 6], &EsConfig::default()).unwrap();
        let c = s.ask(&mut rng(0));
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|v| v.len() == 6));
    }

    #[test]
    fn tiny_sigma_samples_the_mean() {
        let cfg = EsConfig { sigma0: 1e-300, ..Default::default() };
        let s = EsState::new(&[2.0, -1.0], &cfg).unwrap();
        for c in s.ask(&mut rng(1)) {
            assert_eq!(c, vec![2.0, -1.0]);
        }
    }

    #[test]
    fn standard_normal_sample_mean() {
        let s = EsState::new(&[0.0], &EsConfig::default()).unwrap();
        let mut r = rng(2);
        let mut sum = 0.0;
        for _ in 0..1000 {
            sum += s.ask(&mut r).iter().map(|c| c[0]).sum::<f64>();
        }
        assert!((sum / 1e4).abs() <= 0.05);
    }

    #[test]
    fn sphere_improves_tenfold() {
        let target = [3.0, -2.0, 0.5, 1.0, -4.0, 2.0];
        let mut s = EsState::new(&[0.0; 6], &EsConfig::default()).unwrap();
        let mut r = rng(3);
        let mut first_best = None;
        let mut best = f64::INFINITY;
        for _ in 0..20 {
            let c = s.ask(&mut r);
            let l: Vec<f64> = c.iter().map(|x| sphere(x, &target)).collect();
            let gen_best = l.iter().cloned().fold(f64::INFINITY, f64::min);
            first_best.get_or_insert(gen_best);
            best = best.min(gen_best);
            s.tell(&c, &l).unwrap();
        }
        assert!(best * 10.0 <= first_best.unwrap(), "{best} vs {first_best:?}");
    }

    #[test]
    fn equal_losses_keep_sigma_sane() {
        let mut s = EsState::new(&[0.0; 3], &EsConfig::default()).unwrap();
        let mut r = rng(4);
        for _ in 0..50 {
            let c = s.ask(&mut r);
            s.tell(&c, &[1.0; 10]).unwrap();
            assert!(s.sigma() > 0.0 && s.sigma().is_finite());
            let cov = s.covariance();
            assert!((cov - cov.transpose()).abs().max() <= 1e-12 * cov.abs().max());
        }
    }

    #[test]
    fn tell_rejects_wrong_shapes() {
        let mut s = EsState::new(&[0.0; 3], &EsConfig::default()).unwrap();
        let c = s.ask(&mut rng(5));
        assert!(s.tell(&c[..9], &[0.0; 9]).is_err());
        let mut bad = c.clone();
        bad[0].push(1.0);
        assert!(s.tell(&bad, &[0.0; 10]).is_err());
        assert!(EsState::new(&[0.0], &EsConfig { population: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn replay_is_exact() {
        let run = || {
            let mut s = EsState::new(&[1.0, 1.0], &EsConfig::default()).unwrap();
            let mut r = rng(6);
            for _ in 0..5 {
                let c = s.ask(&mut r);
                let l: Vec<f64> = c.iter().map(|x| sphere(x, &[0.0, 0.0])).collect();
                s.tell(&c, &l).unwrap();
            }
            (s.mean().to_vec(), s.sigma())
        };
        assert_eq!(run(), run());
    }
}
