//! Random-walk Metropolis with a fixed isotropic Gaussian proposal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::InferenceError;

/// Acceptance rates outside this band get a warning on the batch.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhConfig {
    /// Standard deviation of the Gaussian step. Zero is allowed and pins the
    /// chain at its initial point.
    pub proposal_scale: f64,
    pub n_draws: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Post-burn-in draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleBatch {
    pub draws: Vec<Vec<f64>>,
    pub log_densities: Vec<f64>,
    pub seed: u64,
    pub acceptance_rate: f64,
    pub warning: Option<String>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Sample mean of coordinate `dim`.
    pub fn mean(&self, dim: usize) -> f64 {
        let mut m = 0.0;
        for (k, d) in self.draws.iter().enumerate() {
            m += (d[dim] - m) / (k + 1) as f64;
        }
        m
    }

    /// Unbiased sample variance of coordinate `dim`.
    pub fn variance(&self, dim: usize) -> f64 {
        let n = self.draws.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean(dim);
        self.draws.iter().map(|d| (d[dim] - m).powi(2)).sum::<f64>() / (n - 1) as f64
    }
}

/// Runs one chain from `init`. `log_density` may return `-inf` to encode
/// support constraints; NaN is treated the same way.
pub fn mh_sample<F>(log_density: F, init: &[f64], config: &MhConfig) -> Result<SampleBatch, InferenceError>
where
    F: Fn(&[f64]) -> f64,
{
    if config.n_draws == 0 {
        return Err(InferenceError::InvalidArgument("n_draws must be at least 1".into()));
    }
    if !(config.proposal_scale >= 0.0) || !config.proposal_scale.is_finite() {
        return Err(InferenceError::InvalidArgument(format!(
            "proposal scale {} must be finite and non-negative",
            config.proposal_scale
        )));
    }
    let mut current = init.to_vec();
    let mut current_lp = log_density(&current);
    if !current_lp.is_finite() {
        return Err(InferenceError::NonFiniteInit(current_lp));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut proposal = vec![0.0; current.len()];
    let mut draws = Vec::with_capacity(config.n_draws);
    let mut log_densities = Vec::with_capacity(config.n_draws);
    let mut accepted = 0usize;

    for step in 0..config.burn_in + config.n_draws {
        for (p, c) in proposal.iter_mut().zip(&current) {
            let z: f64 = rng.sample(StandardNormal);
            *p = c + config.proposal_scale * z;
        }
        let lp = log_density(&proposal);
        let lp = if lp.is_nan() { f64::NEG_INFINITY } else { lp };
        let u: f64 = rng.random();
        let accept = lp > f64::NEG_INFINITY && u.ln() < lp - current_lp;
        if accept {
            current.copy_from_slice(&proposal);
            current_lp = lp;
        }
        if step >= config.burn_in {
            if accept {
                accepted += 1;
            }
            draws.push(current.clone());
            log_densities.push(current_lp);
        }
    }

    let acceptance_rate = accepted as f64 / config.n_draws as f64;
    let warning = (acceptance_rate < ACCEPTANCE_BAND.0 || acceptance_rate > ACCEPTANCE_BAND.1).then(|| {
        format!(
            "acceptance rate {acceptance_rate:.3} outside [{}, {}]",
            ACCEPTANCE_BAND.0, ACCEPTANCE_BAND.1
        )
    });
    Ok(SampleBatch {
        draws,
        log_densities,
        seed: config.seed,
        acceptance_rate,
        warning,
    })
}
