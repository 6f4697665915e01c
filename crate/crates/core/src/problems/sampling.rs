use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::mlp::Dataset;
use crate::ensemble::EnsembleState;
use crate::error::{ClmError, Result};

/// Isotropic zero-mean Gaussian over initial member states,
/// `p(x(0)) ~ exp(-x^T x / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialPrior {
    pub sigma: f64,
}

impl InitialPrior {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(ClmError::config(format!(
                "prior sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }
}

/// Draws `q` states i.i.d. from the prior; multipliers start at zero.
pub fn sample_initial_states<R: Rng + ?Sized>(
    prior: InitialPrior,
    q: usize,
    n: usize,
    rng: &mut R,
) -> Result<EnsembleState> {
    let normal = Normal::new(0.0, prior.sigma).map_err(|e| ClmError::config(e.to_string()))?;
    let xs = (0..q)
        .map(|_| (0..n).map(|_| normal.sample(rng)).collect())
        .collect();
    EnsembleState::from_states(xs)
}

/// Draws `q` states uniformly from the box `[lo, hi]^n`; multipliers start at zero.
pub fn sample_uniform_states<R: Rng + ?Sized>(
    lo: f64,
    hi: f64,
    q: usize,
    n: usize,
    rng: &mut R,
) -> Result<EnsembleState> {
    if !(lo < hi) {
        return Err(ClmError::config(format!("empty sampling box [{lo}, {hi}]")));
    }
    let u = Uniform::new_inclusive(lo, hi);
    let xs = (0..q)
        .map(|_| (0..n).map(|_| u.sample(rng)).collect())
        .collect();
    EnsembleState::from_states(xs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SineDatasetOptions {
    pub n_points: usize,
    pub noise_std: f64,
    pub lo: f64,
    pub hi: f64,
    pub test_points: usize,
}

impl Default for SineDatasetOptions {
    fn default() -> Self {
        Self {
            n_points: 20,
            noise_std: 0.4,
            lo: -std::f64::consts::PI,
            hi: std::f64::consts::PI,
            test_points: 500,
        }
    }
}

/// Noisy training samples of `sin(u)` plus a noiseless test grid.
#[derive(Debug, Clone)]
pub struct SineData {
    pub train: Dataset,
    pub test: Dataset,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Training inputs on a uniform grid over `[lo, hi]`, targets `sin(u)` plus
/// Gaussian noise. The test set is the noiseless function on a denser grid.
pub fn gen_sine_dataset<R: Rng + ?Sized>(
    opts: &SineDatasetOptions,
    rng: &mut R,
) -> Result<SineData> {
    if opts.n_points == 0 || opts.test_points == 0 {
        return Err(ClmError::config("sine dataset needs at least one point"));
    }
    if !(opts.noise_std >= 0.0) || !(opts.lo < opts.hi) {
        return Err(ClmError::config("invalid sine dataset options"));
    }
    let us = grid(opts.lo, opts.hi, opts.n_points);
    let targets = if opts.noise_std == 0.0 {
        us.iter().map(|u| u.sin()).collect()
    } else {
        let noise =
            Normal::new(0.0, opts.noise_std).map_err(|e| ClmError::config(e.to_string()))?;
        us.iter().map(|u| u.sin() + noise.sample(rng)).collect()
    };
    let train = Dataset::new(us.into_iter().map(|u| vec![u]).collect(), targets)?;
    let ts = grid(opts.lo, opts.hi, opts.test_points);
    let test = Dataset::new(
        ts.iter().map(|&u| vec![u]).collect(),
        ts.iter().map(|u| u.sin()).collect(),
    )?;
    Ok(SineData { train, test })
}
