//! Row/column sampling distributions and reproducible random streams.
//!
//! Streams are ChaCha8 (`rand_chacha::ChaCha8Rng`), which produces the same
//! sequence on every platform for a given seed and stream id. Index draws use
//! inverse-CDF lookup with a binary search over the cumulative weights.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_eps, Error, Result};
use crate::linalg::{DenseMatrix, LinearSystem};

/// A probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    probabilities: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteDistribution {
    /// Normalise nonnegative weights into a distribution.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidConfig(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::ZeroMatrix);
        }
        Ok(Self::from_normalized(
            weights.into_iter().map(|w| w / total).collect(),
        ))
    }

    fn from_normalized(probabilities: Vec<f64>) -> Self {
        let cumulative = probabilities
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Self {
            probabilities,
            cumulative,
        }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn sample(&self, stream: &mut SeededStream) -> usize {
        // Scaling by the final cumulative value keeps u strictly below it, so the
        // search always lands on an index with positive mass.
        let total = *self.cumulative.last().expect("nonempty distribution");
        let u = stream.uniform() * total;
        self.cumulative.partition_point(|&c| c <= u)
    }
}

/// `P(i) = ‖A_{i:}‖² / ‖A‖_F²`.
pub fn row_probs_rk(a: &DenseMatrix) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_weights(a.row_iter().map(|r| r.norm_squared()).collect())
}

/// `P(j) = ‖A_{:j}‖² / ‖A‖_F²`.
pub fn col_probs(a: &DenseMatrix) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_weights(a.column_iter().map(|c| c.norm_squared()).collect())
}

/// `P(i) = (1 + ‖A_{i:}‖²/ε) / (m + ‖A‖_F²/ε)`.
pub fn row_probs_eps(a: &DenseMatrix, eps: f64) -> Result<DiscreteDistribution> {
    check_eps(eps)?;
    let norms: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    Ok(row_probs_eps_from_norms(&norms, eps))
}

// Multiplying numerator and denominator by ε keeps both limits well conditioned.
fn row_probs_eps_from_norms(row_norms_sq: &[f64], eps: f64) -> DiscreteDistribution {
    let m = row_norms_sq.len() as f64;
    let frob: f64 = row_norms_sq.iter().sum();
    let denom = m * eps + frob;
    DiscreteDistribution::from_normalized(row_norms_sq.iter().map(|r| (eps + r) / denom).collect())
}

pub(crate) fn system_row_probs_rk(system: &LinearSystem) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_weights(system.row_norms_sq().to_vec())
}

pub(crate) fn system_col_probs(system: &LinearSystem) -> Result<DiscreteDistribution> {
    DiscreteDistribution::from_weights(system.col_norms_sq().to_vec())
}

pub(crate) fn system_row_probs_eps(
    system: &LinearSystem,
    eps: f64,
) -> Result<DiscreteDistribution> {
    check_eps(eps)?;
    if system.frobenius_sq() == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    Ok(row_probs_eps_from_norms(system.row_norms_sq(), eps))
}

/// Seeded ChaCha8 stream. One per trial; never shared between workers.
#[derive(Debug, Clone)]
pub struct SeededStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// Independent sub-stream of the same seed.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
