//! Rewards, potential scores, and resampling.
//!
//! A candidate's potential is exp(lambda * g(history)) where g is one of
//! four reward functionals. All potential math stays in log space; the
//! exponential happens only inside the softmax, after max subtraction, so
//! large lambda or long reward sums cannot overflow.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{PotentialKind, PotentialSpec};
use crate::error::{Error, Result};
use crate::generator::ToyPrompt;
use crate::tensor::{mse, Image};

/// A reward model. `score` is the deterministic ground truth; `score_at_scale`
/// is what the search observes at intermediate scales and may be noisy.
pub trait Reward {
    fn score(&self, image: &Image, prompt: &ToyPrompt) -> f64;

    fn score_at_scale(
        &self,
        image: &Image,
        prompt: &ToyPrompt,
        scale: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let _ = (scale, rng);
        self.score(image, prompt)
    }
}

/// Oracle reward: negative MSE to the prompt target, optionally with
/// per-scale gaussian scoring noise to model unreliable early-scale rating.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyReward {
    pub noise_by_scale: Option<Vec<f64>>,
}

impl ToyReward {
    pub fn exact() -> Self {
        Self { noise_by_scale: None }
    }

    pub fn noisy(noise_by_scale: Vec<f64>) -> Self {
        Self { noise_by_scale: Some(noise_by_scale) }
    }

    pub fn validate(&self, num_scales: usize) -> Result<()> {
        if let Some(noise) = &self.noise_by_scale {
            if noise.len() != num_scales {
                return Err(Error::config(format!(
                    "reward noise has {} entries for {num_scales} scales",
                    noise.len()
                )));
            }
            if noise.iter().any(|s| !s.is_finite() || *s < 0.0) {
                return Err(Error::config("reward noise entries must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

impl Reward for ToyReward {
    fn score(&self, image: &Image, prompt: &ToyPrompt) -> f64 {
        -mse(image, &prompt.target)
    }

    fn score_at_scale(
        &self,
        image: &Image,
        prompt: &ToyPrompt,
        scale: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let base = self.score(image, prompt);
        match &self.noise_by_scale {
            Some(noise) => {
                let sigma = noise[scale - 1];
                let draw: f64 = rng.sample(StandardNormal);
                base + sigma * draw
            }
            None => base,
        }
    }
}

/// Scores, log-potentials, and normalized weights of one resampling event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialResult {
    /// Per-candidate reward at the current scale.
    pub raw_scores: Vec<f64>,
    /// Per-candidate potentials as natural logs; exponentiation is deferred
    /// to weight normalization.
    pub potentials: Vec<f64>,
    /// Softmax of the potentials; nonnegative, sums to 1 within 1e-12.
    pub weights: Vec<f64>,
}

/// Log-potential of one candidate's reward history.
pub fn log_potential(history: &[f64], spec: &PotentialSpec) -> Result<f64> {
    if history.is_empty() {
        return Err(Error::arg("potential of an empty reward history"));
    }
    if history.iter().any(|r| !r.is_finite()) {
        return Err(Error::arg("reward history contains non-finite values"));
    }
    let last = *history.last().unwrap();
    let g = match spec.kind {
        PotentialKind::Value => last,
        PotentialKind::Diff => {
            if history.len() >= 2 {
                last - history[history.len() - 2]
            } else {
                // No previous score exists at the first scored scale.
                last
            }
        }
        PotentialKind::Max => history.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        PotentialKind::Sum => history.iter().sum(),
    };
    Ok(spec.lambda * g)
}

/// The potential itself. Prefer `log_potential` anywhere the value feeds a
/// softmax; this form can overflow for large lambda.
pub fn potential(history: &[f64], spec: &PotentialSpec) -> Result<f64> {
    Ok(log_potential(history, spec)?.exp())
}

/// Softmax over log-potentials, stabilized by max subtraction.
pub fn resample_weights(log_potentials: &[f64]) -> Result<Vec<f64>> {
    if log_potentials.is_empty() {
        return Err(Error::arg("no candidates to weight"));
    }
    if log_potentials.iter().any(|p| !p.is_finite()) {
        return Err(Error::arg("log-potentials must be finite"));
    }
    let max = log_potentials.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = log_potentials.iter().map(|p| (p - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Scores plus weights for a batch of reward histories.
pub fn potential_result(histories: &[Vec<f64>], spec: &PotentialSpec) -> Result<PotentialResult> {
    let raw_scores = histories
        .iter()
        .map(|h| {
            h.last()
                .copied()
                .ok_or_else(|| Error::arg("candidate with empty reward history"))
        })
        .collect::<Result<Vec<f64>>>()?;
    let potentials = histories
        .iter()
        .map(|h| log_potential(h, spec))
        .collect::<Result<Vec<f64>>>()?;
    let weights = resample_weights(&potentials)?;
    Ok(PotentialResult { raw_scores, potentials, weights })
}

/// `count` i.i.d. draws from the categorical distribution over `weights`,
/// with replacement.
pub fn multinomial_select(
    weights: &[f64],
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    if count < 1 {
        return Err(Error::arg("selection count must be at least 1"));
    }
    if weights.is_empty() {
        return Err(Error::arg("no candidates to select from"));
    }
    let dist = WeightedIndex::new(weights)
        .map_err(|e| Error::arg(format!("invalid weights: {e}")))?;
    Ok((0..count).map(|_| dist.sample(rng)).collect())
}

/// One softmax(lambda * finals) draw; the importance-sampling baseline's
/// selection rule at the final scale.
pub fn importance_sampling_baseline(
    finals: &[f64],
    lambda: f64,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    if finals.is_empty() {
        return Err(Error::arg("no finals to select from"));
    }
    let logs: Vec<f64> = finals.iter().map(|r| lambda * r).collect();
    let weights = resample_weights(&logs)?;
    Ok(multinomial_select(&weights, 1, rng)?[0])
}
