//! Diagonal Gaussian squashed through `tanh`.

use rand::Rng;
use rand_distr::StandardNormal;

/// Added inside the log-determinant of the squashing Jacobian.
pub const SQUASH_EPS: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy)]
pub struct TanhNormal<'a> {
    pub mean: &'a [f64],
    pub log_std: &'a [f64],
}

/// One draw: the pre-squash sample `u`, the action `tanh(u)` and its log density.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pre_squash: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl<'a> TanhNormal<'a> {
    pub fn new(mean: &'a [f64], log_std: &'a [f64]) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean and log std dimensions differ");
        Self { mean, log_std }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Sample {
        let pre_squash: Vec<f64> = self
            .mean
            .iter()
            .zip(self.log_std)
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect();
        let log_prob = self.log_prob(&pre_squash);
        let action = pre_squash.iter().map(|u| u.tanh()).collect();
        Sample {
            pre_squash,
            action,
            log_prob,
        }
    }

    /// Log density of the unsquashed Gaussian at `u`.
    pub fn gaussian_log_prob(&self, u: &[f64]) -> f64 {
        u.iter()
            .zip(self.mean)
            .zip(self.log_std)
            .map(|((&u, &m), &ls)| {
                let z = (u - m) * (-ls).exp();
                -0.5 * z * z - ls - 0.5 * LN_2PI
            })
            .sum()
    }

    /// Log density of the squashed action `tanh(u)`, given the pre-squash sample.
    pub fn log_prob(&self, u: &[f64]) -> f64 {
        self.gaussian_log_prob(u) - squash_correction(u)
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mode(&self) -> Vec<f64> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    /// Entropy of the unsquashed Gaussian.
    pub fn gaussian_entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 * (1.0 + LN_2PI)).sum()
    }
}

/// `sum log(1 - tanh(u)^2 + eps)`.
pub fn squash_correction(u: &[f64]) -> f64 {
    u.iter().map(|u| (1.0 - u.tanh().powi(2) + SQUASH_EPS).ln()).sum()
}

/// Pre-squash value for an action strictly inside (-1, 1).
pub fn atanh(a: f64) -> f64 {
    0.5 * ((1.0 + a) / (1.0 - a)).ln()
}
