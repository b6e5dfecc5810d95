use serde::{Deserialize, Serialize};

/// Variance floor used when normalizing.
pub const STATS_EPS: f64 = 1e-8;

/// Running per-dimension mean and population variance (Welford updates,
/// Chan et al. merging).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "sample dimension");
        self.count += 1.0;
        for ((m, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *m2 += delta * (v - *m);
        }
    }

    pub fn merge(&mut self, other: &RunningStats) {
        assert_eq!(other.dim(), self.dim(), "stats dimension");
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        for k in 0..self.dim() {
            let delta = other.mean[k] - self.mean[k];
            self.mean[k] += delta * other.count / n;
            self.m2[k] += other.m2[k] + delta * delta * self.count * other.count / n;
        }
        self.count = n;
    }

    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0.0 {
            return vec![1.0; self.dim()];
        }
        self.m2.iter().map(|m2| m2 / self.count).collect()
    }

    /// `clip((x - mean) / sqrt(var + eps), -clip, clip)`.
    pub fn normalize_into(&self, x: &[f64], clip: f64, out: &mut [f64]) {
        let inv_count = if self.count > 0.0 { 1.0 / self.count } else { 0.0 };
        for (k, o) in out.iter_mut().enumerate() {
            let var = if self.count > 0.0 { self.m2[k] * inv_count } else { 1.0 };
            *o = ((x[k] - self.mean[k]) / (var + STATS_EPS).sqrt()).clamp(-clip, clip);
        }
    }

    pub fn normalize(&self, x: &[f64], clip: f64) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.normalize_into(x, clip, &mut out);
        out
    }
}

/// Scales rewards by the running standard deviation of the discounted return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardScaler {
    pub stats: RunningStats,
    pub returns: Vec<f64>,
    pub gamma: f64,
    pub clip: f64,
}

impl RewardScaler {
    pub fn new(n_envs: usize, gamma: f64, clip: f64) -> Self {
        Self {
            stats: RunningStats::new(1),
            returns: vec![0.0; n_envs],
            gamma,
            clip,
        }
    }

    pub fn scale(&mut self, env: usize, reward: f64, done: bool) -> f64 {
        self.returns[env] = self.returns[env] * self.gamma + reward;
        self.stats.update(&[self.returns[env]]);
        if done {
            self.returns[env] = 0.0;
        }
        (reward / (self.stats.variance()[0] + STATS_EPS).sqrt()).clamp(-self.clip, self.clip)
    }
}
