/// Rollout storage, time-major: entry `t * n_envs + e`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionBatch {
    pub steps: usize,
    pub n_envs: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    /// Normalized observations as seen by the policy, `[len, obs_dim]`.
    pub obs: Vec<f64>,
    /// Pre-squash samples `u`, `[len, action_dim]`.
    pub pre_squash: Vec<f64>,
    /// Squashed actions `tanh(u)`, `[len, action_dim]`.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    /// Environment rewards before scaling.
    pub raw_rewards: Vec<f64>,
    /// Rewards used for advantage estimation.
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state following the final step, per environment.
    pub last_values: Vec<f64>,
}

impl TransitionBatch {
    pub fn with_capacity(steps: usize, n_envs: usize, obs_dim: usize, action_dim: usize) -> Self {
        let len = steps * n_envs;
        Self {
            steps: 0,
            n_envs,
            obs_dim,
            action_dim,
            obs: Vec::with_capacity(len * obs_dim),
            pre_squash: Vec::with_capacity(len * action_dim),
            actions: Vec::with_capacity(len * action_dim),
            log_probs: Vec::with_capacity(len),
            raw_rewards: Vec::with_capacity(len),
            rewards: Vec::with_capacity(len),
            values: Vec::with_capacity(len),
            dones: Vec::with_capacity(len),
            last_values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn obs_row(&self, k: usize) -> &[f64] {
        &self.obs[k * self.obs_dim..(k + 1) * self.obs_dim]
    }
}
