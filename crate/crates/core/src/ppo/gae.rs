/// Generalized advantage estimates and value targets for a rollout stored
/// time-major as `[t * n_envs + e]`. `dones[t, e]` marks that the episode
/// ended with transition `t`; `last_values` bootstraps the state after the
/// final step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n_envs = last_values.len();
    assert!(n_envs > 0, "no environments");
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    assert_eq!(rewards.len() % n_envs, 0, "ragged rollout");
    let steps = rewards.len() / n_envs;
    let mut adv = vec![0.0; rewards.len()];
    for e in 0..n_envs {
        let mut next_adv = 0.0;
        let mut next_value = last_values[e];
        for t in (0..steps).rev() {
            let k = t * n_envs + e;
            let live = if dones[k] { 0.0 } else { 1.0 };
            let delta = rewards[k] + gamma * next_value * live - values[k];
            next_adv = delta + gamma * lambda * live * next_adv;
            adv[k] = next_adv;
            next_value = values[k];
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
