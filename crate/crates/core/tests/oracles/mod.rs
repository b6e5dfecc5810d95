//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use residual_racing::track::OccupancyGrid;
use residual_racing::vehicle::{VehicleParams, VehicleState};

pub const G: f64 = 9.81;

/// State as `[x, y, delta, v, yaw, yaw_rate, slip]`.
pub type Vec7 = [f64; 7];

pub fn to_vec7(s: &VehicleState) -> Vec7 {
    [s.x, s.y, s.delta, s.v, s.yaw, s.yaw_rate, s.slip]
}

/// Single-track model with linear tire forces, transcribed term by term.
pub fn st_dynamic(x: &Vec7, steer_rate: f64, accel: f64, p: &VehicleParams) -> Vec7 {
    let (delta, v, psi, psi_d, beta) = (x[2], x[3], x[4], x[5], x[6]);
    let (lf, lr, h, m, iz, mu) = (p.l_f, p.l_r, p.h, p.m, p.inertia, p.mu);
    let (csf, csr) = (p.c_sf, p.c_sr);
    let ff = G * lr - accel * h;
    let fr = G * lf + accel * h;
    let dpsi_d = -mu * m / (v * iz * (lr + lf)) * (lf * lf * csf * ff + lr * lr * csr * fr) * psi_d
        + mu * m / (iz * (lr + lf)) * (lr * csr * fr - lf * csf * ff) * beta
        + mu * m / (iz * (lr + lf)) * lf * csf * ff * delta;
    let dbeta = (mu / (v * v * (lr + lf)) * (csr * fr * lr - csf * ff * lf) - 1.0) * psi_d
        - mu / (v * (lr + lf)) * (csr * fr + csf * ff) * beta
        + mu / (v * (lr + lf)) * csf * ff * delta;
    [
        v * (psi + beta).cos(),
        v * (psi + beta).sin(),
        steer_rate,
        accel,
        psi_d,
        dpsi_d,
        dbeta,
    ]
}

/// Kinematic single-track model with slip and yaw rate tied to steering.
pub fn st_kinematic(x: &Vec7, steer_rate: f64, accel: f64, p: &VehicleParams) -> Vec7 {
    let (delta, v, psi) = (x[2], x[3], x[4]);
    let lwb = p.l_f + p.l_r;
    let beta = (delta.tan() * p.l_r / lwb).atan();
    // d/dt atan(k tan d) = k sec^2 d / (1 + k^2 tan^2 d) * d_dot
    let k = p.l_r / lwb;
    let sec2 = 1.0 / delta.cos().powi(2);
    let dbeta = k * sec2 / (1.0 + (k * delta.tan()).powi(2)) * steer_rate;
    // psi_dot = v cos(beta) tan(delta) / lwb, differentiated in time.
    let dpsi_d = (accel * beta.cos() * delta.tan() - v * beta.sin() * dbeta * delta.tan()
        + v * beta.cos() * sec2 * steer_rate)
        / lwb;
    [
        v * (psi + beta).cos(),
        v * (psi + beta).sin(),
        steer_rate,
        accel,
        v * beta.cos() * delta.tan() / lwb,
        dpsi_d,
        dbeta,
    ]
}

/// Blend over the band [0.5, 1.0] m/s.
pub fn st_blended(x: &Vec7, steer_rate: f64, accel: f64, p: &VehicleParams) -> Vec7 {
    let v = x[3];
    if v <= 0.5 {
        return st_kinematic(x, steer_rate, accel, p);
    }
    if v >= 1.0 {
        return st_dynamic(x, steer_rate, accel, p);
    }
    let w = (v - 0.5) / 0.5;
    let a = st_kinematic(x, steer_rate, accel, p);
    let b = st_dynamic(x, steer_rate, accel, p);
    let mut out = [0.0; 7];
    for i in 0..7 {
        out[i] = (1.0 - w) * a[i] + w * b[i];
    }
    out
}

pub fn rk4_step(x: &Vec7, dt: f64, f: &dyn Fn(&Vec7) -> Vec7) -> Vec7 {
    let add = |a: &Vec7, b: &Vec7, s: f64| {
        let mut o = *a;
        for i in 0..7 {
            o[i] += s * b[i];
        }
        o
    };
    let k1 = f(x);
    let k2 = f(&add(x, &k1, dt / 2.0));
    let k3 = f(&add(x, &k2, dt / 2.0));
    let k4 = f(&add(x, &k3, dt));
    let mut o = *x;
    for i in 0..7 {
        o[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    o
}

/// Distance to the first occupied cell found by marching along the ray in
/// steps of `step` meters (world frame, unrotated grid). Outside the grid is free.
pub fn march_ray(grid: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64, step: f64) -> f64 {
    let (s, c) = angle.sin_cos();
    let mut t = 0.0;
    while t < max_range {
        let (gx, gy) = grid.world_to_grid(x + t * c, y + t * s);
        let (i, j) = grid.cell_of(gx, gy);
        if grid.is_occupied(i, j) == Some(true) {
            return t;
        }
        t += step;
    }
    max_range
}

/// Samples the `l x w` footprint (inflated by `inflate`) on a lattice of
/// spacing `spacing` and reports whether any sample lies in an occupied or
/// off-grid cell.
pub fn sampled_collision(
    grid: &OccupancyGrid,
    state: &VehicleState,
    p: &VehicleParams,
    spacing: f64,
    inflate: f64,
) -> bool {
    let off = 0.5 * (p.l_f - p.l_r);
    let (s, c) = state.yaw.sin_cos();
    let (cx, cy) = (state.x + off * c, state.y + off * s);
    let hl = 0.5 * p.l + inflate;
    let hw = 0.5 * p.w + inflate;
    let nl = (2.0 * hl / spacing).ceil() as i64;
    let nw = (2.0 * hw / spacing).ceil() as i64;
    for a in 0..=nl {
        let u = -hl + 2.0 * hl * a as f64 / nl as f64;
        for b in 0..=nw {
            let v = -hw + 2.0 * hw * b as f64 / nw as f64;
            let (wx, wy) = (cx + u * c - v * s, cy + u * s + v * c);
            let (gx, gy) = grid.world_to_grid(wx, wy);
            let (i, j) = grid.cell_of(gx, gy);
            if grid.is_occupied(i, j).unwrap_or(true) {
                return true;
            }
        }
    }
    false
}

/// `A_t = sum_k (gamma lambda)^k delta_{t+k}`, truncated at episode ends, by
/// an explicit double loop over one environment's trajectory.
pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { last_value };
    let delta = |t: usize| {
        let live = if dones[t] { 0.0 } else { 1.0 };
        rewards[t] + gamma * next_value(t) * live - values[t]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                sum += weight * delta(k);
                if dones[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Loop-based evaluation of a layer stack given weights accessed by name.
/// Returns `(mean, value)` for one observation.
pub fn naive_forward(
    param: &dyn Fn(&str) -> Vec<f64>,
    obs: &[f64],
    lidar_len: usize,
    filters: &[usize],
    kernel: usize,
    stride: usize,
    pool: usize,
    embed: usize,
    hidden: &[usize],
    action_dim: usize,
) -> (Vec<f64>, f64) {
    let relu = |v: f64| if v > 0.0 { v } else { 0.0 };
    // Linear with weight [in, out].
    let linear = |name: &str, x: &[f64], out: usize| -> Vec<f64> {
        let w = param(&format!("{name}.weight"));
        let b = param(&format!("{name}.bias"));
        (0..out)
            .map(|o| b[o] + (0..x.len()).map(|i| x[i] * w[i * out + o]).sum::<f64>())
            .collect()
    };
    let mut features = Vec::new();
    if lidar_len > 0 {
        // signal[channel][position]
        let mut signal: Vec<Vec<f64>> = vec![obs[..lidar_len].to_vec()];
        for (k, &c_out) in filters.iter().enumerate() {
            let c_in = signal.len();
            let len = signal[0].len();
            let w = param(&format!("encoder.conv{k}.weight"));
            let b = param(&format!("encoder.conv{k}.bias"));
            let conv_len = (len - kernel) / stride + 1;
            let mut conv = vec![vec![0.0; conv_len]; c_out];
            for o in 0..c_out {
                for t in 0..conv_len {
                    let mut acc = b[o];
                    for j in 0..kernel {
                        for ci in 0..c_in {
                            acc += w[o * kernel * c_in + j * c_in + ci] * signal[ci][t * stride + j];
                        }
                    }
                    conv[o][t] = relu(acc);
                }
            }
            let pooled_len = conv_len / pool;
            signal = conv
                .iter()
                .map(|ch| {
                    (0..pooled_len)
                        .map(|t| (0..pool).map(|q| ch[t * pool + q]).sum::<f64>() / pool as f64)
                        .collect()
                })
                .collect();
        }
        // Flatten position-major, channel-minor.
        let len = signal[0].len();
        let mut flat = Vec::new();
        for t in 0..len {
            for ch in &signal {
                flat.push(ch[t]);
            }
        }
        let e: Vec<f64> = linear("encoder.proj", &flat, embed).into_iter().map(relu).collect();
        features.extend(e);
    }
    features.extend_from_slice(&obs[lidar_len..]);
    let trunk = |prefix: &str, head: &str, out: usize| {
        let mut h = features.clone();
        for (k, &n) in hidden.iter().enumerate() {
            h = linear(&format!("{prefix}.fc{k}"), &h, n).into_iter().map(relu).collect();
        }
        linear(head, &h, out)
    };
    let mean = trunk("policy", "policy.mean", action_dim);
    let value = trunk("value", "value.out", 1)[0];
    (mean, value)
}

/// Exact first hit of a ray against every occupied cell, treated as
/// axis-aligned boxes (unrotated grid). Returns the entry distance and the
/// chord length through the box that is hit.
pub fn slab_ray(grid: &OccupancyGrid, x: f64, y: f64, angle: f64, max_range: f64) -> (f64, f64) {
    let (gx, gy) = grid.world_to_grid(x, y);
    let (dy, dx) = angle.sin_cos();
    let r = grid.resolution();
    let mut best = (max_range, 0.0);
    for j in 0..grid.height() {
        for i in 0..grid.width() {
            if grid.is_occupied(i as i64, j as i64) != Some(true) {
                continue;
            }
            let slab = |o: f64, d: f64, lo: f64| {
                if d == 0.0 {
                    if o >= lo && o < lo + r {
                        (f64::NEG_INFINITY, f64::INFINITY)
                    } else {
                        (f64::INFINITY, f64::NEG_INFINITY)
                    }
                } else {
                    let (a, b) = ((lo - o) / d, (lo + r - o) / d);
                    (a.min(b), a.max(b))
                }
            };
            let (ax, bx) = slab(gx, dx, i as f64 * r);
            let (ay, by) = slab(gy, dy, j as f64 * r);
            let (t0, t1) = (ax.max(ay).max(0.0), bx.min(by));
            if t0 <= t1 && t0 < best.0 {
                best = (t0, t1 - t0);
            }
        }
    }
    best
}
