//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use residual_racing::env::{EnvConfig, RacingEnv};
use residual_racing::lidar::{Lidar, LidarConfig, MAX_RANGE, N_BEAMS};
use residual_racing::policy::{atanh, compute_reward, NetworkConfig, PolicyNetwork, RewardConfig, TanhNormal};
use residual_racing::ppo::{compute_gae, surrogate_loss, Minibatch, PpoConfig, TrainConfig, Trainer};
use residual_racing::pursuit::{base_action, pure_pursuit_steering, PurePursuitConfig};
use residual_racing::track::synth::{self, demo_oval_spec, Shape, SpeedProfile, SynthSpec};
use residual_racing::track::{start_at, OccupancyGrid, Track, Waypoint};
use residual_racing::vehicle::{
    derivatives, low_level_control, step_dynamics, wrap_angle, HighLevelAction, ModelInput, VehicleParams,
    VehicleState, DT, V_DYNAMIC, V_KINEMATIC,
};
use residual_racing_cli::eval::{Mode, ReportRow};
use residual_racing_cli::record::read_records;
use residual_racing_cli::slip::SlipHistogram;
use residual_racing_cli::{cmd_eval, cmd_record, cmd_slip_hist};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn run(id: &str, title: &str, f: impl FnOnce() -> Check) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = t0.elapsed().as_secs_f64();
    let (tag, detail, ok) = match outcome {
        Ok(d) => ("PASS", d, true),
        Err(d) => ("FAIL", d, false),
    };
    println!("{id:<5} {tag}  {title} [{secs:.1} s] {detail}");
    ok
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn random_state(rng: &mut ChaCha8Rng) -> VehicleState {
    VehicleState {
        x: rng.gen_range(-10.0..10.0),
        y: rng.gen_range(-10.0..10.0),
        delta: rng.gen_range(-0.4189..0.4189),
        v: rng.gen_range(0.0..8.0),
        yaw: rng.gen_range(-3.1..3.1),
        yaw_rate: rng.gen_range(-2.0..2.0),
        slip: rng.gen_range(-0.3..0.3),
    }
}

fn ac1() -> Check {
    let root = repo_root().join("configs");
    let text = std::fs::read_to_string(root.join("full_protocol.toml")).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::from_toml(&text).map_err(|e| e.to_string())?;
    ensure!(cfg.n_envs == 36 && cfg.total_steps == 10_000_000, "full protocol sizes differ");
    ensure!(cfg.tracks.len() == 9, "{} training tracks", cfg.tracks.len());
    let catalog: toml::Value =
        toml::from_str(&std::fs::read_to_string(root.join("racetracks.toml")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let n_eval = catalog["tracks"].as_array().map_or(0, Vec::len);
    ensure!(n_eval == 12, "{n_eval} evaluation tracks");
    Ok(format!(
        "not reproduced at desk scale; full protocol config parses ({} envs, {} steps, {} updates, 9 training + 3 test tracks)",
        cfg.n_envs,
        cfg.total_steps,
        cfg.num_updates()
    ))
}

fn ac2() -> Check {
    let t0 = Instant::now();
    let p = VehicleParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 10_000;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..n {
        let s = random_state(&mut rng);
        let u = ModelInput {
            steer_rate: rng.gen_range(-3.2..3.2),
            accel: rng.gen_range(-7.51..7.51),
        };
        // Straight-line invariance.
        let straight = VehicleState { y: 0.0, yaw: 0.0, delta: 0.0, yaw_rate: 0.0, slip: 0.0, ..s };
        let next = step_dynamics(&straight, &ModelInput::default(), DT, &p).map_err(|e| e.to_string())?;
        ensure!(
            next.y == 0.0 && next.yaw == 0.0 && next.slip == 0.0 && next.yaw_rate == 0.0,
            "straight-line motion left the axis"
        );
        // Mirror symmetry.
        let m = VehicleState { y: -s.y, delta: -s.delta, yaw: -s.yaw, yaw_rate: -s.yaw_rate, slip: -s.slip, ..s };
        let mu = ModelInput { steer_rate: -u.steer_rate, ..u };
        let a = step_dynamics(&s, &u, DT, &p).map_err(|e| e.to_string())?;
        let b = step_dynamics(&m, &mu, DT, &p).map_err(|e| e.to_string())?;
        let mirror = [
            a.x - b.x,
            a.y + b.y,
            a.delta + b.delta,
            a.v - b.v,
            wrap_angle(a.yaw + b.yaw),
            a.yaw_rate + b.yaw_rate,
            a.slip + b.slip,
        ];
        ensure!(mirror.iter().all(|d| d.abs() < 1e-9), "mirror mismatch {mirror:?}");
        // Bounds under the low-level controller.
        let cmd = HighLevelAction::new(rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..12.0));
        let ll = low_level_control(&s, &cmd, &p);
        ensure!(ll.steer_rate.abs() <= p.delta_dot_max && ll.accel.abs() <= p.v_dot_max, "input out of bounds");
        let c = step_dynamics(&s, &ll, DT, &p).map_err(|e| e.to_string())?;
        ensure!(c.delta.abs() <= p.delta_max && (0.0..=p.v_max).contains(&c.v), "state out of bounds");
        ensure!(c.yaw > -PI && c.yaw <= PI, "yaw not wrapped");
        // Blend continuity at both band edges.
        for edge in [V_KINEMATIC, V_DYNAMIC] {
            let lo = derivatives(&VehicleState { v: edge - 1e-9, ..s }, &u, &p);
            let hi = derivatives(&VehicleState { v: edge + 1e-9, ..s }, &u, &p);
            for i in 0..7 {
                worst_gap = worst_gap.max((lo[i] - hi[i]).abs());
            }
        }
    }
    ensure!(worst_gap <= 1e-3, "derivative gap {worst_gap:e}");
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1} s");
    Ok(format!("{n} states, max blend gap {worst_gap:.1e}"))
}

fn ac3() -> Check {
    let t0 = Instant::now();
    let p = VehicleParams::default();
    let cfg = PurePursuitConfig::default();
    let s = VehicleState::at_pose(p.l_r, 0.0, 0.0, 2.0);
    let at = |alpha: f64| Waypoint {
        s: 0.0,
        x: cfg.lookahead * alpha.cos(),
        y: cfg.lookahead * alpha.sin(),
        heading: 0.0,
        speed: 1.0,
        curvature: None,
    };
    ensure!(pure_pursuit_steering(&s, &at(0.0), &cfg, &p) == 0.0, "alpha 0 steers");
    let d = pure_pursuit_steering(&s, &at(0.2), &cfg, &p);
    let want = (2.0 * 0.3302 * 0.2f64.sin() / 0.82).atan();
    ensure!((d - want).abs() < 1e-9, "alpha 0.2: {d} vs {want}");
    ensure!((want - 0.1587).abs() < 5e-5, "formula value {want}");
    let d = pure_pursuit_steering(&s, &at(FRAC_PI_2), &cfg, &p);
    ensure!(((2.0 * 0.3302 / 0.82f64).atan() - 0.678).abs() < 1e-3, "unclamped value");
    ensure!(d == 0.4189, "alpha pi/2: {d}");

    let track = synth::circle(20.0, 3.0, 3.0).map_err(|e| e.to_string())?;
    let n = track.line.len() as f64;
    let (cx, cy) = track
        .line
        .waypoints()
        .iter()
        .fold((0.0, 0.0), |(a, b), w| (a + w.x / n, b + w.y / n));
    let mut st = start_at(&track.line, 0);
    let steps = (track.line.length() / 3.0 / DT).ceil() as usize;
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        let a = base_action(&track.line, &st, &cfg, &p);
        st = step_dynamics(&st, &low_level_control(&st, &a, &p), DT, &p).map_err(|e| e.to_string())?;
        worst = worst.max(((st.x - cx).hypot(st.y - cy) - 20.0).abs());
    }
    ensure!(worst < 0.15, "cross-track error {worst}");
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "took {secs:.1} s");
    Ok(format!("formula examples to 1e-9, circle cross-track max {worst:.4} m"))
}

fn maze(rng: &mut ChaCha8Rng) -> OccupancyGrid {
    let (w, h) = (120usize, 100usize);
    let mut g = OccupancyGrid::empty(w, h, 0.05, [-2.0, -1.5, 0.0]).expect("grid");
    for i in 0..w {
        g.set_occupied(i, 0, true);
        g.set_occupied(i, h - 1, true);
    }
    for j in 0..h {
        g.set_occupied(0, j, true);
        g.set_occupied(w - 1, j, true);
    }
    for _ in 0..25 {
        let (bi, bj) = (rng.gen_range(1..w - 8), rng.gen_range(1..h - 8));
        let (bw, bh) = (rng.gen_range(1..8), rng.gen_range(1..8));
        for i in bi..bi + bw {
            for j in bj..bj + bh {
                g.set_occupied(i, j, true);
            }
        }
    }
    g
}

fn ac4() -> Check {
    let t0 = Instant::now();
    let res = 0.05;
    let cfg = LidarConfig::default();
    let sensor = Lidar::new(cfg.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut beams, mut grazes) = (0usize, 0usize);
    for _ in 0..10 {
        let g = maze(&mut rng);
        for _ in 0..10 {
            let (x, y, yaw) = loop {
                let (x, y) = (rng.gen_range(-1.9..3.9), rng.gen_range(-1.4..3.4));
                if !g.occupied_at(x, y) {
                    break (x, y, rng.gen_range(-PI..PI));
                }
            };
            let scan = sensor.scan(&g, x, y, yaw);
            ensure!(scan.ranges.len() == N_BEAMS, "{} beams", scan.ranges.len());
            for (i, &r) in scan.ranges.iter().enumerate() {
                beams += 1;
                let angle = yaw + cfg.beam_angle(i);
                let want = oracles::march_ray(&g, x, y, angle, MAX_RANGE, res / 4.0);
                if (r - want).abs() > res * SQRT_2 {
                    // The march steps over cells the beam only clips at a corner.
                    let (exact, chord) = oracles::slab_ray(&g, x, y, angle, MAX_RANGE);
                    ensure!(
                        (r - exact).abs() < 1e-9 && chord < res / 4.0,
                        "beam {i}: {r} vs march {want}, exact {exact}, chord {chord}"
                    );
                    grazes += 1;
                }
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1} s");
    ensure!(grazes * 50 < beams, "{grazes} grazing beams");
    Ok(format!(
        "{beams} beams within one cell diagonal of the march; {grazes} corner grazes confirmed by exact intersection"
    ))
}

fn ac5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let steps = rng.gen_range(1..=32);
        let n_envs = rng.gen_range(1..=3);
        let lambda = rng.gen_range(0.0..=1.0);
        let len = steps * n_envs;
        let rewards: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dones: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.2)).collect();
        let last: Vec<f64> = (0..n_envs).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let (adv, _) = compute_gae(&rewards, &values, &dones, &last, 0.998, lambda);
        for e in 0..n_envs {
            let pick = |v: &[f64]| (0..steps).map(|t| v[t * n_envs + e]).collect::<Vec<_>>();
            let d: Vec<bool> = (0..steps).map(|t| dones[t * n_envs + e]).collect();
            let want = oracles::gae_brute_force(&pick(&rewards), &pick(&values), &d, last[e], 0.998, lambda);
            for t in 0..steps {
                worst = worst.max((adv[t * n_envs + e] - want[t]).abs());
            }
        }
    }
    ensure!(worst < 1e-9, "max deviation {worst:e}");

    let rewards = [1.0, -0.5, 2.0, 0.25, 3.0];
    let values = [0.3, 0.1, -0.2, 0.4, 0.9];
    let (adv, _) = compute_gae(&rewards, &values, &[false; 5], &[0.7], 0.998, 0.0);
    for t in 0..5 {
        let next = if t + 1 < 5 { values[t + 1] } else { 0.7 };
        ensure!(adv[t] == rewards[t] + 0.998 * next - values[t], "lambda 0 at {t}");
    }
    let (adv, _) = compute_gae(&rewards, &[0.0; 5], &[false; 5], &[0.0], 0.998, 1.0);
    let mut to_go = 0.0;
    for t in (0..5).rev() {
        to_go = rewards[t] + 0.998 * to_go;
        ensure!(adv[t] == to_go, "lambda 1 at {t}");
    }
    Ok(format!("1000 batches, max deviation {worst:.1e}; degenerate cases exact"))
}

fn ac6() -> Check {
    let cfg = NetworkConfig {
        lidar_len: 0,
        aux_len: 3,
        conv_filters: vec![],
        kernel: 1,
        stride: 1,
        pool: 1,
        embed: 1,
        hidden: vec![4],
        action_dim: 2,
        init_log_std: 0.5f64.ln(),
        mean_init_scale: 1.0,
    };
    let ppo = PpoConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut net = PolicyNetwork::new(cfg, &mut rng).map_err(|e| e.to_string())?;
    for p in net.params_mut() {
        *p = 0.6 * rng.sample::<f64, _>(StandardNormal);
    }
    let n = 16;
    let obs = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
    let mut pre = Array2::zeros((n, 2));
    let mut old = Vec::new();
    for i in 0..n {
        let (mean, _) = net.forward_one(obs.row(i).as_slice().expect("row")).map_err(|e| e.to_string())?;
        let s = TanhNormal::new(&mean, net.log_std()).sample(&mut rng);
        pre[[i, 0]] = s.pre_squash[0];
        pre[[i, 1]] = s.pre_squash[1];
        // Shift the stored log-probs so ratios fall on both sides of the clip range, away from its edges.
        let shift = loop {
            let d: f64 = rng.gen_range(-0.6..0.6);
            let ratio = (-d).exp();
            if (ratio - 1.0 - ppo.clip).abs() > 1e-3 && (ratio - 1.0 + ppo.clip).abs() > 1e-3 {
                break d;
            }
        };
        old.push(s.log_prob + shift);
    }
    let adv: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let ret: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let loss = |net: &PolicyNetwork, grads: Option<&mut [f64]>| {
        let mb = Minibatch {
            obs: obs.view(),
            pre_squash: pre.view(),
            old_log_probs: &old,
            advantages: &adv,
            returns: &ret,
        };
        surrogate_loss(net, &mb, &ppo, grads).expect("loss").total
    };
    let mut grads = vec![0.0; net.num_params()];
    loss(&net, Some(&mut grads));
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let orig = net.params()[i];
        net.params_mut()[i] = orig + h;
        let up = loss(&net, None);
        net.params_mut()[i] = orig - h;
        let down = loss(&net, None);
        net.params_mut()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let scale = grads[i].abs().max(fd.abs());
        if scale > 1e-10 {
            worst = worst.max((grads[i] - fd).abs() / scale);
        }
    }
    ensure!(worst < 1e-4, "max relative error {worst:e}");
    Ok(format!("{} parameters, max relative error {worst:.1e}", net.num_params()))
}

fn ac7() -> Check {
    let mean = [0.3, -0.5];
    let log_std = [0.5f64.ln(), 0.8f64.ln()];
    let dist = TanhNormal::new(&mean, &log_std);
    let n = 2000;
    let h = 2.0 / n as f64;
    let mut total = 0.0;
    for i in 0..n {
        let a0 = -1.0 + (i as f64 + 0.5) * h;
        for j in 0..n {
            let a1 = -1.0 + (j as f64 + 0.5) * h;
            total += dist.log_prob(&[atanh(a0), atanh(a1)]).exp() * h * h;
        }
    }
    ensure!((total - 1.0).abs() < 1e-3, "total probability {total}");
    let narrow = TanhNormal::new(&[0.4, -1.1], &[-40.0, -40.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let s = narrow.sample(&mut rng);
        ensure!(s.action == vec![0.4f64.tanh(), (-1.1f64).tanh()], "sample {:?}", s.action);
    }
    Ok(format!("total probability {total:.6}; vanishing spread gives tanh(mean)"))
}

fn ac8() -> Check {
    let p = VehicleParams::default();
    let tracks = [
        synth::circle(20.0, 3.0, 3.0).map_err(|e| e.to_string())?,
        synth::build("oval", &demo_oval_spec(0.7)).map_err(|e| e.to_string())?,
    ];
    let steps = 5000;
    for track in tracks {
        let cfg = EnvConfig {
            laps_per_episode: 100,
            max_episode_steps: 100_000,
            ..EnvConfig::default()
        };
        let layout = cfg.layout();
        let ncfg = NetworkConfig {
            lidar_len: layout.lidar,
            aux_len: layout.aux_dim(),
            ..NetworkConfig::default()
        };
        let mut net = PolicyNetwork::new(ncfg, &mut ChaCha8Rng::seed_from_u64(8)).map_err(|e| e.to_string())?;
        net.zero_mean_head();
        let mut env = RacingEnv::new(track.clone(), cfg.clone(), 8).map_err(|e| e.to_string())?;
        let start = 17;
        let mut obs = env.reset_at(start).map_err(|e| e.to_string())?;
        let mut s = start_at(&track.line, start);
        for t in 0..steps {
            let (mean, _) = net.forward_one(&obs).map_err(|e| e.to_string())?;
            let step = env.step([mean[0].tanh(), mean[1].tanh()]).map_err(|e| e.to_string())?;
            let a = base_action(&track.line, &s, &cfg.pursuit, &p);
            s = step_dynamics(&s, &low_level_control(&s, &a, &p), DT, &p).map_err(|e| e.to_string())?;
            ensure!(step.applied == a, "{} step {t}: applied {:?} vs base {:?}", track.name, step.applied, a);
            ensure!(step.state == s, "{} step {t}: state diverged", track.name);
            ensure!(!step.done, "{} step {t}: episode ended", track.name);
            obs = step.obs;
        }
    }
    Ok(format!("{steps} steps on 2 tracks bit-identical to the base-only simulation"))
}

fn ac9() -> Check {
    let c = RewardConfig::default();
    ensure!((c.reward(5.0, 0.5, false) - 0.01425).abs() < 1e-12, "first example");
    ensure!((c.reward(0.0, 0.0, true) + 50.0).abs() < 1e-12, "second example");
    ensure!(c.reward(0.0, 0.0, false).abs() < 1e-12, "third example");

    // Oval closed off 3 m either side of the start line: the base controller drives into the walls.
    let spec = SynthSpec {
        shape: Shape::Oval { straight: 20.0, radius: 5.0 },
        width: 2.0,
        spacing: 0.1,
        resolution: 0.05,
        profile: SpeedProfile::Constant { speed: 3.0 },
    };
    let open = synth::build("corridor", &spec).map_err(|e| e.to_string())?;
    let w0 = *open.line.get(0);
    let (hs, hc) = w0.heading.sin_cos();
    let mut g = (*open.grid).clone();
    for j in 0..g.height() {
        for i in 0..g.width() {
            let (x, y) = g.cell_center(i, j);
            if ((x - w0.x) * hc + (y - w0.y) * hs).abs() > 3.0 {
                g.set_occupied(i, j, true);
            }
        }
    }
    let track = Track::new("blocked", g, (*open.line).clone());
    let mut env = RacingEnv::new(track, EnvConfig::default(), 9).map_err(|e| e.to_string())?;
    env.reset().map_err(|e| e.to_string())?;
    let (mut collisions, mut penalized) = (0, 0);
    for _ in 0..2000 {
        let step = env.step([0.0, 0.0]).map_err(|e| e.to_string())?;
        let plain = compute_reward(&c, &step.state, false);
        if step.reward < plain - 25.0 {
            penalized += 1;
        }
        if step.collided {
            collisions += 1;
            ensure!((step.reward - (plain - 50.0)).abs() < 1e-12, "penalty {} vs {plain}", step.reward);
        } else {
            ensure!(step.reward == plain, "penalty without collision");
        }
        if step.done {
            env.reset().map_err(|e| e.to_string())?;
        }
    }
    ensure!(collisions >= 3, "only {collisions} collisions");
    ensure!(penalized == collisions, "{penalized} penalties for {collisions} collisions");
    Ok(format!("examples exact; {collisions} collisions, one penalty each"))
}

/// Desk-scale training run into `dir`; returns the final checkpoint and the training time.
fn desk_train(dir: &Path) -> Result<(PathBuf, f64), String> {
    let (mut cfg, base) = TrainConfig::load(&repo_root().join("configs/desk_oval.toml")).map_err(|e| e.to_string())?;
    cfg.output_dir = dir.to_path_buf();
    let t0 = Instant::now();
    let summary = Trainer::new(cfg, &base)
        .and_then(|mut t| t.run())
        .map_err(|e| e.to_string())?;
    Ok((summary.final_checkpoint, t0.elapsed().as_secs_f64()))
}

fn desk_eval(ckpt: &Path, out: &Path) -> Result<ReportRow, String> {
    let rows = cmd_eval(&repo_root().join("configs/desk_oval.toml"), Some(ckpt), "oval", Mode::Both, 2, 3, 0, out)
        .map_err(|e| e.to_string())?;
    Ok(rows[0].clone())
}

struct Desk {
    dir: tempfile::TempDir,
    ckpt: PathBuf,
    row: ReportRow,
}

fn ac10(desk: &mut Option<Desk>) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (ckpt, secs) = desk_train(dir.path())?;
    let row = desk_eval(&ckpt, &dir.path().join("report.csv"))?;
    *desk = Some(Desk { dir, ckpt, row: row.clone() });
    let (Some(base), Some(rpl), Some(rel)) = (row.base_median, row.rpl_median, row.rel_improvement) else {
        return Err(format!("missing medians: {row:?}"));
    };
    let detail = format!(
        "train {secs:.0} s; median base {base:.3} s, residual {rpl:.3} s ({:.2} %), residual laps {:?}, collisions {:?}",
        100.0 * rel,
        row.rpl_laps,
        row.rpl_collisions
    );
    ensure!(secs < 900.0, "{detail}");
    ensure!(rel >= 0.02, "{detail}");
    ensure!(row.rpl_collisions == Some(0) && row.rpl_laps == Some(6), "{detail}");
    Ok(detail)
}

fn return_trend(desk: &Option<Desk>) -> Check {
    let desk = desk.as_ref().ok_or("no desk run")?;
    let text = std::fs::read_to_string(desk.dir.path().join("metrics.jsonl")).map_err(|e| e.to_string())?;
    let mut episodes = Vec::new();
    let mut last_step = 0u64;
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let step = v["step"].as_u64().unwrap_or(0);
        last_step = last_step.max(step);
        if v["kind"] == "episode" {
            episodes.push((step, v["return"].as_f64().unwrap_or(f64::NAN)));
        }
    }
    let mean = |lo: f64, hi: f64| {
        let r: Vec<f64> = episodes
            .iter()
            .filter(|(s, _)| (*s as f64) > lo && (*s as f64) <= hi)
            .map(|e| e.1)
            .collect();
        (r.iter().sum::<f64>() / r.len() as f64, r.len())
    };
    let total = last_step as f64;
    let (first, nf) = mean(0.0, 0.1 * total);
    let (last, nl) = mean(0.9 * total, total);
    let detail = format!("first 10 %: {first:.2} ({nf} episodes), last 10 %: {last:.2} ({nl} episodes)");
    ensure!(nf > 0 && nl > 0 && last > first, "{detail}");
    Ok(detail)
}

fn ac11(desk: &Option<Desk>) -> Check {
    let desk = desk.as_ref().ok_or("no desk run")?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (ckpt, _) = desk_train(dir.path())?;
    let read = |p: PathBuf| std::fs::read(p).map_err(|e| e.to_string());
    ensure!(
        read(desk.dir.path().join("metrics.jsonl"))? == read(dir.path().join("metrics.jsonl"))?,
        "training metrics differ"
    );
    ensure!(read(desk.ckpt.clone())? == read(ckpt.clone())?, "final checkpoints differ");
    desk_eval(&ckpt, &dir.path().join("report.csv"))?;
    ensure!(
        read(desk.dir.path().join("report.csv"))? == read(dir.path().join("report.csv"))?,
        "evaluation reports differ"
    );
    Ok("training metrics, checkpoint and evaluation report byte-identical".into())
}

fn ac12(desk: &Option<Desk>) -> Check {
    let desk = desk.as_ref().ok_or("no desk run")?;
    let catalog = repo_root().join("configs/desk_oval.toml");
    let dir = desk.dir.path();
    let (a, b) = (dir.join("base.jsonl"), dir.join("rpl.jsonl"));
    let na = cmd_record(&catalog, None, "oval", Mode::Base, 1, 0, 0, &a).map_err(|e| e.to_string())?;
    let nb = cmd_record(&catalog, Some(&desk.ckpt), "oval", Mode::Rpl, 1, 0, 0, &b).map_err(|e| e.to_string())?;
    let hist = cmd_slip_hist(&[a.clone(), b.clone()], 0.01, &dir.join("slip.csv")).map_err(|e| e.to_string())?;
    ensure!(hist.total() == (na + nb) as u64, "{} counts for {} steps", hist.total(), na + nb);
    let slips = |p: &Path| -> Result<Vec<f64>, String> {
        Ok(read_records(p).map_err(|e| e.to_string())?.iter().map(|r| r.slip).collect())
    };
    let (sa, sb) = (slips(&a)?, slips(&b)?);
    let mut merged = SlipHistogram::from_values(sa.iter().copied(), 0.01);
    merged.merge(&SlipHistogram::from_values(sb.iter().copied(), 0.01));
    ensure!(merged == hist, "merged histogram differs");
    ensure!(
        hist == SlipHistogram::from_values(sa.iter().chain(&sb).copied(), 0.01),
        "histogram differs from the concatenation"
    );
    let (Some(base), Some(rpl)) = (desk.row.base_max_abs_slip, desk.row.rpl_max_abs_slip) else {
        return Err("slip extremes missing".into());
    };
    let detail = format!("max |beta| base {base:.4} rad, residual {rpl:.4} rad over the evaluation laps");
    ensure!(rpl >= base, "{detail}");
    Ok(detail)
}

fn main() {
    let mut ok = true;
    ok &= run("AC1", "full-scale lap-time claim", ac1);
    ok &= run("AC2", "dynamics properties", ac2);
    ok &= run("AC3", "pure pursuit", ac3);
    ok &= run("AC4", "lidar vs ray marching", ac4);
    ok &= run("AC5", "GAE brute force", ac5);
    ok &= run("AC6", "PPO gradient check", ac6);
    ok &= run("AC7", "TanhNormal density", ac7);
    ok &= run("AC8", "zero-residual identity", ac8);
    ok &= run("AC9", "reward", ac9);
    let mut desk = None;
    ok &= run("AC10", "desk-scale learning", || ac10(&mut desk));
    ok &= run("AC10r", "desk-scale return trend", || return_trend(&desk));
    ok &= run("AC11", "determinism", || ac11(&desk));
    ok &= run("AC12", "slip tooling", || ac12(&desk));
    if !ok {
        std::process::exit(1);
    }
}
