//! Actor-critic network with a shared 1-D convolutional lidar encoder.
//!
//! Parameters live in one flat vector so the optimizer, gradient clipping and
//! checkpoints can treat them uniformly; layers hold offsets into it.
//! Backpropagation is written by hand.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Leading observation entries routed through the convolutional encoder.
    /// Zero disables the encoder.
    pub lidar_len: usize,
    /// Remaining observation entries, concatenated after the lidar embedding.
    pub aux_len: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub pool: usize,
    pub embed: usize,
    pub hidden: Vec<usize>,
    pub action_dim: usize,
    pub init_log_std: f64,
    /// Multiplier on the initial weights of the mean layer.
    pub mean_init_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            lidar_len: crate::lidar::N_BEAMS,
            aux_len: super::ObsLayout::default().aux_dim(),
            conv_filters: vec![16, 32],
            kernel: 5,
            stride: 2,
            pool: 2,
            embed: 128,
            hidden: vec![400, 300],
            action_dim: 2,
            init_log_std: 0.5f64.ln(),
            mean_init_scale: 0.01,
        }
    }
}

impl NetworkConfig {
    pub fn input_dim(&self) -> usize {
        self.lidar_len + self.aux_len
    }

    fn has_encoder(&self) -> bool {
        self.lidar_len > 0
    }

    /// Lengths after each conv+pool stage, starting with the raw lidar length.
    pub fn conv_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.lidar_len];
        let mut len = self.lidar_len;
        for _ in &self.conv_filters {
            if len < self.kernel {
                return Err(Error::InvalidParameter(format!(
                    "convolution input of length {len} is shorter than the kernel"
                )));
            }
            let conv = (len - self.kernel) / self.stride + 1;
            len = conv / self.pool;
            if len == 0 {
                return Err(Error::InvalidParameter("pooling leaves no outputs".into()));
            }
            lens.push(len);
        }
        Ok(lens)
    }

    fn validate(&self) -> Result<()> {
        if self.action_dim == 0 || self.hidden.is_empty() {
            return Err(Error::InvalidParameter("empty action or hidden layers".into()));
        }
        if self.has_encoder() && (self.kernel == 0 || self.stride == 0 || self.pool == 0 || self.embed == 0) {
            return Err(Error::InvalidParameter("zero-sized encoder setting".into()));
        }
        if self.input_dim() == 0 {
            return Err(Error::InvalidParameter("empty input".into()));
        }
        Ok(())
    }
}

/// Name, shape and offset of one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weight `[fan_in, fan_out]` and bias `[fan_out]`.
#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
    fan_in: usize,
    fan_out: usize,
}

/// Weight `[out, kernel * in]` (kernel-major, channel-minor) and bias `[out]`.
#[derive(Debug, Clone, Copy)]
struct Conv {
    w: usize,
    b: usize,
    c_in: usize,
    c_out: usize,
    len_in: usize,
    len_conv: usize,
    len_pool: usize,
}

#[derive(Debug, Clone)]
pub struct PolicyNetwork {
    config: NetworkConfig,
    params: Vec<f64>,
    specs: Vec<ParamSpec>,
    convs: Vec<Conv>,
    proj: Option<Linear>,
    policy: Vec<Linear>,
    mean: Linear,
    value: Vec<Linear>,
    value_out: Linear,
    log_std: usize,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug)]
pub struct Cache {
    batch: usize,
    /// Per conv stage: im2col input, activation after ReLU.
    conv_cols: Vec<Array2<f64>>,
    conv_act: Vec<Array2<f64>>,
    flat: Array2<f64>,
    embed: Array2<f64>,
    features: Array2<f64>,
    policy_act: Vec<Array2<f64>>,
    value_act: Vec<Array2<f64>>,
}

#[derive(Debug)]
pub struct Forward {
    /// `[batch, action_dim]` pre-squash means.
    pub mean: Array2<f64>,
    /// `[batch]` state values.
    pub value: Array1<f64>,
    pub cache: Cache,
}

struct Builder {
    specs: Vec<ParamSpec>,
    size: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.size;
        let spec = ParamSpec { name, shape, offset };
        self.size += spec.len();
        self.specs.push(spec);
        offset
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let w = self.add(format!("{name}.weight"), vec![fan_in, fan_out]);
        let b = self.add(format!("{name}.bias"), vec![fan_out]);
        Linear { w, b, fan_in, fan_out }
    }
}

fn view2(buf: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &buf[off..off + rows * cols]).expect("parameter layout")
}

fn view2_mut(buf: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut buf[off..off + rows * cols]).expect("parameter layout")
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

/// Zeroes `grad` where the post-ReLU activation is not positive.
fn relu_mask(grad: &mut Array2<f64>, act: &Array2<f64>) {
    ndarray::Zip::from(grad).and(act).for_each(|g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

impl Linear {
    fn forward(&self, params: &[f64], x: ArrayView2<f64>) -> Array2<f64> {
        let w = view2(params, self.w, self.fan_in, self.fan_out);
        let mut y = x.dot(&w);
        y += &ArrayView1::from(&params[self.b..self.b + self.fan_out]);
        y
    }

    /// Accumulates parameter gradients and returns the input gradient if requested.
    fn backward(
        &self,
        params: &[f64],
        grads: &mut [f64],
        x: ArrayView2<f64>,
        dy: ArrayView2<f64>,
        need_dx: bool,
    ) -> Option<Array2<f64>> {
        general_mat_mul(1.0, &x.t(), &dy, 1.0, &mut view2_mut(grads, self.w, self.fan_in, self.fan_out));
        let db = dy.sum_axis(Axis(0));
        for (g, d) in grads[self.b..self.b + self.fan_out].iter_mut().zip(db.iter()) {
            *g += d;
        }
        need_dx.then(|| dy.dot(&view2(params, self.w, self.fan_in, self.fan_out).t()))
    }
}

impl PolicyNetwork {
    /// Builds the network with PyTorch-style uniform initialization.
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeroed(config)?;
        net.initialize(rng);
        Ok(net)
    }

    /// Builds the network with all parameters zero (and log std at its initial value).
    pub fn zeroed(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            specs: Vec::new(),
            size: 0,
        };
        let mut convs = Vec::new();
        let mut feature_dim = config.aux_len;
        let mut proj = None;
        if config.has_encoder() {
            let lens = config.conv_lengths()?;
            let mut c_in = 1;
            for (k, &c_out) in config.conv_filters.iter().enumerate() {
                let w = b.add(format!("encoder.conv{k}.weight"), vec![c_out, config.kernel * c_in]);
                let bias = b.add(format!("encoder.conv{k}.bias"), vec![c_out]);
                let len_conv = (lens[k] - config.kernel) / config.stride + 1;
                convs.push(Conv {
                    w,
                    b: bias,
                    c_in,
                    c_out,
                    len_in: lens[k],
                    len_conv,
                    len_pool: lens[k + 1],
                });
                c_in = c_out;
            }
            let flat = lens[lens.len() - 1] * c_in;
            proj = Some(b.linear("encoder.proj", flat, config.embed));
            feature_dim += config.embed;
        }
        let mut policy = Vec::new();
        let mut value = Vec::new();
        let mut fan_in = feature_dim;
        for (k, &h) in config.hidden.iter().enumerate() {
            policy.push(b.linear(&format!("policy.fc{k}"), fan_in, h));
            fan_in = h;
        }
        let mean = b.linear("policy.mean", fan_in, config.action_dim);
        let mut fan_in = feature_dim;
        for (k, &h) in config.hidden.iter().enumerate() {
            value.push(b.linear(&format!("value.fc{k}"), fan_in, h));
            fan_in = h;
        }
        let value_out = b.linear("value.out", fan_in, 1);
        let log_std = b.add("policy.log_std".into(), vec![config.action_dim]);
        let mut params = vec![0.0; b.size];
        params[log_std..log_std + config.action_dim].fill(config.init_log_std);
        Ok(Self {
            config,
            params,
            specs: b.specs,
            convs,
            proj,
            policy,
            mean,
            value,
            value_out,
            log_std,
        })
    }

    fn initialize<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fill = |params: &mut [f64], off: usize, len: usize, bound: f64, rng: &mut R| {
            for p in &mut params[off..off + len] {
                *p = rng.gen_range(-bound..=bound);
            }
        };
        for c in self.convs.clone() {
            let bound = 1.0 / ((self.config.kernel * c.c_in) as f64).sqrt();
            fill(&mut self.params, c.w, c.c_out * self.config.kernel * c.c_in, bound, rng);
            fill(&mut self.params, c.b, c.c_out, bound, rng);
        }
        let linears: Vec<Linear> = self
            .proj
            .iter()
            .chain(&self.policy)
            .chain(std::iter::once(&self.mean))
            .chain(&self.value)
            .chain(std::iter::once(&self.value_out))
            .copied()
            .collect();
        for l in linears {
            let bound = 1.0 / (l.fan_in as f64).sqrt();
            fill(&mut self.params, l.w, l.fan_in * l.fan_out, bound, rng);
            fill(&mut self.params, l.b, l.fan_out, bound, rng);
        }
        let m = self.mean;
        let scale = self.config.mean_init_scale;
        for p in &mut self.params[m.w..m.w + m.fan_in * m.fan_out] {
            *p *= scale;
        }
        for p in &mut self.params[m.b..m.b + m.fan_out] {
            *p *= scale;
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// Named parameter tensor.
    pub fn param(&self, name: &str) -> Option<(&[usize], &[f64])> {
        self.specs
            .iter()
            .find(|s| s.name == name)
            .map(|s| (s.shape.as_slice(), &self.params[s.offset..s.offset + s.len()]))
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let spec = self.specs.iter().find(|s| s.name == name)?;
        let (off, len) = (spec.offset, spec.len());
        Some(&mut self.params[off..off + len])
    }

    pub fn log_std(&self) -> &[f64] {
        &self.params[self.log_std..self.log_std + self.config.action_dim]
    }

    /// Zeroes the mean layer so the squashed policy output is exactly zero.
    pub fn zero_mean_head(&mut self) {
        let m = self.mean;
        self.params[m.w..m.w + m.fan_in * m.fan_out].fill(0.0);
        self.params[m.b..m.b + m.fan_out].fill(0.0);
    }

    /// Forward pass over a batch of (normalized) observations `[batch, input_dim]`.
    pub fn forward(&self, obs: ArrayView2<f64>) -> Result<Forward> {
        let cfg = &self.config;
        if obs.ncols() != cfg.input_dim() {
            return Err(Error::Shape {
                expected: cfg.input_dim(),
                got: obs.ncols(),
            });
        }
        let batch = obs.nrows();
        let p = &self.params;
        let mut conv_cols = Vec::with_capacity(self.convs.len());
        let mut conv_act = Vec::with_capacity(self.convs.len());
        let mut flat = Array2::zeros((batch, 0));
        let mut embed = Array2::zeros((batch, 0));
        let features = if let Some(proj) = &self.proj {
            // Channels-last activations: row (b, t), column channel.
            let mut x = obs
                .slice(s![.., ..cfg.lidar_len])
                .to_owned()
                .into_shape_with_order((batch * cfg.lidar_len, 1))
                .expect("contiguous");
            for c in &self.convs {
                let cols = self.im2col(&x, c, batch);
                let w = view2(p, c.w, c.c_out, cfg.kernel * c.c_in);
                let mut z = cols.dot(&w.t());
                z += &ArrayView1::from(&p[c.b..c.b + c.c_out]);
                relu_inplace(&mut z);
                x = self.avg_pool(&z, c, batch);
                conv_cols.push(cols);
                conv_act.push(z);
            }
            let last = self.convs.last();
            let flat_dim = last.map_or(cfg.lidar_len, |c| c.len_pool * c.c_out);
            flat = x.into_shape_with_order((batch, flat_dim)).expect("contiguous");
            embed = proj.forward(p, flat.view());
            relu_inplace(&mut embed);
            let mut f = Array2::zeros((batch, cfg.embed + cfg.aux_len));
            f.slice_mut(s![.., ..cfg.embed]).assign(&embed);
            f.slice_mut(s![.., cfg.embed..]).assign(&obs.slice(s![.., cfg.lidar_len..]));
            f
        } else {
            obs.to_owned()
        };

        let mut policy_act = Vec::with_capacity(self.policy.len());
        let mut h = features.view().to_owned();
        for l in &self.policy {
            h = l.forward(p, h.view());
            relu_inplace(&mut h);
            policy_act.push(h.clone());
        }
        let mean = self.mean.forward(p, h.view());

        let mut value_act = Vec::with_capacity(self.value.len());
        let mut h = features.clone();
        for l in &self.value {
            h = l.forward(p, h.view());
            relu_inplace(&mut h);
            value_act.push(h.clone());
        }
        let value = self.value_out.forward(p, h.view()).column(0).to_owned();

        Ok(Forward {
            mean,
            value,
            cache: Cache {
                batch,
                conv_cols,
                conv_act,
                flat,
                embed,
                features,
                policy_act,
                value_act,
            },
        })
    }

    /// Single-observation convenience: `(mean, value)`.
    pub fn forward_one(&self, obs: &[f64]) -> Result<(Vec<f64>, f64)> {
        let view = ArrayView2::from_shape((1, obs.len()), obs).expect("row");
        let out = self.forward(view)?;
        Ok((out.mean.row(0).to_vec(), out.value[0]))
    }

    fn im2col(&self, x: &Array2<f64>, c: &Conv, batch: usize) -> Array2<f64> {
        let (k, stride) = (self.config.kernel, self.config.stride);
        let mut cols = Array2::zeros((batch * c.len_conv, k * c.c_in));
        let xs = x.as_slice().expect("contiguous");
        let out = cols.as_slice_mut().expect("contiguous");
        let row_len = k * c.c_in;
        for b in 0..batch {
            for t in 0..c.len_conv {
                let src = (b * c.len_in + t * stride) * c.c_in;
                let dst = (b * c.len_conv + t) * row_len;
                out[dst..dst + row_len].copy_from_slice(&xs[src..src + row_len]);
            }
        }
        cols
    }

    fn avg_pool(&self, z: &Array2<f64>, c: &Conv, batch: usize) -> Array2<f64> {
        let pool = self.config.pool;
        let inv = 1.0 / pool as f64;
        let mut out = Array2::zeros((batch * c.len_pool, c.c_out));
        for b in 0..batch {
            for t in 0..c.len_pool {
                let mut row = out.row_mut(b * c.len_pool + t);
                for q in 0..pool {
                    row.scaled_add(inv, &z.row(b * c.len_conv + t * pool + q));
                }
            }
        }
        out
    }

    /// Accumulates into `grads` the gradient of a loss whose partial
    /// derivatives are `d_mean` `[batch, action_dim]`, `d_log_std`
    /// `[action_dim]` and `d_value` `[batch]`.
    pub fn backward(
        &self,
        cache: &Cache,
        d_mean: ArrayView2<f64>,
        d_log_std: &[f64],
        d_value: ArrayView1<f64>,
        grads: &mut [f64],
    ) {
        assert_eq!(grads.len(), self.params.len(), "gradient buffer size");
        let cfg = &self.config;
        let p = &self.params;
        let batch = cache.batch;
        for (g, d) in grads[self.log_std..self.log_std + cfg.action_dim].iter_mut().zip(d_log_std) {
            *g += d;
        }

        let need_features = self.proj.is_some();
        let d_feat_pol = Self::trunk_backward(
            p,
            grads,
            &self.policy,
            &self.mean,
            &cache.features,
            &cache.policy_act,
            d_mean.to_owned(),
            need_features,
        );
        let d_val = d_value.to_owned().into_shape_with_order((batch, 1)).expect("column");
        let d_feat_val = Self::trunk_backward(
            p,
            grads,
            &self.value,
            &self.value_out,
            &cache.features,
            &cache.value_act,
            d_val,
            need_features,
        );
        let Some(proj) = &self.proj else {
            return;
        };
        let mut d_embed = d_feat_pol.expect("requested") + &d_feat_val.expect("requested");
        let mut d_embed = d_embed.slice_mut(s![.., ..cfg.embed]).to_owned();
        relu_mask(&mut d_embed, &cache.embed);
        let need_flat = !self.convs.is_empty();
        let d_flat = proj.backward(p, grads, cache.flat.view(), d_embed.view(), need_flat);
        let Some(d_flat) = d_flat else {
            return;
        };
        let last = self.convs.last().expect("encoder has convolutions");
        let mut d_x = d_flat
            .into_shape_with_order((batch * last.len_pool, last.c_out))
            .expect("contiguous");
        for (k, c) in self.convs.iter().enumerate().rev() {
            // Average-pool backward; trailing positions not covered by a window get zero.
            let pool = cfg.pool;
            let inv = 1.0 / pool as f64;
            let mut d_z = Array2::zeros((batch * c.len_conv, c.c_out));
            for b in 0..batch {
                for t in 0..c.len_pool {
                    let src = d_x.row(b * c.len_pool + t);
                    for q in 0..pool {
                        d_z.row_mut(b * c.len_conv + t * pool + q).scaled_add(inv, &src);
                    }
                }
            }
            relu_mask(&mut d_z, &cache.conv_act[k]);
            let row_len = cfg.kernel * c.c_in;
            general_mat_mul(
                1.0,
                &d_z.t(),
                &cache.conv_cols[k],
                1.0,
                &mut view2_mut(grads, c.w, c.c_out, row_len),
            );
            let db = d_z.sum_axis(Axis(0));
            for (g, d) in grads[c.b..c.b + c.c_out].iter_mut().zip(db.iter()) {
                *g += d;
            }
            if k == 0 {
                break;
            }
            let d_cols = d_z.dot(&view2(p, c.w, c.c_out, row_len));
            let mut d_in = Array2::zeros((batch * c.len_in, c.c_in));
            {
                let dst = d_in.as_slice_mut().expect("contiguous");
                let src = d_cols.as_slice().expect("contiguous");
                for b in 0..batch {
                    for t in 0..c.len_conv {
                        let so = (b * c.len_conv + t) * row_len;
                        let dofs = (b * c.len_in + t * cfg.stride) * c.c_in;
                        for (d, s) in dst[dofs..dofs + row_len].iter_mut().zip(&src[so..so + row_len]) {
                            *d += s;
                        }
                    }
                }
            }
            d_x = d_in;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn trunk_backward(
        p: &[f64],
        grads: &mut [f64],
        layers: &[Linear],
        head: &Linear,
        features: &Array2<f64>,
        acts: &[Array2<f64>],
        d_out: Array2<f64>,
        need_features: bool,
    ) -> Option<Array2<f64>> {
        let last = acts.last().expect("hidden layers");
        let mut d = head
            .backward(p, grads, last.view(), d_out.view(), true)
            .expect("requested");
        for k in (0..layers.len()).rev() {
            relu_mask(&mut d, &acts[k]);
            let input = if k == 0 { features.view() } else { acts[k - 1].view() };
            let need = k > 0 || need_features;
            match layers[k].backward(p, grads, input, d.view(), need) {
                Some(next) => d = next,
                None => return None,
            }
        }
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_shapes() {
        let cfg = NetworkConfig::default();
        assert_eq!(cfg.conv_lengths().unwrap(), vec![1080, 269, 66]);
        let net = PolicyNetwork::zeroed(cfg).unwrap();
        let (shape, _) = net.param("encoder.proj.weight").unwrap();
        assert_eq!(shape, &[66 * 32, 128]);
        let (shape, _) = net.param("policy.fc0.weight").unwrap();
        assert_eq!(shape, &[128 + 73, 400]);
        assert_eq!(net.log_std(), &[0.5f64.ln(); 2]);
    }

    #[test]
    fn batch_rows_independent() {
        let cfg = NetworkConfig {
            lidar_len: 40,
            aux_len: 3,
            conv_filters: vec![2, 3],
            embed: 4,
            hidden: vec![5],
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = PolicyNetwork::new(cfg.clone(), &mut rng).unwrap();
        let obs = Array2::from_shape_fn((3, 43), |(i, j)| ((i * 43 + j) as f64 * 0.37).sin());
        let out = net.forward(obs.view()).unwrap();
        for i in 0..3 {
            let (m, v) = net.forward_one(obs.row(i).as_slice().unwrap()).unwrap();
            assert!((m[0] - out.mean[[i, 0]]).abs() < 1e-12);
            assert!((v - out.value[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mean_head_gives_zero_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = NetworkConfig {
            lidar_len: 0,
            aux_len: 3,
            hidden: vec![4],
            ..Default::default()
        };
        let mut net = PolicyNetwork::new(cfg, &mut rng).unwrap();
        net.zero_mean_head();
        let (m, _) = net.forward_one(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(m, vec![0.0, 0.0]);
    }

    #[test]
    fn wrong_width_rejected() {
        let net = PolicyNetwork::zeroed(NetworkConfig {
            lidar_len: 0,
            aux_len: 3,
            hidden: vec![4],
            ..Default::default()
        })
        .unwrap();
        assert!(net.forward_one(&[1.0, 2.0]).is_err());
    }
}
