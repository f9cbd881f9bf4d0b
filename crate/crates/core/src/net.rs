//! Feed-forward ReLU network with analytic backpropagation and Adam.
//!
//! Inputs and outputs are standardised with statistics stored alongside the weights.
//! Training runs on batches through `ndarray` matrix products; single-sample inference
//! uses plain loops so a policy tick allocates nothing but two hidden buffers.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"GBCMODEL";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input has {got} features, network expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    BadVersion(u32),
    #[error("model file is corrupt: {0}")]
    Corrupt(&'static str),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// Row-major `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Per-feature affine standardisation `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    /// Column statistics of `rows`; near-constant columns get unit scale.
    pub fn fit(rows: ArrayView2<'_, f64>) -> Self {
        Self::fit_with_floor(rows, 1.0)
    }

    /// As [`Normalizer::fit`], but near-constant columns get scale `constant_scale`.
    /// A small scale suits regression targets: the network then reproduces a constant
    /// target to within `constant_scale` times its (normalised) error.
    pub fn fit_with_floor(rows: ArrayView2<'_, f64>, constant_scale: f64) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mean: Vec<f64> = rows.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let mut var = vec![0.0; rows.ncols()];
        for r in rows.rows() {
            for (j, v) in r.iter().enumerate() {
                var[j] += (v - mean[j]).powi(2);
            }
        }
        let std = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-8 { s } else { constant_scale }
            })
            .collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, rows: &mut Array2<f64>) {
        for mut r in rows.rows_mut() {
            for (j, v) in r.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.std[j];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    /// Application tag stored in the file header; 0 when unused.
    pub tag: u8,
    pub layers: Vec<Layer>,
    pub input_norm: Normalizer,
    pub output_norm: Normalizer,
}

impl Mlp {
    /// He-uniform weights, zero biases, identity normalisers.
    pub fn new(dims: &[usize], seed: u64) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "bad layer dims {dims:?}");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|d| {
                let (fan_in, fan_out) = (d[0], d[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                let w = Array2::from_shape_fn((fan_out, fan_in), |_| rng.gen_range(-limit..limit));
                Layer { w, b: Array1::zeros(fan_out) }
            })
            .collect();
        Self {
            tag: 0,
            layers,
            input_norm: Normalizer::identity(dims[0]),
            output_norm: Normalizer::identity(dims[dims.len() - 1]),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(|l| l.w.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].w.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Invalid("no layers".into()));
        }
        for pair in self.layers.windows(2) {
            if pair[0].w.nrows() != pair[1].w.ncols() {
                return Err(NetError::Invalid("layer shapes do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.b.len() != l.w.nrows() {
                return Err(NetError::Invalid("bias length differs from layer width".into()));
            }
            if !l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()) {
                return Err(NetError::Invalid("non-finite parameter".into()));
            }
        }
        for (norm, dim) in [(&self.input_norm, self.input_dim()), (&self.output_norm, self.output_dim())] {
            if norm.dim() != dim || norm.std.len() != dim {
                return Err(NetError::Invalid("normaliser dimension".into()));
            }
            if !norm.std.iter().all(|s| *s > 0.0 && s.is_finite()) || !norm.mean.iter().all(|m| m.is_finite()) {
                return Err(NetError::Invalid("normaliser std must be positive and finite".into()));
            }
        }
        Ok(())
    }

    /// Raw input to raw output, normalisation included.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NetError> {
        if input.len() != self.input_dim() {
            return Err(NetError::DimMismatch { expected: self.input_dim(), got: input.len() });
        }
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(input, &mut out);
        Ok(out)
    }

    /// As [`Mlp::forward`] without the dimension check on the hot path.
    pub fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(input.len(), self.input_dim());
        let mut cur: Vec<f64> = input
            .iter()
            .zip(self.input_norm.mean.iter().zip(&self.input_norm.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            next.clear();
            let w = l.w.as_slice().expect("weights are standard layout");
            let n_in = cur.len();
            for (r, b) in l.b.iter().enumerate() {
                let row = &w[r * n_in..(r + 1) * n_in];
                let mut acc = *b;
                for (a, x) in row.iter().zip(&cur) {
                    acc += a * x;
                }
                next.push(if i < last { acc.max(0.0) } else { acc });
            }
            std::mem::swap(&mut cur, &mut next);
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = cur[j] * self.output_norm.std[j] + self.output_norm.mean[j];
        }
    }

    /// Batched forward in normalised units; returns activations of every layer,
    /// starting with the input itself.
    fn forward_batch(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.w.t());
            z += &l.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Mean squared error over all entries of a normalised batch.
    pub fn loss(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        let pred = self.forward_batch(x).pop().expect("at least one layer");
        (&pred - y).mapv(|v| v * v).mean().unwrap_or(0.0)
    }

    /// Loss and exact gradients of the mean squared error on a normalised batch.
    pub fn backward(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, Vec<Layer>) {
        assert!(x.nrows() > 0 && x.nrows() == y.nrows(), "batch must be non-empty and aligned");
        let acts = self.forward_batch(x);
        let pred = &acts[acts.len() - 1];
        let diff = pred - y;
        let count = diff.len() as f64;
        let loss = diff.mapv(|v| v * v).sum() / count;
        let mut delta = diff * (2.0 / count);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let gw = delta.t().dot(&acts[i]);
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].w);
                ndarray::Zip::from(&mut back).and(&acts[i]).for_each(|d, a| {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Layer { w: gw, b: gb });
        }
        grads.reverse();
        (loss, grads)
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut f = BufWriter::new(File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&[self.tag])?;
        let dims = self.dims();
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        let mut put = |v: f64| w.write_all(&v.to_le_bytes());
        for norm in [&self.input_norm, &self.output_norm] {
            for v in norm.mean.iter().chain(&norm.std) {
                put(*v)?;
            }
        }
        for l in &self.layers {
            for v in l.w.iter().chain(l.b.iter()) {
                put(*v)?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NetError::BadVersion(version));
        }
        let mut tag = [0u8; 1];
        read_exact(r, &mut tag)?;
        let n = read_u32(r)? as usize;
        if !(2..=16).contains(&n) {
            return Err(NetError::Corrupt("layer count"));
        }
        let mut dims = Vec::with_capacity(n);
        for _ in 0..n {
            let d = read_u32(r)? as usize;
            if d == 0 || d > 1 << 16 {
                return Err(NetError::Corrupt("layer width"));
            }
            dims.push(d);
        }
        let mut read_vec = |len: usize| -> Result<Vec<f64>, NetError> {
            (0..len).map(|_| read_f64(r)).collect()
        };
        let (din, dout) = (dims[0], dims[n - 1]);
        let input_norm = Normalizer { mean: read_vec(din)?, std: read_vec(din)? };
        let output_norm = Normalizer { mean: read_vec(dout)?, std: read_vec(dout)? };
        let mut layers = Vec::with_capacity(n - 1);
        for d in dims.windows(2) {
            let w = Array2::from_shape_vec((d[1], d[0]), read_vec(d[0] * d[1])?)
                .map_err(|_| NetError::Corrupt("weight shape"))?;
            let b = Array1::from(read_vec(d[1])?);
            layers.push(Layer { w, b });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NetError::Corrupt("trailing bytes"));
        }
        let net = Self { tag: tag[0], layers, input_norm, output_norm };
        net.validate()?;
        Ok(net)
    }
}

/// Read-only copy of an [`Mlp`] laid out for single-sample inference: weights are
/// stored input-major so each input scales one contiguous row, and inactive ReLU units
/// are skipped.
#[derive(Clone, Debug)]
pub struct InferenceMlp {
    /// Per layer: (in × out weights, bias, out width).
    layers: Vec<(Vec<f64>, Vec<f64>, usize)>,
    in_mean: Vec<f64>,
    in_std: Vec<f64>,
    out_mean: Vec<f64>,
    out_std: Vec<f64>,
    max_width: usize,
}

impl InferenceMlp {
    pub fn new(net: &Mlp) -> Self {
        let layers: Vec<_> = net
            .layers
            .iter()
            .map(|l| (l.w.t().iter().copied().collect(), l.b.to_vec(), l.w.nrows()))
            .collect();
        let max_width = net.dims().into_iter().max().unwrap_or(0);
        Self {
            layers,
            in_mean: net.input_norm.mean.clone(),
            in_std: net.input_norm.std.clone(),
            out_mean: net.output_norm.mean.clone(),
            out_std: net.output_norm.std.clone(),
            max_width,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.in_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.out_mean.len()
    }

    pub fn forward_into(&self, input: &[f64], out: &mut [f64]) {
        assert_eq!(input.len(), self.input_dim(), "input dimension");
        let mut cur = vec![0.0; self.max_width];
        let mut next = vec![0.0; self.max_width];
        for (j, x) in input.iter().enumerate() {
            cur[j] = (x - self.in_mean[j]) / self.in_std[j];
        }
        let mut n_in = input.len();
        let last = self.layers.len() - 1;
        for (i, (wt, b, n_out)) in self.layers.iter().enumerate() {
            let acc = &mut next[..*n_out];
            acc.copy_from_slice(b);
            for (c, &x) in cur[..n_in].iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &wt[c * n_out..(c + 1) * n_out];
                for (a, w) in acc.iter_mut().zip(row) {
                    *a += x * w;
                }
            }
            if i < last {
                for a in acc.iter_mut() {
                    *a = a.max(0.0);
                }
            }
            std::mem::swap(&mut cur, &mut next);
            n_in = *n_out;
        }
        for (j, o) in out.iter_mut().enumerate() {
            *o = cur[j] * self.out_std[j] + self.out_mean[j];
        }
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), NetError> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            NetError::Corrupt("truncated file")
        } else {
            NetError::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NetError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, NetError> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: [usize; 3],
    pub lr: f64,
    /// Multiplicative learning-rate decay applied after every epoch.
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Minibatch updates per epoch; `None` means one pass over the training rows.
    pub updates_per_epoch: Option<usize>,
    pub seed: u64,
    pub held_out_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: [128, 128, 128],
            lr: 1e-3,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            epochs: 20,
            updates_per_epoch: Some(1000),
            seed: 0,
            held_out_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err("lr must be positive".into());
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err("lr_decay must lie in (0, 1]".into());
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err("Adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return Err("eps must be positive".into());
        }
        if self.batch_size == 0 || self.epochs == 0 || self.updates_per_epoch == Some(0) {
            return Err("batch_size, epochs and updates_per_epoch must be positive".into());
        }
        if self.hidden.contains(&0) {
            return Err("hidden widths must be positive".into());
        }
        if !(self.held_out_fraction > 0.0 && self.held_out_fraction < 0.5) {
            return Err("held_out_fraction must lie in (0, 0.5)".into());
        }
        Ok(())
    }
}

/// First and second moment estimates, shaped like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        let zeros: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer { w: Array2::zeros(l.w.raw_dim()), b: Array1::zeros(l.b.len()) })
            .collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// One bias-corrected Adam update with learning rate `lr`.
pub fn adam_step(net: &mut Mlp, grads: &[Layer], state: &mut AdamState, cfg: &TrainConfig, lr: f64) {
    assert_eq!(grads.len(), net.layers.len(), "gradient shape");
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let layer = &mut net.layers[i];
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + cfg.eps);
        };
        ndarray::Zip::from(&mut layer.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, g, m, v| update(p, *g, m, v));
        ndarray::Zip::from(&mut layer.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, g, m, v| update(p, *g, m, v));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_mse: f64,
    pub held_out_mse: f64,
}

pub fn write_training_log<W: Write>(mut out: W, log: &[EpochLog]) -> io::Result<()> {
    writeln!(out, "epoch,train_mse,held_out_mse")?;
    for e in log {
        writeln!(out, "{},{},{}", e.epoch, e.train_mse, e.held_out_mse)?;
    }
    Ok(())
}

/// Trains `net` on normalised rows. `train_x`/`train_y` and the held-out pair must
/// already be standardised. Deterministic given the config seed.
pub fn train(
    net: &mut Mlp,
    train_x: &Array2<f64>,
    train_y: &Array2<f64>,
    held_x: &Array2<f64>,
    held_y: &Array2<f64>,
    cfg: &TrainConfig,
) -> Vec<EpochLog> {
    let n = train_x.nrows();
    assert!(n > 0, "no training rows");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_7a1e);
    let mut adam = AdamState::new(net);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = cfg.batch_size.min(n);
    let updates = cfg.updates_per_epoch.unwrap_or(n.div_ceil(batch));
    let mut cursor = n;
    let mut lr = cfg.lr;
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut bx = Array2::zeros((batch, train_x.ncols()));
    let mut by = Array2::zeros((batch, train_y.ncols()));
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for _ in 0..updates {
            if cursor + batch > n {
                shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            for (k, &row) in order[cursor..cursor + batch].iter().enumerate() {
                bx.row_mut(k).assign(&train_x.row(row));
                by.row_mut(k).assign(&train_y.row(row));
            }
            cursor += batch;
            let (loss, grads) = net.backward(&bx, &by);
            total += loss;
            adam_step(net, &grads, &mut adam, cfg, lr);
        }
        let held_out_mse = if held_x.nrows() > 0 { batched_loss(net, held_x, held_y) } else { f64::NAN };
        log.push(EpochLog { epoch, train_mse: total / updates as f64, held_out_mse });
        lr *= cfg.lr_decay;
    }
    log
}

fn shuffle(v: &mut [usize], rng: &mut ChaCha8Rng) {
    for i in (1..v.len()).rev() {
        let j = rng.gen_range(0..=i);
        v.swap(i, j);
    }
}

/// Loss over a large set in chunks, equal to [`Mlp::loss`] on the whole set.
pub fn batched_loss(net: &Mlp, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let chunk = 4096;
    let mut sum = 0.0;
    let mut start = 0;
    while start < x.nrows() {
        let end = (start + chunk).min(x.nrows());
        let xs = x.slice(ndarray::s![start..end, ..]).to_owned();
        let ys = y.slice(ndarray::s![start..end, ..]).to_owned();
        sum += net.loss(&xs, &ys) * (end - start) as f64;
        start = end;
    }
    sum / x.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.5..1.5))
    }

    /// Independent scalar reimplementation of the forward pass.
    fn reference_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut h: Vec<f64> = (0..x.len()).map(|j| (x[j] - net.input_norm.mean[j]) / net.input_norm.std[j]).collect();
        for (i, l) in net.layers.iter().enumerate() {
            let mut z = vec![0.0; l.w.nrows()];
            for r in 0..l.w.nrows() {
                z[r] = l.b[r] + (0..l.w.ncols()).map(|c| l.w[[r, c]] * h[c]).sum::<f64>();
                if i + 1 < net.layers.len() && z[r] < 0.0 {
                    z[r] = 0.0;
                }
            }
            h = z;
        }
        (0..h.len()).map(|j| h[j] * net.output_norm.std[j] + net.output_norm.mean[j]).collect()
    }

    #[test]
    fn zero_weights_output_the_bias() {
        let mut net = Mlp::new(&[4, 8, 8, 8, 2], 1);
        for l in &mut net.layers {
            l.w.fill(0.0);
        }
        let last = net.layers.len() - 1;
        net.layers[last].b = Array1::from(vec![0.25, -3.0]);
        for x in [[0.0; 4], [1.0, -2.0, 3.0, 9.0]] {
            assert_eq!(net.forward(&x).unwrap(), vec![0.25, -3.0]);
        }
    }

    #[test]
    fn negative_preactivation_is_cut() {
        let mut net = Mlp::new(&[1, 1, 1], 0);
        net.layers[0].w[[0, 0]] = 1.0;
        net.layers[0].b[0] = -5.0;
        net.layers[1].w[[0, 0]] = 7.0;
        net.layers[1].b[0] = 0.5;
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![0.5]);
        assert_eq!(net.forward(&[6.0]).unwrap(), vec![7.5]);
    }

    #[test]
    fn forward_matches_reference() {
        let mut net = Mlp::new(&[7, 16, 12, 9, 3], 3);
        net.input_norm = Normalizer { mean: (0..7).map(|i| i as f64 * 0.1).collect(), std: (0..7).map(|i| 0.5 + i as f64).collect() };
        net.output_norm = Normalizer { mean: vec![1.0, -1.0, 0.0], std: vec![2.0, 0.5, 3.0] };
        let x = random_batch(20, 7, 9);
        for r in x.rows() {
            let r = r.to_vec();
            let a = net.forward(&r).unwrap();
            let b = reference_forward(&net, &r);
            let mut c = vec![0.0; 3];
            InferenceMlp::new(&net).forward_into(&r, &mut c);
            for ((p, q), z) in a.iter().zip(&b).zip(&c) {
                assert!((p - q).abs() <= 1e-12 * (1.0 + q.abs()));
                assert!((z - q).abs() <= 1e-12 * (1.0 + q.abs()));
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::new(&[3, 4, 2], 0);
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(NetError::DimMismatch { expected: 3, got: 2 })));
    }

    fn gradient_check(dims: &[usize], seed: u64) {
        let mut net = Mlp::new(dims, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for l in &mut net.layers {
            l.b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
        }
        let x = random_batch(6, dims[0], seed + 1);
        let y = random_batch(6, dims[dims.len() - 1], seed + 2);
        let (_, grads) = net.backward(&x, &y);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        for li in 0..net.layers.len() {
            for idx in 0..net.layers[li].w.len() {
                let (r, c) = (idx / net.layers[li].w.ncols(), idx % net.layers[li].w.ncols());
                let orig = net.layers[li].w[[r, c]];
                net.layers[li].w[[r, c]] = orig + h;
                let lp = net.loss(&x, &y);
                net.layers[li].w[[r, c]] = orig - h;
                let lm = net.loss(&x, &y);
                net.layers[li].w[[r, c]] = orig;
                worst = worst.max(rel(grads[li].w[[r, c]], (lp - lm) / (2.0 * h)));
            }
            for r in 0..net.layers[li].b.len() {
                let orig = net.layers[li].b[r];
                net.layers[li].b[r] = orig + h;
                let lp = net.loss(&x, &y);
                net.layers[li].b[r] = orig - h;
                let lm = net.loss(&x, &y);
                net.layers[li].b[r] = orig;
                worst = worst.max(rel(grads[li].b[r], (lp - lm) / (2.0 * h)));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst} for {dims:?}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (seed, input) in [(1, 19), (2, 22), (3, 20)] {
            gradient_check(&[input, 12, 10, 8, 5], seed);
        }
    }

    #[test]
    fn zero_error_batch_has_zero_gradients() {
        let net = Mlp::new(&[3, 5, 5, 5, 2], 4);
        let x = random_batch(4, 3, 5);
        let y = net.forward_batch(&x).pop().unwrap();
        let (loss, grads) = net.backward(&x, &y);
        assert_eq!(loss, 0.0);
        assert!(grads.iter().all(|g| g.w.iter().chain(g.b.iter()).all(|v| *v == 0.0)));
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op_and_first_step_is_sign() {
        let cfg = TrainConfig { eps: 1e-12, ..Default::default() };
        let mut net = Mlp::new(&[2, 3, 1], 0);
        let before = net.clone();
        let mut st = AdamState::new(&net);
        let zeros = AdamState::new(&net).m;
        adam_step(&mut net, &zeros, &mut st, &cfg, cfg.lr);
        assert_eq!(net, before);

        let mut st = AdamState::new(&net);
        let mut g = AdamState::new(&net).m;
        g[0].w[[0, 0]] = 3.0;
        g[0].w[[1, 1]] = -0.01;
        adam_step(&mut net, &g, &mut st, &cfg, cfg.lr);
        assert!((before.layers[0].w[[0, 0]] - net.layers[0].w[[0, 0]] - cfg.lr).abs() < 1e-12);
        assert!((net.layers[0].w[[1, 1]] - before.layers[0].w[[1, 1]] - cfg.lr).abs() < 1e-12);
        assert_eq!(net.layers[0].w[[0, 1]], before.layers[0].w[[0, 1]]);
    }

    #[test]
    fn adam_solves_a_toy_regression() {
        let cfg = TrainConfig { lr: 0.05, ..Default::default() };
        let mut net = Mlp::new(&[2, 1], 0);
        let x = random_batch(32, 2, 1);
        let y = x.dot(&Array2::from_shape_vec((2, 1), vec![0.7, -1.3]).unwrap()) + 0.4;
        let first = net.loss(&x, &y);
        let mut st = AdamState::new(&net);
        for _ in 0..200 {
            let (_, g) = net.backward(&x, &y);
            adam_step(&mut net, &g, &mut st, &cfg, cfg.lr);
        }
        assert!(net.loss(&x, &y) < 1e-4 * first, "{} vs {}", net.loss(&x, &y), first);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let mut net = Mlp::new(&[5, 7, 6, 4, 2], 11);
        net.tag = 2;
        net.input_norm = Normalizer { mean: vec![0.1, 0.2, 0.3, 0.4, 0.5], std: vec![1.0, 2.0, 3.0, 4.0, 5.0] };
        let mut bytes = Vec::new();
        net.write_to(&mut bytes).unwrap();
        let back = Mlp::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, net);
        let x = [0.3, -0.2, 1.0, 2.0, -4.0];
        assert_eq!(back.forward(&x).unwrap(), net.forward(&x).unwrap());

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Mlp::read_from(&mut bad.as_slice()), Err(NetError::BadMagic)));
        let short = &bytes[..bytes.len() - 3];
        assert!(matches!(Mlp::read_from(&mut &short[..]), Err(NetError::Corrupt(_))));
        let mut ver = bytes.clone();
        ver[8] = 9;
        assert!(matches!(Mlp::read_from(&mut ver.as_slice()), Err(NetError::BadVersion(9))));
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let x = random_batch(600, 4, 3);
        let y = x.map_axis(Axis(1), |r| (r[0] * r[1]).sin() + r[2].abs() - 0.5 * r[3]).insert_axis(Axis(1));
        let (tx, hx) = (x.slice(ndarray::s![..500, ..]).to_owned(), x.slice(ndarray::s![500.., ..]).to_owned());
        let (ty, hy) = (y.slice(ndarray::s![..500, ..]).to_owned(), y.slice(ndarray::s![500.., ..]).to_owned());
        let cfg = TrainConfig { hidden: [16, 16, 16], batch_size: 32, epochs: 30, seed: 5, ..Default::default() };
        let run = || {
            let mut net = Mlp::new(&[4, 16, 16, 16, 1], cfg.seed);
            let log = train(&mut net, &tx, &ty, &hx, &hy, &cfg);
            (net, log)
        };
        let (a, log_a) = run();
        let (b, log_b) = run();
        assert_eq!(a, b);
        assert_eq!(log_a, log_b);
        assert!(log_a.last().unwrap().held_out_mse < 0.5 * log_a[0].held_out_mse.max(log_a[0].train_mse));
    }

    #[test]
    fn normalizer_fit() {
        let x = Array2::from_shape_vec((4, 2), vec![1.0, 5.0, 2.0, 5.0, 3.0, 5.0, 4.0, 5.0]).unwrap();
        let n = Normalizer::fit(x.view());
        assert_eq!(n.mean, vec![2.5, 5.0]);
        assert!((n.std[0] - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(n.std[1], 1.0);
        assert_eq!(Normalizer::fit_with_floor(x.view(), 1e-3).std[1], 1e-3);
    }
}
