//! The dual-output MLP: ten input features, three ReLU hidden layers
//! (128/64/32), a two-way softmax classification head and a single linear
//! regression head. Forward, loss, analytic backpropagation and the Nadam
//! update are explicit; training is plain seeded minibatch descent.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature count (user 4 + object 6).
pub const N_FEATURES: usize = 10;
/// Trunk layout including the input width.
pub const TRUNK: [usize; 4] = [N_FEATURES, 128, 64, 32];
/// Classification head width.
pub const N_CLASSES: usize = 2;

const CE_CLIP: f64 = 1e-7;

/// One labeled user-object sample. Features are ordered
/// [r_u, x_u, y_u, θ_u, r_o, x_o, y_o, θ_o, v_o, n_o] with n_o = ±1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: [f64; N_FEATURES],
    pub label_b: bool,
    /// Seconds until blockage, or -1.0 when label_b is false.
    pub label_t: f64,
}

/// Min-max feature scaler, persisted with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub lo: [f64; N_FEATURES],
    pub hi: [f64; N_FEATURES],
}

impl Scaler {
    /// Identity scaling.
    pub fn identity() -> Self {
        Scaler { lo: [0.0; N_FEATURES], hi: [1.0; N_FEATURES] }
    }

    /// Fits min/max on a training split.
    pub fn fit(samples: &[Sample]) -> Self {
        let mut lo = [f64::INFINITY; N_FEATURES];
        let mut hi = [f64::NEG_INFINITY; N_FEATURES];
        for s in samples {
            for i in 0..N_FEATURES {
                lo[i] = lo[i].min(s.features[i]);
                hi[i] = hi[i].max(s.features[i]);
            }
        }
        Scaler { lo, hi }
    }

    /// Declared physical ranges (per feature) rather than fitted ones.
    pub fn from_ranges(ranges: [[f64; 2]; N_FEATURES]) -> Self {
        let mut lo = [0.0; N_FEATURES];
        let mut hi = [0.0; N_FEATURES];
        for i in 0..N_FEATURES {
            lo[i] = ranges[i][0];
            hi[i] = ranges[i][1];
        }
        Scaler { lo, hi }
    }

    pub fn transform(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        for i in 0..N_FEATURES {
            let w = self.hi[i] - self.lo[i];
            out[i] = if w > 0.0 { (x[i] - self.lo[i]) / w } else { 0.0 };
        }
        out
    }

    pub fn apply(&self, samples: &[Sample]) -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample { features: self.transform(&s.features), ..*s })
            .collect()
    }
}

/// Dense layer: row-major `w[out][in]` plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer { w: vec![0.0; n_in * n_out], b: vec![0.0; n_out], n_in, n_out }
    }

    fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * limit)
            .collect();
        Layer { w: vec![], b: vec![0.0; n_out], n_in, n_out }.with_w(w)
    }

    fn with_w(mut self, w: Vec<f64>) -> Self {
        self.w = w;
        self
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x.iter()) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// All weights of the dual-output model: three trunk layers, the
/// classification head, the regression head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, deterministic per seed.
    pub fn init(seed: u64) -> Self {
        let mut rng = crate::rng::SeedStream::new(seed).stream("init");
        let mut layers = Vec::new();
        for i in 0..TRUNK.len() - 1 {
            layers.push(Layer::glorot(TRUNK[i], TRUNK[i + 1], &mut rng));
        }
        layers.push(Layer::glorot(TRUNK[3], N_CLASSES, &mut rng));
        layers.push(Layer::glorot(TRUNK[3], 1, &mut rng));
        ModelParams { layers }
    }

    /// All-zero parameters (test hook): softmax gives (1/2, 1/2).
    pub fn zeros() -> Self {
        let mut layers = Vec::new();
        for i in 0..TRUNK.len() - 1 {
            layers.push(Layer::zeros(TRUNK[i], TRUNK[i + 1]));
        }
        layers.push(Layer::zeros(TRUNK[3], N_CLASSES));
        layers.push(Layer::zeros(TRUNK[3], 1));
        ModelParams { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn iter_params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()))
    }

    pub fn iter_params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    fn same_shape(&self, other: &ModelParams) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(other.layers.iter())
                .all(|(a, b)| a.n_in == b.n_in && a.n_out == b.n_out)
    }

    /// Forward pass: class probabilities and the regression output.
    pub fn forward(&self, x: &[f64; N_FEATURES]) -> ([f64; N_CLASSES], f64) {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache);
        (cache.probs, cache.t_hat)
    }

    fn forward_cached(&self, x: &[f64; N_FEATURES], cache: &mut ForwardCache) {
        debug_assert!(x.iter().all(|v| v.is_finite()), "non-finite feature");
        cache.input.clear();
        cache.input.extend_from_slice(x);
        self.layers[0].affine(&cache.input, &mut cache.hidden[0]);
        relu_inplace(&mut cache.hidden[0]);
        {
            let (lo, hi) = cache.hidden.split_at_mut(1);
            self.layers[1].affine(&lo[0], &mut hi[0]);
            relu_inplace(&mut hi[0]);
        }
        {
            let (lo, hi) = cache.hidden.split_at_mut(2);
            self.layers[2].affine(&lo[1], &mut hi[0]);
            relu_inplace(&mut hi[0]);
        }
        self.layers[3].affine(&cache.hidden[2], &mut cache.logits);
        self.layers[4].affine(&cache.hidden[2], &mut cache.reg_out);
        cache.t_hat = cache.reg_out[0];

        let max = cache.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for (i, z) in cache.logits.iter().enumerate() {
            let e = (z - max).exp();
            cache.probs[i] = e;
            denom += e;
        }
        for p in cache.probs.iter_mut() {
            *p /= denom;
        }
    }
}

fn relu_inplace(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

#[derive(Debug, Clone, Default)]
struct ForwardCache {
    input: Vec<f64>,
    hidden: [Vec<f64>; 3],
    logits: Vec<f64>,
    reg_out: Vec<f64>,
    probs: [f64; N_CLASSES],
    t_hat: f64,
}

/// Loss components for one prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub ce: f64,
    pub mae: f64,
}

/// Sparse categorical cross-entropy (probability clipped to
/// [1e-7, 1-1e-7]) plus `lambda` times the absolute regression error.
pub fn loss(probs: &[f64; N_CLASSES], t_hat: f64, sample: &Sample, lambda: f64) -> LossParts {
    let p = probs[sample.label_b as usize].clamp(CE_CLIP, 1.0 - CE_CLIP);
    let ce = -p.ln();
    let mae = (t_hat - sample.label_t).abs();
    LossParts { total: ce + lambda * mae, ce, mae }
}

/// Per-epoch (or per-batch) training statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub ce: f64,
    pub mae: f64,
    pub accuracy: f64,
}

impl EpochStats {
    pub fn total_loss(&self, lambda: f64) -> f64 {
        self.ce + lambda * self.mae
    }
}

/// Training hyperparameters; the defaults follow the Nadam/0.001/100/10
/// recipe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Weight of the regression loss against the classification loss.
    pub lambda: f64,
    /// Skip the MAE term on non-blocked (-1) samples.
    pub mask_mae_nonblocked: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 10, batch_size: 100, lambda: 1.0, mask_mae_nonblocked: false }
    }
}

/// Analytic gradients of the mean batch loss through both heads, plus the
/// pre-update batch statistics from the same forward pass.
pub fn gradient(
    params: &ModelParams,
    batch: &[Sample],
    cfg: &TrainConfig,
) -> Result<(ModelParams, EpochStats)> {
    if batch.is_empty() {
        return Err(Error::Argument("gradient of an empty batch".into()));
    }
    let mut grads = ModelParams {
        layers: params
            .layers
            .iter()
            .map(|l| Layer::zeros(l.n_in, l.n_out))
            .collect(),
    };
    let inv_b = 1.0 / batch.len() as f64;
    let mut cache = ForwardCache::default();
    let mut stats = EpochStats { ce: 0.0, mae: 0.0, accuracy: 0.0 };

    let mut delta3 = vec![0.0; TRUNK[3]];
    let mut delta2 = vec![0.0; TRUNK[2]];
    let mut delta1 = vec![0.0; TRUNK[1]];

    for s in batch {
        params.forward_cached(&s.features, &mut cache);
        let lp = loss(&cache.probs, cache.t_hat, s, cfg.lambda);
        let masked = cfg.mask_mae_nonblocked && !s.label_b;
        stats.ce += lp.ce * inv_b;
        stats.mae += if masked { 0.0 } else { lp.mae * inv_b };
        let predicted = cache.probs[1] > cache.probs[0];
        if predicted == s.label_b {
            stats.accuracy += inv_b;
        }

        // classification head: d ce / d logits = p - onehot
        let mut dlogits = [cache.probs[0], cache.probs[1]];
        dlogits[s.label_b as usize] -= 1.0;

        // regression head: d |e| / d t_hat = sign(e)
        let err = cache.t_hat - s.label_t;
        let dreg = if masked {
            0.0
        } else {
            cfg.lambda * if err > 0.0 { 1.0 } else if err < 0.0 { -1.0 } else { 0.0 }
        };

        let a3 = &cache.hidden[2];
        {
            let g_cls = &mut grads.layers[3];
            for o in 0..N_CLASSES {
                let d = dlogits[o] * inv_b;
                g_cls.b[o] += d;
                let row = &mut g_cls.w[o * g_cls.n_in..(o + 1) * g_cls.n_in];
                for (wi, ai) in row.iter_mut().zip(a3.iter()) {
                    *wi += d * ai;
                }
            }
        }
        {
            let g_reg = &mut grads.layers[4];
            let d = dreg * inv_b;
            g_reg.b[0] += d;
            for (wi, ai) in g_reg.w.iter_mut().zip(a3.iter()) {
                *wi += d * ai;
            }
        }

        // back through the trunk; relu' from the cached activations
        let cls = &params.layers[3];
        let reg = &params.layers[4];
        for i in 0..TRUNK[3] {
            let mut acc = reg.w[i] * dreg;
            for o in 0..N_CLASSES {
                acc += cls.w[o * cls.n_in + i] * dlogits[o];
            }
            delta3[i] = if a3[i] > 0.0 { acc } else { 0.0 };
        }
        backprop_layer(params, &mut grads, 2, &cache.hidden[1], &delta3, &mut delta2, inv_b);
        mask_relu(&cache.hidden[1], &mut delta2);
        backprop_layer(params, &mut grads, 1, &cache.hidden[0], &delta2, &mut delta1, inv_b);
        mask_relu(&cache.hidden[0], &mut delta1);
        accumulate_first_layer(&mut grads.layers[0], &cache.input, &delta1, inv_b);
    }
    Ok((grads, stats))
}

/// Adds layer `idx`'s gradient contribution and computes the delta for the
/// previous layer (before its ReLU mask).
fn backprop_layer(
    params: &ModelParams,
    grads: &mut ModelParams,
    idx: usize,
    prev_act: &[f64],
    delta: &[f64],
    prev_delta: &mut [f64],
    inv_b: f64,
) {
    let layer = &params.layers[idx];
    let g = &mut grads.layers[idx];
    for o in 0..layer.n_out {
        let d = delta[o] * inv_b;
        g.b[o] += d;
        let row = &mut g.w[o * layer.n_in..(o + 1) * layer.n_in];
        for (wi, ai) in row.iter_mut().zip(prev_act.iter()) {
            *wi += d * ai;
        }
    }
    for i in 0..layer.n_in {
        let mut acc = 0.0;
        for o in 0..layer.n_out {
            acc += layer.w[o * layer.n_in + i] * delta[o];
        }
        prev_delta[i] = acc;
    }
}

fn mask_relu(act: &[f64], delta: &mut [f64]) {
    for (d, a) in delta.iter_mut().zip(act.iter()) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}

fn accumulate_first_layer(g: &mut Layer, input: &[f64], delta: &[f64], inv_b: f64) {
    for o in 0..g.n_out {
        let d = delta[o] * inv_b;
        g.b[o] += d;
        let row = &mut g.w[o * g.n_in..(o + 1) * g.n_in];
        for (wi, xi) in row.iter_mut().zip(input.iter()) {
            *wi += d * xi;
        }
    }
}

/// Nadam optimizer state (first/second moments per parameter).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let n = params.n_params();
        OptimizerState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            lr,
        }
    }
}

/// Nesterov-Adam update with bias correction:
///   θ ← θ − lr · (β₁·m̂ + (1−β₁)·g/(1−β₁^t)) / (√v̂ + ε)
pub fn nadam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut OptimizerState,
) -> Result<()> {
    if !params.same_shape(grads) {
        return Err(Error::Shape("gradient shape does not match parameters".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((theta, g), (m, v)) in params
        .iter_params_mut()
        .zip(grads.iter_params())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let lookahead = state.beta1 * m_hat + (1.0 - state.beta1) * g / bc1;
        *theta -= state.lr * lookahead / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Seeded minibatch training; returns per-epoch means of the pre-update
/// batch statistics. The shuffle stream is the caller's, so consecutive
/// calls continue the same sequence.
pub fn train(
    params: &mut ModelParams,
    opt: &mut OptimizerState,
    data: &[Sample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochStats>> {
    if data.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let mut order: Vec<usize> = Vec::with_capacity(data.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.epochs {
        // fresh identity order per epoch: a run of k single-epoch calls
        // shuffles exactly like one k-epoch call
        order.clear();
        order.extend(0..data.len());
        order.shuffle(rng);
        let mut epoch = EpochStats { ce: 0.0, mae: 0.0, accuracy: 0.0 };
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i]));
            let (grads, stats) = gradient(params, &batch, cfg)?;
            nadam_step(params, &grads, opt)?;
            let w = batch.len() as f64;
            epoch.ce += stats.ce * w;
            epoch.mae += stats.mae * w;
            epoch.accuracy += stats.accuracy * w;
            seen += batch.len();
        }
        let inv = 1.0 / seen as f64;
        epoch.ce *= inv;
        epoch.mae *= inv;
        epoch.accuracy *= inv;
        history.push(epoch);
    }
    Ok(history)
}

/// Mean loss components and accuracy over a labeled set.
pub fn evaluate(params: &ModelParams, data: &[Sample], lambda: f64) -> EpochStats {
    if data.is_empty() {
        return EpochStats { ce: 0.0, mae: 0.0, accuracy: 0.0 };
    }
    let inv = 1.0 / data.len() as f64;
    let mut out = EpochStats { ce: 0.0, mae: 0.0, accuracy: 0.0 };
    for s in data {
        let (p, t_hat) = params.forward(&s.features);
        let lp = loss(&p, t_hat, s, lambda);
        out.ce += lp.ce * inv;
        out.mae += lp.mae * inv;
        if (p[1] > p[0]) == s.label_b {
            out.accuracy += inv;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON manifest + little-endian f32 blob
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    layout: Vec<usize>,
    heads: Vec<usize>,
    activation: String,
    scaler: Scaler,
    param_count: usize,
    dtype: String,
}

/// Writes `<base>.json` (manifest) and `<base>.bin` (parameters as f32,
/// little endian, in layer order: weights then bias per layer).
pub fn save_checkpoint(base: &std::path::Path, params: &ModelParams, scaler: &Scaler) -> Result<()> {
    let manifest = Manifest {
        layout: TRUNK.to_vec(),
        heads: vec![N_CLASSES, 1],
        activation: "relu".into(),
        scaler: scaler.clone(),
        param_count: params.n_params(),
        dtype: "f32-le".into(),
    };
    std::fs::write(base.with_extension("json"), serde_json::to_string_pretty(&manifest)?)?;
    let mut blob = Vec::with_capacity(params.n_params() * 4);
    for p in params.iter_params() {
        blob.extend_from_slice(&(*p as f32).to_le_bytes());
    }
    std::fs::write(base.with_extension("bin"), blob)?;
    Ok(())
}

pub fn load_checkpoint(base: &std::path::Path) -> Result<(ModelParams, Scaler)> {
    let manifest: Manifest =
        serde_json::from_str(&std::fs::read_to_string(base.with_extension("json"))?)?;
    if manifest.layout != TRUNK.to_vec() || manifest.heads != vec![N_CLASSES, 1] {
        return Err(Error::Serialization("checkpoint layout mismatch".into()));
    }
    let blob = std::fs::read(base.with_extension("bin"))?;
    if blob.len() != manifest.param_count * 4 {
        return Err(Error::Serialization(format!(
            "blob holds {} bytes, manifest declares {} params",
            blob.len(),
            manifest.param_count
        )));
    }
    let mut params = ModelParams::zeros();
    if params.n_params() != manifest.param_count {
        return Err(Error::Serialization("parameter count mismatch".into()));
    }
    for (i, p) in params.iter_params_mut().enumerate() {
        let bytes: [u8; 4] = blob[i * 4..i * 4 + 4].try_into().unwrap();
        *p = f32::from_le_bytes(bytes) as f64;
    }
    Ok((params, manifest.scaler))
}
