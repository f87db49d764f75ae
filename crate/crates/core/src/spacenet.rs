//! The tabular transformer classifier.
//!
//! Each encoded column becomes one token through a learned per-feature affine
//! map into `d_model` dimensions. Tokens pass through post-norm encoder layers
//! (multi-head scaled dot-product attention, then a ReLU feed-forward block,
//! each with a residual connection and layer norm), are mean-pooled, and go
//! through a two-layer MLP head with dropout after the first layer. Column
//! identity lives in the per-feature embedding parameters, so there is no
//! positional encoding and every token attends to every other token.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autograd::{softmax_in_place, Adam, AdamState, AutogradError, Graph, Tensor, Var};
use crate::data::{Schema, TravelClass, N_CLASSES};
use crate::matrix::Matrix;
use crate::preprocess::Standardizer;
use crate::rng;

#[derive(Debug, Error)]
pub enum SpaceNetError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("input has {found} features, model expects {expected}")]
    LayoutMismatch { expected: usize, found: usize },
    #[error("non-finite activation in forward pass")]
    NonFiniteActivation,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    DivergenceDetected { epoch: usize, batch: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Width of the feed-forward block inside each encoder layer.
    pub ff_hidden: usize,
    pub mlp_hidden: usize,
    pub dropout_p: f64,
    pub n_classes: usize,
    pub layer_norm_eps: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            ff_hidden: 256,
            mlp_hidden: 32,
            dropout_p: 0.1,
            n_classes: N_CLASSES,
            layer_norm_eps: 1e-5,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<(), SpaceNetError> {
        let bad = |m: String| Err(SpaceNetError::InvalidConfig(m));
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return bad(format!("dropout_p {} outside [0, 1)", self.dropout_p));
        }
        if self.ff_hidden == 0 || self.mlp_hidden == 0 || self.n_classes < 2 {
            return bad("zero-width layer or fewer than 2 classes".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            weight_decay: 1e-5,
            batch_size: 64,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean training loss in eval mode before the first update.
    pub initial_loss: f64,
    /// Mean training loss over each epoch's mini-batches.
    pub train_loss: Vec<f64>,
    pub val_loss: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub ff_w1: Tensor,
    pub ff_b1: Tensor,
    pub ff_w2: Tensor,
    pub ff_b2: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
}

const ENCODER_KEYS: [&str; 16] = [
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "ln1_gamma",
    "ln1_beta",
    "ff_w1",
    "ff_b1",
    "ff_w2",
    "ff_b2",
    "ln2_gamma",
    "ln2_beta",
];

impl EncoderParams {
    fn tensors(&self) -> [&Tensor; 16] {
        [
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.ff_w1,
            &self.ff_b1,
            &self.ff_w2,
            &self.ff_b2,
            &self.ln2_gamma,
            &self.ln2_beta,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 16] {
        [
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.ff_w1,
            &mut self.ff_b1,
            &mut self.ff_w2,
            &mut self.ff_b2,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceNetParams {
    pub embed_weight: Tensor,
    pub embed_bias: Tensor,
    pub layers: Vec<EncoderParams>,
    pub head_w1: Tensor,
    pub head_b1: Tensor,
    pub head_w2: Tensor,
    pub head_b2: Tensor,
}

impl SpaceNetParams {
    /// Fan-in scaled uniform initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    /// Layer-norm gains start at one and shifts at zero.
    pub fn init(config: &ModelConfig, n_features: usize) -> Self {
        let mut rng = rng::rng_for(config.seed, &[rng::STREAM_INIT]);
        let d = config.d_model;
        let mut uniform = |shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            Tensor::new(shape, (0..n).map(|_| rng.gen_range(-bound..bound)).collect()).expect("shape")
        };
        let embed_weight = uniform(vec![n_features, d], 1);
        let embed_bias = uniform(vec![n_features, d], 1);
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(EncoderParams {
                wq: uniform(vec![d, d], d),
                bq: uniform(vec![d], d),
                wk: uniform(vec![d, d], d),
                bk: uniform(vec![d], d),
                wv: uniform(vec![d, d], d),
                bv: uniform(vec![d], d),
                wo: uniform(vec![d, d], d),
                bo: uniform(vec![d], d),
                ln1_gamma: Tensor::filled(vec![d], 1.0),
                ln1_beta: Tensor::zeros(vec![d]),
                ff_w1: uniform(vec![d, config.ff_hidden], d),
                ff_b1: uniform(vec![config.ff_hidden], d),
                ff_w2: uniform(vec![config.ff_hidden, d], config.ff_hidden),
                ff_b2: uniform(vec![d], config.ff_hidden),
                ln2_gamma: Tensor::filled(vec![d], 1.0),
                ln2_beta: Tensor::zeros(vec![d]),
            });
        }
        Self {
            embed_weight,
            embed_bias,
            layers,
            head_w1: uniform(vec![d, config.mlp_hidden], d),
            head_b1: uniform(vec![config.mlp_hidden], d),
            head_w2: uniform(vec![config.mlp_hidden, config.n_classes], config.mlp_hidden),
            head_b2: uniform(vec![config.n_classes], config.mlp_hidden),
        }
    }

    pub fn n_features(&self) -> usize {
        self.embed_weight.shape()[0]
    }

    /// Every parameter with its checkpoint key, in optimizer order.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = vec![
            ("embed.weight".to_string(), &self.embed_weight),
            ("embed.bias".to_string(), &self.embed_bias),
        ];
        for (i, layer) in self.layers.iter().enumerate() {
            for (key, t) in ENCODER_KEYS.iter().zip(layer.tensors()) {
                out.push((format!("layers.{i}.{key}"), t));
            }
        }
        out.extend([
            ("head.w1".to_string(), &self.head_w1),
            ("head.b1".to_string(), &self.head_b1),
            ("head.w2".to_string(), &self.head_w2),
            ("head.b2".to_string(), &self.head_b2),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.embed_weight, &mut self.embed_bias];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([
            &mut self.head_w1,
            &mut self.head_b1,
            &mut self.head_w2,
            &mut self.head_b2,
        ]);
        out
    }

    pub fn n_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.data().iter().all(|v| v.is_finite()))
    }
}

/// Scaled dot-product attention `softmax(q k^T / sqrt(d_k)) v` over the last
/// two axes. Returns the context and the attention weights.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<(Var, Var), AutogradError> {
    let d_k = *g.shape(q).last().unwrap_or(&0);
    if d_k == 0 || g.shape(k).last() != Some(&d_k) {
        return Err(AutogradError::ShapeMismatch {
            op: "attention",
            detail: format!("q {:?} k {:?}", g.shape(q), g.shape(k)),
        });
    }
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scaled = g.scale(scores, 1.0 / (d_k as f64).sqrt());
    let weights = g.softmax_rows(scaled);
    let context = g.matmul(weights, v)?;
    Ok((context, weights))
}

struct LayerVars {
    vars: Vec<Var>,
}

impl LayerVars {
    fn get(&self, key: &str) -> Var {
        self.vars[ENCODER_KEYS.iter().position(|k| *k == key).expect("encoder key")]
    }
}

/// Parameter leaves registered on a graph, in `SpaceNetParams::named` order.
pub struct BoundParams {
    pub vars: Vec<Var>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceNet {
    pub config: ModelConfig,
    pub params: SpaceNetParams,
}

/// Parameter name and gradient, in `SpaceNetParams::named` order.
pub type NamedGradients = Vec<(String, Vec<f64>)>;

/// Forward-pass trace, with attention weights per layer and per head.
pub struct ForwardTrace {
    pub logits: Var,
    pub attention: Vec<Vec<Var>>,
    pub encoder_outputs: Vec<Var>,
}

const INFERENCE_CHUNK: usize = 256;

impl SpaceNet {
    pub fn new(config: ModelConfig, n_features: usize) -> Result<Self, SpaceNetError> {
        config.validate()?;
        let params = SpaceNetParams::init(&config, n_features);
        Ok(Self { config, params })
    }

    pub fn n_features(&self) -> usize {
        self.params.n_features()
    }

    pub fn bind(&self, g: &mut Graph, requires_grad: bool) -> BoundParams {
        BoundParams {
            vars: self
                .params
                .named()
                .into_iter()
                .map(|(_, t)| g.leaf(t.clone(), requires_grad))
                .collect(),
        }
    }

    /// Token embeddings `[b, m, d_model]` for a batch of rows.
    pub fn embed(&self, g: &mut Graph, bound: &BoundParams, x: Var) -> Result<Var, SpaceNetError> {
        let m = g.shape(x).get(1).copied().unwrap_or(0);
        if m != self.n_features() {
            return Err(SpaceNetError::LayoutMismatch {
                expected: self.n_features(),
                found: m,
            });
        }
        Ok(g.embed_features(x, bound.vars[0], bound.vars[1])?)
    }

    fn multi_head(&self, g: &mut Graph, layer: &LayerVars, x: Var) -> Result<(Var, Vec<Var>), AutogradError> {
        let d_k = self.config.d_k();
        let project = |g: &mut Graph, w: &str, b: &str| -> Result<Var, AutogradError> {
            let p = g.matmul(x, layer.get(w))?;
            g.add(p, layer.get(b))
        };
        let q = project(g, "wq", "bq")?;
        let k = project(g, "wk", "bk")?;
        let v = project(g, "wv", "bv")?;
        let mut heads = Vec::with_capacity(self.config.n_heads);
        let mut weights = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = g.slice_last(q, h * d_k, d_k)?;
            let kh = g.slice_last(k, h * d_k, d_k)?;
            let vh = g.slice_last(v, h * d_k, d_k)?;
            let (ctx, w) = attention(g, qh, kh, vh)?;
            heads.push(ctx);
            weights.push(w);
        }
        let concat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_last(&heads)?
        };
        let out = g.matmul(concat, layer.get("wo"))?;
        Ok((g.add(out, layer.get("bo"))?, weights))
    }

    fn encoder_layer(&self, g: &mut Graph, layer: &LayerVars, x: Var) -> Result<(Var, Vec<Var>), AutogradError> {
        let eps = self.config.layer_norm_eps;
        let (attn, weights) = self.multi_head(g, layer, x)?;
        let res = g.add(x, attn)?;
        let h = g.layer_norm(res, layer.get("ln1_gamma"), layer.get("ln1_beta"), eps)?;
        let ff = g.matmul(h, layer.get("ff_w1"))?;
        let ff = g.add(ff, layer.get("ff_b1"))?;
        let ff = g.relu(ff);
        let ff = g.matmul(ff, layer.get("ff_w2"))?;
        let ff = g.add(ff, layer.get("ff_b2"))?;
        let res = g.add(h, ff)?;
        Ok((
            g.layer_norm(res, layer.get("ln2_gamma"), layer.get("ln2_beta"), eps)?,
            weights,
        ))
    }

    /// Full forward pass of a `[b, m]` batch. Dropout is active only when `train` is set.
    pub fn forward_trace(
        &self,
        g: &mut Graph,
        bound: &BoundParams,
        x: Var,
        train: bool,
        dropout_seed: u64,
    ) -> Result<ForwardTrace, SpaceNetError> {
        let mut h = self.embed(g, bound, x)?;
        let mut attention = Vec::with_capacity(self.config.n_layers);
        let mut encoder_outputs = Vec::with_capacity(self.config.n_layers);
        for l in 0..self.config.n_layers {
            let start = 2 + l * ENCODER_KEYS.len();
            let layer = LayerVars {
                vars: bound.vars[start..start + ENCODER_KEYS.len()].to_vec(),
            };
            let (out, weights) = self.encoder_layer(g, &layer, h)?;
            h = out;
            attention.push(weights);
            encoder_outputs.push(h);
        }
        let head = 2 + self.config.n_layers * ENCODER_KEYS.len();
        let pooled = g.mean_over_axis(h, 1)?;
        let z = g.matmul(pooled, bound.vars[head])?;
        let z = g.add(z, bound.vars[head + 1])?;
        let z = g.relu(z);
        let z = g.dropout(z, self.config.dropout_p, train, dropout_seed)?;
        let z = g.matmul(z, bound.vars[head + 2])?;
        let logits = g.add(z, bound.vars[head + 3])?;
        if g.value(logits).data().iter().any(|v| !v.is_finite()) {
            return Err(SpaceNetError::NonFiniteActivation);
        }
        Ok(ForwardTrace {
            logits,
            attention,
            encoder_outputs,
        })
    }

    pub(crate) fn input_var(&self, g: &mut Graph, rows: &Matrix) -> Result<Var, SpaceNetError> {
        if rows.cols() != self.n_features() {
            return Err(SpaceNetError::LayoutMismatch {
                expected: self.n_features(),
                found: rows.cols(),
            });
        }
        Ok(g.constant(Tensor::new(vec![rows.rows(), rows.cols()], rows.as_slice().to_vec())?))
    }

    /// Logits `[b, n_classes]`.
    pub fn forward(&self, rows: &Matrix, train: bool, dropout_seed: u64) -> Result<Matrix, SpaceNetError> {
        let mut out = Matrix::zeros(0, 0);
        for start in (0..rows.rows()).step_by(INFERENCE_CHUNK) {
            let idx: Vec<usize> = (start..(start + INFERENCE_CHUNK).min(rows.rows())).collect();
            let chunk = rows.select_rows(&idx);
            let mut g = Graph::new();
            let bound = self.bind(&mut g, false);
            let x = self.input_var(&mut g, &chunk)?;
            let seed = rng::derive_seed(dropout_seed, &[start as u64]);
            let trace = self.forward_trace(&mut g, &bound, x, train, seed)?;
            let logits = g.value(trace.logits);
            for row in logits.data().chunks_exact(self.config.n_classes) {
                out.push_row(row);
            }
        }
        if rows.rows() == 0 {
            out = Matrix::zeros(0, self.config.n_classes);
        }
        Ok(out)
    }

    pub fn logits(&self, rows: &Matrix) -> Result<Matrix, SpaceNetError> {
        self.forward(rows, false, 0)
    }

    /// Class probabilities in eval mode; each row sums to one.
    pub fn predict_proba(&self, rows: &Matrix) -> Result<Matrix, SpaceNetError> {
        let mut probs = self.logits(rows)?;
        for i in 0..probs.rows() {
            softmax_in_place(probs.row_mut(i));
        }
        Ok(probs)
    }

    pub fn predict(&self, rows: &Matrix) -> Result<Vec<TravelClass>, SpaceNetError> {
        let p = self.predict_proba(rows)?;
        Ok((0..p.rows()).map(|i| TravelClass::ALL[p.argmax_row(i)]).collect())
    }

    /// Mean cross-entropy in eval mode.
    pub fn loss(&self, rows: &Matrix, labels: &[TravelClass]) -> Result<f64, SpaceNetError> {
        let p = self.predict_proba(rows)?;
        let total: f64 = labels.iter().enumerate().map(|(i, l)| -p.get(i, l.index()).ln()).sum();
        Ok(total / labels.len() as f64)
    }

    /// Eval-mode mean cross-entropy and its gradient with respect to every
    /// parameter, in `SpaceNetParams::named` order.
    pub fn loss_gradients(
        &self,
        rows: &Matrix,
        labels: &[TravelClass],
    ) -> Result<(f64, NamedGradients), SpaceNetError> {
        let targets: Vec<usize> = labels.iter().map(|l| l.index()).collect();
        let mut g = Graph::new();
        let bound = self.bind(&mut g, true);
        let x = self.input_var(&mut g, rows)?;
        let trace = self.forward_trace(&mut g, &bound, x, false, 0)?;
        let loss = g.cross_entropy_logits(trace.logits, &targets)?;
        g.backward(loss)?;
        let grads = self
            .params
            .named()
            .into_iter()
            .zip(&bound.vars)
            .map(|((name, t), &v)| {
                let grad = g
                    .grad(v)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; t.data().len()]);
                (name, grad)
            })
            .collect();
        Ok((g.value(loss).item(), grads))
    }
}

/// Mini-batch training with seeded shuffling, cross-entropy loss and Adam.
pub fn train(
    train_x: &Matrix,
    train_y: &[TravelClass],
    val: Option<(&Matrix, &[TravelClass])>,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<(SpaceNet, TrainHistory), SpaceNetError> {
    if train_x.rows() == 0 || train_x.rows() != train_y.len() {
        return Err(SpaceNetError::EmptyTrainingSet);
    }
    if train_config.batch_size == 0 || train_config.epochs == 0 {
        return Err(SpaceNetError::InvalidConfig(
            "batch_size and epochs must be positive".into(),
        ));
    }
    let mut model = SpaceNet::new(model_config.clone(), train_x.cols())?;
    let adam = Adam {
        lr: train_config.lr,
        weight_decay: train_config.weight_decay,
        ..Adam::default()
    };
    let mut state = {
        let named = model.params.named();
        let refs: Vec<&Tensor> = named.iter().map(|(_, t)| *t).collect();
        AdamState::for_params(&refs)
    };
    let initial_loss = model.loss(train_x, train_y)?;
    let targets: Vec<usize> = train_y.iter().map(|l| l.index()).collect();
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let mut train_loss = Vec::with_capacity(train_config.epochs);
    let mut val_loss = val.map(|_| Vec::with_capacity(train_config.epochs));
    for epoch in 0..train_config.epochs {
        let mut shuffle_rng = rng::rng_for(train_config.seed, &[rng::STREAM_SHUFFLE, epoch as u64]);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = 0.0;
        for (batch, idx) in order.chunks(train_config.batch_size).enumerate() {
            let xb = train_x.select_rows(idx);
            let yb: Vec<usize> = idx.iter().map(|&i| targets[i]).collect();
            let mut g = Graph::new();
            let bound = model.bind(&mut g, true);
            let x = model.input_var(&mut g, &xb)?;
            let seed = rng::derive_seed(train_config.seed, &[rng::STREAM_DROPOUT, epoch as u64, batch as u64]);
            let trace = model
                .forward_trace(&mut g, &bound, x, true, seed)
                .map_err(|e| match e {
                    SpaceNetError::NonFiniteActivation => SpaceNetError::DivergenceDetected { epoch, batch },
                    other => other,
                })?;
            let loss = g.cross_entropy_logits(trace.logits, &yb)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(SpaceNetError::DivergenceDetected { epoch, batch });
            }
            epoch_total += value * idx.len() as f64;
            g.backward(loss)?;
            let grads: Vec<&[f64]> = bound
                .vars
                .iter()
                .map(|&v| g.grad(v).expect("parameter gradient"))
                .collect();
            let mut params = model.params.tensors_mut();
            adam.step(&mut params, &grads, &mut state)?;
        }
        train_loss.push(epoch_total / train_x.rows() as f64);
        if let (Some((vx, vy)), Some(hist)) = (val, val_loss.as_mut()) {
            hist.push(model.loss(vx, vy)?);
        }
    }
    if !model.params.all_finite() {
        return Err(SpaceNetError::DivergenceDetected {
            epoch: train_config.epochs,
            batch: 0,
        });
    }
    Ok((
        model,
        TrainHistory {
            initial_loss,
            train_loss,
            val_loss,
        },
    ))
}

/// How raw survey columns become model inputs; stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    pub schema: Schema,
    pub selected_features: Vec<String>,
    pub standardizer: Standardizer,
    pub column_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

const CHECKPOINT_FORMAT: &str = "demandscope-spacenet-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config: ModelConfig,
    n_features: usize,
    params: BTreeMap<String, StoredTensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    input: Option<InputSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_digest: Option<String>,
}

/// A trained model plus, optionally, the preprocessing that feeds it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SpaceNet,
    pub input: Option<InputSpec>,
    /// Digest of the pipeline config that produced the checkpoint.
    pub config_digest: Option<String>,
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String, SpaceNetError> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            config: self.model.config.clone(),
            n_features: self.model.n_features(),
            params: self
                .model
                .params
                .named()
                .into_iter()
                .map(|(k, t)| {
                    (
                        k,
                        StoredTensor {
                            shape: t.shape().to_vec(),
                            data: t.data().to_vec(),
                        },
                    )
                })
                .collect(),
            input: self.input.clone(),
            config_digest: self.config_digest.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SpaceNetError> {
        let mut file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(SpaceNetError::Checkpoint(format!("unknown format `{}`", file.format)));
        }
        file.config.validate()?;
        let mut model = SpaceNet {
            params: SpaceNetParams::init(&file.config, file.n_features),
            config: file.config,
        };
        let keys: Vec<String> = model.params.named().into_iter().map(|(k, _)| k).collect();
        for (key, slot) in keys.iter().zip(model.params.tensors_mut()) {
            let stored = file
                .params
                .remove(key)
                .ok_or_else(|| SpaceNetError::Checkpoint(format!("missing parameter `{key}`")))?;
            if stored.shape != slot.shape() {
                return Err(SpaceNetError::Checkpoint(format!(
                    "`{key}` has shape {:?}, expected {:?}",
                    stored.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(stored.shape, stored.data)?;
        }
        if let Some(extra) = file.params.keys().next() {
            return Err(SpaceNetError::Checkpoint(format!("unexpected parameter `{extra}`")));
        }
        Ok(Self {
            model,
            input: file.input,
            config_digest: file.config_digest,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), SpaceNetError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SpaceNetError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config(seed: u64) -> ModelConfig {
        ModelConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            ff_hidden: 16,
            mlp_hidden: 8,
            dropout_p: 0.1,
            seed,
            ..ModelConfig::default()
        }
    }

    fn random_rows(n: usize, m: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::new(n, m, (0..n * m).map(|_| rng.gen_range(-2.0..2.0)).collect())
    }

    #[test]
    fn config_validation() {
        let bad = ModelConfig {
            n_heads: 3,
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(SpaceNetError::InvalidConfig(_))));
        let bad = ModelConfig {
            dropout_p: 1.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ModelConfig::default().d_k(), 32);
    }

    #[test]
    fn embedding_is_affine_per_feature() {
        let model = SpaceNet::new(tiny_config(1), 3).unwrap();
        let embed = |rows: &Matrix| {
            let mut g = Graph::new();
            let bound = model.bind(&mut g, false);
            let x = model.input_var(&mut g, rows).unwrap();
            let e = model.embed(&mut g, &bound, x).unwrap();
            g.value(e).data().to_vec()
        };
        let zero = embed(&Matrix::zeros(1, 3));
        assert_eq!(zero, model.params.embed_bias.data());
        let x = Matrix::from_rows(&[vec![0.5, -1.0, 2.0]]);
        let x2 = Matrix::from_rows(&[vec![1.0, -2.0, 4.0]]);
        let (e1, e2) = (embed(&x), embed(&x2));
        let w = model.params.embed_weight.data();
        for j in 0..3 {
            for t in 0..8 {
                let shift = e2[j * 8 + t] - e1[j * 8 + t];
                assert!((shift - w[j * 8 + t] * x.get(0, j)).abs() < 1e-12);
            }
        }
        let mut zeroed = model.clone();
        zeroed.params.embed_weight = Tensor::zeros(vec![3, 8]);
        zeroed.params.embed_bias = Tensor::zeros(vec![3, 8]);
        let mut g = Graph::new();
        let bound = zeroed.bind(&mut g, false);
        let xv = zeroed.input_var(&mut g, &x).unwrap();
        let e = zeroed.embed(&mut g, &bound, xv).unwrap();
        assert!(g.value(e).data().iter().all(|&v| v == 0.0));
        assert!(matches!(
            model.logits(&Matrix::zeros(1, 4)),
            Err(SpaceNetError::LayoutMismatch { expected: 3, found: 4 })
        ));
    }

    #[test]
    fn attention_hand_values() {
        let mut g = Graph::new();
        let q = g.constant(Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap());
        let k = g.constant(Tensor::new(vec![2, 1], vec![1.0, 0.0]).unwrap());
        let v = g.constant(Tensor::new(vec![2, 1], vec![2.0, 4.0]).unwrap());
        let (ctx, w) = attention(&mut g, q, k, v).unwrap();
        let e = std::f64::consts::E;
        let w0 = e / (e + 1.0);
        assert!((g.value(w).data()[0] - w0).abs() < 1e-12);
        assert!((g.value(ctx).data()[0] - (w0 * 2.0 + (1.0 - w0) * 4.0)).abs() < 1e-12);
        assert!((g.value(ctx).data()[0] - 2.5379).abs() < 1e-4);

        // single token: weight 1, output = v
        let mut g = Graph::new();
        let q = g.constant(Tensor::new(vec![1, 2], vec![0.3, -0.7]).unwrap());
        let v = g.constant(Tensor::new(vec![1, 2], vec![5.0, -1.0]).unwrap());
        let (ctx, w) = attention(&mut g, q, q, v).unwrap();
        assert_eq!(g.value(w).data(), &[1.0]);
        assert_eq!(g.value(ctx).data(), &[5.0, -1.0]);

        // zero scores: uniform weights, column means of v
        let mut g = Graph::new();
        let q = g.constant(Tensor::zeros(vec![3, 2]));
        let v = g.constant(Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 9.0]).unwrap());
        let (ctx, _) = attention(&mut g, q, q, v).unwrap();
        for row in g.value(ctx).data().chunks(2) {
            assert!((row[0] - 3.0).abs() < 1e-12 && (row[1] - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let model = SpaceNet::new(tiny_config(2), 5).unwrap();
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let x = model.input_var(&mut g, &random_rows(3, 5, 1)).unwrap();
        let trace = model.forward_trace(&mut g, &bound, x, false, 0).unwrap();
        for w in trace.attention.iter().flatten() {
            for row in g.value(*w).data().chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let model = SpaceNet::new(tiny_config(3), 4).unwrap();
        for b in [1, 7, 300] {
            let rows = random_rows(b, 4, b as u64);
            let a = model.logits(&rows).unwrap();
            assert_eq!((a.rows(), a.cols()), (b, 4));
            let again = model.logits(&rows).unwrap();
            let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&again));
        }
    }

    #[test]
    fn zero_dropout_train_matches_eval() {
        let config = ModelConfig {
            dropout_p: 0.0,
            ..tiny_config(4)
        };
        let model = SpaceNet::new(config, 4).unwrap();
        let rows = random_rows(10, 4, 9);
        let train = model.forward(&rows, true, 77).unwrap();
        let eval = model.forward(&rows, false, 0).unwrap();
        assert_eq!(train, eval);
        let with_dropout = SpaceNet::new(tiny_config(4), 4).unwrap();
        assert_ne!(
            with_dropout.forward(&rows, true, 77).unwrap(),
            with_dropout.logits(&rows).unwrap()
        );
    }

    #[test]
    fn feature_permutation_equivariance() {
        let model = SpaceNet::new(tiny_config(5), 4).unwrap();
        let rows = random_rows(6, 4, 3);
        let perm = [2, 0, 3, 1];
        let mut permuted = model.clone();
        let permute_rows = |t: &Tensor| {
            let d = t.shape()[1];
            let mut data = Vec::with_capacity(t.numel());
            for &p in &perm {
                data.extend_from_slice(&t.data()[p * d..(p + 1) * d]);
            }
            Tensor::new(t.shape().to_vec(), data).unwrap()
        };
        permuted.params.embed_weight = permute_rows(&model.params.embed_weight);
        permuted.params.embed_bias = permute_rows(&model.params.embed_bias);
        let a = model.logits(&rows).unwrap();
        let b = permuted.logits(&rows.select_cols(&perm)).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_projections_reduce_layer_to_layer_norm() {
        let mut model = SpaceNet::new(tiny_config(6), 3).unwrap();
        for layer in &mut model.params.layers {
            layer.wo = Tensor::zeros(vec![8, 8]);
            layer.bo = Tensor::zeros(vec![8]);
            layer.ff_w2 = Tensor::zeros(vec![16, 8]);
            layer.ff_b2 = Tensor::zeros(vec![8]);
        }
        let rows = random_rows(2, 3, 4);
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let x = model.input_var(&mut g, &rows).unwrap();
        let tokens = model.embed(&mut g, &bound, x).unwrap();
        let trace = model.forward_trace(&mut g, &bound, x, false, 0).unwrap();
        let out = g.value(trace.encoder_outputs[0]).data();
        let input = g.value(tokens).data();
        for (row_in, row_out) in input.chunks(8).zip(out.chunks(8)) {
            let mean = row_in.iter().sum::<f64>() / 8.0;
            let var = row_in.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            // two successive layer norms of the same row
            let once: Vec<f64> = row_in.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect();
            let var1 = once.iter().map(|v| v * v).sum::<f64>() / 8.0;
            for (a, b) in once.iter().zip(row_out) {
                assert!((a / (var1 + 1e-5).sqrt() - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn probabilities_sum_to_one_and_follow_logits() {
        let model = SpaceNet::new(tiny_config(7), 5).unwrap();
        let rows = random_rows(20, 5, 2);
        let p = model.predict_proba(&rows).unwrap();
        let z = model.logits(&rows).unwrap();
        for i in 0..20 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(p.argmax_row(i), z.argmax_row(i));
        }
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let mut model = SpaceNet::new(tiny_config(8), 5).unwrap();
        model.params.head_w2 = Tensor::zeros(vec![8, 4]);
        model.params.head_b2 = Tensor::zeros(vec![4]);
        let p = model.predict_proba(&random_rows(4, 5, 3)).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    fn eval_loss(model: &SpaceNet, rows: &Matrix, targets: &[usize]) -> f64 {
        let mut g = Graph::new();
        let bound = model.bind(&mut g, false);
        let x = model.input_var(&mut g, rows).unwrap();
        let trace = model.forward_trace(&mut g, &bound, x, false, 0).unwrap();
        let loss = g.cross_entropy_logits(trace.logits, targets).unwrap();
        g.value(loss).item()
    }

    #[test]
    fn miniature_model_gradients_match_finite_differences() {
        let config = ModelConfig {
            d_model: 4,
            n_heads: 2,
            n_layers: 1,
            ff_hidden: 8,
            mlp_hidden: 4,
            dropout_p: 0.0,
            seed: 11,
            ..ModelConfig::default()
        };
        let model = SpaceNet::new(config, 3).unwrap();
        let rows = random_rows(5, 3, 12);
        let targets = [0, 1, 2, 3, 1];
        let mut g = Graph::new();
        let bound = model.bind(&mut g, true);
        let x = model.input_var(&mut g, &rows).unwrap();
        let trace = model.forward_trace(&mut g, &bound, x, false, 0).unwrap();
        let loss = g.cross_entropy_logits(trace.logits, &targets).unwrap();
        g.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> = bound.vars.iter().map(|&v| g.grad(v).unwrap().to_vec()).collect();
        let h = 1e-5;
        let mut worst = 0.0f64;
        for (p, grad) in analytic.iter().enumerate() {
            for i in 0..grad.len() {
                let mut plus = model.clone();
                plus.params.tensors_mut()[p].data_mut()[i] += h;
                let mut minus = model.clone();
                minus.params.tensors_mut()[p].data_mut()[i] -= h;
                let numeric = (eval_loss(&plus, &rows, &targets) - eval_loss(&minus, &rows, &targets)) / (2.0 * h);
                let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    fn separable_set(n: usize, seed: u64) -> (Matrix, Vec<TravelClass>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 4;
            let mut row: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.3..0.3)).collect();
            row[c] += 2.0;
            rows.push(row);
            labels.push(TravelClass::ALL[c]);
        }
        (Matrix::from_rows(&rows), labels)
    }

    #[test]
    fn overfits_a_tiny_separable_set() {
        let (x, y) = separable_set(64, 1);
        let model_config = ModelConfig {
            d_model: 16,
            ff_hidden: 32,
            mlp_hidden: 16,
            ..ModelConfig::default()
        };
        let (model, history) = train(&x, &y, Some((&x, &y)), &model_config, &TrainConfig::default()).unwrap();
        assert_eq!(history.train_loss.len(), 50);
        assert_eq!(history.val_loss.as_ref().unwrap().len(), 50);
        assert!(
            (history.initial_loss - 4f64.ln()).abs() < 0.15,
            "{}",
            history.initial_loss
        );
        assert_eq!(model.predict(&x).unwrap(), y);
        let (again, history2) = train(&x, &y, Some((&x, &y)), &model_config, &TrainConfig::default()).unwrap();
        assert_eq!(history, history2);
        assert_eq!(model, again);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let model = SpaceNet::new(tiny_config(9), 3).unwrap();
        let ckpt = Checkpoint {
            model,
            input: None,
            config_digest: None,
        };
        let text = ckpt.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        assert_eq!(back, ckpt);
        let rows = random_rows(5, 3, 1);
        assert_eq!(ckpt.model.logits(&rows).unwrap(), back.model.logits(&rows).unwrap());
        assert!(Checkpoint::from_json(&text.replace("embed.bias", "embed.bogus")).is_err());
    }
}
