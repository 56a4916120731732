//! Dense feed-forward classifier trained by mini-batch Adam on categorical
//! cross-entropy, with early stopping on validation loss.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, NUM_BINS};
use crate::seed::{derive_seed, rng};
use crate::states::ClassLabel;

pub const DEFAULT_LAYER_DIMS: [usize; 5] = [NUM_BINS, 64, 32, 16, 2];
pub const MODEL_FORMAT: &str = "quadnc-model";
pub const MODEL_VERSION: u32 = 1;

/// Floor applied to probabilities inside the log of the loss.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softmax,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

/// Weights are stored row-major, one `outputs x inputs` matrix per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activations: Vec<Activation>,
    pub metadata: ModelMetadata,
}

/// Parameter gradient, shape-congruent with its model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradient {
    fn zeros_like(model: &NetworkModel) -> Self {
        Gradient {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

impl NetworkModel {
    /// All-zero parameters; ReLU hidden layers and a softmax output.
    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Model(format!("invalid layer dimensions {layer_dims:?}")));
        }
        let layers = layer_dims.len() - 1;
        let mut activations = vec![Activation::Relu; layers];
        activations[layers - 1] = Activation::Softmax;
        Ok(NetworkModel {
            layer_dims: layer_dims.to_vec(),
            weights: layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: layer_dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            activations,
            metadata: ModelMetadata::default(),
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(layer_dims: &[usize], seed: u64) -> Result<Self> {
        let mut model = Self::zeros(layer_dims)?;
        let mut r = rng(seed);
        for (l, w) in model.weights.iter_mut().enumerate() {
            let bound = 1.0 / (layer_dims[l] as f64).sqrt();
            w.iter_mut().for_each(|x| *x = r.gen_range(-bound..bound));
        }
        model.metadata.seed = seed;
        Ok(model)
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn validate(&self) -> Result<()> {
        let layers = self.layer_dims.len().saturating_sub(1);
        if layers == 0 || self.layer_dims.contains(&0) {
            return Err(Error::Model(format!("invalid layer dimensions {:?}", self.layer_dims)));
        }
        if self.weights.len() != layers || self.biases.len() != layers || self.activations.len() != layers {
            return Err(Error::Model("layer count does not match layer_dims".into()));
        }
        for l in 0..layers {
            let (i, o) = (self.layer_dims[l], self.layer_dims[l + 1]);
            if self.weights[l].len() != i * o || self.biases[l].len() != o {
                return Err(Error::Model(format!("layer {l} parameter shape does not match {i}x{o}")));
            }
            let want = if l + 1 == layers { Activation::Softmax } else { Activation::Relu };
            if self.activations[l] != want {
                return Err(Error::Model(format!("layer {l} must use {want:?} activation")));
            }
        }
        if self.weights.iter().chain(&self.biases).flatten().any(|x| !x.is_finite()) {
            return Err(Error::Model("non-finite parameter".into()));
        }
        if *self.layer_dims.last().expect("non-empty") != 2 {
            return Err(Error::Model("output layer must have 2 classes".into()));
        }
        Ok(())
    }

    fn check_input(&self, input: &FeatureVector) -> Result<()> {
        if input.bins.len() != self.input_dim() {
            return Err(Error::Model(format!(
                "input has {} features, model expects {}",
                input.bins.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Output-layer pre-activations.
    pub fn logits(&self, input: &FeatureVector) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut ws = Workspace::new(self);
        ws.forward(self, &input.bins);
        Ok(ws.z.last().expect("non-empty").clone())
    }

    /// Class probabilities `[p_classical, p_nonclassical]`.
    pub fn forward(&self, input: &FeatureVector) -> Result<[f64; 2]> {
        self.check_input(input)?;
        let mut ws = Workspace::new(self);
        ws.forward(self, &input.bins);
        let p = ws.a.last().expect("non-empty");
        Ok([p[0], p[1]])
    }

    /// The network output `r`, the probability of the nonclassical class.
    pub fn nonclassicality(&self, input: &FeatureVector) -> Result<f64> {
        Ok(self.forward(input)?[ClassLabel::Nonclassical.index()])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile { format: MODEL_FORMAT.into(), version: MODEL_VERSION, model: self.clone() };
        let mut s = serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Format(format!("corrupt model file: {e}")))?;
        match value.get("format").and_then(|f| f.as_str()) {
            Some(MODEL_FORMAT) => {}
            other => return Err(Error::Format(format!("not a model file (format tag {other:?})"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Format(format!(
                    "unsupported model version {v} (this build reads version {MODEL_VERSION})"
                )))
            }
            None => return Err(Error::Format("model file has no version field".into())),
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::Format(format!("corrupt model file: {e}")))?;
        file.model.validate().map_err(|e| Error::Format(e.to_string()))?;
        Ok(file.model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    model: NetworkModel,
}

/// Per-example scratch buffers for forward and backward passes.
struct Workspace {
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(model: &NetworkModel) -> Self {
        let outs = &model.layer_dims[1..];
        Workspace {
            z: outs.iter().map(|&d| vec![0.0; d]).collect(),
            a: outs.iter().map(|&d| vec![0.0; d]).collect(),
            delta: outs.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }

    fn forward(&mut self, model: &NetworkModel, input: &[f64]) {
        for l in 0..model.num_layers() {
            let n_in = model.layer_dims[l];
            let (prev, rest) = self.a.split_at_mut(l);
            let x: &[f64] = if l == 0 { input } else { &prev[l - 1] };
            let w = &model.weights[l];
            let z = &mut self.z[l];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *zo = model.biases[l][o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            let a = &mut rest[0];
            match model.activations[l] {
                Activation::Relu => a.iter_mut().zip(z.iter()).for_each(|(a, &z)| *a = z.max(0.0)),
                Activation::Softmax => softmax(z, a),
            }
        }
    }

    /// Adds `weight * d(-ln p_label)/d(params)` into `grad` and returns the
    /// floored cross-entropy of this example.
    fn accumulate(
        &mut self,
        model: &NetworkModel,
        input: &[f64],
        label: usize,
        weight: f64,
        grad: &mut Gradient,
    ) -> f64 {
        self.forward(model, input);
        let last = model.num_layers() - 1;
        let p_label = self.a[last][label];
        let loss = -p_label.max(PROB_FLOOR).ln();
        if p_label < PROB_FLOOR {
            // The floored loss is locally constant.
            return loss;
        }
        for (k, d) in self.delta[last].iter_mut().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            *d = weight * (self.a[last][k] - target);
        }
        for l in (0..=last).rev() {
            let n_in = model.layer_dims[l];
            let x: &[f64] = if l == 0 { input } else { &self.a[l - 1] };
            let gw = &mut grad.weights[l];
            for (o, &d) in self.delta[l].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad.biases[l][o] += d;
                gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x).for_each(|(g, &xi)| *g += d * xi);
            }
            if l > 0 {
                let (lower, upper) = self.delta.split_at_mut(l);
                let back = &mut lower[l - 1];
                back.iter_mut().for_each(|b| *b = 0.0);
                let w = &model.weights[l];
                for (o, &d) in upper[0].iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    back.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]).for_each(|(b, &wi)| *b += d * wi);
                }
                back.iter_mut().zip(&self.z[l - 1]).for_each(|(b, &z)| {
                    if z <= 0.0 {
                        *b = 0.0;
                    }
                });
            }
        }
        loss
    }
}

fn softmax(z: &[f64], out: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = (zi - m).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

fn check_pairs(model: &NetworkModel, inputs: &[FeatureVector], labels: &[ClassLabel]) -> Result<()> {
    if inputs.len() != labels.len() {
        return Err(Error::Input(format!("{} inputs but {} labels", inputs.len(), labels.len())));
    }
    if inputs.is_empty() {
        return Err(Error::Input("no examples".into()));
    }
    inputs.iter().try_for_each(|x| model.check_input(x))
}

/// Mean categorical cross-entropy, `-mean(ln max(p_label, 1e-12))`.
pub fn loss(model: &NetworkModel, inputs: &[FeatureVector], labels: &[ClassLabel]) -> Result<f64> {
    check_pairs(model, inputs, labels)?;
    let mut ws = Workspace::new(model);
    let last = model.num_layers() - 1;
    let total: f64 = inputs
        .iter()
        .zip(labels)
        .map(|(x, y)| {
            ws.forward(model, &x.bins);
            -ws.a[last][y.index()].max(PROB_FLOOR).ln()
        })
        .sum();
    Ok(total / inputs.len() as f64)
}

/// Exact gradient of [`loss`] with respect to every parameter.
pub fn gradient(model: &NetworkModel, inputs: &[FeatureVector], labels: &[ClassLabel]) -> Result<Gradient> {
    check_pairs(model, inputs, labels)?;
    let mut grad = Gradient::zeros_like(model);
    let mut ws = Workspace::new(model);
    let w = 1.0 / inputs.len() as f64;
    for (x, y) in inputs.iter().zip(labels) {
        ws.accumulate(model, &x.bins, y.index(), w, &mut grad);
    }
    Ok(grad)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub validation_fraction: f64,
    pub layer_dims: Vec<usize>,
    /// Sum mini-batch gradients across threads. Deterministic for a fixed
    /// chunk size but not bit-identical to the serial path.
    pub parallel_gradient: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 500,
            patience: 10,
            optimizer: Optimizer::Adam,
            seed: 0,
            validation_fraction: 0.2,
            layer_dims: DEFAULT_LAYER_DIMS.to_vec(),
            parallel_gradient: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub best_val_loss: f64,
}

struct Adam {
    m: Gradient,
    v: Gradient,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn step(model: &mut NetworkModel, grad: &Gradient, cfg: &TrainConfig, adam: &mut Adam) {
    let lr = cfg.learning_rate;
    match cfg.optimizer {
        Optimizer::Sgd => {
            for (p, g) in
                model.weights.iter_mut().chain(model.biases.iter_mut()).zip(grad.weights.iter().chain(&grad.biases))
            {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let c1 = 1.0 - BETA1.powi(adam.t);
            let c2 = 1.0 - BETA2.powi(adam.t);
            let params = model.weights.iter_mut().chain(model.biases.iter_mut());
            let grads = grad.weights.iter().chain(&grad.biases);
            let ms = adam.m.weights.iter_mut().chain(adam.m.biases.iter_mut());
            let vs = adam.v.weights.iter_mut().chain(adam.v.biases.iter_mut());
            for (((p, g), m), v) in params.zip(grads).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

const PARALLEL_CHUNK: usize = 16;

fn batch_gradient(
    model: &NetworkModel,
    data: &[(FeatureVector, ClassLabel)],
    idx: &[usize],
    parallel: bool,
) -> (Gradient, f64) {
    let w = 1.0 / idx.len() as f64;
    let run = |chunk: &[usize]| {
        let mut g = Gradient::zeros_like(model);
        let mut ws = Workspace::new(model);
        let mut l = 0.0;
        for &i in chunk {
            let (x, y) = &data[i];
            l += ws.accumulate(model, &x.bins, y.index(), w, &mut g);
        }
        (g, l)
    };
    if parallel {
        let parts: Vec<(Gradient, f64)> = idx.par_chunks(PARALLEL_CHUNK).map(run).collect();
        let mut iter = parts.into_iter();
        let (mut g, mut l) = iter.next().expect("non-empty batch");
        for (pg, pl) in iter {
            g.add_assign(&pg);
            l += pl;
        }
        (g, l)
    } else {
        run(idx)
    }
}

fn evaluate(model: &NetworkModel, data: &[(FeatureVector, ClassLabel)], idx: &[usize]) -> (f64, f64) {
    let mut ws = Workspace::new(model);
    let last = model.num_layers() - 1;
    let mut total = 0.0;
    let mut correct = 0usize;
    for &i in idx {
        let (x, y) = &data[i];
        ws.forward(model, &x.bins);
        let p = &ws.a[last];
        total -= p[y.index()].max(PROB_FLOOR).ln();
        let predicted = if p[1] > 0.5 { 1 } else { 0 };
        if predicted == y.index() {
            correct += 1;
        }
    }
    (total / idx.len() as f64, correct as f64 / idx.len() as f64)
}

/// Split of a dataset into training and validation indices after one seeded
/// shuffle.
pub fn split_indices(len: usize, cfg: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng(derive_seed(cfg.seed, 0)));
    let n_val = ((len as f64 * cfg.validation_fraction).round() as usize).clamp(1, len - 1);
    let val = idx.split_off(len - n_val);
    (idx, val)
}

pub const MIN_DATASET: usize = 100;

/// Trains a fresh model and returns the parameters of the epoch with the
/// lowest validation loss, together with the per-epoch history.
pub fn fit_with_history(
    dataset: &[(FeatureVector, ClassLabel)],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(NetworkModel, Vec<EpochRecord>)> {
    cfg.validate()?;
    if dataset.len() < MIN_DATASET {
        return Err(Error::Training(format!("dataset has {} examples, need at least {MIN_DATASET}", dataset.len())));
    }
    let has = |c: ClassLabel| dataset.iter().any(|(_, y)| *y == c);
    if !has(ClassLabel::Classical) || !has(ClassLabel::Nonclassical) {
        return Err(Error::Training("dataset must contain both classes".into()));
    }
    let mut model = NetworkModel::init(&cfg.layer_dims, derive_seed(cfg.seed, 1))?;
    model.validate()?;
    model.metadata.seed = cfg.seed;
    for (x, _) in dataset {
        model.check_input(x)?;
    }
    let (mut train, val) = split_indices(dataset.len(), cfg);
    let mut adam = Adam { m: Gradient::zeros_like(&model), v: Gradient::zeros_like(&model), t: 0 };
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut history = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        train.shuffle(&mut rng(derive_seed(cfg.seed, 1 + epoch as u64)));
        let mut train_loss = 0.0;
        for batch in train.chunks(cfg.batch_size) {
            let (grad, l) = batch_gradient(&model, dataset, batch, cfg.parallel_gradient);
            train_loss += l;
            step(&mut model, &grad, cfg, &mut adam);
        }
        train_loss /= train.len() as f64;
        let (val_loss, val_accuracy) = evaluate(&model, dataset, &val);
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::Training(format!("loss diverged at epoch {epoch}")));
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = model.clone();
            since_best = 0;
        } else {
            since_best += 1;
        }
        let record = EpochRecord { epoch, train_loss, val_loss, val_accuracy, best_val_loss: best_loss };
        on_epoch(&record);
        history.push(record);
        if since_best >= cfg.patience {
            break;
        }
    }
    best.metadata = ModelMetadata {
        seed: cfg.seed,
        epochs_run: history.len(),
        best_epoch,
        best_val_loss: Some(best_loss),
        run_config: None,
    };
    Ok((best, history))
}

pub fn fit(dataset: &[(FeatureVector, ClassLabel)], cfg: &TrainConfig) -> Result<NetworkModel> {
    fit_with_history(dataset, cfg, |_| {}).map(|(m, _)| m)
}

/// Validation accuracy at decision level 0.5 on the split `fit` would use.
pub fn validation_accuracy(model: &NetworkModel, dataset: &[(FeatureVector, ClassLabel)], cfg: &TrainConfig) -> f64 {
    let (_, val) = split_indices(dataset.len(), cfg);
    evaluate(model, dataset, &val).1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(bins: Vec<f64>) -> FeatureVector {
        FeatureVector { bins, kept: 1, dropped: 0 }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = NetworkModel::zeros(&DEFAULT_LAYER_DIMS).unwrap();
        let p = m.forward(&fv(vec![1.0 / 160.0; 160])).unwrap();
        assert_eq!(p, [0.5, 0.5]);
    }

    #[test]
    fn logit_shift_invariance() {
        let mut m = NetworkModel::init(&DEFAULT_LAYER_DIMS, 3).unwrap();
        let x = fv((0..160).map(|i| (i % 7) as f64 / 500.0).collect());
        let p = m.forward(&x).unwrap();
        let last = m.biases.len() - 1;
        m.biases[last].iter_mut().for_each(|b| *b += 123.0);
        let q = m.forward(&x).unwrap();
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }

    #[test]
    fn loss_examples() {
        let m = NetworkModel::zeros(&[3, 2]).unwrap();
        let xs = vec![fv(vec![0.1, 0.2, 0.7]), fv(vec![0.0, 1.0, 0.0])];
        let ys = vec![ClassLabel::Classical, ClassLabel::Nonclassical];
        assert!((loss(&m, &xs, &ys).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        // p_label = 0.9 from logits differing by ln 9.
        let mut m = NetworkModel::zeros(&[1, 2]).unwrap();
        m.biases[0] = vec![0.0, 9f64.ln()];
        let l = loss(&m, &[fv(vec![0.0])], &[ClassLabel::Nonclassical]).unwrap();
        assert!((l - 0.105_360_515_657_826_3).abs() < 1e-12);
        m.biases[0] = vec![0.0, 60.0];
        assert!(loss(&m, &[fv(vec![0.0])], &[ClassLabel::Nonclassical]).unwrap() <= 1e-6);
        assert!(matches!(loss(&m, &[fv(vec![0.0])], &[]), Err(Error::Input(_))));
    }

    #[test]
    fn zero_input_gives_zero_first_layer_gradient() {
        let m = NetworkModel::init(&[8, 5, 4, 2], 1).unwrap();
        let g = gradient(&m, &[fv(vec![0.0; 8])], &[ClassLabel::Nonclassical]).unwrap();
        assert!(g.weights[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicated_example_same_gradient() {
        let m = NetworkModel::init(&[6, 5, 2], 9).unwrap();
        let x = fv(vec![0.3, 0.1, 0.0, 0.2, 0.25, 0.15]);
        let g1 = gradient(&m, std::slice::from_ref(&x), &[ClassLabel::Classical]).unwrap();
        let g2 = gradient(&m, &[x.clone(), x], &[ClassLabel::Classical; 2]).unwrap();
        for (a, b) in g1.weights.iter().flatten().zip(g2.weights.iter().flatten()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch() {
        let m = NetworkModel::zeros(&DEFAULT_LAYER_DIMS).unwrap();
        assert!(matches!(m.forward(&fv(vec![0.0; 10])), Err(Error::Model(_))));
    }

    #[test]
    fn config_validation() {
        let cfg = TrainConfig { patience: 0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { validation_fraction: 1.0, ..TrainConfig::default() };
        assert!(cfg.validate().is_err());
    }

    fn toy_dataset(n: usize) -> Vec<(FeatureVector, ClassLabel)> {
        let mut r = rng(5);
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { ClassLabel::Classical } else { ClassLabel::Nonclassical };
                let shift = if label == ClassLabel::Classical { 0.0 } else { 0.5 };
                let bins = (0..4).map(|k| r.gen::<f64>() + if k == 0 { shift } else { 0.0 }).collect();
                (fv(bins), label)
            })
            .collect()
    }

    #[test]
    fn fit_errors_and_early_stop() {
        let data = toy_dataset(120);
        let base = TrainConfig { layer_dims: vec![4, 6, 2], ..TrainConfig::default() };
        let one: Vec<_> = data.iter().filter(|(_, y)| *y == ClassLabel::Classical).cloned().collect::<Vec<_>>();
        let mut one = one.clone();
        one.extend(one.clone());
        assert!(matches!(fit(&one, &base), Err(Error::Training(_))));
        assert!(matches!(fit(&data[..50], &base), Err(Error::Training(_))));
        let frozen = TrainConfig { learning_rate: 0.0, patience: 1, ..base.clone() };
        let (m, hist) = fit_with_history(&data, &frozen, |_| {}).unwrap();
        assert_eq!(hist.len(), 2);
        assert_eq!(m.metadata.best_epoch, 1);
    }

    #[test]
    fn fit_deterministic_and_best_loss_monotone() {
        let data = toy_dataset(400);
        let cfg =
            TrainConfig { layer_dims: vec![4, 8, 2], max_epochs: 40, learning_rate: 1e-2, ..TrainConfig::default() };
        let (a, hist) = fit_with_history(&data, &cfg, |_| {}).unwrap();
        let b = fit(&data, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert!(hist.windows(2).all(|w| w[1].best_val_loss <= w[0].best_val_loss));
        assert!(hist.last().unwrap().val_accuracy > 0.6);
        let best = hist.iter().map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(a.metadata.best_val_loss, Some(best));
    }

    #[test]
    fn parallel_gradient_close_to_serial() {
        let data = toy_dataset(200);
        let m = NetworkModel::init(&[4, 8, 2], 2).unwrap();
        let idx: Vec<usize> = (0..128).collect();
        let (gs, ls) = batch_gradient(&m, &data, &idx, false);
        let (gp, lp) = batch_gradient(&m, &data, &idx, true);
        assert!((ls - lp).abs() < 1e-12);
        for (a, b) in gs.weights.iter().flatten().zip(gp.weights.iter().flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn save_load_bit_identical() {
        let m = NetworkModel::init(&DEFAULT_LAYER_DIMS, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = NetworkModel::load(&path).unwrap();
        let mut r = rng(1);
        for _ in 0..100 {
            let x = fv((0..160).map(|_| r.gen::<f64>() / 80.0).collect());
            assert_eq!(m.forward(&x).unwrap(), back.forward(&x).unwrap());
        }
    }

    #[test]
    fn corrupt_model_files() {
        let text = NetworkModel::init(&[4, 3, 2], 1).unwrap().to_json().unwrap();
        let truncated = &text[..text.len() / 2];
        assert!(matches!(NetworkModel::from_json(truncated), Err(Error::Format(_))));
        let bumped = text.replace("\"version\": 1", "\"version\": 7");
        let err = NetworkModel::from_json(&bumped).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
        assert!(err.to_string().contains("version 7"));
    }
}
