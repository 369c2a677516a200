//! Differentiable predicate classifier with explicit gradients.
//!
//! Two architectures are supported: a linear softmax layer and a single
//! `tanh` hidden layer followed by a softmax layer. Both output a
//! distribution over every predicate class including background.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::label_space::{Dataset, PredicateCatalog, Prediction, Scene, TripletInstance, BG};
use crate::metrics::{self, EvalReport};
use crate::rng::{domain, stream};

/// Floor applied to probabilities inside `log`.
pub const PROB_FLOOR: f64 = 1e-12;
/// Upper bound on inverse-frequency class weights.
pub const MAX_CLASS_WEIGHT: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Linear,
    /// One `tanh` hidden layer of the given width.
    Hidden(usize),
}

impl Architecture {
    pub fn tag(self) -> String {
        match self {
            Architecture::Linear => "linear".into(),
            Architecture::Hidden(h) => format!("mlp{h}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(Architecture::Linear);
        }
        s.strip_prefix("mlp")
            .and_then(|h| h.parse().ok())
            .filter(|&h: &usize| h > 0)
            .map(Architecture::Hidden)
            .ok_or_else(|| Error::config("arch", format!("expected `linear` or `mlp<width>`, got `{s}`")))
    }
}

/// Dense layer, row-major `rows x cols` weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Layer {
            rows,
            cols,
            w: vec![0.0; rows * cols],
            b: vec![0.0; rows],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.cols)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, x)| acc + w * x))
            .collect()
    }

    /// `grad += delta ⊗ input`, returns `Wᵀ delta`.
    fn backward(&self, grad: &mut Layer, delta: &[f64], input: &[f64]) -> Vec<f64> {
        let mut back = vec![0.0; self.cols];
        for (r, &d) in delta.iter().enumerate() {
            grad.b[r] += d;
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let grow = &mut grad.w[r * self.cols..(r + 1) * self.cols];
            for c in 0..self.cols {
                grow[c] += d * input[c];
                back[c] += d * row[c];
            }
        }
        back
    }
}

/// Classifier weights. Also used as the gradient record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn zeros(arch: Architecture, input_dim: usize, n_classes: usize) -> Self {
        let layers = match arch {
            Architecture::Linear => vec![Layer::zeros(n_classes, input_dim)],
            Architecture::Hidden(h) => vec![Layer::zeros(h, input_dim), Layer::zeros(n_classes, h)],
        };
        ModelParams { arch, layers }
    }

    /// Uniform(-s, s) weights with `s = scale / sqrt(fan_in)`, zero biases.
    pub fn init(arch: Architecture, input_dim: usize, n_classes: usize, scale: f64, seed: u64) -> Self {
        let mut p = Self::zeros(arch, input_dim, n_classes);
        let mut rng = stream(seed, domain::INIT, 0);
        for l in &mut p.layers {
            let s = scale / (l.cols as f64).sqrt();
            for w in &mut l.w {
                *w = rng.random_range(-s..=s);
            }
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            arch: self.arch,
            layers: self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.rows)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b).copied())
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut().chain(l.b.iter_mut()) {
                *v = it.next().expect("flat length matches");
            }
        }
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, other: &ModelParams, s: f64) {
        for (a, b) in self.values_mut().zip(other.flat()) {
            *a += s * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.values_mut() {
            *v *= s;
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).1
    }

    /// Logits plus the hidden activations when there is a hidden layer.
    pub(crate) fn forward_cached(&self, x: &[f64]) -> (Option<Vec<f64>>, Vec<f64>) {
        match self.layers.as_slice() {
            [out] => (None, out.apply(x)),
            [h, out] => {
                let a = tanh_all(h.apply(x));
                let z = out.apply(&a);
                (Some(a), z)
            }
            _ => unreachable!("one or two layers"),
        }
    }

    /// Adds `d(delta · logits)/dθ` at input `x` to `grad`.
    pub(crate) fn backprop(&self, x: &[f64], hidden: Option<&[f64]>, delta: &[f64], grad: &mut ModelParams) {
        match hidden {
            None => {
                self.layers[0].backward(&mut grad.layers[0], delta, x);
            }
            Some(a) => {
                let (g0, g1) = grad.layers.split_at_mut(1);
                let back = self.layers[1].backward(&mut g1[0], delta, a);
                let da: Vec<f64> = back.iter().zip(a).map(|(b, a)| b * (1.0 - a * a)).collect();
                self.layers[0].backward(&mut g0[0], &da, x);
            }
        }
    }

    /// Plain-text tensor dump; floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "pseudorel-params v1").unwrap();
        writeln!(s, "arch {}", self.arch.tag()).unwrap();
        for (i, l) in self.layers.iter().enumerate() {
            writeln!(s, "tensor w{i} {} {}", l.rows, l.cols).unwrap();
            for row in l.w.chunks_exact(l.cols) {
                writeln!(s, "{}", join_exp(row)).unwrap();
            }
            writeln!(s, "tensor b{i} {}", l.rows).unwrap();
            writeln!(s, "{}", join_exp(&l.b)).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |r: &str| Error::parse("params checkpoint", r.to_string());
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        if lines.next() != Some("pseudorel-params v1") {
            return Err(bad("missing header"));
        }
        let arch = lines
            .next()
            .and_then(|l| l.strip_prefix("arch "))
            .ok_or_else(|| bad("missing arch line"))?;
        let arch = Architecture::parse(arch)?;
        let mut layers = Vec::new();
        let parse_row = |line: Option<&str>, n: usize| -> Result<Vec<f64>> {
            let line = line.ok_or_else(|| bad("truncated tensor"))?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(&e.to_string()))?;
            if v.len() != n {
                return Err(bad("row length mismatch"));
            }
            Ok(v)
        };
        while let Some(head) = lines.next() {
            let parts: Vec<&str> = head.split_whitespace().collect();
            let (rows, cols) = match parts.as_slice() {
                ["tensor", _, r, c] => (
                    r.parse::<usize>().map_err(|_| bad("shape"))?,
                    c.parse::<usize>().map_err(|_| bad("shape"))?,
                ),
                _ => return Err(bad(&format!("unexpected line `{head}`"))),
            };
            let mut w = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                w.extend(parse_row(lines.next(), cols)?);
            }
            match lines.next().map(|l| l.split_whitespace().collect::<Vec<_>>()) {
                Some(p) if p.len() == 3 && p[0] == "tensor" && p[2].parse() == Ok(rows) => {}
                _ => return Err(bad("expected bias tensor")),
            }
            let b = parse_row(lines.next(), rows)?;
            layers.push(Layer { rows, cols, w, b });
        }
        let p = ModelParams { arch, layers };
        let expected = match arch {
            Architecture::Linear => 1,
            Architecture::Hidden(_) => 2,
        };
        if p.layers.len() != expected
            || p.layers.windows(2).any(|w| w[0].rows != w[1].cols)
            || matches!(arch, Architecture::Hidden(h) if p.layers[0].rows != h)
        {
            return Err(bad("layer shapes do not match architecture"));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_with_echo(path, &[])
    }

    /// Saves with leading `# key = value` lines, which loading skips.
    pub fn save_with_echo(&self, path: &Path, echo: &[(String, String)]) -> Result<()> {
        let mut s = String::new();
        for (k, v) in echo {
            writeln!(s, "# {k} = {v}").unwrap();
        }
        s.push_str(&self.to_text());
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn join_exp(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ")
}

fn tanh_all(mut v: Vec<f64>) -> Vec<f64> {
    for x in &mut v {
        *x = x.tanh();
    }
    v
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn forward(params: &ModelParams, features: &[f64]) -> Result<Prediction> {
    if features.len() != params.input_dim() {
        return Err(Error::Validation(format!(
            "feature dimension {} does not match model input {}",
            features.len(),
            params.input_dim()
        )));
    }
    Ok(Prediction::from_probs(softmax(&params.logits(features))))
}

/// Forward pass over every triplet of a set of scenes, in scene order.
pub fn predict_scenes(params: &ModelParams, scenes: &[Scene], exec: Exec) -> Vec<Vec<Prediction>> {
    exec.map(scenes, |s| {
        s.triplets
            .iter()
            .map(|t| Prediction::from_probs(softmax(&params.logits(&t.features))))
            .collect()
    })
}

/// One supervised example: features, target class and a loss multiplier.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub features: &'a [f64],
    pub target: usize,
    pub weight: f64,
}

/// Returns `-w log p_target` and accumulates its gradient into `grad`.
fn example_loss_grad(params: &ModelParams, ex: &Example, grad: &mut ModelParams) -> f64 {
    let (hidden, logits) = params.forward_cached(ex.features);
    let p = softmax(&logits);
    let pt = p[ex.target];
    if pt < PROB_FLOOR {
        // loss is clamped and flat here
        return -ex.weight * PROB_FLOOR.ln();
    }
    let mut delta = p;
    delta[ex.target] -= 1.0;
    for d in &mut delta {
        *d *= ex.weight;
    }
    params.backprop(ex.features, hidden.as_deref(), &delta, grad);
    -ex.weight * pt.ln()
}

/// Mean weighted cross-entropy over `examples` and its gradient. An empty
/// set contributes zero loss and zero gradient.
pub fn cross_entropy(params: &ModelParams, examples: &[Example], exec: Exec) -> (f64, ModelParams) {
    let zero = params.zeros_like();
    if examples.is_empty() {
        return (0.0, zero);
    }
    let (sum, mut grad) = exec.chunked_reduce(
        examples,
        (0.0, zero.clone()),
        |chunk| {
            let mut g = zero.clone();
            let mut loss = 0.0;
            for ex in chunk {
                loss += example_loss_grad(params, ex, &mut g);
            }
            (loss, g)
        },
        |(la, mut ga), (lb, gb)| {
            ga.add_scaled(&gb, 1.0);
            (la + lb, ga)
        },
    );
    let n = examples.len() as f64;
    grad.scale(1.0 / n);
    (sum / n, grad)
}

/// Weighted cross-entropy on annotated triplets, using their observed labels.
pub fn supervised_loss_grad(
    params: &ModelParams,
    labeled: &[&TripletInstance],
    class_weights: &[f64],
) -> Result<(f64, ModelParams)> {
    if class_weights.len() != params.n_classes() {
        return Err(Error::Validation(format!(
            "{} class weights for {} classes",
            class_weights.len(),
            params.n_classes()
        )));
    }
    let mut examples = Vec::with_capacity(labeled.len());
    for t in labeled {
        if t.observed_label == BG {
            return Err(Error::Validation("supervised loss given an unannotated triplet".into()));
        }
        if t.features.len() != params.input_dim() {
            return Err(Error::Validation("feature dimension mismatch".into()));
        }
        examples.push(Example {
            features: &t.features,
            target: t.observed_label,
            weight: class_weights[t.observed_label],
        });
    }
    Ok(cross_entropy(params, &examples, Exec::default()))
}

/// `params - lr * grads`; refuses non-finite gradients.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64) -> Result<ModelParams> {
    if params.layers.len() != grads.layers.len()
        || params
            .layers
            .iter()
            .zip(&grads.layers)
            .any(|(a, b)| a.rows != b.rows || a.cols != b.cols)
    {
        return Err(Error::Validation("gradient shape does not match parameters".into()));
    }
    if let Some((i, g)) = grads.flat().iter().enumerate().find(|(_, g)| !g.is_finite()) {
        return Err(Error::Numeric(format!("gradient entry {i} is {g}")));
    }
    let mut out = params.clone();
    out.add_scaled(grads, -lr);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reweight {
    None,
    InverseFrequency,
}

impl Reweight {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Reweight::None),
            "inverse-frequency" => Ok(Reweight::InverseFrequency),
            _ => Err(Error::config("reweight", format!("expected none|inverse-frequency, got `{s}`"))),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Reweight::None => "none",
            Reweight::InverseFrequency => "inverse-frequency",
        }
    }
}

/// Per-class loss weights, background first. Inverse-frequency weights are
/// `1/N_c` rescaled to mean 1 over foreground classes with a non-zero
/// count; zero-count classes and outliers are capped at
/// [`MAX_CLASS_WEIGHT`]. Background always weighs 1.
pub fn class_weights(catalog: &PredicateCatalog, scheme: Reweight) -> Vec<f64> {
    let mut w = vec![1.0; catalog.n_classes()];
    if scheme == Reweight::None {
        return w;
    }
    let raw: Vec<Option<f64>> = catalog
        .counts()
        .iter()
        .map(|&n| (n > 0).then(|| 1.0 / n as f64))
        .collect();
    let present: Vec<f64> = raw.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        1.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    for (c, r) in raw.iter().enumerate() {
        w[c + 1] = r.map_or(MAX_CLASS_WEIGHT, |r| (r / mean).min(MAX_CLASS_WEIGHT));
    }
    w
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub init_scale: f64,
    pub learning_rate: f64,
    pub n_epochs: usize,
    /// Scenes per batch.
    pub batch_size: usize,
    pub reweight: Reweight,
    pub oversample: bool,
    pub k_values: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Architecture::Linear,
            init_scale: 0.1,
            learning_rate: 0.5,
            n_epochs: 30,
            batch_size: 16,
            reweight: Reweight::None,
            oversample: false,
            k_values: metrics::DEFAULT_K.to_vec(),
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::config("k_values", "need at least one positive K"));
        }
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("arch".into(), self.arch.tag()),
            ("init_scale".into(), self.init_scale.to_string()),
            ("pretrain_learning_rate".into(), self.learning_rate.to_string()),
            ("pretrain_epochs".into(), self.n_epochs.to_string()),
            ("pretrain_batch_size".into(), self.batch_size.to_string()),
            ("reweight".into(), self.reweight.tag().into()),
            ("oversample".into(), self.oversample.to_string()),
            ("k_values".into(), metrics::format_k(&self.k_values)),
            ("pretrain_seed".into(), self.seed.to_string()),
        ]
    }

    /// Applies one override keyed as in [`TrainConfig::echo`]. Returns
    /// `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::textio::parse_field as num;
        match key {
            "arch" => self.arch = Architecture::parse(value.trim())?,
            "init_scale" => self.init_scale = num(key, value)?,
            "pretrain_learning_rate" => self.learning_rate = num(key, value)?,
            "pretrain_epochs" => self.n_epochs = num(key, value)?,
            "pretrain_batch_size" => self.batch_size = num(key, value)?,
            "reweight" => self.reweight = Reweight::parse(value.trim())?,
            "oversample" => self.oversample = num(key, value)?,
            "k_values" => self.k_values = metrics::parse_k(value)?,
            "pretrain_seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// Deterministic scene order for one epoch.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream(seed, domain::SHUFFLE, epoch);
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Class-balanced pool of annotated triplets used for oversampling.
#[derive(Clone, Debug)]
pub struct BalancedPool<'a> {
    by_class: Vec<Vec<&'a TripletInstance>>,
}

impl<'a> BalancedPool<'a> {
    pub fn new(train: &'a Dataset) -> Self {
        let mut by_class = vec![Vec::new(); train.catalog.n_classes()];
        for t in train.triplets().filter(|t| t.is_annotated()) {
            by_class[t.observed_label].push(t);
        }
        by_class.retain(|v| !v.is_empty());
        BalancedPool { by_class }
    }

    /// Draws `n` triplets: class uniformly, then instance uniformly.
    pub fn draw(&self, n: usize, seed: u64, counter: u64) -> Vec<&'a TripletInstance> {
        if self.by_class.is_empty() {
            return Vec::new();
        }
        let mut rng = stream(seed, domain::OVERSAMPLE, counter);
        (0..n)
            .map(|_| {
                let c = &self.by_class[rng.random_range(0..self.by_class.len())];
                c[rng.random_range(0..c.len())]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub val: Option<EvalReport>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PretrainLog {
    pub epochs: Vec<PretrainEpoch>,
}

impl PretrainLog {
    pub fn to_table(&self, echo: &[(String, String)], k_values: &[usize]) -> crate::textio::Table {
        let mut cols = vec!["epoch".to_string(), "loss".to_string()];
        cols.extend(metrics::report_columns(k_values));
        let mut t = crate::textio::Table::new(cols).with_echo(echo);
        for e in &self.epochs {
            let mut row = vec![e.epoch.to_string(), e.loss.to_string()];
            match &e.val {
                Some(r) => row.extend(r.summary_cells()),
                None => row.extend(std::iter::repeat_n(String::new(), 3 * k_values.len())),
            }
            t.push(row);
        }
        t
    }
}

/// Supervised training with every unannotated triplet treated as
/// background: the annotated term and the background term are averaged
/// separately and summed. Starts from `init` when given.
pub fn pretrain(
    train: &Dataset,
    val: Option<&Dataset>,
    config: &TrainConfig,
    init: Option<ModelParams>,
    exec: Exec,
) -> Result<(ModelParams, PretrainLog)> {
    config.validate()?;
    if train.n_triplets() == 0 {
        return Err(Error::Validation("training split has no triplets".into()));
    }
    let n_classes = train.catalog.n_classes();
    let mut params = init.unwrap_or_else(|| {
        ModelParams::init(config.arch, train.feature_dim(), n_classes, config.init_scale, config.seed)
    });
    let weights = class_weights(&train.catalog, config.reweight);
    let pool = config.oversample.then(|| BalancedPool::new(train));
    let mut log = PretrainLog::default();
    let mut iteration = 0u64;
    for epoch in 0..config.n_epochs {
        let order = epoch_order(config.seed, epoch as u64, train.scenes.len());
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            let scenes: Vec<&Scene> = batch.iter().map(|&i| &train.scenes[i]).collect();
            let (annotated, unannotated) = crate::selftrain::partition_batch(&scenes);
            let annotated = match &pool {
                Some(p) => p.draw(annotated.len(), config.seed, iteration),
                None => annotated,
            };
            let part = crate::selftrain::BatchPartition {
                annotated,
                pseudo_labeled: Vec::new(),
                background: unannotated,
            };
            let (loss, grads, _) = crate::selftrain::three_term_loss(&params, &part, &weights, 1.0, exec)?;
            params = sgd_step(&params, &grads, config.learning_rate)?;
            epoch_loss += loss;
            n_batches += 1;
            iteration += 1;
        }
        let val_report = match val {
            Some(v) => Some(metrics::evaluate(&params, v, &config.k_values, exec)?),
            None => None,
        };
        log.epochs.push(PretrainEpoch {
            epoch,
            loss: epoch_loss / n_batches.max(1) as f64,
            val: val_report,
        });
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label_space::build_catalog;

    fn catalog(counts: &[u64]) -> PredicateCatalog {
        build_catalog(
            &counts
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("c{i}"), c))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ModelParams::zeros(Architecture::Linear, 4, 3);
        let pred = forward(&p, &[1.0, -2.0, 0.5, 3.0]).unwrap();
        for q in pred.probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_softmax() {
        let p = softmax(&[0.0, 2f64.ln(), 4f64.ln()]);
        for (a, b) in p.iter().zip([1.0 / 7.0, 2.0 / 7.0, 4.0 / 7.0]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_shift_invariance() {
        let z = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = z.iter().map(|x| x + 17.25).collect();
        for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn forward_checks_dimension() {
        let p = ModelParams::zeros(Architecture::Hidden(3), 4, 3);
        assert!(forward(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn cross_entropy_hand_values() {
        // a zero linear model over 2 classes gives p = 0.5 everywhere
        let p = ModelParams::zeros(Architecture::Linear, 1, 2);
        let ex = [Example { features: &[1.0], target: 1, weight: 1.0 }];
        let (loss, _) = cross_entropy(&p, &ex, Exec::Sequential);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);

        let mut sharp = ModelParams::zeros(Architecture::Linear, 1, 2);
        sharp.layers[0].b = vec![-800.0, 800.0];
        let (loss, g) = cross_entropy(&sharp, &ex, Exec::Sequential);
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn empty_batch_is_zero() {
        let p = ModelParams::init(Architecture::Linear, 3, 4, 1.0, 1);
        let (loss, g) = cross_entropy(&p, &[], Exec::Sequential);
        assert_eq!(loss, 0.0);
        assert!(g.flat().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sgd_examples() {
        let mut p = ModelParams::zeros(Architecture::Linear, 1, 1);
        p.layers[0].w = vec![1.0];
        let mut g = p.zeros_like();
        g.layers[0].w = vec![2.0];
        assert_eq!(sgd_step(&p, &g, 0.0).unwrap(), p);
        assert_eq!(sgd_step(&p, &g, 0.1).unwrap().layers[0].w, vec![0.8]);
        let half = sgd_step(&sgd_step(&p, &g, 0.05).unwrap(), &g, 0.05).unwrap();
        assert!((half.layers[0].w[0] - 0.8).abs() < 1e-15);
        g.layers[0].b = vec![f64::NAN];
        assert!(matches!(sgd_step(&p, &g, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn weights_none_and_symmetric() {
        assert_eq!(class_weights(&catalog(&[50, 40, 10]), Reweight::None), vec![1.0; 4]);
        let w = class_weights(&catalog(&[10, 10]), Reweight::InverseFrequency);
        assert_eq!(w, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn weights_inverse_frequency_hand_values() {
        // raw (1/50, 1/40, 1/10), mean 0.0483333.., divided through
        let w = class_weights(&catalog(&[50, 40, 10]), Reweight::InverseFrequency);
        let mean = (0.02 + 0.025 + 0.1) / 3.0;
        let want = [1.0, 0.02 / mean, 0.025 / mean, 0.1 / mean];
        for (a, b) in w.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        let fg_mean: f64 = w[1..].iter().sum::<f64>() / 3.0;
        assert!((fg_mean - 1.0).abs() < 1e-12);
        // proportional to N_1 / N_c
        assert!((w[3] / w[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn weights_zero_count_capped() {
        let w = class_weights(&catalog(&[1000, 1, 0]), Reweight::InverseFrequency);
        assert_eq!(w[3], MAX_CLASS_WEIGHT);
        assert!(w.iter().all(|&x| x <= MAX_CLASS_WEIGHT));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        for arch in [Architecture::Linear, Architecture::Hidden(5)] {
            let mut p = ModelParams::init(arch, 3, 4, 1.0, 42);
            p.layers[0].w[0] = 1e-300;
            p.layers[0].b[1] = -0.1 + 0.2;
            let back = ModelParams::from_text(&p.to_text()).unwrap();
            let bits = |m: &ModelParams| m.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&back), bits(&p));
            assert_eq!(back.arch, arch);
        }
        assert!(ModelParams::from_text("garbage").is_err());
    }

    #[test]
    fn arch_tags() {
        assert_eq!(Architecture::parse("linear").unwrap(), Architecture::Linear);
        assert_eq!(Architecture::parse("mlp32").unwrap(), Architecture::Hidden(32));
        assert!(Architecture::parse("mlp0").is_err());
        assert!(Architecture::parse("cnn").is_err());
    }

    #[test]
    fn echo_keys_round_trip_through_set() {
        let mut src = TrainConfig::default();
        src.arch = Architecture::Hidden(8);
        src.learning_rate = 0.25;
        src.reweight = Reweight::InverseFrequency;
        src.k_values = vec![3, 5];
        let mut dst = TrainConfig::default();
        for (k, v) in src.echo() {
            assert!(dst.set(&k, &v).unwrap(), "{k}");
        }
        assert_eq!(dst, src);
        assert!(!dst.set("nope", "1").unwrap());
        assert!(dst.set("pretrain_epochs", "x").is_err());
    }

    #[test]
    fn echo_lines_are_skipped_on_load() {
        let p = ModelParams::init(Architecture::Hidden(3), 4, 3, 0.5, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.params");
        p.save_with_echo(&path, &[("seed".into(), "1".into())]).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("# seed = 1\n"));
        assert_eq!(ModelParams::load(&path).unwrap(), p);
    }

}
