//! Self-training loop: unannotated triplets whose prediction clears the
//! class threshold are trained towards their predicted class instead of
//! background.
//!
//! Every iteration takes a batch of scenes, assigns pseudo-labels with the
//! thresholds of the previous iteration, computes the three-term loss,
//! updates the thresholds from the same forward pass and takes one SGD step.
//! All randomness is keyed by `(seed, iteration)`, so a saved state resumes
//! exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{
    class_weights, cross_entropy, epoch_order, predict_scenes, sgd_step, BalancedPool, Example, ModelParams,
    Reweight,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gsl::{self, GslParams};
use crate::label_space::{Dataset, PredicateCatalog, Prediction, Scene, TripletInstance, BG};
use crate::metrics::{self, Assignment, EvalReport};
use crate::textio::Table;
use crate::threshold::{
    class_pools, constant_threshold, dash_adaptive_update, fixed_class_threshold, foreground_confidences,
    freq_weighted_threshold, momentum_coefficients, uniform_coefficients, ThresholdPolicy, ThresholdState,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    Catm,
    /// Adaptive thresholds with one shared momentum for every class.
    CatmUniform,
    Constant,
    FixedClass,
    FreqWeighted,
    Dash,
    Never,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Catm,
        PolicyKind::CatmUniform,
        PolicyKind::Constant,
        PolicyKind::FixedClass,
        PolicyKind::FreqWeighted,
        PolicyKind::Dash,
        PolicyKind::Never,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PolicyKind::Catm => "catm",
            PolicyKind::CatmUniform => "catm-uniform",
            PolicyKind::Constant => "constant",
            PolicyKind::FixedClass => "fixed-class",
            PolicyKind::FreqWeighted => "freq-weighted",
            PolicyKind::Dash => "dash",
            PolicyKind::Never => "never",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.tag() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|p| p.tag()).collect();
                Error::config("policy", format!("unknown policy `{s}`, expected one of {}", names.join("|")))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainConfig {
    pub policy: PolicyKind,
    pub alpha_inc: f64,
    pub alpha_dec: f64,
    pub initial_threshold: f64,
    pub strict_mean: bool,
    pub uniform_momentum: f64,
    /// Top fraction of validation confidences used by the static baselines.
    pub quantile: f64,
    /// Recompute fixed-class thresholds from validation every this many
    /// iterations; 0 keeps them fixed.
    pub refresh_interval: u64,
    pub freq_mix: f64,
    pub dash_growth: f64,
    pub dash_interval: u64,
    /// Pseudo-label loss weight; `None` picks 1.0, or 0.1 with reweighting.
    pub beta: Option<f64>,
    pub per_class_per_scene_cap: usize,
    pub max_iterations: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub reweight: Reweight,
    pub oversample: bool,
    pub use_gsl: bool,
    pub gsl_hidden: usize,
    pub gsl_temperature: f64,
    pub focal_gamma: f64,
    pub gsl_positive_only: bool,
    pub gsl_learning_rate: f64,
    pub k_values: Vec<usize>,
    pub seed: u64,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            policy: PolicyKind::Catm,
            alpha_inc: 0.4,
            alpha_dec: 0.4,
            initial_threshold: 0.0,
            strict_mean: false,
            uniform_momentum: 0.5,
            quantile: 0.01,
            refresh_interval: 0,
            freq_mix: 0.5,
            dash_growth: 1.05,
            dash_interval: 100,
            beta: None,
            per_class_per_scene_cap: 3,
            max_iterations: 1000,
            batch_size: 16,
            learning_rate: 0.1,
            reweight: Reweight::None,
            oversample: false,
            use_gsl: false,
            gsl_hidden: 16,
            gsl_temperature: 0.5,
            focal_gamma: 2.0,
            gsl_positive_only: false,
            gsl_learning_rate: 0.5,
            k_values: metrics::DEFAULT_K.to_vec(),
            seed: 11,
        }
    }
}

impl SelfTrainConfig {
    pub fn effective_beta(&self) -> f64 {
        self.beta.unwrap_or(match self.reweight {
            Reweight::None => 1.0,
            Reweight::InverseFrequency => 0.1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |f: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::config(f, format!("must lie in [0, 1], got {x}")))
            }
        };
        unit("alpha_inc", self.alpha_inc)?;
        unit("alpha_dec", self.alpha_dec)?;
        unit("initial_threshold", self.initial_threshold)?;
        unit("uniform_momentum", self.uniform_momentum)?;
        unit("freq_mix", self.freq_mix)?;
        if !(self.quantile > 0.0 && self.quantile <= 1.0) {
            return Err(Error::config("quantile", "must lie in (0, 1]"));
        }
        if self.policy == PolicyKind::Dash && !(self.dash_growth > 1.0) {
            return Err(Error::config("dash_growth", "must be > 1"));
        }
        if self.dash_interval == 0 {
            return Err(Error::config("dash_interval", "must be positive"));
        }
        if !(self.effective_beta() >= 0.0 && self.effective_beta().is_finite()) {
            return Err(Error::config("beta", "must be non-negative"));
        }
        if self.per_class_per_scene_cap == 0 {
            return Err(Error::config("per_class_per_scene_cap", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if self.use_gsl {
            if self.gsl_hidden == 0 {
                return Err(Error::config("gsl_hidden", "must be positive"));
            }
            if !(self.gsl_temperature > 0.0) {
                return Err(Error::config("gsl_temperature", "must be positive"));
            }
            if !(self.focal_gamma >= 0.0) {
                return Err(Error::config("focal_gamma", "must be non-negative"));
            }
            if !(self.gsl_learning_rate > 0.0) {
                return Err(Error::config("gsl_learning_rate", "must be positive"));
            }
        }
        if self.k_values.is_empty() || self.k_values.contains(&0) {
            return Err(Error::config("k_values", "need positive K values"));
        }
        Ok(())
    }

    pub fn echo(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("policy".into(), self.policy.tag().into()),
            ("alpha_inc".into(), self.alpha_inc.to_string()),
            ("alpha_dec".into(), self.alpha_dec.to_string()),
            ("initial_threshold".into(), self.initial_threshold.to_string()),
            ("strict_mean".into(), self.strict_mean.to_string()),
            ("uniform_momentum".into(), self.uniform_momentum.to_string()),
            ("quantile".into(), self.quantile.to_string()),
            ("refresh_interval".into(), self.refresh_interval.to_string()),
            ("freq_mix".into(), self.freq_mix.to_string()),
            ("dash_growth".into(), self.dash_growth.to_string()),
            ("dash_interval".into(), self.dash_interval.to_string()),
            ("beta".into(), self.effective_beta().to_string()),
            ("per_class_per_scene_cap".into(), self.per_class_per_scene_cap.to_string()),
            ("max_iterations".into(), self.max_iterations.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("learning_rate".into(), self.learning_rate.to_string()),
            ("reweight".into(), self.reweight.tag().into()),
            ("oversample".into(), self.oversample.to_string()),
            ("use_gsl".into(), self.use_gsl.to_string()),
        ];
        if self.use_gsl {
            e.extend([
                ("gsl_hidden".into(), self.gsl_hidden.to_string()),
                ("gsl_temperature".into(), self.gsl_temperature.to_string()),
                ("focal_gamma".into(), self.focal_gamma.to_string()),
                ("gsl_positive_only".into(), self.gsl_positive_only.to_string()),
                ("gsl_learning_rate".into(), self.gsl_learning_rate.to_string()),
            ]);
        }
        e.push(("k_values".into(), metrics::format_k(&self.k_values)));
        e.push(("selftrain_seed".into(), self.seed.to_string()));
        e
    }

    /// Applies one override keyed as in [`SelfTrainConfig::echo`]. Returns
    /// `Ok(false)` for keys this config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        use crate::textio::parse_field as num;
        match key {
            "policy" => self.policy = PolicyKind::parse(value.trim())?,
            "alpha_inc" => self.alpha_inc = num(key, value)?,
            "alpha_dec" => self.alpha_dec = num(key, value)?,
            "initial_threshold" => self.initial_threshold = num(key, value)?,
            "strict_mean" => self.strict_mean = num(key, value)?,
            "uniform_momentum" => self.uniform_momentum = num(key, value)?,
            "quantile" => self.quantile = num(key, value)?,
            "refresh_interval" => self.refresh_interval = num(key, value)?,
            "freq_mix" => self.freq_mix = num(key, value)?,
            "dash_growth" => self.dash_growth = num(key, value)?,
            "dash_interval" => self.dash_interval = num(key, value)?,
            "beta" => {
                self.beta = match value.trim() {
                    "auto" => None,
                    v => Some(num(key, v)?),
                }
            }
            "per_class_per_scene_cap" => self.per_class_per_scene_cap = num(key, value)?,
            "max_iterations" => self.max_iterations = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "reweight" => self.reweight = Reweight::parse(value.trim())?,
            "oversample" => self.oversample = num(key, value)?,
            "use_gsl" => self.use_gsl = num(key, value)?,
            "gsl_hidden" => self.gsl_hidden = num(key, value)?,
            "gsl_temperature" => self.gsl_temperature = num(key, value)?,
            "focal_gamma" => self.focal_gamma = num(key, value)?,
            "gsl_positive_only" => self.gsl_positive_only = num(key, value)?,
            "gsl_learning_rate" => self.gsl_learning_rate = num(key, value)?,
            "k_values" => self.k_values = metrics::parse_k(value)?,
            "selftrain_seed" => self.seed = num(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BatchPartition<'a> {
    pub annotated: Vec<&'a TripletInstance>,
    /// Triplet and assigned foreground class.
    pub pseudo_labeled: Vec<(&'a TripletInstance, usize)>,
    pub background: Vec<&'a TripletInstance>,
}

/// Annotated and unannotated triplets of a batch, in scene order.
pub fn partition_batch<'a>(scenes: &[&'a Scene]) -> (Vec<&'a TripletInstance>, Vec<&'a TripletInstance>) {
    scenes
        .iter()
        .flat_map(|s| s.triplets.iter())
        .partition(|t| t.is_annotated())
}

/// Chooses pseudo-labels for `unannotated`, given their predictions and
/// optional edge gates. Returns the accepted `(index into unannotated,
/// class)` pairs in input order. Within one scene at most `cap` triplets per
/// class are kept, highest confidence first, ties to the earlier triplet.
pub fn assign_pseudo_labels(
    unannotated: &[&TripletInstance],
    predictions: &[Prediction],
    policy: &ThresholdPolicy,
    cap: usize,
    gates: Option<&[bool]>,
) -> Vec<(usize, usize)> {
    let mut groups: BTreeMap<(u64, usize), Vec<usize>> = BTreeMap::new();
    for (i, (t, p)) in unannotated.iter().zip(predictions).enumerate() {
        let Some(c) = crate::threshold::decide(policy, p) else {
            continue;
        };
        if gates.is_some_and(|g| !g[i]) {
            continue;
        }
        groups.entry((t.scene_id, c)).or_default().push(i);
    }
    let mut accepted = Vec::new();
    for ((_, c), mut idx) in groups {
        idx.sort_by(|&a, &b| predictions[b].confidence.total_cmp(&predictions[a].confidence).then(a.cmp(&b)));
        accepted.extend(idx.into_iter().take(cap).map(|i| (i, c)));
    }
    accepted.sort_unstable();
    accepted
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub annotated: f64,
    pub background: f64,
    pub pseudo: f64,
    pub beta: f64,
    pub total: f64,
}

/// Mean annotated cross-entropy + mean background cross-entropy + `beta` x
/// mean pseudo-label cross-entropy. Class weights apply to the annotated and
/// pseudo-label terms.
pub fn three_term_loss(
    params: &ModelParams,
    partition: &BatchPartition,
    class_weights: &[f64],
    beta: f64,
    exec: Exec,
) -> Result<(f64, ModelParams, LossBreakdown)> {
    if class_weights.len() != params.n_classes() {
        return Err(Error::Validation("class weight vector does not match the model".into()));
    }
    let annotated: Vec<Example> = partition
        .annotated
        .iter()
        .map(|t| Example {
            features: &t.features,
            target: t.observed_label,
            weight: class_weights[t.observed_label],
        })
        .collect();
    let background: Vec<Example> = partition
        .background
        .iter()
        .map(|t| Example {
            features: &t.features,
            target: BG,
            weight: class_weights[BG],
        })
        .collect();
    let pseudo: Vec<Example> = partition
        .pseudo_labeled
        .iter()
        .map(|&(t, c)| Example {
            features: &t.features,
            target: c,
            weight: class_weights[c],
        })
        .collect();
    for ex in annotated.iter().chain(&background).chain(&pseudo) {
        if ex.features.len() != params.input_dim() {
            return Err(Error::Validation("feature dimension mismatch".into()));
        }
    }
    let (l1, mut grads) = cross_entropy(params, &annotated, exec);
    let (l2, g2) = cross_entropy(params, &background, exec);
    grads.add_scaled(&g2, 1.0);
    let (l3, g3) = cross_entropy(params, &pseudo, exec);
    if !pseudo.is_empty() {
        grads.add_scaled(&g3, beta);
    }
    let total = l1 + l2 + beta * l3;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("loss is {total}")));
    }
    let breakdown = LossBreakdown {
        annotated: l1,
        background: l2,
        pseudo: l3,
        beta,
        total,
    };
    Ok((total, grads, breakdown))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub epoch: u64,
    pub n_annotated: usize,
    pub n_pseudo: usize,
    pub n_background: usize,
    pub loss: LossBreakdown,
    pub gsl_loss: Option<f64>,
    /// Thresholds after this iteration's update.
    pub tau: Vec<f64>,
    /// Cumulative accepted pseudo-labels per foreground class.
    pub cumulative: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub iteration: u64,
    pub report: EvalReport,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn cumulative(&self, n_fg: usize) -> Vec<u64> {
        self.iterations.last().map_or(vec![0; n_fg], |r| r.cumulative.clone())
    }

    pub fn iteration_table(&self, catalog: &PredicateCatalog, echo: &[(String, String)]) -> Table {
        let mut cols: Vec<String> = [
            "iteration",
            "epoch",
            "n_annotated",
            "n_pseudo",
            "n_background",
            "loss_annotated",
            "loss_background",
            "loss_pseudo",
            "loss_total",
            "loss_gsl",
        ]
        .map(String::from)
        .to_vec();
        let names = &catalog.names()[1..];
        cols.extend(names.iter().map(|n| format!("tau_{n}")));
        cols.extend(names.iter().map(|n| format!("count_{n}")));
        let mut t = Table::new(cols).with_echo(echo);
        for r in &self.iterations {
            let mut row = vec![
                r.iteration.to_string(),
                r.epoch.to_string(),
                r.n_annotated.to_string(),
                r.n_pseudo.to_string(),
                r.n_background.to_string(),
                r.loss.annotated.to_string(),
                r.loss.background.to_string(),
                r.loss.pseudo.to_string(),
                r.loss.total.to_string(),
                r.gsl_loss.map_or(String::new(), |x| x.to_string()),
            ];
            row.extend(r.tau.iter().map(|x| x.to_string()));
            row.extend(r.cumulative.iter().map(|x| x.to_string()));
            t.push(row);
        }
        t
    }

    pub fn epoch_table(&self, k_values: &[usize], echo: &[(String, String)]) -> Table {
        let mut cols = vec!["epoch".to_string(), "iteration".to_string()];
        cols.extend(metrics::report_columns(k_values));
        for k in k_values {
            cols.extend(metrics::GROUP_NAMES.iter().map(|g| format!("{g}-mR@{k}")));
        }
        let mut t = Table::new(cols).with_echo(echo);
        for e in &self.epochs {
            let mut row = vec![e.epoch.to_string(), e.iteration.to_string()];
            row.extend(e.report.summary_cells());
            for g in &e.report.groups {
                row.extend(g.iter().map(|x| x.map_or(String::new(), |v| v.to_string())));
            }
            t.push(row);
        }
        t
    }

    /// Threshold trajectory: iteration and one column per class.
    pub fn threshold_table(&self, catalog: &PredicateCatalog, echo: &[(String, String)]) -> Table {
        let mut tr = crate::threshold::Trajectory::default();
        for r in &self.iterations {
            tr.push(r.iteration, r.tau.clone());
        }
        tr.to_table(catalog, echo)
    }
}

/// Everything needed to continue a run at iteration granularity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainState {
    pub iteration: u64,
    pub params: ModelParams,
    pub gsl: Option<GslParams>,
    pub policy: ThresholdPolicy,
    pub log: TrainLog,
    pub assignments: Vec<Assignment>,
}

impl SelfTrainState {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn validation_confidences(params: &ModelParams, val: Option<&Dataset>, kind: PolicyKind) -> Result<Vec<Prediction>> {
    let val = val.ok_or_else(|| Error::config("policy", format!("`{}` needs a validation split", kind.tag())))?;
    Ok(predict_scenes(params, &val.scenes, Exec::default())
        .into_iter()
        .flatten()
        .collect())
}

fn fixed_from_val(params: &ModelParams, val: Option<&Dataset>, config: &SelfTrainConfig, n_fg: usize) -> Result<ThresholdPolicy> {
    let preds = validation_confidences(params, val, config.policy)?;
    fixed_class_threshold(&class_pools(&foreground_confidences(&preds), n_fg), config.quantile)
}

/// Builds the threshold policy from the starting model.
pub fn initial_policy(
    params: &ModelParams,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &SelfTrainConfig,
) -> Result<ThresholdPolicy> {
    let catalog = &train.catalog;
    let n_fg = catalog.n_fg();
    Ok(match config.policy {
        PolicyKind::Catm => {
            let mut s = ThresholdState::new(
                momentum_coefficients(catalog, config.alpha_inc, config.alpha_dec)?,
                config.initial_threshold,
            )?;
            s.strict_mean = config.strict_mean;
            ThresholdPolicy::Adaptive(s)
        }
        PolicyKind::CatmUniform => {
            let mut s = ThresholdState::new(
                uniform_coefficients(n_fg, config.uniform_momentum)?,
                config.initial_threshold,
            )?;
            s.strict_mean = config.strict_mean;
            ThresholdPolicy::Adaptive(s)
        }
        PolicyKind::Constant => {
            let preds = validation_confidences(params, val, config.policy)?;
            let pool: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
            constant_threshold(&pool, config.quantile, n_fg)?
        }
        PolicyKind::FixedClass => fixed_from_val(params, val, config, n_fg)?,
        PolicyKind::FreqWeighted => {
            freq_weighted_threshold(&fixed_from_val(params, val, config, n_fg)?, catalog, config.freq_mix)?
        }
        PolicyKind::Dash => {
            let base = fixed_from_val(params, val, config, n_fg)?.thresholds();
            let mut p = dash_adaptive_update(&base, config.dash_growth, 0)?;
            if let ThresholdPolicy::Dash { interval, .. } = &mut p {
                *interval = config.dash_interval;
            }
            p
        }
        PolicyKind::Never => ThresholdPolicy::Never { n_fg },
    })
}

pub fn init_state(
    pretrained: &ModelParams,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &SelfTrainConfig,
) -> Result<SelfTrainState> {
    config.validate()?;
    if pretrained.n_classes() != train.catalog.n_classes() || pretrained.input_dim() != train.feature_dim() {
        return Err(Error::Validation("checkpoint does not match the training split".into()));
    }
    if train.scenes.is_empty() {
        return Err(Error::Validation("training split has no scenes".into()));
    }
    let gsl = config.use_gsl.then(|| {
        let d = train.scenes[0].entities[0].features.len();
        let mut g = GslParams::init(d, config.gsl_hidden, 1.0, config.seed);
        g.temperature = config.gsl_temperature;
        g.gamma = config.focal_gamma;
        g.positive_only = config.gsl_positive_only;
        g
    });
    Ok(SelfTrainState {
        iteration: 0,
        params: pretrained.clone(),
        gsl,
        policy: initial_policy(pretrained, train, val, config)?,
        log: TrainLog::default(),
        assignments: Vec::new(),
    })
}

fn batches_per_epoch(n_scenes: usize, batch: usize) -> u64 {
    n_scenes.div_ceil(batch) as u64
}

/// Runs one iteration, advancing `state` in place.
pub fn step(
    state: &mut SelfTrainState,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &SelfTrainConfig,
    exec: Exec,
) -> Result<()> {
    let n_fg = train.catalog.n_fg();
    let per_epoch = batches_per_epoch(train.scenes.len(), config.batch_size);
    let t = state.iteration;
    let epoch = t / per_epoch;
    let b = (t % per_epoch) as usize;
    let order = epoch_order(config.seed, epoch, train.scenes.len());
    let lo = b * config.batch_size;
    let hi = (lo + config.batch_size).min(order.len());
    let scenes: Vec<&Scene> = order[lo..hi].iter().map(|&i| &train.scenes[i]).collect();

    let (annotated, unannotated) = partition_batch(&scenes);
    let preds: Vec<Prediction> = exec.map(&unannotated, |tr| {
        Prediction::from_probs(crate::classifier::softmax(&state.params.logits(&tr.features)))
    });

    let mut gates = None;
    let mut gsl_loss = None;
    if let Some(g) = &state.gsl {
        let mut keep = Vec::with_capacity(unannotated.len());
        let mut edges = Vec::new();
        for s in &scenes {
            let samples = gsl::sample_scene(g, s, config.seed, t)?;
            for (tr, e) in s.triplets.iter().zip(&samples) {
                if !tr.is_annotated() {
                    keep.push(gsl::gate(e));
                }
            }
            edges.extend(gsl::scene_edges(s));
        }
        let (loss, grads) = gsl::focal_loss_grad(g, &edges, exec)?;
        gsl_loss = Some(loss);
        gates = Some(keep);
        let mut next = g.clone();
        next.net = sgd_step(&g.net, &grads, config.gsl_learning_rate)?;
        state.gsl = Some(next);
    }

    let accepted = assign_pseudo_labels(
        &unannotated,
        &preds,
        &state.policy,
        config.per_class_per_scene_cap,
        gates.as_deref(),
    );
    let mut is_pseudo = vec![false; unannotated.len()];
    let mut pseudo_labeled = Vec::with_capacity(accepted.len());
    let mut cumulative = state.log.cumulative(n_fg);
    for &(i, c) in &accepted {
        is_pseudo[i] = true;
        let tr = unannotated[i];
        pseudo_labeled.push((tr, c));
        cumulative[c - 1] += 1;
        let scene = scenes.iter().find(|s| s.scene_id == tr.scene_id).expect("triplet comes from the batch");
        let position = scene
            .triplets
            .iter()
            .position(|x| std::ptr::eq(x, tr))
            .expect("triplet belongs to its scene");
        state.assignments.push(Assignment {
            iteration: t + 1,
            scene_id: tr.scene_id,
            triplet: position,
            class: c,
            confidence: preds[i].confidence,
        });
    }
    let background: Vec<&TripletInstance> = unannotated
        .iter()
        .zip(&is_pseudo)
        .filter(|(_, &p)| !p)
        .map(|(t, _)| *t)
        .collect();
    let annotated = if config.oversample {
        BalancedPool::new(train).draw(annotated.len(), config.seed, t)
    } else {
        annotated
    };
    let partition = BatchPartition {
        annotated,
        pseudo_labeled,
        background,
    };
    let weights = class_weights(&train.catalog, config.reweight);
    let (_, grads, breakdown) = three_term_loss(&state.params, &partition, &weights, config.effective_beta(), exec)?;

    state.policy = state.policy.update(&foreground_confidences(&preds))?;
    if config.policy == PolicyKind::FixedClass && config.refresh_interval > 0 && (t + 1) % config.refresh_interval == 0 {
        state.policy = fixed_from_val(&state.params, val, config, n_fg)?;
    }
    state.params = sgd_step(&state.params, &grads, config.learning_rate)?;
    state.iteration = t + 1;

    state.log.iterations.push(IterationRecord {
        iteration: t + 1,
        epoch,
        n_annotated: partition.annotated.len(),
        n_pseudo: partition.pseudo_labeled.len(),
        n_background: partition.background.len(),
        loss: breakdown,
        gsl_loss,
        tau: state.policy.thresholds(),
        cumulative,
    });

    let epoch_done = b as u64 + 1 == per_epoch;
    if let Some(v) = val {
        if epoch_done || state.iteration == config.max_iterations {
            state.log.epochs.push(EpochRecord {
                epoch,
                iteration: state.iteration,
                report: metrics::evaluate(&state.params, v, &config.k_values, exec)?,
            });
        }
    }
    Ok(())
}

/// Continues `state` until `until` iterations (capped at the configured
/// maximum) have been run.
pub fn run_until(
    state: &mut SelfTrainState,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &SelfTrainConfig,
    until: u64,
    exec: Exec,
) -> Result<()> {
    config.validate()?;
    while state.iteration < until.min(config.max_iterations) {
        step(state, train, val, config, exec)?;
    }
    Ok(())
}

/// Full self-training run from a pretrained model.
pub fn run(
    pretrained: &ModelParams,
    train: &Dataset,
    val: Option<&Dataset>,
    config: &SelfTrainConfig,
    exec: Exec,
) -> Result<SelfTrainState> {
    let mut state = init_state(pretrained, train, val, config)?;
    run_until(&mut state, train, val, config, config.max_iterations, exec)?;
    Ok(state)
}
