//! Edge relevance scoring for candidate entity pairs.
//!
//! A small network scores each ordered pair `[x_s; x_o]`. Scores are turned
//! into hard keep/drop decisions by Gumbel-perturbed sampling; the relaxed
//! sample carries the straight-through gradient. Only pairs with a hard
//! sample of 1 remain pseudo-label candidates.

use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::label_space::Scene;
use crate::rng::{domain, stream};
use crate::textio::Table;

/// Scores are kept inside `[SCORE_EPS, 1 - SCORE_EPS]` before any `log`.
pub const SCORE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GslParams {
    /// `2d -> hidden -> 1` network.
    pub net: ModelParams,
    pub temperature: f64,
    pub gamma: f64,
    /// Positive focal term only, no loss on unrelated pairs.
    pub positive_only: bool,
}

impl GslParams {
    pub fn init(entity_dim: usize, hidden: usize, scale: f64, seed: u64) -> Self {
        let mut net = ModelParams::init(Architecture::Hidden(hidden), 2 * entity_dim, 1, scale, seed);
        // decorrelate from classifier init under the same seed
        let mut rng = stream(seed, domain::GSL_INIT, 0);
        for l in &mut net.layers {
            let s = scale / (l.cols as f64).sqrt();
            for w in &mut l.w {
                *w = rng.random_range(-s..=s);
            }
        }
        GslParams {
            net,
            temperature: 0.5,
            gamma: 2.0,
            positive_only: false,
        }
    }

    pub fn entity_dim(&self) -> usize {
        self.net.input_dim() / 2
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config("gsl_temperature", "must be positive"));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("focal_gamma", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn concat(xs: &[f64], xo: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(xs.len() + xo.len());
    v.extend_from_slice(xs);
    v.extend_from_slice(xo);
    v
}

fn check_dims(params: &GslParams, xs: &[f64], xo: &[f64]) -> Result<()> {
    let d = params.entity_dim();
    if xs.len() != d || xo.len() != d {
        return Err(Error::Validation(format!(
            "entity features of length {}/{} for a scorer expecting {d}",
            xs.len(),
            xo.len()
        )));
    }
    Ok(())
}

pub fn edge_score(params: &GslParams, xs: &[f64], xo: &[f64]) -> Result<f64> {
    check_dims(params, xs, xo)?;
    Ok(sigmoid(params.net.logits(&concat(xs, xo))[0]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeSample {
    pub score: f64,
    pub relaxed: f64,
    pub hard: bool,
    pub noise: f64,
}

impl EdgeSample {
    /// Straight-through gradient: `d hard / d score := d relaxed / d score`.
    pub fn grad_wrt_score(&self, temperature: f64) -> f64 {
        let s = self.score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
        self.relaxed * (1.0 - self.relaxed) / (temperature * s)
    }
}

/// Deterministic sample from a given Gumbel variate, used for replay.
pub fn sample_with_noise(score: f64, temperature: f64, noise: f64) -> Result<EdgeSample> {
    if !(temperature > 0.0) {
        return Err(Error::config("gsl_temperature", "must be positive"));
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(Error::Validation(format!("edge score {score} outside [0, 1]")));
    }
    let s = score.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    let relaxed = sigmoid((s.ln() + noise) / temperature);
    Ok(EdgeSample {
        score,
        relaxed,
        hard: relaxed > 0.5,
        noise,
    })
}

pub fn gumbel_noise<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    -(-u.ln()).ln()
}

pub fn gumbel_sample<R: Rng>(score: f64, temperature: f64, rng: &mut R) -> Result<EdgeSample> {
    sample_with_noise(score, temperature, gumbel_noise(rng))
}

pub fn gate(sample: &EdgeSample) -> bool {
    sample.hard
}

/// Focal loss of one score against a 0/1 label and its derivative in `s`.
pub fn focal_term(s: f64, y: bool, gamma: f64, positive_only: bool) -> (f64, f64) {
    let s = s.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
    if y {
        let m = (1.0 - s).powf(gamma);
        let dm = if gamma == 0.0 { 0.0 } else { -gamma * (1.0 - s).powf(gamma - 1.0) };
        (-m * s.ln(), -(dm * s.ln() + m / s))
    } else if positive_only {
        (0.0, 0.0)
    } else {
        let m = s.powf(gamma);
        let dm = if gamma == 0.0 { 0.0 } else { gamma * s.powf(gamma - 1.0) };
        let l1 = (1.0 - s).ln();
        (-m * l1, -(dm * l1 - m / (1.0 - s)))
    }
}

/// An entity pair with its relation label.
#[derive(Clone, Copy, Debug)]
pub struct EdgeExample<'a> {
    pub xs: &'a [f64],
    pub xo: &'a [f64],
    pub related: bool,
}

/// Edge examples of a scene: every candidate pair, related iff annotated.
pub fn scene_edges(scene: &Scene) -> Vec<EdgeExample<'_>> {
    scene
        .triplets
        .iter()
        .map(|t| EdgeExample {
            xs: &scene.entities[t.subj].features,
            xo: &scene.entities[t.obj].features,
            related: t.is_annotated(),
        })
        .collect()
}

/// Mean focal loss over `edges` and its gradient.
pub fn focal_loss_grad(params: &GslParams, edges: &[EdgeExample], exec: Exec) -> Result<(f64, ModelParams)> {
    params.validate()?;
    for e in edges {
        check_dims(params, e.xs, e.xo)?;
    }
    let zero = params.net.zeros_like();
    if edges.is_empty() {
        return Ok((0.0, zero));
    }
    let (sum, mut grad) = exec.chunked_reduce(
        edges,
        (0.0, zero.clone()),
        |chunk| {
            let mut g = zero.clone();
            let mut loss = 0.0;
            for e in chunk {
                let x = concat(e.xs, e.xo);
                let (hidden, z) = params.net.forward_cached(&x);
                let s = sigmoid(z[0]);
                let (l, dl_ds) = focal_term(s, e.related, params.gamma, params.positive_only);
                loss += l;
                let clamped = s != s.clamp(SCORE_EPS, 1.0 - SCORE_EPS);
                let dz = if clamped { 0.0 } else { dl_ds * s * (1.0 - s) };
                params.net.backprop(&x, hidden.as_deref(), &[dz], &mut g);
            }
            (loss, g)
        },
        |(la, mut ga), (lb, gb)| {
            ga.add_scaled(&gb, 1.0);
            (la + lb, ga)
        },
    );
    let n = edges.len() as f64;
    grad.scale(1.0 / n);
    let loss = sum / n;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("focal loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Scores and samples every candidate pair of a scene. The noise stream is
/// keyed by `(seed, scene_id, round)` so scenes can be sampled in any order.
pub fn sample_scene(params: &GslParams, scene: &Scene, seed: u64, round: u64) -> Result<Vec<EdgeSample>> {
    let mut rng = stream(seed ^ round.wrapping_mul(0x9e37_79b9_7f4a_7c15), domain::GUMBEL, scene.scene_id);
    scene
        .triplets
        .iter()
        .map(|t| {
            let s = edge_score(params, &scene.entities[t.subj].features, &scene.entities[t.obj].features)?;
            gumbel_sample(s, params.temperature, &mut rng)
        })
        .collect()
}

/// One round of mean aggregation over pairs whose hard sample is 1. Each
/// entity becomes `0.5 * self + 0.5 * mean(neighbours)`; entities without
/// sampled neighbours are unchanged. Triplet features are recomputed.
pub fn message_pass(scene: &Scene, samples: &[EdgeSample]) -> Scene {
    let n = scene.entities.len();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (t, s) in scene.triplets.iter().zip(samples) {
        if s.hard {
            neighbours[t.subj].push(t.obj);
            neighbours[t.obj].push(t.subj);
        }
    }
    let mut out = scene.clone();
    for (i, nb) in neighbours.iter().enumerate() {
        if nb.is_empty() {
            continue;
        }
        let own = &scene.entities[i].features;
        out.entities[i].features = (0..own.len())
            .map(|k| {
                let m = nb.iter().map(|&j| scene.entities[j].features[k]).sum::<f64>() / nb.len() as f64;
                0.5 * own[k] + 0.5 * m
            })
            .collect();
    }
    out.refresh_triplet_features();
    out
}

/// Audit trace of edge samples: `scene_id, subj, obj, score, noise, hard`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeTrace {
    pub rows: Vec<(u64, usize, usize, EdgeSample)>,
}

impl EdgeTrace {
    pub fn record(&mut self, scene: &Scene, samples: &[EdgeSample]) {
        for (t, s) in scene.triplets.iter().zip(samples) {
            self.rows.push((scene.scene_id, t.subj, t.obj, *s));
        }
    }

    pub fn to_table(&self, echo: &[(String, String)]) -> Table {
        let mut t = Table::new(["scene_id", "subj", "obj", "score", "noise", "hard"]).with_echo(echo);
        for (id, s, o, e) in &self.rows {
            t.push([
                id.to_string(),
                s.to_string(),
                o.to_string(),
                e.score.to_string(),
                e.noise.to_string(),
                u8::from(e.hard).to_string(),
            ]);
        }
        t
    }
}
