//! Confidence thresholds that decide which unannotated triplets receive a
//! pseudo-label.
//!
//! The adaptive policy keeps one threshold per foreground class and moves it
//! towards the batch mean confidence of that class with a class-specific
//! momentum: fast upward for frequent classes, fast downward for rare ones.
//! Static baselines derive their thresholds from validation confidences.
//!
//! Threshold vectors are indexed by foreground class minus one, so entry 0
//! belongs to the most frequent predicate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label_space::{PredicateCatalog, Prediction, BG};
use crate::textio::Table;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumCoefficients {
    pub lambda_inc: Vec<f64>,
    pub lambda_dec: Vec<f64>,
    /// `None` for uniform coefficients.
    pub alpha_inc: Option<f64>,
    pub alpha_dec: Option<f64>,
}

fn check_unit(field: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::config(field, format!("must lie in [0, 1], got {x}")))
    }
}

/// `λ_inc[c] = (N_c / N_1)^α_inc` and `λ_dec[c] = (N_{n+1-c} / N_1)^α_dec`.
/// Zero counts are floored at one so every coefficient stays positive.
pub fn momentum_coefficients(
    catalog: &PredicateCatalog,
    alpha_inc: f64,
    alpha_dec: f64,
) -> Result<MomentumCoefficients> {
    check_unit("alpha_inc", alpha_inc)?;
    check_unit("alpha_dec", alpha_dec)?;
    let counts = catalog.counts();
    let head = counts.first().copied().unwrap_or(0);
    if head == 0 {
        return Err(Error::Validation("most frequent class has zero count".into()));
    }
    let ratio = |n: u64| n.max(1) as f64 / head as f64;
    let lambda_inc = counts.iter().map(|&n| ratio(n).powf(alpha_inc)).collect();
    let lambda_dec = counts.iter().rev().map(|&n| ratio(n).powf(alpha_dec)).collect();
    Ok(MomentumCoefficients {
        lambda_inc,
        lambda_dec,
        alpha_inc: Some(alpha_inc),
        alpha_dec: Some(alpha_dec),
    })
}

/// Every coefficient set to `value`, the ablation without class-specific momentum.
pub fn uniform_coefficients(n_fg: usize, value: f64) -> Result<MomentumCoefficients> {
    check_unit("uniform_momentum", value)?;
    Ok(MomentumCoefficients {
        lambda_inc: vec![value; n_fg],
        lambda_dec: vec![value; n_fg],
        alpha_inc: None,
        alpha_dec: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub tau: Vec<f64>,
    pub coefficients: MomentumCoefficients,
    pub iteration: u64,
    /// Average only the confidences that cleared the old threshold in the
    /// increase branch, instead of every prediction of the class.
    pub strict_mean: bool,
}

impl ThresholdState {
    pub fn new(coefficients: MomentumCoefficients, initial: f64) -> Result<Self> {
        check_unit("initial_threshold", initial)?;
        Ok(ThresholdState {
            tau: vec![initial; coefficients.lambda_inc.len()],
            coefficients,
            iteration: 0,
            strict_mean: false,
        })
    }
}

/// A foreground prediction: `(class, confidence)` with `class >= 1`.
pub type FgConfidence = (usize, f64);

/// Keeps only predictions whose argmax is a foreground class.
pub fn foreground_confidences<'a>(preds: impl IntoIterator<Item = &'a Prediction>) -> Vec<FgConfidence> {
    preds
        .into_iter()
        .filter(|p| p.argmax_class != BG)
        .map(|p| (p.argmax_class, p.confidence))
        .collect()
}

/// One momentum update from the foreground predictions of a batch.
pub fn catm_update(state: &ThresholdState, preds: &[FgConfidence]) -> Result<ThresholdState> {
    let n_fg = state.tau.len();
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); n_fg];
    for &(c, q) in preds {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::Validation(format!("confidence {q} outside [0, 1]")));
        }
        if c == BG || c > n_fg {
            return Err(Error::Validation(format!("class {c} is not a foreground class")));
        }
        groups[c - 1].push(q);
    }
    let mut next = state.clone();
    for (i, qs) in groups.iter().enumerate() {
        if qs.is_empty() {
            continue;
        }
        let old = state.tau[i];
        let eligible: Vec<f64> = qs.iter().copied().filter(|&q| q >= old).collect();
        let (lambda, pool) = if eligible.is_empty() {
            (state.coefficients.lambda_dec[i], qs.as_slice())
        } else if state.strict_mean {
            (state.coefficients.lambda_inc[i], eligible.as_slice())
        } else {
            (state.coefficients.lambda_inc[i], qs.as_slice())
        };
        let mean = pool.iter().sum::<f64>() / pool.len() as f64;
        next.tau[i] = ((1.0 - lambda) * old + lambda * mean).clamp(0.0, 1.0);
    }
    next.iteration += 1;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ThresholdPolicy {
    Adaptive(ThresholdState),
    Constant { tau: f64, n_fg: usize },
    FixedClass { tau: Vec<f64> },
    FreqWeighted { tau: Vec<f64> },
    Dash { base: Vec<f64>, growth: f64, interval: u64, step: u64, tau: Vec<f64> },
    Never { n_fg: usize },
}

impl ThresholdPolicy {
    pub fn tag(&self) -> &'static str {
        match self {
            ThresholdPolicy::Adaptive(_) => "catm",
            ThresholdPolicy::Constant { .. } => "constant",
            ThresholdPolicy::FixedClass { .. } => "fixed-class",
            ThresholdPolicy::FreqWeighted { .. } => "freq-weighted",
            ThresholdPolicy::Dash { .. } => "dash",
            ThresholdPolicy::Never { .. } => "never",
        }
    }

    /// Per-class thresholds, foreground classes only.
    pub fn thresholds(&self) -> Vec<f64> {
        match self {
            ThresholdPolicy::Adaptive(s) => s.tau.clone(),
            ThresholdPolicy::Constant { tau, n_fg } => vec![*tau; *n_fg],
            ThresholdPolicy::FixedClass { tau }
            | ThresholdPolicy::FreqWeighted { tau }
            | ThresholdPolicy::Dash { tau, .. } => tau.clone(),
            ThresholdPolicy::Never { n_fg } => vec![1.0; *n_fg],
        }
    }

    pub fn threshold(&self, class: usize) -> f64 {
        match self {
            ThresholdPolicy::Adaptive(s) => s.tau[class - 1],
            ThresholdPolicy::Constant { tau, .. } => *tau,
            ThresholdPolicy::FixedClass { tau }
            | ThresholdPolicy::FreqWeighted { tau }
            | ThresholdPolicy::Dash { tau, .. } => tau[class - 1],
            ThresholdPolicy::Never { .. } => 1.0,
        }
    }

    /// Advances the policy after one iteration. Only the adaptive and dash
    /// variants change.
    pub fn update(&self, preds: &[FgConfidence]) -> Result<ThresholdPolicy> {
        Ok(match self {
            ThresholdPolicy::Adaptive(s) => ThresholdPolicy::Adaptive(catm_update(s, preds)?),
            ThresholdPolicy::Dash { base, growth, interval, step, .. } => {
                let step = step + 1;
                let mut next = dash_adaptive_update(base, *growth, step / interval)?;
                if let ThresholdPolicy::Dash { interval: i, step: s, .. } = &mut next {
                    *i = *interval;
                    *s = step;
                }
                next
            }
            other => other.clone(),
        })
    }
}

/// The pseudo-label for a prediction, if any. Background is never returned.
pub fn decide(policy: &ThresholdPolicy, prediction: &Prediction) -> Option<usize> {
    let c = prediction.argmax_class;
    if c == BG || matches!(policy, ThresholdPolicy::Never { .. }) {
        return None;
    }
    (prediction.confidence >= policy.threshold(c)).then_some(c)
}

/// The `k`-th largest value with `k = max(1, ceil(top * n))`.
fn upper_quantile(pool: &[f64], top: f64) -> f64 {
    let mut v = pool.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    let k = ((top * v.len() as f64 - 1e-9).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

fn check_top(top: f64) -> Result<()> {
    if top > 0.0 && top <= 1.0 {
        Ok(())
    } else {
        Err(Error::config("quantile", format!("must lie in (0, 1], got {top}")))
    }
}

/// One threshold for every class: the top-`top` fraction of the pooled
/// validation confidences.
pub fn constant_threshold(pool: &[f64], top: f64, n_fg: usize) -> Result<ThresholdPolicy> {
    check_top(top)?;
    if pool.is_empty() {
        return Err(Error::Validation("empty confidence pool".into()));
    }
    Ok(ThresholdPolicy::Constant {
        tau: upper_quantile(pool, top),
        n_fg,
    })
}

/// Per-class top-`top` thresholds from confidences grouped by predicted
/// class; `pools[c]` holds foreground class `c + 1`. Classes with no
/// confidences get 1.0.
pub fn fixed_class_threshold(pools: &[Vec<f64>], top: f64) -> Result<ThresholdPolicy> {
    check_top(top)?;
    Ok(ThresholdPolicy::FixedClass {
        tau: pools
            .iter()
            .map(|p| if p.is_empty() { 1.0 } else { upper_quantile(p, top) })
            .collect(),
    })
}

/// Groups foreground predictions by class into per-class pools.
pub fn class_pools(preds: &[FgConfidence], n_fg: usize) -> Vec<Vec<f64>> {
    let mut pools = vec![Vec::new(); n_fg];
    for &(c, q) in preds {
        pools[c - 1].push(q);
    }
    pools
}

/// `(1 - mix) * τ_cls + mix * N_c / N_1`, clipped to [0, 1].
pub fn freq_weighted_threshold(
    fixed: &ThresholdPolicy,
    catalog: &PredicateCatalog,
    mix: f64,
) -> Result<ThresholdPolicy> {
    check_unit("freq_mix", mix)?;
    let ThresholdPolicy::FixedClass { tau } = fixed else {
        return Err(Error::config("policy", "frequency weighting needs a fixed-class policy"));
    };
    let head = catalog.count(1).max(1) as f64;
    Ok(ThresholdPolicy::FreqWeighted {
        tau: tau
            .iter()
            .enumerate()
            .map(|(i, t)| ((1.0 - mix) * t + mix * catalog.count(i + 1) as f64 / head).clamp(0.0, 1.0))
            .collect(),
    })
}

/// Growing thresholds `min(1, base * growth^k)` after `k` intervals.
pub fn dash_adaptive_update(base: &[f64], growth: f64, k: u64) -> Result<ThresholdPolicy> {
    if !(growth > 1.0 && growth.is_finite()) {
        return Err(Error::config("dash_growth", format!("must be > 1, got {growth}")));
    }
    let f = growth.powi(k.min(i32::MAX as u64) as i32);
    Ok(ThresholdPolicy::Dash {
        base: base.to_vec(),
        growth,
        interval: 1,
        step: 0,
        tau: base.iter().map(|b| (b * f).min(1.0)).collect(),
    })
}

/// Threshold trajectory: one row per iteration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub rows: Vec<(u64, Vec<f64>)>,
}

impl Trajectory {
    pub fn push(&mut self, iteration: u64, tau: Vec<f64>) {
        self.rows.push((iteration, tau));
    }

    pub fn to_table(&self, catalog: &PredicateCatalog, echo: &[(String, String)]) -> Table {
        let mut cols = vec!["iteration".to_string()];
        cols.extend((1..=catalog.n_fg()).map(|c| format!("tau_{}", catalog.name(c))));
        let mut t = Table::new(cols).with_echo(echo);
        for (it, tau) in &self.rows {
            let mut row = vec![it.to_string()];
            row.extend(tau.iter().map(|x| x.to_string()));
            t.push(row);
        }
        t
    }
}
