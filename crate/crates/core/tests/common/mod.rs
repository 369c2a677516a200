//! Helpers shared by the integration tests: small instance builders,
//! finite-difference gradient checks and the invariant property suite.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pseudorel::classifier::{cross_entropy, softmax, Architecture, Example, ModelParams};
use pseudorel::exec::Exec;
use pseudorel::gsl::{self, focal_loss_grad, EdgeExample, GslParams};
use pseudorel::label_space::{build_catalog, Dataset, PredicateCatalog, Prediction, TripletInstance, BG};
use pseudorel::metrics::{self, Assignment, ScenePredictions};
use pseudorel::selftrain::{self, BatchPartition, PolicyKind, SelfTrainConfig};
use pseudorel::synthgen::{build_benchmark, GeneratorConfig};
use pseudorel::threshold::{self, MomentumCoefficients, ThresholdPolicy, ThresholdState};

pub fn catalog(counts: &[u64]) -> PredicateCatalog {
    let pairs: Vec<(String, u64)> = counts.iter().enumerate().map(|(i, &c)| (format!("p{i}"), c)).collect();
    build_catalog(&pairs).unwrap()
}

pub fn triplet(scene_id: u64, features: Vec<f64>, observed: usize, hidden: usize) -> TripletInstance {
    TripletInstance {
        scene_id,
        subj: 0,
        obj: 1,
        subject_class: 0,
        object_class: 0,
        features,
        observed_label: observed,
        hidden_label: hidden,
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

/// A small benchmark for end-to-end properties.
pub fn tiny_benchmark(seed: u64) -> [Dataset; 3] {
    let config = GeneratorConfig {
        n_scenes: 40,
        entities_min: 4,
        entities_max: 7,
        n_fg_classes: 5,
        feature_dim: 4,
        annotated_fraction: 0.3,
        sibling_groups: pseudorel::synthgen::default_sibling_groups(5),
        seed,
        ..GeneratorConfig::default()
    };
    build_benchmark(&config).unwrap()
}

// ---------------------------------------------------------------------------
// finite differences

const FD_STEP: f64 = 1e-5;

/// `|a - n| / (|a| + |n|)` over whole gradient vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    if na + nn < 1e-12 {
        diff
    } else {
        diff / (na + nn)
    }
}

pub fn central_differences(theta: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + FD_STEP;
            let up = f(&x);
            x[i] = orig - FD_STEP;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

fn random_arch(rng: &mut ChaCha8Rng) -> Architecture {
    if rng.random_bool(0.5) {
        Architecture::Linear
    } else {
        Architecture::Hidden(rng.random_range(2..5))
    }
}

fn random_model(rng: &mut ChaCha8Rng, d: usize, c: usize) -> ModelParams {
    let arch = random_arch(rng);
    ModelParams::init(arch, d, c, 1.5, rng.random())
}

fn with_flat(params: &ModelParams, theta: &[f64]) -> ModelParams {
    let mut p = params.clone();
    p.set_flat(theta);
    p
}

/// Weighted cross-entropy on a random instance.
pub fn cross_entropy_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..5);
    let c = rng.random_range(2..6);
    let params = random_model(&mut rng, d, c);
    let n = rng.random_range(1..7);
    let feats: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d, 2.0)).collect();
    let examples: Vec<Example> = feats
        .iter()
        .map(|f| Example {
            features: f,
            target: rng.random_range(0..c),
            weight: rng.random_range(0.1..3.0),
        })
        .collect();
    let (_, grad) = cross_entropy(&params, &examples, Exec::Sequential);
    let numeric = central_differences(&params.flat(), |th| {
        cross_entropy(&with_flat(&params, th), &examples, Exec::Sequential).0
    });
    relative_error(&grad.flat(), &numeric)
}

/// The three-term self-training loss on a random batch partition.
pub fn three_term_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..5);
    let n_fg = rng.random_range(2..5);
    let c = n_fg + 1;
    let params = random_model(&mut rng, d, c);
    let mut pool = Vec::new();
    for _ in 0..rng.random_range(3..12) {
        let label = rng.random_range(1..=n_fg);
        let observed = if rng.random_bool(0.3) { label } else { BG };
        pool.push(triplet(0, gaussian_vec(&mut rng, d, 2.0), observed, label));
    }
    let mut part = BatchPartition::default();
    for t in &pool {
        if t.is_annotated() {
            part.annotated.push(t);
        } else if rng.random_bool(0.4) {
            part.pseudo_labeled.push((t, rng.random_range(1..=n_fg)));
        } else {
            part.background.push(t);
        }
    }
    let weights: Vec<f64> = (0..c).map(|_| rng.random_range(0.2..2.0)).collect();
    let beta = rng.random_range(0.0..2.0);
    let (_, grad, _) = selftrain::three_term_loss(&params, &part, &weights, beta, Exec::Sequential).unwrap();
    let numeric = central_differences(&params.flat(), |th| {
        selftrain::three_term_loss(&with_flat(&params, th), &part, &weights, beta, Exec::Sequential)
            .unwrap()
            .0
    });
    relative_error(&grad.flat(), &numeric)
}

/// Mean focal loss of the edge scorer on random pairs.
pub fn focal_trial(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..4);
    let mut params = GslParams::init(d, rng.random_range(2..5), 1.5, rng.random());
    params.gamma = [0.0, 1.0, 2.0, 2.5][rng.random_range(0..4)];
    params.positive_only = rng.random_bool(0.25);
    let n = rng.random_range(1..8);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d, 1.5)).collect();
    let xo: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vec(&mut rng, d, 1.5)).collect();
    let edges: Vec<EdgeExample> = (0..n)
        .map(|i| EdgeExample {
            xs: &xs[i],
            xo: &xo[i],
            related: rng.random_bool(0.5),
        })
        .collect();
    let (_, grad) = focal_loss_grad(&params, &edges, Exec::Sequential).unwrap();
    let numeric = central_differences(&params.net.flat(), |th| {
        let mut p = params.clone();
        p.net.set_flat(th);
        focal_loss_grad(&p, &edges, Exec::Sequential).unwrap().0
    });
    relative_error(&grad.flat(), &numeric)
}

// ---------------------------------------------------------------------------
// invariant properties

pub type PropResult = Result<(), TestCaseError>;

pub struct Property {
    pub name: &'static str,
    pub run: fn(u32) -> Result<(), String>,
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> PropResult) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn probs_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|raw| {
        let s: f64 = raw.iter().sum::<f64>() + 1e-9;
        raw.iter().map(|x| (x + 1e-9 / raw.len() as f64) / s).collect()
    })
}

fn threshold_case() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<(usize, f64)>)> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec((1..=n, 0.0f64..=1.0), 0..20),
        )
    })
}

fn state_from(tau: Vec<f64>, inc: Vec<f64>, dec: Vec<f64>) -> ThresholdState {
    ThresholdState {
        tau,
        coefficients: MomentumCoefficients {
            lambda_inc: inc,
            lambda_dec: dec,
            alpha_inc: None,
            alpha_dec: None,
        },
        iteration: 0,
        strict_mean: false,
    }
}

fn convex_bound(cases: u32) -> Result<(), String> {
    check(cases, threshold_case(), |(tau, inc, dec, preds)| {
        let state = state_from(tau, inc, dec);
        let next = threshold::catm_update(&state, &preds).unwrap();
        for c in 0..state.tau.len() {
            let qs: Vec<f64> = preds.iter().filter(|p| p.0 == c + 1).map(|p| p.1).collect();
            let old = state.tau[c];
            if qs.is_empty() {
                prop_assert_eq!(next.tau[c], old);
                continue;
            }
            let mean = qs.iter().sum::<f64>() / qs.len() as f64;
            let (lo, hi) = (old.min(mean), old.max(mean));
            prop_assert!(next.tau[c] >= lo - 1e-12 && next.tau[c] <= hi + 1e-12);
            prop_assert!((0.0..=1.0).contains(&next.tau[c]));
        }
        // bitwise reproducible
        prop_assert_eq!(threshold::catm_update(&state, &preds).unwrap(), next);
        Ok(())
    })
}

fn unit_momentum_tracks_mean(cases: u32) -> Result<(), String> {
    check(cases, threshold_case(), |(tau, _, _, preds)| {
        let n = tau.len();
        let state = state_from(tau, vec![1.0; n], vec![1.0; n]);
        let next = threshold::catm_update(&state, &preds).unwrap();
        for c in 0..n {
            let qs: Vec<f64> = preds.iter().filter(|p| p.0 == c + 1).map(|p| p.1).collect();
            if !qs.is_empty() {
                let mean = qs.iter().sum::<f64>() / qs.len() as f64;
                prop_assert!((next.tau[c] - mean).abs() <= 1e-12);
            }
        }
        Ok(())
    })
}

fn momentum_monotone(cases: u32) -> Result<(), String> {
    let strategy = (prop::collection::vec(1u64..10_000, 2..12), 0.0f64..=1.0, 0.0f64..=1.0);
    check(cases, strategy, |(counts, a_inc, a_dec)| {
        let coef = threshold::momentum_coefficients(&catalog(&counts), a_inc, a_dec).unwrap();
        for w in coef.lambda_inc.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        for w in coef.lambda_dec.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert_eq!(coef.lambda_inc[0], 1.0);
        prop_assert_eq!(*coef.lambda_dec.last().unwrap(), 1.0);
        Ok(())
    })
}

fn decide_never_background(cases: u32) -> Result<(), String> {
    let strategy = (2usize..6).prop_flat_map(|n| (probs_strategy(n + 1), prop::collection::vec(0.0f64..=1.0, n)));
    check(cases, strategy, |(probs, tau)| {
        let pred = Prediction::from_probs(probs);
        let n = tau.len();
        let policies = [
            ThresholdPolicy::FixedClass { tau: tau.clone() },
            ThresholdPolicy::Constant { tau: tau[0], n_fg: n },
            ThresholdPolicy::FixedClass { tau: vec![0.0; n] },
        ];
        for p in &policies {
            match threshold::decide(p, &pred) {
                Some(c) => {
                    prop_assert!(c != BG);
                    prop_assert_eq!(c, pred.argmax_class);
                    prop_assert!(pred.confidence >= p.threshold(c));
                }
                None => prop_assert!(pred.argmax_class == BG || pred.confidence < p.threshold(pred.argmax_class)),
            }
        }
        prop_assert_eq!(threshold::decide(&ThresholdPolicy::Never { n_fg: n }, &pred), None);
        Ok(())
    })
}

fn cap_enforced(cases: u32) -> Result<(), String> {
    let strategy = (
        prop::collection::vec((0u64..3, 0usize..4, 0.0f64..1.0), 0..40),
        1usize..4,
        0.0f64..0.6,
    );
    check(cases, strategy, |(items, cap, tau)| {
        // each item: scene, fg class - 1, raw confidence mass
        let n_fg = 4;
        let triplets: Vec<TripletInstance> = items.iter().map(|&(s, _, _)| triplet(s, vec![0.0], BG, BG)).collect();
        let preds: Vec<Prediction> = items
            .iter()
            .map(|&(_, c, q)| {
                let top = 0.2 + 0.8 * q;
                let rest = (1.0 - top) / n_fg as f64;
                let mut p = vec![rest; n_fg + 1];
                p[c + 1] = top;
                Prediction::from_probs(p)
            })
            .collect();
        let refs: Vec<&TripletInstance> = triplets.iter().collect();
        let policy = ThresholdPolicy::Constant { tau, n_fg };
        let accepted = selftrain::assign_pseudo_labels(&refs, &preds, &policy, cap, None);
        let mut per_group = std::collections::HashMap::new();
        for &(i, c) in &accepted {
            prop_assert!(c != BG);
            prop_assert_eq!(c, preds[i].argmax_class);
            *per_group.entry((triplets[i].scene_id, c)).or_insert(0usize) += 1;
        }
        for (&(scene, c), &kept) in &per_group {
            prop_assert!(kept <= cap);
            // the kept ones are the most confident eligible candidates
            let eligible: Vec<usize> = (0..items.len())
                .filter(|&i| {
                    triplets[i].scene_id == scene && preds[i].argmax_class == c && preds[i].confidence >= tau
                })
                .collect();
            prop_assert_eq!(kept, eligible.len().min(cap));
            let min_kept = accepted
                .iter()
                .filter(|&&(i, cc)| cc == c && triplets[i].scene_id == scene)
                .map(|&(i, _)| preds[i].confidence)
                .fold(f64::INFINITY, f64::min);
            let dropped_max = eligible
                .iter()
                .filter(|i| !accepted.iter().any(|&(j, _)| j == **i))
                .map(|&i| preds[i].confidence)
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(dropped_max <= min_kept);
        }
        Ok(())
    })
}

fn run_config(policy: PolicyKind, iterations: u64, seed: u64) -> SelfTrainConfig {
    SelfTrainConfig {
        policy,
        max_iterations: iterations,
        batch_size: 4,
        quantile: 0.3,
        seed,
        ..SelfTrainConfig::default()
    }
}

/// Runs a few self-training iterations and checks the per-iteration
/// bookkeeping: partition exhaustiveness, cap, cumulative counts.
fn loop_bookkeeping(cases: u32) -> Result<(), String> {
    let strategy = (0u64..1000, 0usize..PolicyKind::ALL.len(), any::<bool>());
    check(cases.min(24), strategy, |(seed, pk, use_gsl)| {
        let [train, val, _] = tiny_benchmark(seed);
        let pretrained = ModelParams::init(Architecture::Linear, train.feature_dim(), train.catalog.n_classes(), 1.0, seed);
        let mut config = run_config(PolicyKind::ALL[pk], 6, seed);
        config.use_gsl = use_gsl;
        config.gsl_hidden = 3;
        let state = selftrain::run(&pretrained, &train, Some(&val), &config, Exec::Sequential).unwrap();
        let n_fg = train.catalog.n_fg();
        let mut prev = vec![0u64; n_fg];
        let mut by_iter = std::collections::HashMap::new();
        for a in &state.assignments {
            *by_iter.entry(a.iteration).or_insert(0usize) += 1;
            prop_assert!(a.class != BG);
        }
        let per_epoch = train.scenes.len().div_ceil(config.batch_size) as u64;
        for r in &state.log.iterations {
            let t = r.iteration - 1;
            let order = pseudorel::classifier::epoch_order(config.seed, t / per_epoch, train.scenes.len());
            let lo = (t % per_epoch) as usize * config.batch_size;
            let hi = (lo + config.batch_size).min(order.len());
            let batch: usize = order[lo..hi].iter().map(|&i| train.scenes[i].triplets.len()).sum();
            prop_assert_eq!(r.n_annotated + r.n_pseudo + r.n_background, batch);
            prop_assert_eq!(r.n_pseudo, by_iter.get(&r.iteration).copied().unwrap_or(0));
            for (a, b) in prev.iter().zip(&r.cumulative) {
                prop_assert!(a <= b);
            }
            prev = r.cumulative.clone();
            let l = r.loss;
            prop_assert!(l.annotated >= 0.0 && l.background >= 0.0 && l.pseudo >= 0.0);
            prop_assert_eq!(l.total, l.annotated + l.background + l.beta * l.pseudo);
        }
        prop_assert_eq!(prev.iter().sum::<u64>() as usize, state.assignments.len());
        let mut groups = std::collections::HashMap::new();
        for a in &state.assignments {
            *groups.entry((a.iteration, a.scene_id, a.class)).or_insert(0usize) += 1;
        }
        prop_assert!(groups.values().all(|&n| n <= config.per_class_per_scene_cap));
        Ok(())
    })
}

fn f_symmetry(cases: u32) -> Result<(), String> {
    check(cases, (0.0f64..=100.0, 0.0f64..=100.0), |(r, m)| {
        let f = metrics::f_at_k(r, m);
        prop_assert_eq!(f, metrics::f_at_k(m, r));
        prop_assert!((0.0..=100.0).contains(&f));
        prop_assert!(f <= r.max(m) + 1e-12 && f >= r.min(m) - 1e-12);
        Ok(())
    })
}

/// Random tiny scenes: per triplet `(predicted class, score, hidden)`.
fn tiny_split() -> impl Strategy<Value = Vec<Vec<(usize, f64, usize)>>> {
    prop::collection::vec(prop::collection::vec((1usize..4, 0.0f64..1.0, 0usize..4), 1..7), 1..8)
}

fn unpack(split: &[Vec<(usize, f64, usize)>]) -> (Vec<ScenePredictions>, Vec<Vec<usize>>) {
    (
        split.iter().map(|s| s.iter().map(|&(c, q, _)| (c, q)).collect()).collect(),
        split.iter().map(|s| s.iter().map(|&(_, _, h)| h).collect()).collect(),
    )
}

/// Top-K membership by counting strictly better entries.
fn in_top_k(scene: &[(usize, f64, usize)], i: usize, k: usize) -> bool {
    let better = scene
        .iter()
        .enumerate()
        .filter(|&(j, t)| t.1 > scene[i].1 || (t.1 == scene[i].1 && j < i))
        .count();
    better < k
}

fn recall_oracles(cases: u32) -> Result<(), String> {
    check(cases, (tiny_split(), 1usize..6), |(split, k)| {
        let (preds, truth) = unpack(&split);
        let mut scene_recalls = Vec::new();
        let mut gt = [0u32; 3];
        let mut hit = [0u32; 3];
        for s in &split {
            let gts: Vec<usize> = (0..s.len()).filter(|&i| s[i].2 != BG).collect();
            let hits = gts.iter().filter(|&&i| in_top_k(s, i, k) && s[i].0 == s[i].2).count();
            for &i in &gts {
                gt[s[i].2 - 1] += 1;
                if in_top_k(s, i, k) && s[i].0 == s[i].2 {
                    hit[s[i].2 - 1] += 1;
                }
            }
            if !gts.is_empty() {
                scene_recalls.push(100.0 * hits as f64 / gts.len() as f64);
            }
        }
        let r = metrics::recall_at_k(&preds, &truth, k);
        if scene_recalls.is_empty() {
            prop_assert!(r.is_err());
            prop_assert!(metrics::mean_recall_at_k(&preds, &truth, k, 3).is_err());
            return Ok(());
        }
        let expect = scene_recalls.iter().sum::<f64>() / scene_recalls.len() as f64;
        let r = r.unwrap();
        prop_assert!((r - expect).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&r));
        let defined: Vec<f64> = (0..3).filter(|&c| gt[c] > 0).map(|c| 100.0 * hit[c] as f64 / gt[c] as f64).collect();
        let mr = metrics::mean_recall_at_k(&preds, &truth, k, 3).unwrap();
        prop_assert!((mr - defined.iter().sum::<f64>() / defined.len() as f64).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&mr));
        // duplicating every scene keeps the class-balanced mean
        let doubled: Vec<_> = split.iter().chain(&split).cloned().collect();
        let (p2, t2) = unpack(&doubled);
        prop_assert_eq!(metrics::mean_recall_at_k(&p2, &t2, k, 3).unwrap(), mr);
        Ok(())
    })
}

fn audit_recount(cases: u32) -> Result<(), String> {
    check(cases.min(64), (0u64..500, prop::collection::vec((any::<u16>(), 1usize..6), 0..100)), |(seed, picks)| {
        let [train, _, _] = tiny_benchmark(seed);
        let slots: Vec<(u64, usize, usize)> = train
            .scenes
            .iter()
            .flat_map(|s| {
                s.triplets
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| !t.is_annotated())
                    .map(move |(i, t)| (s.scene_id, i, t.hidden_label))
            })
            .collect();
        let log: Vec<Assignment> = picks
            .iter()
            .enumerate()
            .map(|(n, &(r, class))| {
                let (scene_id, triplet, _) = slots[r as usize % slots.len()];
                Assignment {
                    iteration: n as u64,
                    scene_id,
                    triplet,
                    class,
                    confidence: 0.5,
                }
            })
            .collect();
        let audit = metrics::audit_pseudo_labels(&log, &train).unwrap();
        let hidden_of = |a: &Assignment| slots.iter().find(|s| s.0 == a.scene_id && s.1 == a.triplet).unwrap().2;
        for c in 1..=5 {
            let mine: Vec<&Assignment> = log.iter().filter(|a| a.class == c).collect();
            let correct = mine.iter().filter(|a| hidden_of(a) == c).count() as u64;
            let bg = mine.iter().filter(|a| hidden_of(a) == BG).count() as u64;
            prop_assert_eq!(audit.assigned[c - 1], mine.len() as u64);
            prop_assert_eq!(audit.correct[c - 1], correct);
            prop_assert_eq!(audit.bg_violations[c - 1], bg);
            let expect = (!mine.is_empty()).then(|| correct as f64 / mine.len() as f64);
            prop_assert_eq!(audit.precision(c), expect);
        }
        Ok(())
    })
}

fn softmax_valid(cases: u32) -> Result<(), String> {
    check(cases, (prop::collection::vec(-50.0f64..50.0, 1..8), -100.0f64..100.0), |(logits, c)| {
        let p = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|x| x + c).collect();
        let q = softmax(&shifted);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let pred = Prediction::from_probs(p.clone());
        prop_assert_eq!(pred.confidence, p.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        Ok(())
    })
}

fn catalog_idempotent(cases: u32) -> Result<(), String> {
    check(cases, prop::collection::vec(0u64..1000, 2..15), |counts| {
        let cat = catalog(&counts);
        let again = build_catalog(&cat.label_counts()).unwrap();
        prop_assert_eq!(&again, &cat);
        prop_assert!(cat.counts().windows(2).all(|w| w[0] >= w[1]));
        Ok(())
    })
}

fn temperature_invariance(cases: u32) -> Result<(), String> {
    check(cases, (0.0f64..=1.0, -10.0f64..10.0, 0.01f64..20.0, 0.01f64..20.0), |(s, eps, t1, t2)| {
        let a = gsl::sample_with_noise(s, t1, eps).unwrap();
        let b = gsl::sample_with_noise(s, t2, eps).unwrap();
        prop_assert_eq!(a.hard, b.hard);
        prop_assert_eq!(gsl::gate(&a), a.hard);
        prop_assert_eq!(gsl::sample_with_noise(s, t1, eps).unwrap(), a);
        Ok(())
    })
}

pub const PROPERTIES: &[Property] = &[
    Property { name: "threshold update is a convex combination", run: convex_bound },
    Property { name: "unit momentum tracks the batch mean", run: unit_momentum_tracks_mean },
    Property { name: "momentum coefficients are monotone", run: momentum_monotone },
    Property { name: "decide never returns background", run: decide_never_background },
    Property { name: "per-scene class cap keeps the most confident", run: cap_enforced },
    Property { name: "loop bookkeeping", run: loop_bookkeeping },
    Property { name: "F@K symmetry and range", run: f_symmetry },
    Property { name: "recall metrics match brute force", run: recall_oracles },
    Property { name: "audit matches a recount", run: audit_recount },
    Property { name: "softmax validity and shift invariance", run: softmax_valid },
    Property { name: "catalog rebuild is idempotent", run: catalog_idempotent },
    Property { name: "temperature never changes the hard sample", run: temperature_invariance },
];
