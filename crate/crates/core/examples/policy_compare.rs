//! Pretrains once, self-trains under every policy and prints the pseudo-label
//! distribution, audit precision and recall metrics.
//!
//! Starts from the committed benchmark preset. Any `KEY=value` argument
//! overrides a generator, pretrain or self-train field, e.g. `cargo run --release --example policy_compare -- lr=0.05`.

use std::time::Instant;

use pseudorel::classifier::{pretrain, Architecture, Reweight};
use pseudorel::exec::Exec;
use pseudorel::metrics::{audit_pseudo_labels, evaluate};
use pseudorel::selftrain::{run, PolicyKind, SelfTrainConfig};
use pseudorel::preset;
use pseudorel::synthgen::build_benchmark;

fn main() -> pseudorel::Result<()> {
    let mut gen = preset::generator();
    let mut pre = preset::pretrain();
    let mut st = preset::selftrain(PolicyKind::Catm);
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').expect("KEY=value");
        if gen.set(k, v)? {
            continue;
        }
        match k {
            "pre_lr" => pre.learning_rate = v.parse().unwrap(),
            "pre_epochs" => pre.n_epochs = v.parse().unwrap(),
            "pre_batch" => pre.batch_size = v.parse().unwrap(),
            "lr" => st.learning_rate = v.parse().unwrap(),
            "iters" => st.max_iterations = v.parse().unwrap(),
            "batch" => st.batch_size = v.parse().unwrap(),
            "alpha_inc" => st.alpha_inc = v.parse().unwrap(),
            "alpha_dec" => st.alpha_dec = v.parse().unwrap(),
            "beta" => st.beta = Some(v.parse().unwrap()),
            "quantile" => st.quantile = v.parse().unwrap(),
            "gsl" => st.use_gsl = v.parse().unwrap(),
            "cap" => st.per_class_per_scene_cap = v.parse().unwrap(),
            "pre_reweight" => pre.reweight = Reweight::parse(v)?,
            "pre_oversample" => pre.oversample = v.parse().unwrap(),
            "reweight" => st.reweight = Reweight::parse(v)?,
            "oversample" => st.oversample = v.parse().unwrap(),
            "arch" => pre.arch = Architecture::parse(v)?,
            _ => panic!("unknown key {k}"),
        }
    }
    let t0 = Instant::now();
    let [train, val, test] = build_benchmark(&gen)?;
    println!("counts {:?}", train.catalog.counts());
    let (params, _) = pretrain(&train, None, &pre, None, Exec::default())?;
    let k = *pre.k_values.last().unwrap();
    let base = evaluate(&params, &test, &pre.k_values, Exec::default())?;
    println!(
        "pretrained  R {:.2} mR {:.2} F {:.2} groups {:?}  ({:.1}s)",
        base.recall_at(k)?,
        base.mean_recall_at(k)?,
        base.f_at(k)?,
        base.groups.last().unwrap(),
        t0.elapsed().as_secs_f64()
    );
    for policy in PolicyKind::ALL {
        let cfg = SelfTrainConfig { policy, ..st.clone() };
        let t = Instant::now();
        let state = run(&params, &train, Some(&val), &cfg, Exec::default())?;
        let counts = state.log.cumulative(train.catalog.n_fg());
        let n = counts.len();
        let head: u64 = counts[..2].iter().sum();
        let tail: u64 = counts[n - 5..].iter().sum();
        let audit = audit_pseudo_labels(&state.assignments, &train)?;
        let r = evaluate(&state.params, &test, &pre.k_values, Exec::default())?;
        println!(
            "{:14} head {head:6} tail {tail:6} ratio {:7.2} prec {:?} R {:.2} mR {:.2} F {:.2} tail-mR {:?} tau {:?} ({:.1}s)",
            policy.tag(),
            head as f64 / tail.max(1) as f64,
            audit.overall_precision().map(|p| (p * 1000.0).round() / 1000.0),
            r.recall_at(k)?,
            r.mean_recall_at(k)?,
            r.f_at(k)?,
            r.group_at(k, 2)?,
            state.policy.thresholds().iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t.elapsed().as_secs_f64()
        );
        println!("               counts {counts:?}");
        println!(
            "               bg-violations {} of {}; per-class precision {:?}",
            audit.total_bg_violations(),
            audit.total_assigned(),
            (1..=n).map(|c| audit.precision(c).map(|p| (p * 100.0).round() / 100.0)).collect::<Vec<_>>()
        );
    }
    Ok(())
}
