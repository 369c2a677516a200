use std::fs;
use std::path::Path;

use pseudorel::classifier::{pretrain, ModelParams};
use pseudorel::error::{Error, Result};
use pseudorel::exec::Exec;
use pseudorel::label_space::{Dataset, Split};
use pseudorel::metrics::{
    assignments_from_table, assignments_table, audit_pseudo_labels, evaluate, format_results, report_columns,
    EvalReport,
};
use pseudorel::selftrain::{init_state, run, run_until, PolicyKind, SelfTrainConfig, SelfTrainState};
use pseudorel::synthgen::{build_benchmark, manifest};
use pseudorel::textio::Table;

use crate::config::RunConfig;

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))
}

fn load_split(config: &RunConfig, split: Split) -> Result<Dataset> {
    Dataset::load(&config.data_dir, split)
}

fn headline(report: &EvalReport) -> String {
    let k = *report.k_values.last().expect("at least one K");
    format!(
        "R@{k} {:.2}  mR@{k} {:.2}  F@{k} {:.2}",
        report.recall.last().unwrap(),
        report.mean_recall.last().unwrap(),
        report.f.last().unwrap()
    )
}

pub fn gen(config: &RunConfig) -> Result<()> {
    config.generator.validate()?;
    let splits = build_benchmark(&config.generator)?;
    ensure_dir(&config.data_dir)?;
    for s in &splits {
        s.save(&config.data_dir)?;
    }
    let table = manifest(&config.generator, &splits);
    table.write(&config.data_dir.join("manifest.csv"))?;
    print!("{}", table.render());
    Ok(())
}

pub fn pretrain_cmd(config: &RunConfig) -> Result<()> {
    config.pretrain.validate()?;
    let train = load_split(config, Split::Train)?;
    let val = load_split(config, Split::Val)?;
    let (params, log) = pretrain(&train, Some(&val), &config.pretrain, None, Exec::default())?;
    ensure_dir(&config.checkpoint_dir)?;
    ensure_dir(&config.log_dir)?;
    let echo = config.echo();
    params.save_with_echo(&config.pretrained_path(), &echo)?;
    log.to_table(&echo, &config.pretrain.k_values).write(&config.log_dir.join("pretrain.csv"))?;
    if let Some(report) = log.epochs.last().and_then(|e| e.val.as_ref()) {
        println!("validation after {} epochs: {}", log.epochs.len(), headline(report));
    }
    println!("wrote {}", config.pretrained_path().display());
    Ok(())
}

/// Resumes from a saved state only when it was produced by the same configuration.
fn resume_or_init(
    config: &RunConfig,
    st: &SelfTrainConfig,
    pretrained: &ModelParams,
    train: &Dataset,
    val: &Dataset,
    state_path: &Path,
) -> Result<SelfTrainState> {
    let echo_path = state_path.with_extension("echo");
    let current = Table::new(["key"]).with_echo(&config.echo()).render();
    if state_path.exists() && fs::read_to_string(&echo_path).ok().as_deref() == Some(current.as_str()) {
        let state = SelfTrainState::load(state_path)?;
        if state.iteration > 0 {
            eprintln!("resuming from iteration {}", state.iteration);
        }
        return Ok(state);
    }
    fs::write(&echo_path, current)?;
    init_state(pretrained, train, Some(val), st)
}

pub fn selftrain_cmd(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let st = &config.selftrain;
    let pretrained = ModelParams::load(&config.pretrained_path())?;
    let train = load_split(config, Split::Train)?;
    let val = load_split(config, Split::Val)?;
    ensure_dir(&config.checkpoint_dir)?;
    ensure_dir(&config.log_dir)?;
    let name = config.run_name();
    let state_path = config.checkpoint_dir.join(format!("{name}.state.json"));
    let mut state = resume_or_init(config, st, &pretrained, &train, &val, &state_path)?;
    while state.iteration < st.max_iterations {
        let next = (state.iteration + config.checkpoint_every).min(st.max_iterations);
        run_until(&mut state, &train, Some(&val), st, next, Exec::default())?;
        state.save(&state_path)?;
    }
    state.save(&state_path)?;

    let echo = config.echo();
    let out = |suffix: &str| config.log_dir.join(format!("{name}-{suffix}.csv"));
    state.params.save_with_echo(&config.checkpoint_dir.join(format!("{name}.params")), &echo)?;
    state.log.iteration_table(&train.catalog, &echo).write(&out("iterations"))?;
    state.log.epoch_table(&st.k_values, &echo).write(&out("epochs"))?;
    state.log.threshold_table(&train.catalog, &echo).write(&out("thresholds"))?;
    assignments_table(&state.assignments, &echo).write(&out("assignments"))?;

    let counts = state.log.cumulative(train.catalog.n_fg());
    let tau = state.policy.thresholds();
    println!("class,name,pseudo_labels,threshold");
    for (i, (n, t)) in counts.iter().zip(&tau).enumerate() {
        println!("{},{},{n},{t:.4}", i + 1, train.catalog.name(i + 1));
    }
    if let Some(e) = state.log.epochs.last() {
        println!("validation at iteration {}: {}", e.iteration, headline(&e.report));
    }
    Ok(())
}

pub fn eval_cmd(config: &RunConfig) -> Result<()> {
    config.pretrain.validate()?;
    let path = config.model.clone().unwrap_or_else(|| config.pretrained_path());
    let params = ModelParams::load(&path)?;
    let data = load_split(config, config.eval_split)?;
    let ks = &config.selftrain.k_values;
    let report = evaluate(&params, &data, ks, Exec::default())?;
    let stem = path.file_stem().map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    ensure_dir(&config.log_dir)?;
    let mut echo = config.echo();
    echo.push(("model".into(), path.display().to_string()));
    report.summary_table(&echo).write(&config.log_dir.join(format!("eval-{stem}.csv")))?;
    report
        .per_class_table(&data.catalog, &echo)
        .write(&config.log_dir.join(format!("eval-{stem}-per-class.csv")))?;
    print!("{}", format_results(&[(stem.as_str(), &report)]));
    Ok(())
}

pub fn audit_cmd(config: &RunConfig) -> Result<()> {
    let path = config
        .assignments
        .clone()
        .unwrap_or_else(|| config.log_dir.join(format!("{}-assignments.csv", config.run_name())));
    let log = assignments_from_table(&Table::read(&path)?)?;
    let train = load_split(config, Split::Train)?;
    let audit = audit_pseudo_labels(&log, &train)?;
    let mut echo = config.echo();
    echo.push(("assignments".into(), path.display().to_string()));
    let table = audit.to_table(&train.catalog, &echo);
    ensure_dir(&config.log_dir)?;
    table.write(&config.log_dir.join(format!("audit-{}.csv", config.run_name())))?;
    print!("{}", Table { echo: Vec::new(), ..table }.render());
    Ok(())
}

/// One adaptive-threshold run per `(alpha_inc, alpha_dec)` grid cell.
pub fn sweep_cmd(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let pretrained = ModelParams::load(&config.pretrained_path())?;
    let train = load_split(config, Split::Train)?;
    let val = load_split(config, Split::Val)?;
    let data = load_split(config, config.eval_split)?;
    let ks = &config.selftrain.k_values;
    let mut cols = vec!["alpha_inc".to_string(), "alpha_dec".to_string()];
    cols.extend(report_columns(ks));
    let mut table = Table::new(cols).with_echo(&config.echo());
    let grid = &config.sweep_grid;
    let mut heat = vec![vec![0.0; grid.len()]; grid.len()];
    for (i, &a_inc) in grid.iter().enumerate() {
        for (j, &a_dec) in grid.iter().enumerate() {
            let st = SelfTrainConfig {
                policy: PolicyKind::Catm,
                alpha_inc: a_inc,
                alpha_dec: a_dec,
                ..config.selftrain.clone()
            };
            let state = run(&pretrained, &train, Some(&val), &st, Exec::default())?;
            let report = evaluate(&state.params, &data, ks, Exec::default())?;
            heat[i][j] = *report.f.last().unwrap();
            let mut row = vec![a_inc.to_string(), a_dec.to_string()];
            row.extend(report.summary_cells());
            table.push(row);
        }
    }
    ensure_dir(&config.log_dir)?;
    table.write(&config.log_dir.join("sweep.csv"))?;
    let k = ks.last().unwrap();
    println!("F@{k} by alpha_inc (rows) and alpha_dec (columns)");
    print!("{:>9}", "");
    for a in grid {
        print!(" {a:>6.2}");
    }
    println!();
    for (a, row) in grid.iter().zip(&heat) {
        print!("{a:>9.2}");
        for f in row {
            print!(" {f:>6.2}");
        }
        println!();
    }
    Ok(())
}

pub fn show_config(config: &RunConfig) -> Result<()> {
    for (k, v) in config.echo() {
        println!("{k} = {v}");
    }
    Ok(())
}
