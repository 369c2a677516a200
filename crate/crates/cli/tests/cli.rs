use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "--n-scenes", "80",
    "--entities-min", "4",
    "--entities-max", "8",
    "--pretrain-epochs", "3",
    "--max-iterations", "24",
    "--checkpoint-every", "7",
    "--quantile", "0.1",
];

fn pseudorel(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let mut args = vec![cmd.to_string()];
    for (k, sub) in [("--data-dir", "data"), ("--checkpoint-dir", "ckpt"), ("--log-dir", "logs")] {
        args.push(k.into());
        args.push(dir.join(sub).display().to_string());
    }
    args.extend(SMALL.iter().map(|s| s.to_string()));
    args.extend(extra.iter().map(|s| s.to_string()));
    Command::new(env!("CARGO_BIN_EXE_pseudorel")).args(&args).output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn data_rows(csv: &str) -> Vec<String> {
    csv.lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

#[test]
fn gen_is_deterministic_and_self_describing() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let table = ok(pseudorel(a.path(), "gen", &["--seed", "5"]));
    ok(pseudorel(b.path(), "gen", &["--seed", "5"]));
    assert!(table.contains("train_relations"));
    for f in ["train.jsonl", "val.jsonl", "test.jsonl", "catalog.csv", "manifest.csv"] {
        assert_eq!(read(a.path().join("data").join(f)), read(b.path().join("data").join(f)), "{f}");
    }
    assert!(read(a.path().join("data/manifest.csv")).contains("# zipf_exponent = 1.5"));
}

#[test]
fn invalid_fraction_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = pseudorel(dir.path(), "gen", &["--annotated-fraction", "1.5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("annotated_fraction"));
    let out = pseudorel(dir.path(), "gen", &["--annotated-fraction", "half"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    ok(pseudorel(dir.path(), "gen", &[]));
    let out = pseudorel(dir.path(), "selftrain", &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&dir.path().join("ckpt/pretrained.params").display().to_string()), "{err}");
}

#[test]
fn io_failure_is_a_runtime_abort() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pseudorel"))
        .args(["gen", "--n-scenes", "20", "--data-dir"])
        .arg(blocker.join("sub"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn full_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pseudorel(d, "gen", &[]));
    ok(pseudorel(d, "pretrain", &[]));
    assert!(read(d.join("ckpt/pretrained.params")).starts_with("# n_scenes = 80"));
    assert!(read(d.join("logs/pretrain.csv")).contains("epoch,loss,R@2"));

    let summary = ok(pseudorel(d, "selftrain", &["--policy", "fixed-class"]));
    assert!(summary.starts_with("class,name,pseudo_labels,threshold"));
    for suffix in ["iterations", "epochs", "thresholds", "assignments"] {
        let csv = read(d.join(format!("logs/selftrain-fixed-class-{suffix}.csv")));
        assert!(csv.contains("# policy = fixed-class"), "{suffix}");
    }
    let iterations = read(d.join("logs/selftrain-fixed-class-iterations.csv"));
    assert_eq!(data_rows(&iterations).len(), 1 + 24);

    // rerunning picks up the finished state and rewrites identical outputs
    let again = pseudorel(d, "selftrain", &["--policy", "fixed-class"]);
    assert!(String::from_utf8_lossy(&again.stderr).contains("resuming from iteration 24"));
    assert_eq!(ok(again), summary);
    assert_eq!(read(d.join("logs/selftrain-fixed-class-iterations.csv")), iterations);

    let audit = ok(pseudorel(d, "audit", &["--policy", "fixed-class"]));
    assert!(audit.lines().next().unwrap().contains("precision"));
    assert!(audit.lines().any(|l| l.starts_with("all,")));

    let model = d.join("ckpt/selftrain-fixed-class.params");
    let table = ok(pseudorel(d, "eval", &["--model", model.to_str().unwrap()]));
    let header = table.lines().next().unwrap();
    assert!(header.starts_with("model") && header.contains("R@8") && header.contains("F@2"));
    assert!(table.lines().nth(1).unwrap().starts_with("selftrain-fixed-class"));
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pseudorel(d, "gen", &[]));
    ok(pseudorel(d, "pretrain", &[]));
    let full = ok(pseudorel(d, "selftrain", &[]));
    let params = read(d.join("ckpt/selftrain-catm.params"));
    let iterations = read(d.join("logs/selftrain-catm-iterations.csv"));

    // a shorter run in a sibling directory stands in for an interrupted one
    let short = tempfile::tempdir().unwrap();
    let sd = short.path();
    fs::create_dir_all(sd.join("ckpt")).unwrap();
    fs::copy(d.join("ckpt/pretrained.params"), sd.join("ckpt/pretrained.params")).unwrap();
    let mut data_arg = vec!["--data-dir".to_string(), d.join("data").display().to_string()];
    data_arg.extend(["--max-iterations", "14"].map(String::from));
    let refs: Vec<&str> = data_arg.iter().map(String::as_str).collect();
    ok(pseudorel(sd, "selftrain", &refs));
    fs::copy(sd.join("ckpt/selftrain-catm.state.json"), d.join("ckpt/selftrain-catm.state.json")).unwrap();

    let out = pseudorel(d, "selftrain", &[]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("resuming from iteration 14"));
    assert_eq!(ok(out), full);
    assert_eq!(read(d.join("ckpt/selftrain-catm.params")), params);
    assert_eq!(read(d.join("logs/selftrain-catm-iterations.csv")), iterations);
}

#[test]
fn zero_iterations_evaluate_like_the_pretrained_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pseudorel(d, "gen", &[]));
    ok(pseudorel(d, "pretrain", &[]));
    let pre = ok(pseudorel(d, "eval", &[]));
    ok(pseudorel(d, "selftrain", &["--max-iterations", "0"]));
    let model = d.join("ckpt/selftrain-catm.params");
    let after = ok(pseudorel(d, "eval", &["--model", model.to_str().unwrap()]));
    let numbers = |s: &str| s.lines().nth(1).unwrap().split_whitespace().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(numbers(&pre), numbers(&after));
}

#[test]
fn sweep_grid_and_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(pseudorel(d, "gen", &[]));
    ok(pseudorel(d, "pretrain", &[]));
    let heat = ok(pseudorel(d, "sweep", &["--sweep-grid", "0,0.5"]));
    assert!(heat.starts_with("F@8"));
    let sweep = read(d.join("logs/sweep.csv"));
    let rows = data_rows(&sweep);
    assert_eq!(rows.len(), 1 + 4);
    assert!(rows[0].starts_with("alpha_inc,alpha_dec,R@2"));

    // a one-cell grid equals the corresponding self-training run
    ok(pseudorel(d, "sweep", &["--sweep-grid", "0.5"]));
    let cell = data_rows(&read(d.join("logs/sweep.csv")))[1].clone();
    assert!(rows.contains(&cell), "cell results depend on grid order");
    ok(pseudorel(d, "selftrain", &["--alpha-inc", "0.5", "--alpha-dec", "0.5"]));
    let model = d.join("ckpt/selftrain-catm.params");
    ok(pseudorel(d, "eval", &["--model", model.to_str().unwrap()]));
    let eval = data_rows(&read(d.join("logs/eval-selftrain-catm.csv")));
    let cells: Vec<&str> = cell.split(',').skip(2).collect();
    let summary: Vec<&str> = eval[1].split(',').collect();
    assert_eq!(cells, summary[..cells.len()]);
}

#[test]
fn config_file_and_overrides_layer() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "alpha_inc = 0.2\nalpha_dec = 0.8\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_pseudorel"))
        .args(["config", "--preset", "benchmark", "--config"])
        .arg(&conf)
        .args(["--alpha-dec", "0.6"])
        .output()
        .unwrap();
    let text = ok(out);
    assert!(text.contains("alpha_inc = 0.2\n"));
    assert!(text.contains("alpha_dec = 0.6\n"));
    assert!(text.contains("entities_min = 20\n"));
}
