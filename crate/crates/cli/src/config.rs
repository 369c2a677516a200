//! Run configuration: every generator, pretraining and self-training field
//! plus artifact paths, loaded from a `key = value` file with overrides.

use std::fs;
use std::path::{Path, PathBuf};

use pseudorel::classifier::TrainConfig;
use pseudorel::error::{Error, Result};
use pseudorel::label_space::Split;
use pseudorel::preset;
use pseudorel::selftrain::{PolicyKind, SelfTrainConfig};
use pseudorel::synthgen::GeneratorConfig;
use pseudorel::textio::parse_field;

/// Keys that configure both training phases at once.
const SHARED: [&str; 3] = ["k_values", "reweight", "oversample"];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub pretrain: TrainConfig,
    pub selftrain: SelfTrainConfig,
    pub data_dir: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub log_dir: PathBuf,
    /// Model evaluated by `eval`; defaults to the pretrained checkpoint.
    pub model: Option<PathBuf>,
    /// Assignment log read by `audit`; defaults to the current policy's log.
    pub assignments: Option<PathBuf>,
    pub eval_split: Split,
    /// Self-training state is written every this many iterations.
    pub checkpoint_every: u64,
    /// Momentum rates tried for both directions by `sweep`.
    pub sweep_grid: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generator: GeneratorConfig::default(),
            pretrain: TrainConfig::default(),
            selftrain: SelfTrainConfig::default(),
            data_dir: "data".into(),
            checkpoint_dir: "checkpoints".into(),
            log_dir: "logs".into(),
            model: None,
            assignments: None,
            eval_split: Split::Test,
            checkpoint_every: 250,
            sweep_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

fn parse_split(v: &str) -> Result<Split> {
    match v.trim() {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::config("eval_split", format!("unknown split `{other}`"))),
    }
}

fn parse_grid(v: &str) -> Result<Vec<f64>> {
    let grid: Vec<f64> = v
        .split([' ', ','])
        .filter(|t| !t.is_empty())
        .map(|t| parse_field("sweep_grid", t))
        .collect::<Result<_>>()?;
    if grid.is_empty() || grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::config("sweep_grid", "need one or more values in [0, 1]"));
    }
    Ok(grid)
}

impl RunConfig {
    /// The committed benchmark configuration.
    pub fn benchmark() -> Self {
        RunConfig {
            generator: preset::generator(),
            pretrain: preset::pretrain(),
            selftrain: preset::selftrain(PolicyKind::Catm),
            ..RunConfig::default()
        }
    }

    /// Applies one override. Keys may be written in kebab-case.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let key = key.as_str();
        if SHARED.contains(&key) {
            self.pretrain.set(key, value)?;
            self.selftrain.set(key, value)?;
            return Ok(());
        }
        if self.generator.set(key, value)? || self.pretrain.set(key, value)? || self.selftrain.set(key, value)? {
            return Ok(());
        }
        let path = || PathBuf::from(value.trim());
        match key {
            "data_dir" => self.data_dir = path(),
            "checkpoint_dir" => self.checkpoint_dir = path(),
            "log_dir" => self.log_dir = path(),
            "model" => self.model = Some(path()),
            "assignments" => self.assignments = Some(path()),
            "eval_split" => self.eval_split = parse_split(value)?,
            "checkpoint_every" => self.checkpoint_every = parse_field(key, value)?,
            "sweep_grid" => self.sweep_grid = parse_grid(value)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        Ok(())
    }

    /// Applies a `key = value` file; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path)?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("{}:{}", path.display(), n + 1), "expected `key = value`"))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies `--key value` / `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<()> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let Some(flag) = arg.strip_prefix("--") else {
                return Err(Error::config(arg.as_str(), "expected a `--key value` override"));
            };
            match flag.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| Error::config(flag, "override is missing its value"))?;
                    self.set(flag, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.pretrain.validate()?;
        self.selftrain.validate()?;
        if self.checkpoint_every == 0 {
            return Err(Error::config("checkpoint_every", "must be positive"));
        }
        Ok(())
    }

    /// Every resolved key, generator first; shared keys appear once.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        for (k, v) in self.generator.echo().into_iter().chain(self.pretrain.echo()).chain(self.selftrain.echo()) {
            if !out.iter().any(|(seen, _)| *seen == k) {
                out.push((k, v));
            }
        }
        out.extend([
            ("data_dir".into(), self.data_dir.display().to_string()),
            ("checkpoint_dir".into(), self.checkpoint_dir.display().to_string()),
            ("log_dir".into(), self.log_dir.display().to_string()),
            ("eval_split".into(), self.eval_split.name().into()),
            ("checkpoint_every".into(), self.checkpoint_every.to_string()),
        ]);
        out
    }

    pub fn pretrained_path(&self) -> PathBuf {
        self.checkpoint_dir.join("pretrained.params")
    }

    /// Artifact name stem for the configured self-training policy.
    pub fn run_name(&self) -> String {
        format!("selftrain-{}", self.selftrain.policy.tag())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_round_trips_through_set() {
        let mut src = RunConfig::benchmark();
        src.set("alpha-inc", "0.6").unwrap();
        src.set("use_gsl", "true").unwrap();
        src.set("beta", "0.5").unwrap();
        let mut dst = RunConfig::default();
        for (k, v) in src.echo() {
            dst.set(&k, &v).unwrap();
        }
        assert_eq!(dst, src);
    }

    #[test]
    fn shared_keys_reach_both_phases() {
        let mut c = RunConfig::default();
        c.set("oversample", "true").unwrap();
        c.set("k-values", "1 3").unwrap();
        assert!(c.pretrain.oversample && c.selftrain.oversample);
        assert_eq!(c.selftrain.k_values, [1, 3]);
        assert_eq!(c.pretrain.k_values, [1, 3]);
    }

    #[test]
    fn unknown_key_names_the_field() {
        let err = RunConfig::default().set("alpha_up", "1").unwrap_err();
        assert!(err.to_string().contains("alpha_up"));
        assert!(err.is_validation());
    }

    #[test]
    fn overrides_accept_both_forms() {
        let mut c = RunConfig::default();
        let args: Vec<String> = ["--alpha-inc", "0.2", "--policy=fixed-class"].map(String::from).to_vec();
        c.apply_overrides(&args).unwrap();
        assert_eq!(c.selftrain.alpha_inc, 0.2);
        assert_eq!(c.selftrain.policy, PolicyKind::FixedClass);
        assert!(c.apply_overrides(&["--seed".to_string()]).is_err());
    }

    #[test]
    fn config_file_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "# benchmark tweaks\nn_scenes = 50  # small\n\nlearning_rate=0.2\n").unwrap();
        let mut c = RunConfig::default();
        c.apply_file(&path).unwrap();
        assert_eq!(c.generator.n_scenes, 50);
        assert_eq!(c.selftrain.learning_rate, 0.2);
        fs::write(&path, "n_scenes 50\n").unwrap();
        assert!(c.apply_file(&path).is_err());
    }
}
