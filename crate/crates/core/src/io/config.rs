//! TOML run configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{Metric, ModelSpec, SweepSpec, SyntheticTask, TrainConfig};
use crate::optimizer::OptimConfig;
use crate::strategies::{Method, PruneScope};

/// Environment variable that replaces the configured seeds with one seed.
pub const SEED_ENV: &str = "TROPIPRUNE_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    pub fractions: Vec<f64>,
    #[serde(default = "all_scopes")]
    pub scopes: Vec<PruneScope>,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub metric: Metric,
}

fn all_scopes() -> Vec<PruneScope> {
    PruneScope::ALL.to_vec()
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_bundle")]
    pub bundle: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_bundle() -> String {
    "model.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            bundle: default_bundle(),
        }
    }
}

impl OutputConfig {
    pub fn bundle_path(&self) -> PathBuf {
        self.dir.join(&self.bundle)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used in result rows; defaults to the task kind.
    #[serde(default)]
    pub name: Option<String>,
    pub seeds: Vec<u64>,
    pub task: SyntheticTask,
    pub model: ModelSpec,
    pub train: TrainConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    pub prune: PruneConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = super::read_text(path).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(other.to_string()),
        };
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        self.task.validate().map_err(wrap)?;
        if self.model.d == 0 || self.model.r == 0 || self.model.layers == 0 {
            return Err(Error::Config("model d, r and layers must be positive".into()));
        }
        self.train.validate().map_err(wrap)?;
        self.optim.validate().map_err(wrap)?;
        let p = &self.prune;
        if p.fractions.is_empty() || p.scopes.is_empty() || p.methods.is_empty() {
            return Err(Error::Config("prune fractions, scopes and methods must not be empty".into()));
        }
        if let Some(f) = p.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("fraction {f} outside [0, 1]")));
        }
        if self.output.bundle.is_empty() {
            return Err(Error::Config("output bundle name is empty".into()));
        }
        Ok(())
    }

    /// Replace the seeds with the value of [`SEED_ENV`] when it is set.
    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    pub fn task_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.task.kind.name().to_string())
    }

    pub fn sweep_spec(&self, seed: u64) -> SweepSpec {
        SweepSpec {
            task: self.task_name(),
            fractions: self.prune.fractions.clone(),
            scopes: self.prune.scopes.clone(),
            methods: self.prune.methods.clone(),
            optim: self.optim.clone(),
            metric: self.prune.metric,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seeds = [3]

[task]
kind = "blobs"
n_train = 200
n_dev = 50
n_test = 50
input_dim = 4
classes = 3
noise = 0.3

[model]
d = 16
r = 4

[train]
steps = 10
lr = 0.05
batch = 16

[prune]
fractions = [0.0, 0.5]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.optim, OptimConfig::default());
        assert_eq!(c.prune.scopes, PruneScope::ALL.to_vec());
        assert_eq!(c.prune.methods, Method::ALL.to_vec());
        assert_eq!(c.prune.metric, Metric::Accuracy);
        assert_eq!(c.output.bundle_path(), PathBuf::from("out/model.json"));
        assert_eq!(c.task_name(), "blobs");
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINIMAL.replace("n_dev = 50\n", "");
        match RunConfig::from_toml(&text) {
            Err(Error::Config(m)) => assert!(m.contains("n_dev"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_values() {
        for (from, to) in [
            ("fractions = [0.0, 0.5]", "fractions = [0.0, 1.5]"),
            ("fractions = [0.0, 0.5]", "fractions = []"),
            ("seeds = [3]", "seeds = []"),
            ("lr = 0.05", "lr = -1.0"),
            ("kind = \"blobs\"", "kind = \"spirals\""),
            ("r = 4", "r = 0"),
            ("noise = 0.3", "noise = 0.3\nbogus = 1"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(matches!(RunConfig::from_toml(&text), Err(Error::Config(_))), "{to}");
        }
        assert!(matches!(RunConfig::from_toml("not toml ="), Err(Error::Config(_))));
    }

    #[test]
    fn seed_override() {
        let mut c = RunConfig::from_toml(MINIMAL).unwrap();
        c.apply_seed_override(None).unwrap();
        assert_eq!(c.seeds, vec![3]);
        c.apply_seed_override(Some("42")).unwrap();
        assert_eq!(c.seeds, vec![42]);
        assert!(c.apply_seed_override(Some("x")).is_err());
    }

    #[test]
    fn load_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, MINIMAL.replace("[model]", "[modle]")).unwrap();
        match RunConfig::load(&p) {
            Err(Error::Config(m)) => assert!(m.contains("c.toml")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::load(&dir.path().join("none.toml")), Err(Error::Config(_))));
    }
}
