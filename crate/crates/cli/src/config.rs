//! Experiment configuration files.
//!
//! Plain `key = value` lines; `#` starts a comment; keys are dotted
//! (`trainer.epochs = 30`). Every key is validated before any work starts and
//! unknown or unused keys are errors.
//!
//! ```text
//! data.source = gaussian         # gaussian | idx | csv
//! data.k = 3
//! data.d = 2
//! data.n = 3000
//! data.test_n = 3000
//! data.separation = 4
//! data.sigma = 1
//! data.val_fraction = 0.1
//! generation.kind = uniform      # none | uniform | case1 | case2 | case3
//! generation.q = 0.3
//! model.kind = linear            # linear | mlp
//! loss.psi = sigmoid             # sigmoid | ramp | cross_entropy
//! loss.beta = 1
//! trainer.epochs = 30
//! seeds = 0,1,2,3,4
//! output.dir = runs
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use lw_core::labelgen::GenerationCase;
use lw_core::losses::{BinaryLoss, Surrogate};
use lw_core::train::WeightRefresh;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Gaussian {
        k: usize,
        d: usize,
        n: usize,
        test_n: usize,
        separation: f64,
        sigma: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: Option<PathBuf>,
        test_labels: Option<PathBuf>,
        limit: Option<usize>,
        test_limit: Option<usize>,
    },
    Csv {
        path: PathBuf,
        test_path: Option<PathBuf>,
        num_classes: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Generation {
    /// Keep the candidate sets already in the corpus.
    None,
    Uniform { q: f64 },
    Case { case: GenerationCase, q1: f64, q2: f64, q3: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Linear,
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerSection {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_halving_period: usize,
    pub weight_refresh: WeightRefresh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub standardize: bool,
    pub val_fraction: f64,
    pub generation: Generation,
    pub reject_full: bool,
    pub model: ModelKind,
    pub alpha: f64,
    pub beta: f64,
    pub surrogate: Surrogate,
    pub trainer: TrainerSection,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

/// Key/value pairs with line numbers; consumed key by key so leftovers can be
/// reported.
struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                bail!("line {}: empty key", i + 1);
            }
            if let Some((prev, _)) = map.insert(key.clone(), (i + 1, value.trim().to_string())) {
                bail!("line {}: duplicate key `{key}` (first set on line {prev})", i + 1);
            }
        }
        Ok(Self { map })
    }

    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("line {line}: `{key}` = {v:?}: {e}")),
        }
    }

    fn or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.get(key)?.ok_or_else(|| anyhow!("missing required key `{key}`"))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: fmt::Display,
    {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => parse_list(&v)
                .map(Some)
                .map_err(|e| anyhow!("line {line}: `{key}`: {e}")),
        }
    }

    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.map.into_iter().next() {
            bail!("line {line}: unknown or unused key `{key}`");
        }
        Ok(())
    }
}

/// Comma-separated values; whitespace is ignored.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| anyhow!("{s:?}: {e}")))
        .collect()
}

fn parse_bool(key: &str, v: Option<String>) -> Result<bool> {
    match v.as_deref() {
        None => Ok(false),
        Some("true") => Ok(true),
        Some("false") => Ok(false),
        Some(other) => bail!("`{key}` must be true or false, got {other:?}"),
    }
}

pub fn parse_surrogate(name: &str) -> Result<Surrogate> {
    Ok(match name {
        "sigmoid" => BinaryLoss::Sigmoid.into(),
        "ramp" => BinaryLoss::Ramp.into(),
        "cross_entropy" | "ce" => Surrogate::CrossEntropy,
        "zero_one" => bail!("the zero-one step loss cannot be trained with gradients"),
        other => bail!("unknown loss.psi {other:?} (sigmoid | ramp | cross_entropy)"),
    })
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut e = Entries::parse(text)?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let source: String = e.or("data.source", "gaussian".to_string())?;
        let data = match source.as_str() {
            "gaussian" => DataSource::Gaussian {
                k: e.or("data.k", 3)?,
                d: e.or("data.d", 2)?,
                n: e.or("data.n", 3000)?,
                test_n: e.or("data.test_n", 3000)?,
                separation: e.or("data.separation", 4.0)?,
                sigma: e.or("data.sigma", 1.0)?,
            },
            "idx" => DataSource::Idx {
                train_images: resolve(e.require("data.train_images")?),
                train_labels: resolve(e.require("data.train_labels")?),
                test_images: e.get("data.test_images")?.map(resolve),
                test_labels: e.get("data.test_labels")?.map(resolve),
                limit: e.get("data.limit")?,
                test_limit: e.get("data.test_limit")?,
            },
            "csv" => DataSource::Csv {
                path: resolve(e.require("data.path")?),
                test_path: e.get("data.test_path")?.map(resolve),
                num_classes: e.get("data.num_classes")?,
            },
            other => bail!("unknown data.source {other:?} (gaussian | idx | csv)"),
        };
        let standardize = parse_bool("data.standardize", e.get("data.standardize")?)?;
        let val_fraction = e.or("data.val_fraction", 0.1)?;

        let kind: String = e.or("generation.kind", "uniform".to_string())?;
        let generation = match kind.as_str() {
            "none" => Generation::None,
            "uniform" => Generation::Uniform { q: e.require("generation.q")? },
            "case1" | "case2" | "case3" => {
                let case = match kind.as_str() {
                    "case1" => GenerationCase::Case1,
                    "case2" => GenerationCase::Case2,
                    _ => GenerationCase::Case3,
                };
                let q1 = e.require("generation.q1")?;
                let (q2, q3) = if case == GenerationCase::Case3 {
                    (e.require("generation.q2")?, e.require("generation.q3")?)
                } else {
                    (0.0, 0.0)
                };
                Generation::Case { case, q1, q2, q3 }
            }
            other => bail!("unknown generation.kind {other:?} (none | uniform | case1 | case2 | case3)"),
        };
        let reject_full = parse_bool("generation.reject_full", e.get("generation.reject_full")?)?;

        let model_kind: String = e.or("model.kind", "linear".to_string())?;
        let model = match model_kind.as_str() {
            "linear" => ModelKind::Linear,
            "mlp" => ModelKind::Mlp {
                hidden: e.list("model.hidden")?.unwrap_or_else(|| vec![64; 4]),
            },
            other => bail!("unknown model.kind {other:?} (linear | mlp)"),
        };

        let alpha = e.or("loss.alpha", 1.0)?;
        let beta = e.or("loss.beta", 1.0)?;
        let surrogate = parse_surrogate(&e.or("loss.psi", "sigmoid".to_string())?)?;

        let refresh: String = e.or("trainer.weight_refresh", "epoch".to_string())?;
        let trainer = TrainerSection {
            learning_rate: e.or("trainer.learning_rate", 0.05)?,
            momentum: e.or("trainer.momentum", 0.9)?,
            weight_decay: e.or("trainer.weight_decay", 1e-4)?,
            batch_size: e.or("trainer.batch_size", 256)?,
            epochs: e.or("trainer.epochs", 30)?,
            lr_halving_period: e.or("trainer.lr_halving_period", 50)?,
            weight_refresh: match refresh.as_str() {
                "epoch" => WeightRefresh::PerEpoch,
                "batch" => WeightRefresh::PerBatch,
                other => bail!("unknown trainer.weight_refresh {other:?} (epoch | batch)"),
            },
        };
        let seeds = e.list("seeds")?.unwrap_or_else(|| vec![0]);
        let output_dir = resolve(e.or("output.dir", PathBuf::from("runs"))?);
        e.finish()?;

        let cfg = Self {
            data,
            standardize,
            val_fraction,
            generation,
            reject_full,
            model,
            alpha,
            beta,
            surrogate,
            trainer,
            seeds,
            output_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let DataSource::Gaussian { k, d, n, sigma, separation, .. } = &self.data {
            if *k < 2 || *d + 1 < *k || *n == 0 {
                bail!("gaussian task needs k ≥ 2, d ≥ k − 1, n > 0 (got k={k}, d={d}, n={n})");
            }
            if !(*sigma >= 0.0 && *separation >= 0.0) {
                bail!("gaussian sigma and separation must be non-negative");
            }
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            bail!("data.val_fraction must be in [0, 1)");
        }
        match &self.generation {
            Generation::Uniform { q } if !(0.0..1.0).contains(q) => bail!("generation.q must be in [0, 1)"),
            Generation::Case { q1, q2, q3, .. } if [q1, q2, q3].iter().any(|q| !(0.0..1.0).contains(*q)) => {
                bail!("generation.q1/q2/q3 must be in [0, 1)")
            }
            _ => {}
        }
        if let ModelKind::Mlp { hidden } = &self.model {
            if hidden.contains(&0) {
                bail!("model.hidden widths must be positive");
            }
        }
        lw_core::losses::LwConfig::with_alpha(self.alpha, self.beta, self.surrogate)?;
        self.trainer_config(0).validate()?;
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        Ok(())
    }

    pub fn trainer_config(&self, seed: u64) -> lw_core::TrainerConfig {
        let t = &self.trainer;
        lw_core::TrainerConfig {
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            epochs: t.epochs,
            lr_halving_period: t.lr_halving_period,
            seed,
            weight_refresh: t.weight_refresh,
        }
    }

    /// Every effective setting as sorted `key = value` lines. Floats use
    /// Rust's shortest round-trip formatting.
    pub fn normalized(&self) -> String {
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        let path = |p: &Path| p.display().to_string();
        match &self.data {
            DataSource::Gaussian { k, d, n, test_n, separation, sigma } => {
                kv.insert("data.source", "gaussian".into());
                kv.insert("data.k", k.to_string());
                kv.insert("data.d", d.to_string());
                kv.insert("data.n", n.to_string());
                kv.insert("data.test_n", test_n.to_string());
                kv.insert("data.separation", separation.to_string());
                kv.insert("data.sigma", sigma.to_string());
            }
            DataSource::Idx { train_images, train_labels, test_images, test_labels, limit, test_limit } => {
                kv.insert("data.source", "idx".into());
                kv.insert("data.train_images", path(train_images));
                kv.insert("data.train_labels", path(train_labels));
                if let (Some(i), Some(l)) = (test_images, test_labels) {
                    kv.insert("data.test_images", path(i));
                    kv.insert("data.test_labels", path(l));
                }
                if let Some(v) = limit {
                    kv.insert("data.limit", v.to_string());
                }
                if let Some(v) = test_limit {
                    kv.insert("data.test_limit", v.to_string());
                }
            }
            DataSource::Csv { path: p, test_path, num_classes } => {
                kv.insert("data.source", "csv".into());
                kv.insert("data.path", path(p));
                if let Some(t) = test_path {
                    kv.insert("data.test_path", path(t));
                }
                if let Some(k) = num_classes {
                    kv.insert("data.num_classes", k.to_string());
                }
            }
        }
        kv.insert("data.standardize", self.standardize.to_string());
        kv.insert("data.val_fraction", self.val_fraction.to_string());
        match &self.generation {
            Generation::None => {
                kv.insert("generation.kind", "none".into());
            }
            Generation::Uniform { q } => {
                kv.insert("generation.kind", "uniform".into());
                kv.insert("generation.q", q.to_string());
            }
            Generation::Case { case, q1, q2, q3 } => {
                let name = match case {
                    GenerationCase::Case1 => "case1",
                    GenerationCase::Case2 => "case2",
                    GenerationCase::Case3 => "case3",
                };
                kv.insert("generation.kind", name.into());
                kv.insert("generation.q1", q1.to_string());
                if *case == GenerationCase::Case3 {
                    kv.insert("generation.q2", q2.to_string());
                    kv.insert("generation.q3", q3.to_string());
                }
            }
        }
        kv.insert("generation.reject_full", self.reject_full.to_string());
        match &self.model {
            ModelKind::Linear => {
                kv.insert("model.kind", "linear".into());
            }
            ModelKind::Mlp { hidden } => {
                kv.insert("model.kind", "mlp".into());
                kv.insert("model.hidden", join(hidden));
            }
        }
        kv.insert("loss.alpha", self.alpha.to_string());
        kv.insert("loss.beta", self.beta.to_string());
        kv.insert("loss.psi", self.surrogate.name().into());
        let t = &self.trainer;
        kv.insert("trainer.learning_rate", t.learning_rate.to_string());
        kv.insert("trainer.momentum", t.momentum.to_string());
        kv.insert("trainer.weight_decay", t.weight_decay.to_string());
        kv.insert("trainer.batch_size", t.batch_size.to_string());
        kv.insert("trainer.epochs", t.epochs.to_string());
        kv.insert("trainer.lr_halving_period", t.lr_halving_period.to_string());
        kv.insert(
            "trainer.weight_refresh",
            match t.weight_refresh {
                WeightRefresh::PerEpoch => "epoch",
                WeightRefresh::PerBatch => "batch",
            }
            .into(),
        );
        kv.insert("seeds", join(&self.seeds));
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::normalized`].
    /// The output directory is not part of it.
    pub fn fingerprint(&self) -> String {
        fingerprint(&self.normalized())
    }

    /// `output_dir/<fingerprint>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.fingerprint())
    }
}

pub fn fingerprint(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/base"))
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = parse("generation.q = 0.3\ntrainer.epochs = 5 # short\nseeds = 1, 2\n").unwrap();
        assert_eq!(cfg.trainer.epochs, 5);
        assert_eq!(cfg.seeds, vec![1, 2]);
        assert_eq!(cfg.generation, Generation::Uniform { q: 0.3 });
        assert_eq!(cfg.output_dir, PathBuf::from("/base/runs"));
        assert!(matches!(cfg.data, DataSource::Gaussian { k: 3, d: 2, .. }));
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(parse("generation.q = 0.3\ntrainer.epoch = 5\n").is_err());
        assert!(parse("generation.q = 0.3\ngeneration.q = 0.4\n").is_err());
        // A key valid for another source is unused here.
        assert!(parse("generation.q = 0.3\ndata.path = x.csv\n").is_err());
        assert!(parse("generation.q = 0.3\nnot a pair\n").is_err());
    }

    #[test]
    fn values_are_validated() {
        assert!(parse("generation.q = 1.0\n").is_err());
        assert!(parse("generation.q = 0.3\ntrainer.momentum = 1\n").is_err());
        assert!(parse("generation.q = 0.3\nloss.psi = hinge\n").is_err());
        assert!(parse("generation.q = 0.3\nloss.beta = -1\n").is_err());
        assert!(parse("generation.q = 0.3\ntrainer.epochs = ten\n").is_err());
        assert!(parse("generation.kind = case3\ngeneration.q1 = 0.5\n").is_err());
        assert!(parse("generation.q = 0.3\nseeds =\n").is_err());
    }

    #[test]
    fn fingerprint_tracks_effective_settings() {
        let a = parse("generation.q = 0.3\n").unwrap();
        let b = parse("# comment\ngeneration.q=0.30\n\nloss.beta = 1.0\n").unwrap();
        let c = parse("generation.q = 0.3\nloss.beta = 2\n").unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 16);
        let reparsed = parse(&a.normalized().replace("data.source = gaussian\n", "")).unwrap();
        assert_eq!(reparsed.fingerprint(), a.fingerprint());
    }

    #[test]
    fn sources_and_models() {
        let cfg = parse(
            "data.source = csv\ndata.path = c.csv\ngeneration.kind = none\nmodel.kind = mlp\nmodel.hidden = 8,8\n",
        )
        .unwrap();
        assert_eq!(
            cfg.data,
            DataSource::Csv {
                path: PathBuf::from("/base/c.csv"),
                test_path: None,
                num_classes: None
            }
        );
        assert_eq!(cfg.model, ModelKind::Mlp { hidden: vec![8, 8] });
        assert!(parse("data.source = idx\ngeneration.q = 0.1\n").is_err());
    }
}
