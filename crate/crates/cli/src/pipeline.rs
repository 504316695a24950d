//! Data preparation and single-seed training runs.

use std::time::Instant;

use anyhow::{bail, Context, Result};
use lw_core::data::{load_idx, load_partial_csv, make_gaussian_task, Standardizer};
use lw_core::labelgen::GenerationModel;
use lw_core::losses::LwConfig;
use lw_core::train::{accuracy, train_observed, EpochMetrics};
use lw_core::{Dataset, Network};

use crate::config::{DataSource, ExperimentConfig, Generation, ModelKind};

/// Training corpus with candidate sets, before the validation split.
pub struct Corpus {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub generation: Option<GenerationModel>,
}

pub struct Prepared {
    pub train: Dataset,
    pub val: Option<Dataset>,
    pub test: Option<Dataset>,
}

fn with_classes(ds: Dataset, k: usize) -> Result<Dataset> {
    if ds.num_classes() == k {
        return Ok(ds);
    }
    Ok(Dataset::new(
        ds.features().to_vec(),
        ds.dim(),
        k,
        ds.true_labels().map(<[usize]>::to_vec),
        ds.partial_masks().map(<[_]>::to_vec),
    )?)
}

fn load_source(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<Dataset>)> {
    Ok(match &cfg.data {
        DataSource::Gaussian { k, d, n, test_n, separation, sigma } => {
            let all: Dataset = make_gaussian_task(*k, *d, n + test_n, *separation, *sigma, seed)?;
            let train = all.subset(&(0..*n).collect::<Vec<_>>());
            let test = (*test_n > 0).then(|| all.subset(&(*n..n + test_n).collect::<Vec<_>>()));
            (train, test)
        }
        DataSource::Idx { train_images, train_labels, test_images, test_labels, limit, test_limit } => {
            let mut train: Dataset = load_idx(train_images, train_labels)
                .with_context(|| format!("loading {}", train_images.display()))?;
            if let Some(l) = limit {
                train = train.take(*l);
            }
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => {
                    let mut t: Dataset = load_idx(i, l).with_context(|| format!("loading {}", i.display()))?;
                    if let Some(l) = test_limit {
                        t = t.take(*l);
                    }
                    Some(t)
                }
                (None, None) => None,
                _ => bail!("data.test_images and data.test_labels must be given together"),
            };
            (train, test)
        }
        DataSource::Csv { path, test_path, num_classes } => {
            let train: Dataset =
                load_partial_csv(path, *num_classes).with_context(|| format!("loading {}", path.display()))?;
            let test = match test_path {
                Some(p) => Some(load_partial_csv(p, *num_classes).with_context(|| format!("loading {}", p.display()))?),
                None => None,
            };
            (train, test)
        }
    })
}

pub fn generation_model(cfg: &ExperimentConfig, k: usize) -> Result<Option<GenerationModel>> {
    let model = match &cfg.generation {
        Generation::None => return Ok(None),
        Generation::Uniform { q } => GenerationModel::uniform(k, *q)?,
        Generation::Case { case, q1, q2, q3 } => GenerationModel::case(*case, k, *q1, *q2, *q3)?,
    };
    Ok(Some(model.with_reject_full(cfg.reject_full)?))
}

/// Loads the source, aligns class counts, standardizes if asked and attaches
/// candidate sets (generated from the true labels unless the corpus already
/// has them and generation is `none`).
pub fn load_corpus(cfg: &ExperimentConfig, seed: u64) -> Result<Corpus> {
    let (mut train, mut test) = load_source(cfg, seed)?;
    let k = train.num_classes().max(test.as_ref().map_or(0, Dataset::num_classes));
    train = with_classes(train, k)?;
    test = test.map(|t| with_classes(t, k)).transpose()?;
    if let Some(t) = &test {
        if t.dim() != train.dim() {
            bail!("test features have dimension {}, training features {}", t.dim(), train.dim());
        }
    }
    if cfg.standardize {
        let s = Standardizer::fit(&train);
        s.apply(&mut train)?;
        if let Some(t) = test.as_mut() {
            s.apply(t)?;
        }
    }
    let generation = generation_model(cfg, k)?;
    if let Some(model) = &generation {
        let labels = train
            .true_labels()
            .context("candidate generation needs true labels in the source")?
            .to_vec();
        let masks = model.sample_corpus(&labels, seed)?;
        train = train.with_partial_masks(masks)?;
    } else if train.partial_masks().is_none() {
        bail!("generation.kind = none but the source has no candidate sets");
    }
    Ok(Corpus { train, test, generation })
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let corpus = load_corpus(cfg, seed)?;
    let (train, val) = corpus.train.split(cfg.val_fraction, seed)?;
    Ok(Prepared {
        train,
        val: (!val.is_empty()).then_some(val),
        test: corpus.test,
    })
}

pub fn build_network(model: &ModelKind, d: usize, k: usize, seed: u64) -> Result<Network> {
    let net = match model {
        ModelKind::Linear => Network::linear(d, k)?,
        ModelKind::Mlp { hidden } => Network::mlp(d, hidden, k)?,
    };
    Ok(net.initialized(seed))
}

pub struct RunResult {
    pub seed: u64,
    pub metrics: Vec<EpochMetrics>,
    /// Wall-clock seconds at the end of each epoch.
    pub epoch_seconds: Vec<f64>,
    pub test_accuracy: Option<f64>,
    pub first_batch: Vec<usize>,
    pub network: Network,
}

impl RunResult {
    /// Test accuracy, else the last validation accuracy.
    pub fn headline_accuracy(&self) -> Option<f64> {
        self.test_accuracy
            .or_else(|| self.metrics.last().and_then(|m| m.val_accuracy))
    }
}

/// Trains one seed end to end. `progress` receives each epoch's metrics.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, mut progress: impl FnMut(&EpochMetrics)) -> Result<RunResult> {
    let data = prepare(cfg, seed)?;
    let net = build_network(&cfg.model, data.train.dim(), data.train.num_classes(), seed)?;
    let lw = LwConfig::with_alpha(cfg.alpha, cfg.beta, cfg.surrogate)?;
    let start = Instant::now();
    let mut epoch_seconds = Vec::new();
    let out = train_observed(net, &data.train, data.val.as_ref(), &lw, &cfg.trainer_config(seed), |m, _| {
        epoch_seconds.push(start.elapsed().as_secs_f64());
        progress(m);
    })
    .with_context(|| format!("training seed {seed} (config fingerprint {})", cfg.fingerprint()))?;
    let test_accuracy = match &data.test {
        Some(t) => accuracy(&out.network, t)?,
        None => None,
    };
    Ok(RunResult {
        seed,
        metrics: out.metrics,
        epoch_seconds,
        test_accuracy,
        first_batch: out.first_batch,
        network: out.network,
    })
}

/// The per-epoch metrics file. Contains no timing, so identical
/// configurations give identical bytes.
pub fn metrics_csv(fingerprint: &str, run: &RunResult) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = format!("# fingerprint={fingerprint} seed={}\n", run.seed);
    out.push_str("epoch,lr,mean_risk,train_accuracy,val_accuracy\n");
    for m in &run.metrics {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch,
            m.learning_rate,
            m.mean_risk,
            opt(m.train_accuracy),
            opt(m.val_accuracy)
        ));
    }
    if let Some(acc) = run.test_accuracy {
        out.push_str(&format!("# test_accuracy={acc}\n"));
    }
    out
}

pub fn timing_csv(fingerprint: &str, run: &RunResult) -> String {
    let mut out = format!("# fingerprint={fingerprint} seed={}\nepoch,wall_clock_seconds\n", run.seed);
    for (m, s) in run.metrics.iter().zip(&run.epoch_seconds) {
        out.push_str(&format!("{},{s:.6}\n", m.epoch));
    }
    out
}
