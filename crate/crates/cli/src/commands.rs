//! The `generate`, `train`, `sweep`, `eval` and `verify` subcommands as
//! library functions. Each writes its artifacts under a directory named by the
//! configuration fingerprint and returns what it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lw_core::consistency::{run_suite, CertificationConfig, ConsistencyReport, DerivedForm, SuiteConfig};
use lw_core::data::{load_idx, load_partial_csv, save_partial_csv};
use lw_core::train::{accuracy, confusion, EpochMetrics};
use lw_core::{Dataset, Network, PartialLabelSet};
use sha2::{Digest, Sha256};

use crate::config::{fingerprint, ExperimentConfig};
use crate::pipeline::{load_corpus, metrics_csv, run_seed, timing_csv, RunResult};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn config_file(cfg: &ExperimentConfig) -> String {
    format!("# fingerprint={}\n{}", cfg.fingerprint(), cfg.normalized())
}

/// SHA-256 of the generation matrix as little-endian `f64`s, row-major.
pub fn matrix_hash(model: &lw_core::GenerationModel) -> String {
    let mut h = Sha256::new();
    for y in 0..model.num_classes() {
        for q in model.row(y) {
            h.update(q.to_le_bytes());
        }
    }
    h.update([model.reject_full() as u8]);
    hex::encode(h.finalize())
}

fn first_batch_hash(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for i in indices {
        h.update((*i as u64).to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub struct GenerateOutput {
    pub dir: PathBuf,
    pub corpora: Vec<PathBuf>,
    /// Mean candidate-set size per seed.
    pub mean_set_sizes: Vec<f64>,
}

/// Writes `corpus-seed<s>.csv` (plus `test-seed<s>.csv` when the source has
/// a test split, with singleton candidate sets) and a manifest per seed.
pub fn generate(cfg: &ExperimentConfig) -> Result<GenerateOutput> {
    let dir = cfg.run_dir();
    let fp = cfg.fingerprint();
    write(&dir.join("config.txt"), config_file(cfg))?;
    let mut corpora = Vec::new();
    let mut mean_set_sizes = Vec::new();
    for &seed in &cfg.seeds {
        let corpus = load_corpus(cfg, seed)?;
        let path = dir.join(format!("corpus-seed{seed}.csv"));
        save_partial_csv(&corpus.train, &path).with_context(|| format!("writing {}", path.display()))?;
        if let Some(test) = &corpus.test {
            if let Some(labels) = test.true_labels() {
                let k = test.num_classes();
                let singletons = labels
                    .iter()
                    .map(|&y| PartialLabelSet::singleton(y, k))
                    .collect::<lw_core::Result<Vec<_>>>()?;
                let test = test.clone().with_partial_masks(singletons)?;
                save_partial_csv(&test, dir.join(format!("test-seed{seed}.csv")))?;
            }
        }
        let masks = corpus.train.partial_masks().expect("corpus has candidate sets");
        let k = corpus.train.num_classes();
        let mut histogram = vec![0usize; k + 1];
        for m in masks {
            histogram[m.len()] += 1;
        }
        let mean = masks.iter().map(|m| m.len() as f64).sum::<f64>() / masks.len().max(1) as f64;
        let mut manifest = format!(
            "fingerprint = {fp}\nseed = {seed}\ninstances = {}\nclasses = {k}\nmodel_matrix_sha256 = {}\nmean_set_size = {mean}\n",
            masks.len(),
            corpus.generation.as_ref().map_or_else(|| "none".to_string(), matrix_hash),
        );
        manifest.push_str("# set_size,count\n");
        for (size, count) in histogram.iter().enumerate().skip(1) {
            manifest.push_str(&format!("{size},{count}\n"));
        }
        write(&dir.join(format!("manifest-seed{seed}.txt")), manifest)?;
        corpora.push(path);
        mean_set_sizes.push(mean);
    }
    Ok(GenerateOutput {
        dir,
        corpora,
        mean_set_sizes,
    })
}

pub struct TrainOutput {
    pub dir: PathBuf,
    pub runs: Vec<RunResult>,
}

fn write_run(dir: &Path, fp: &str, run: &RunResult) -> Result<()> {
    let seed_dir = dir.join(format!("seed-{}", run.seed));
    write(&seed_dir.join("metrics.csv"), metrics_csv(fp, run))?;
    write(&seed_dir.join("timing.csv"), timing_csv(fp, run))?;
    let batch: Vec<String> = run.first_batch.iter().map(usize::to_string).collect();
    write(&seed_dir.join("first_batch.txt"), format!("# fingerprint={fp}\n{}\n", batch.join(",")))?;
    let mut ckpt = Vec::new();
    run.network.write_checkpoint(&mut ckpt)?;
    write(&seed_dir.join("model.bin"), ckpt)
}

fn train_into(cfg: &ExperimentConfig, dir: &Path, quiet: bool) -> Result<Vec<RunResult>> {
    let fp = cfg.fingerprint();
    write(&dir.join("config.txt"), config_file(cfg))?;
    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        let run = run_seed(cfg, seed, |m: &EpochMetrics| {
            if !quiet {
                eprintln!(
                    "[{fp} seed {seed}] epoch {:>3}  lr {:.3e}  risk {:.6}  train_acc {}  val_acc {}",
                    m.epoch,
                    m.learning_rate,
                    m.mean_risk,
                    fmt_opt(m.train_accuracy),
                    fmt_opt(m.val_accuracy)
                );
            }
        })?;
        write_run(dir, &fp, &run)?;
        runs.push(run);
    }
    let mut summary = format!("# fingerprint={fp}\nseed,test_accuracy,final_train_accuracy,final_val_accuracy\n");
    for r in &runs {
        let last = r.metrics.last();
        summary.push_str(&format!(
            "{},{},{},{}\n",
            r.seed,
            opt(r.test_accuracy),
            opt(last.and_then(|m| m.train_accuracy)),
            opt(last.and_then(|m| m.val_accuracy))
        ));
    }
    write(&dir.join("summary.csv"), summary)?;
    Ok(runs)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

/// Trains every seed; artifacts go to `output_dir/<fingerprint>/seed-<s>/`.
pub fn train(cfg: &ExperimentConfig, quiet: bool) -> Result<TrainOutput> {
    let dir = cfg.run_dir();
    let runs = train_into(cfg, &dir, quiet)?;
    Ok(TrainOutput { dir, runs })
}

/// One `(α, β)` setting of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub label: String,
    pub alpha: f64,
    pub beta: f64,
}

impl Setting {
    pub fn betas(alpha: f64, betas: &[f64]) -> Vec<Setting> {
        betas
            .iter()
            .map(|&beta| Setting {
                label: format!("beta={beta}"),
                alpha,
                beta,
            })
            .collect()
    }

    /// Candidate term only, non-candidate term only, both.
    pub fn ablation() -> Vec<Setting> {
        [("alpha=0,beta=1", 0.0, 1.0), ("alpha=1,beta=0", 1.0, 0.0), ("alpha=1,beta=1", 1.0, 1.0)]
            .into_iter()
            .map(|(l, alpha, beta)| Setting {
                label: l.to_string(),
                alpha,
                beta,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettingSummary {
    pub setting: Setting,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

pub struct SweepOutput {
    pub dir: PathBuf,
    pub summaries: Vec<SettingSummary>,
    /// `first_batch[setting][seed]`.
    pub first_batches: Vec<Vec<Vec<usize>>>,
}

/// Paired runs: every setting uses the same seeds, hence the same data,
/// candidate sets, initialization and shuffles.
pub fn sweep(cfg: &ExperimentConfig, settings: &[Setting], quiet: bool) -> Result<SweepOutput> {
    if settings.is_empty() {
        bail!("sweep needs at least one setting");
    }
    let mut desc = cfg.normalized();
    for s in settings {
        desc.push_str(&format!("sweep = {},{},{}\n", s.label, s.alpha, s.beta));
    }
    let fp = fingerprint(&desc);
    let dir = cfg.output_dir.join(format!("sweep-{fp}"));
    write(&dir.join("sweep.txt"), format!("# fingerprint={fp}\n{desc}"))?;
    let mut summaries = Vec::new();
    let mut first_batches = Vec::new();
    let mut paired = format!("# fingerprint={fp}\nseed,setting,alpha,beta,accuracy,first_batch_sha256\n");
    for s in settings {
        let mut run_cfg = cfg.clone();
        run_cfg.alpha = s.alpha;
        run_cfg.beta = s.beta;
        run_cfg.validate()?;
        let sub = dir.join(s.label.replace([',', '='], "_"));
        let runs = train_into(&run_cfg, &sub, quiet)?;
        let mut accs = Vec::new();
        for r in &runs {
            let acc = r.headline_accuracy().unwrap_or(f64::NAN);
            paired.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.seed,
                s.label.replace(',', ";"),
                s.alpha,
                s.beta,
                acc,
                first_batch_hash(&r.first_batch)
            ));
            accs.push(acc);
        }
        let (mean, std) = mean_std(&accs);
        first_batches.push(runs.into_iter().map(|r| r.first_batch).collect());
        summaries.push(SettingSummary {
            setting: s.clone(),
            accuracies: accs,
            mean,
            std,
        });
    }
    let mut summary = format!("# fingerprint={fp}\nsetting,alpha,beta,seeds,mean_accuracy,std_accuracy\n");
    for s in &summaries {
        summary.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.setting.label.replace(',', ";"),
            s.setting.alpha,
            s.setting.beta,
            s.accuracies.len(),
            s.mean,
            s.std
        ));
    }
    write(&dir.join("summary.csv"), summary)?;
    write(&dir.join("paired.csv"), paired)?;
    Ok(SweepOutput {
        dir,
        summaries,
        first_batches,
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Where `eval` reads its labeled data from.
pub enum EvalData {
    Csv(PathBuf),
    Idx { images: PathBuf, labels: PathBuf },
}

pub struct EvalOutput {
    pub accuracy: f64,
    pub instances: usize,
    pub confusion: Vec<Vec<usize>>,
    pub confusion_path: PathBuf,
}

pub fn eval(checkpoint: &Path, data: &EvalData, out_dir: &Path) -> Result<EvalOutput> {
    let bytes = fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let net = Network::read_checkpoint(&bytes[..])?;
    let ds: Dataset = match data {
        EvalData::Csv(p) => load_partial_csv(p, Some(net.num_classes())).with_context(|| format!("loading {}", p.display()))?,
        EvalData::Idx { images, labels } => load_idx(images, labels)?,
    };
    if ds.dim() != net.input_dim() {
        bail!(
            "architecture mismatch: checkpoint expects {} features, data has {}",
            net.input_dim(),
            ds.dim()
        );
    }
    if ds.num_classes() > net.num_classes() {
        bail!(
            "architecture mismatch: checkpoint scores {} classes, data has labels up to {}",
            net.num_classes(),
            ds.num_classes() - 1
        );
    }
    let acc = accuracy(&net, &ds)?.context("evaluation data has no true labels")?;
    let counts = confusion(&net, &ds)?;
    let mut csv = String::from("true_label");
    for p in 0..counts.len() {
        csv.push_str(&format!(",pred_{p}"));
    }
    csv.push('\n');
    for (y, row) in counts.iter().enumerate() {
        csv.push_str(&y.to_string());
        for c in row {
            csv.push_str(&format!(",{c}"));
        }
        csv.push('\n');
    }
    let confusion_path = out_dir.join("confusion.csv");
    write(&confusion_path, csv)?;
    Ok(EvalOutput {
        accuracy: acc,
        instances: ds.len(),
        confusion: counts,
        confusion_path,
    })
}

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub ks: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub form: DerivedForm,
    pub reject_full: bool,
    pub beta_offset: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            ks: (2..=8).collect(),
            trials: 1000,
            seed: 0,
            form: DerivedForm::Stated,
            reject_full: false,
            beta_offset: 0.0,
        }
    }
}

pub fn verify(opts: &VerifyOptions) -> Result<Vec<ConsistencyReport>> {
    let cfg = SuiteConfig {
        certification: CertificationConfig {
            ks: opts.ks.clone(),
            trials: opts.trials,
            seed: opts.seed,
            form: opts.form,
            reject_full: opts.reject_full,
            beta_offset: opts.beta_offset,
            ..Default::default()
        },
        ..Default::default()
    };
    Ok(run_suite(&cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[1.0]), (1.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ablation_settings() {
        let s = Setting::ablation();
        assert_eq!(s.len(), 3);
        assert_eq!((s[0].alpha, s[0].beta), (0.0, 1.0));
        assert_eq!(Setting::betas(1.0, &[0.0, 2.0])[1].label, "beta=2");
    }
}
