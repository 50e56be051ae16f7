//! Commands behind the `ising-ep` binary.
//!
//! A training run writes into its output directory:
//!
//! - `manifest.json`: tool version, resolved settings, start temperature and dataset summary
//! - `config.toml`: the resolved settings; `train --config` on it repeats the run
//! - `metrics.csv`: one row per epoch, flushed as each epoch ends
//! - `timing.csv`: wall-clock seconds per epoch, kept apart so that `metrics.csv` is reproducible byte for byte
//! - `checkpoint-init.txt`, `checkpoint.txt` and optional `checkpoint-epoch<N>.txt`

pub mod config;

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use ising_ep::anneal::{energy_distribution, AnnealSchedule, EnergyDistribution};
use ising_ep::checkpoint::Checkpoint;
use ising_ep::data::{diagonal_patterns_3x3, load_mnist, make_subset, patterns_3x3, Dataset};
use ising_ep::deterministic::{det_evaluate, det_train, Derivative, DetModel};
use ising_ep::eqprop::{
    auto_t_hot, evaluate, train, Annealer, BruteForce, ConvModel, EpModel, EpochMetrics, FcModel,
    Sampler,
};
use ising_ep::ising::IsingProblem;
use ising_ep::networks::{ConvMachine, ConvParameters, FcParameters};

pub use config::{ConfigError, RunConfig, SamplerKind, Task};

pub const METRICS_HEADER: &str = "epoch,train_acc,test_acc,train_mse,test_mse,nudges_skipped";

/// Files a run may create; `--force` removes exactly these.
const OWNED_PREFIXES: &[&str] = &[
    "manifest.json",
    "config.toml",
    "metrics.csv",
    "timing.csv",
    "settled.csv",
    "checkpoint",
    "eval.json",
    "energy_",
    "problem.txt",
];

/// Creates `dir`, refusing to reuse a non-empty one unless `force`.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let entries: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        if !entries.is_empty() && !force {
            bail!(
                "output directory {} is not empty; pass --force to overwrite",
                dir.display()
            );
        }
        for path in entries {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            if path.is_file() && OWNED_PREFIXES.iter().any(|p| name.starts_with(p)) {
                fs::remove_file(&path).with_context(|| format!("removing {}", path.display()))?;
            }
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Train and test sets of the configured task.
pub fn load_datasets(cfg: &RunConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
    match cfg.task {
        Task::FcMnist => {
            let (train, test) = load_mnist(&cfg.data_dir)
                .with_context(|| format!("loading MNIST from {}", cfg.data_dir.display()))?;
            Ok(make_subset(
                &train,
                &test,
                cfg.train_per_class,
                cfg.test_per_class,
            )?)
        }
        Task::ConvPatterns => {
            let d = match cfg.patterns.as_str() {
                "diagonals" => diagonal_patterns_3x3(),
                _ => patterns_3x3(),
            };
            Ok((d.clone(), d))
        }
    }
}

pub fn metrics_row(m: &EpochMetrics) -> String {
    format!(
        "{},{},{},{},{},{}",
        m.epoch, m.train_acc, m.test_acc, m.train_mse, m.test_mse, m.nudges_skipped
    )
}

struct RunFiles {
    dir: PathBuf,
    metrics: File,
    timing: File,
    settled: Option<File>,
    checkpoint_every: usize,
}

impl RunFiles {
    fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let mut metrics = File::create(dir.join("metrics.csv"))?;
        writeln!(metrics, "{METRICS_HEADER}")?;
        let mut timing = File::create(dir.join("timing.csv"))?;
        writeln!(timing, "epoch,wall_seconds")?;
        let settled = if cfg.sampler == SamplerKind::Deterministic {
            let mut f = File::create(dir.join("settled.csv"))?;
            writeln!(f, "epoch,free_settled_fraction")?;
            Some(f)
        } else {
            None
        };
        Ok(RunFiles {
            dir: dir.to_path_buf(),
            metrics,
            timing,
            settled,
            checkpoint_every: cfg.checkpoint_every,
        })
    }

    fn epoch(&mut self, m: &EpochMetrics, ck: impl FnOnce() -> Checkpoint<f64>) -> Result<()> {
        writeln!(self.metrics, "{}", metrics_row(m))?;
        self.metrics.flush()?;
        writeln!(self.timing, "{},{}", m.epoch, m.wall_seconds)?;
        self.timing.flush()?;
        if self.checkpoint_every > 0 && m.epoch.is_multiple_of(self.checkpoint_every) {
            let mut ck = ck();
            ck.meta.insert("epoch".into(), m.epoch.to_string());
            ck.save(&self.dir.join(format!("checkpoint-epoch{}.txt", m.epoch)))?;
        }
        Ok(())
    }
}

fn with_meta(
    mut ck: Checkpoint<f64>,
    cfg: &RunConfig,
    t_hot: f64,
    epoch: usize,
) -> Checkpoint<f64> {
    ck.meta.insert("sampler".into(), cfg.sampler.name().into());
    ck.meta.insert("t_hot".into(), t_hot.to_string());
    ck.meta.insert("epoch".into(), epoch.to_string());
    if cfg.task == Task::ConvPatterns {
        ck.meta
            .insert("conv_sign".into(), cfg.conv_sign.to_string());
        ck.meta.insert("patterns".into(), cfg.patterns.clone());
    }
    if cfg.sampler == SamplerKind::Deterministic {
        ck.meta
            .insert("derivative".into(), cfg.derivative.name().into());
    }
    ck
}

fn start_temperature(cfg: &RunConfig, first: &IsingProblem<f64>) -> f64 {
    cfg.t_hot
        .unwrap_or_else(|| auto_t_hot(first, cfg.t_hot_factor, cfg.t_cold))
}

fn write_manifest(
    dir: &Path,
    command: &str,
    cfg: &RunConfig,
    extra: serde_json::Value,
) -> Result<()> {
    let settings: serde_json::Map<String, serde_json::Value> = cfg
        .entries()
        .into_iter()
        .map(|(k, v)| Ok((k.to_string(), serde_json::to_value(v)?)))
        .collect::<Result<_>>()?;
    let manifest = json!({
        "tool": "ising-ep",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": settings,
        "run": extra,
    });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    Ok(())
}

fn dataset_summary(train: &Dataset<f64>, test: &Dataset<f64>) -> serde_json::Value {
    json!({
        "train_size": train.len(),
        "test_size": test.len(),
        "train_class_counts": train.class_counts(),
        "test_class_counts": test.class_counts(),
    })
}

pub struct TrainOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub t_hot: f64,
    pub out: PathBuf,
}

fn run_ep<M: EpModel<f64>>(
    model: &mut M,
    sampler: &impl Sampler<f64>,
    sets: (&Dataset<f64>, &Dataset<f64>),
    cfg: &RunConfig,
    files: &mut RunFiles,
    snapshot: impl Fn(&M) -> Checkpoint<f64>,
) -> Result<Vec<EpochMetrics>> {
    let metrics = train(
        model,
        sets.0,
        sets.1,
        sampler,
        &cfg.train_config(),
        |m, model| {
            files
                .epoch(m, || snapshot(model))
                .map_err(|e| ising_ep::Error::Format(e.to_string()))
        },
    )?;
    Ok(metrics)
}

/// Trains per `cfg`, writing everything into `cfg.out`.
pub fn cmd_train(cfg: &RunConfig, force: bool) -> Result<TrainOutcome> {
    let (train_set, test_set) = load_datasets(cfg)?;
    prepare_out_dir(&cfg.out, force)?;
    let dir = cfg.out.clone();
    let summary = dataset_summary(&train_set, &test_set);
    let first = train_set
        .images
        .first()
        .ok_or_else(|| anyhow!("empty training set"))?;
    let init_seed = cfg.seed;

    match (cfg.task, cfg.sampler) {
        (Task::FcMnist, SamplerKind::Deterministic) => {
            let arch = cfg.fc_arch();
            let mut model = DetModel {
                params: FcParameters::init(&arch, init_seed),
                arch,
            };
            let t_hot = 0.0;
            write_manifest(&dir, "train", cfg, json!({"t_hot": null, "data": summary}))?;
            let snap = |m: &DetModel<f64>, epoch| {
                with_meta(
                    Checkpoint::fc(&m.arch, &m.params, cfg.seed),
                    cfg,
                    t_hot,
                    epoch,
                )
            };
            snap(&model, 0).save(&dir.join("checkpoint-init.txt"))?;
            let mut files = RunFiles::create(&dir, cfg)?;
            let history = det_train(
                &mut model,
                &train_set,
                &test_set,
                &cfg.det_config(),
                |e, m| {
                    let r = files
                        .epoch(&e.metrics, || snap(m, e.metrics.epoch))
                        .and_then(|_| {
                            let f = files.settled.as_mut().expect("deterministic run");
                            writeln!(f, "{},{}", e.metrics.epoch, e.settled_fraction)?;
                            Ok(f.flush()?)
                        });
                    r.map_err(|e| ising_ep::Error::Format(e.to_string()))
                },
            )?;
            snap(&model, cfg.epochs).save(&dir.join("checkpoint.txt"))?;
            Ok(TrainOutcome {
                metrics: history.into_iter().map(|e| e.metrics).collect(),
                t_hot,
                out: dir,
            })
        }
        (Task::FcMnist, kind) => {
            let arch = cfg.fc_arch();
            let mut model = FcModel {
                params: FcParameters::init(&arch, init_seed),
                arch,
            };
            let t_hot = start_temperature(cfg, &model.build(first)?.problem);
            write_manifest(&dir, "train", cfg, json!({"t_hot": t_hot, "data": summary}))?;
            let snap = |m: &FcModel<f64>, epoch| {
                with_meta(
                    Checkpoint::fc(&m.arch, &m.params, cfg.seed),
                    cfg,
                    t_hot,
                    epoch,
                )
            };
            snap(&model, 0).save(&dir.join("checkpoint-init.txt"))?;
            let mut files = RunFiles::create(&dir, cfg)?;
            let sets = (&train_set, &test_set);
            let metrics = match kind {
                SamplerKind::BruteForce => {
                    run_ep(&mut model, &BruteForce, sets, cfg, &mut files, |m| {
                        snap(m, 0)
                    })?
                }
                _ => {
                    let sampler = Annealer::new(cfg.sampler_config(t_hot))?;
                    run_ep(&mut model, &sampler, sets, cfg, &mut files, |m| snap(m, 0))?
                }
            };
            snap(&model, cfg.epochs).save(&dir.join("checkpoint.txt"))?;
            Ok(TrainOutcome {
                metrics,
                t_hot,
                out: dir,
            })
        }
        (Task::ConvPatterns, kind) => {
            let machine = ConvMachine::new(cfg.conv_arch())?;
            let mut model = ConvModel {
                params: ConvParameters::init(&machine.arch, init_seed),
                machine,
                sign: cfg.conv_sign,
            };
            let t_hot = start_temperature(cfg, &model.build(first)?.problem);
            write_manifest(&dir, "train", cfg, json!({"t_hot": t_hot, "data": summary}))?;
            let snap = |m: &ConvModel<f64>, epoch| {
                with_meta(
                    Checkpoint::conv(&m.machine.arch, &m.params, cfg.seed),
                    cfg,
                    t_hot,
                    epoch,
                )
            };
            snap(&model, 0).save(&dir.join("checkpoint-init.txt"))?;
            let mut files = RunFiles::create(&dir, cfg)?;
            let sets = (&train_set, &test_set);
            let metrics = match kind {
                SamplerKind::BruteForce => {
                    run_ep(&mut model, &BruteForce, sets, cfg, &mut files, |m| {
                        snap(m, 0)
                    })?
                }
                _ => {
                    let sampler = Annealer::new(cfg.sampler_config(t_hot))?;
                    run_ep(&mut model, &sampler, sets, cfg, &mut files, |m| snap(m, 0))?
                }
            };
            snap(&model, cfg.epochs).save(&dir.join("checkpoint.txt"))?;
            Ok(TrainOutcome {
                metrics,
                t_hot,
                out: dir,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A checkpoint turned back into something that can be evaluated.
pub enum Loaded {
    Fc(FcModel<f64>),
    Det(DetModel<f64>),
    Conv(ConvModel<f64>),
}

pub struct LoadedCheckpoint {
    pub model: Loaded,
    pub checkpoint: Checkpoint<f64>,
    /// Start temperature stored at training time (or overridden by config).
    pub t_hot: f64,
}

pub fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<LoadedCheckpoint> {
    let ck = Checkpoint::<f64>::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))?;
    let stored_t_hot = ck.meta_value::<f64>("t_hot");
    let model = match ck.kind.as_str() {
        "fc" => {
            let (arch, params) = ck.to_fc()?;
            if ck.meta.get("sampler").map(String::as_str) == Some("deterministic") {
                Loaded::Det(DetModel { arch, params })
            } else {
                Loaded::Fc(FcModel { arch, params })
            }
        }
        "conv" => {
            let (arch, params) = ck.to_conv()?;
            let sign = ck.meta_value("conv_sign").unwrap_or(cfg.conv_sign);
            Loaded::Conv(ConvModel {
                machine: ConvMachine::new(arch)?,
                params,
                sign,
            })
        }
        other => bail!("unknown checkpoint kind {other:?}"),
    };
    let t_hot = cfg.t_hot.or(stored_t_hot).unwrap_or(1.0);
    Ok(LoadedCheckpoint {
        model,
        checkpoint: ck,
        t_hot,
    })
}

impl LoadedCheckpoint {
    fn task(&self) -> Task {
        match self.model {
            Loaded::Conv(_) => Task::ConvPatterns,
            _ => Task::FcMnist,
        }
    }

    /// Dataset settings from `cfg`; task and pattern set from the checkpoint.
    pub fn datasets(&self, cfg: &RunConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
        let patterns = self
            .checkpoint
            .meta
            .get("patterns")
            .cloned()
            .unwrap_or_else(|| cfg.patterns.clone());
        load_datasets(&RunConfig {
            task: self.task(),
            patterns,
            ..cfg.clone()
        })
    }

    /// Ising problem of one example (not available for the deterministic net).
    pub fn problem(&self, x: &[f64]) -> Result<IsingProblem<f64>> {
        Ok(match &self.model {
            Loaded::Fc(m) => m.build(x)?.problem,
            Loaded::Conv(m) => m.build(x)?.problem,
            Loaded::Det(m) => {
                FcModel {
                    arch: m.arch.clone(),
                    params: m.params.clone(),
                }
                .build(x)?
                .problem
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mse: f64,
    pub n_examples: usize,
}

pub fn cmd_eval(
    checkpoint: &Path,
    cfg: &RunConfig,
    split: Split,
    out: Option<&Path>,
    force: bool,
) -> Result<EvalReport> {
    let loaded = load_checkpoint(checkpoint, cfg)?;
    let (train_set, test_set) = loaded.datasets(cfg)?;
    let data = match split {
        Split::Train => &train_set,
        Split::Test => &test_set,
    };
    let seed = cfg.seed;
    let sa = || Annealer::new(cfg.sampler_config(loaded.t_hot));
    let (accuracy, mse) = match (&loaded.model, cfg.sampler) {
        (Loaded::Det(m), _) => {
            let mut det = cfg.det_config();
            if let Some(d) = loaded.checkpoint.meta.get("derivative") {
                det.derivative = Derivative::parse(d)
                    .ok_or_else(|| anyhow!("checkpoint has unknown derivative {d:?}"))?;
            }
            let (a, e, _) = det_evaluate(m, data, &det)?;
            (a, e)
        }
        (Loaded::Fc(m), SamplerKind::BruteForce) => evaluate(m, data, &BruteForce, seed)?,
        (Loaded::Conv(m), SamplerKind::BruteForce) => evaluate(m, data, &BruteForce, seed)?,
        (Loaded::Fc(m), _) => evaluate(m, data, &sa()?, seed)?,
        (Loaded::Conv(m), _) => evaluate(m, data, &sa()?, seed)?,
    };
    let report = EvalReport {
        accuracy,
        mse,
        n_examples: data.len(),
    };
    if let Some(dir) = out {
        prepare_out_dir(dir, force)?;
        let record = json!({
            "checkpoint": checkpoint.display().to_string(),
            "split": if split == Split::Train { "train" } else { "test" },
            "n_examples": report.n_examples,
            "accuracy": accuracy,
            "mse": mse,
            "seed": seed,
            "t_hot": loaded.t_hot,
        });
        fs::write(
            dir.join("eval.json"),
            serde_json::to_string_pretty(&record)? + "\n",
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct EnergyReport {
    pub before: EnergyDistribution,
    pub after: EnergyDistribution,
    pub t_hot: f64,
}

/// Energy distributions of one test image under two checkpoints, sampled with
/// the same forward schedule and seeds. The schedule starts from the first
/// checkpoint's temperature.
pub fn cmd_energy_dist(
    before: &Path,
    after: &Path,
    cfg: &RunConfig,
    image_index: usize,
    n_samples: usize,
    out: Option<&Path>,
    force: bool,
) -> Result<EnergyReport> {
    let a = load_checkpoint(before, cfg)?;
    let b = load_checkpoint(after, cfg)?;
    if !a.checkpoint.same_architecture(&b.checkpoint) {
        bail!(
            "checkpoints {} and {} have different architectures",
            before.display(),
            after.display()
        );
    }
    let (_, test_set) = a.datasets(cfg)?;
    let x = test_set.images.get(image_index).ok_or_else(|| {
        anyhow!(
            "image index {image_index} out of range ({} test images)",
            test_set.len()
        )
    })?;
    let schedule = AnnealSchedule::forward(a.t_hot, cfg.t_cold, cfg.n_sweeps);
    let dist = |l: &LoadedCheckpoint| -> Result<EnergyDistribution> {
        Ok(energy_distribution(
            &l.problem(x)?,
            n_samples,
            &schedule,
            cfg.seed,
        )?)
    };
    let report = EnergyReport {
        before: dist(&a)?,
        after: dist(&b)?,
        t_hot: a.t_hot,
    };
    if let Some(dir) = out {
        prepare_out_dir(dir, force)?;
        for (name, d) in [("before", &report.before), ("after", &report.after)] {
            let mut f = File::create(dir.join(format!("energy_{name}_hist.csv")))?;
            writeln!(f, "bin_lo,bin_hi,count")?;
            let edges = d.histogram.bin_edges();
            for (i, c) in d.histogram.counts.iter().enumerate() {
                writeln!(f, "{},{},{}", edges[i], edges[i + 1], c)?;
            }
            let mut f = File::create(dir.join(format!("energy_{name}_samples.csv")))?;
            writeln!(f, "sample,energy")?;
            for (i, e) in d.energies.iter().enumerate() {
                writeln!(f, "{i},{e}")?;
            }
        }
        let summary = json!({
            "before": before.display().to_string(),
            "after": after.display().to_string(),
            "image_index": image_index,
            "n_samples": n_samples,
            "t_hot": report.t_hot,
            "mean_before": report.before.mean,
            "std_before": report.before.std,
            "mean_after": report.after.mean,
            "std_after": report.after.std,
            "std_after_lt_before": report.after.std < report.before.std,
        });
        fs::write(
            dir.join("energy_summary.json"),
            serde_json::to_string_pretty(&summary)? + "\n",
        )?;
    }
    Ok(report)
}

/// Problem of one example in the text format, written to `out` or returned.
pub fn cmd_dump_problem(
    checkpoint: &Path,
    cfg: &RunConfig,
    split: Split,
    image_index: usize,
) -> Result<String> {
    let loaded = load_checkpoint(checkpoint, cfg)?;
    let (train_set, test_set) = loaded.datasets(cfg)?;
    let data = if split == Split::Train {
        &train_set
    } else {
        &test_set
    };
    let x = data.images.get(image_index).ok_or_else(|| {
        anyhow!(
            "image index {image_index} out of range ({} images)",
            data.len()
        )
    })?;
    Ok(loaded.problem(x)?.to_text())
}
