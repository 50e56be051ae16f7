//! Run configuration: flat TOML with dotted keys, e.g.
//!
//! ```toml
//! task = "fc-mnist"
//! sampler = "sa"
//! seed = 3
//! annealer.n_reads = 10
//! train.beta = 2.0
//! ```
//!
//! Every key is optional; unset keys take task-dependent defaults. Unknown
//! keys are rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use ising_ep::anneal::{AnnealSchedule, SamplerConfig};
use ising_ep::deterministic::{Derivative, DetConfig};
use ising_ep::eqprop::TrainConfig;
use ising_ep::ising::Range;
use ising_ep::networks::{ConvArchitecture, FcArchitecture};

/// A configuration problem; the CLI exits with status 2 on these.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

type Cfg<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    FcMnist,
    ConvPatterns,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::FcMnist => "fc-mnist",
            Task::ConvPatterns => "conv-patterns",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerKind {
    Sa,
    BruteForce,
    Deterministic,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Sa => "sa",
            SamplerKind::BruteForce => "bruteforce",
            SamplerKind::Deterministic => "deterministic",
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "task",
    "sampler",
    "seed",
    "out",
    "epochs",
    "checkpoint_every",
    "data.dir",
    "data.train_per_class",
    "data.test_per_class",
    "data.patterns",
    "annealer.t_hot",
    "annealer.t_hot_factor",
    "annealer.t_cold",
    "annealer.n_sweeps",
    "annealer.reverse_fraction",
    "annealer.n_reads",
    "annealer.seed",
    "train.beta",
    "train.lr_w",
    "train.lr_b",
    "train.skip_nudge",
    "train.clip",
    "train.conv_sign",
    "fc.n_hidden",
    "fc.spins_per_class",
    "fc.input_scale",
    "fc.chip_scale",
    "chip.j_min",
    "chip.j_max",
    "chip.h_min",
    "chip.h_max",
    "chip.chain_strength",
    "conv.conv_scale",
    "conv.class_scale",
    "conv.input_bias",
    "conv.pool_coef",
    "det.t_free",
    "det.k_nudge",
    "det.dt",
    "det.gated_nudge",
    "det.derivative",
];

/// Fully resolved settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub out: PathBuf,
    pub epochs: usize,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    pub data_dir: PathBuf,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// `bars` or `diagonals` for the conv task.
    pub patterns: String,
    /// Explicit start temperature; otherwise `t_hot_factor` times the
    /// largest parameter of the first training problem.
    pub t_hot: Option<f64>,
    pub t_hot_factor: f64,
    pub t_cold: f64,
    pub n_sweeps: usize,
    pub reverse_fraction: f64,
    pub n_reads: usize,
    pub annealer_seed: u64,
    pub beta: f64,
    pub lr_w: f64,
    pub lr_b: f64,
    pub skip_nudge: bool,
    pub clip: bool,
    pub conv_sign: f64,
    pub n_hidden: usize,
    pub spins_per_class: usize,
    pub input_scale: f64,
    pub chip_scale: f64,
    pub j_min: f64,
    pub j_max: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub chain_strength: f64,
    pub conv_scale: f64,
    pub class_scale: f64,
    pub input_bias: f64,
    pub pool_coef: f64,
    pub t_free: usize,
    pub k_nudge: usize,
    pub dt: f64,
    pub gated_nudge: bool,
    pub derivative: Derivative,
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other.clone());
            }
        }
    }
}

struct Raw(BTreeMap<String, toml::Value>);

impl Raw {
    fn float(&self, key: &str, default: f64) -> Cfg<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Float(v)) => Ok(*v),
            Some(toml::Value::Integer(v)) => Ok(*v as f64),
            Some(v) => Err(ConfigError(format!("{key}: expected a number, got {v}"))),
        }
    }

    fn opt_float(&self, key: &str) -> Cfg<Option<f64>> {
        self.0.get(key).map(|_| self.float(key, 0.0)).transpose()
    }

    fn int(&self, key: &str, default: u64) -> Cfg<u64> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Integer(v)) if *v >= 0 => Ok(*v as u64),
            Some(v) => Err(ConfigError(format!(
                "{key}: expected a non-negative integer, got {v}"
            ))),
        }
    }

    fn size(&self, key: &str, default: usize) -> Cfg<usize> {
        Ok(self.int(key, default as u64)? as usize)
    }

    fn boolean(&self, key: &str, default: bool) -> Cfg<bool> {
        match self.0.get(key) {
            None => Ok(default),
            Some(toml::Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(ConfigError(format!(
                "{key}: expected true or false, got {v}"
            ))),
        }
    }

    fn string(&self, key: &str, default: &str) -> Cfg<String> {
        match self.0.get(key) {
            None => Ok(default.to_string()),
            Some(toml::Value::String(s)) => Ok(s.clone()),
            Some(v) => Err(ConfigError(format!("{key}: expected a string, got {v}"))),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Cfg<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError(e.message().to_string()))?;
        let mut flat = BTreeMap::new();
        flatten("", &table, &mut flat);
        if let Some(k) = flat.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown key `{k}`")));
        }
        Self::resolve(&Raw(flat))
    }

    pub fn load(path: &Path) -> Cfg<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn resolve(r: &Raw) -> Cfg<Self> {
        let task = match r.string("task", "fc-mnist")?.as_str() {
            "fc-mnist" => Task::FcMnist,
            "conv-patterns" => Task::ConvPatterns,
            other => return Err(ConfigError(format!("task: unknown task {other:?}"))),
        };
        let sampler = match r.string("sampler", "sa")?.as_str() {
            "sa" => SamplerKind::Sa,
            "bruteforce" => SamplerKind::BruteForce,
            "deterministic" => SamplerKind::Deterministic,
            other => return Err(ConfigError(format!("sampler: unknown sampler {other:?}"))),
        };
        if task == Task::ConvPatterns && sampler == SamplerKind::Deterministic {
            return Err(ConfigError(
                "sampler: the deterministic network only runs the fc-mnist task".into(),
            ));
        }
        let conv = task == Task::ConvPatterns;
        let det = sampler == SamplerKind::Deterministic;
        let seed = r.int("seed", 0)?;
        let (beta, lr_w, lr_b) = match (conv, det) {
            (true, _) => (5.0, 0.1, 0.1),
            (false, true) => (2.0, 0.1, 0.01),
            (false, false) => (2.0, 1e-2, 1e-3),
        };
        let (j_lim, chain) = if conv { (1.0, 2.0) } else { (2.0, 1.0) };
        let cfg = RunConfig {
            task,
            sampler,
            seed,
            out: PathBuf::from(r.string("out", "runs/latest")?),
            epochs: r.size("epochs", 50)?,
            checkpoint_every: r.size("checkpoint_every", 0)?,
            data_dir: PathBuf::from(r.string("data.dir", "data/mnist")?),
            train_per_class: r.size("data.train_per_class", 100)?,
            test_per_class: r.size("data.test_per_class", 10)?,
            patterns: r.string("data.patterns", "bars")?,
            t_hot: r.opt_float("annealer.t_hot")?,
            t_hot_factor: r.float("annealer.t_hot_factor", 2.0)?,
            t_cold: r.float("annealer.t_cold", SamplerConfig::<f64>::DEFAULT_T_COLD)?,
            n_sweeps: r.size("annealer.n_sweeps", SamplerConfig::<f64>::DEFAULT_SWEEPS)?,
            reverse_fraction: r.float(
                "annealer.reverse_fraction",
                SamplerConfig::<f64>::DEFAULT_REVERSE_FRACTION,
            )?,
            n_reads: r.size("annealer.n_reads", SamplerConfig::<f64>::DEFAULT_READS)?,
            annealer_seed: r.int("annealer.seed", seed)?,
            beta: r.float("train.beta", beta)?,
            lr_w: r.float("train.lr_w", lr_w)?,
            lr_b: r.float("train.lr_b", lr_b)?,
            skip_nudge: r.boolean("train.skip_nudge", true)?,
            clip: r.boolean("train.clip", true)?,
            conv_sign: r.float("train.conv_sign", -1.0)?,
            n_hidden: r.size("fc.n_hidden", 120)?,
            spins_per_class: r.size("fc.spins_per_class", 4)?,
            input_scale: r.float("fc.input_scale", 0.5)?,
            chip_scale: r.float("fc.chip_scale", 0.25)?,
            j_min: r.float("chip.j_min", -j_lim)?,
            j_max: r.float("chip.j_max", j_lim)?,
            h_min: r.float("chip.h_min", -4.0)?,
            h_max: r.float("chip.h_max", 4.0)?,
            chain_strength: r.float("chip.chain_strength", chain)?,
            conv_scale: r.float("conv.conv_scale", 0.1)?,
            class_scale: r.float("conv.class_scale", 0.1)?,
            input_bias: r.float("conv.input_bias", 4.0)?,
            pool_coef: r.float("conv.pool_coef", 0.25)?,
            t_free: r.size("det.t_free", 30)?,
            k_nudge: r.size("det.k_nudge", 50)?,
            dt: r.float("det.dt", 0.5)?,
            gated_nudge: r.boolean("det.gated_nudge", false)?,
            derivative: {
                let name = r.string("det.derivative", "mixed")?;
                Derivative::parse(&name).ok_or_else(|| {
                    ConfigError(format!(
                        "det.derivative: expected unit, mixed or indicator, got {name:?}"
                    ))
                })?
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Cfg<()> {
        let err = |m: String| Err(ConfigError(m));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return err(format!("train.beta must be positive, got {}", self.beta));
        }
        if !(self.lr_w > 0.0 && self.lr_b > 0.0) {
            return err("train.lr_w and train.lr_b must be positive".into());
        }
        if self.conv_sign != 1.0 && self.conv_sign != -1.0 {
            return err(format!(
                "train.conv_sign must be 1 or -1, got {}",
                self.conv_sign
            ));
        }
        if self.j_min > self.j_max || self.h_min > self.h_max {
            return err("chip ranges must have min <= max".into());
        }
        if !matches!(self.patterns.as_str(), "bars" | "diagonals") {
            return err(format!(
                "data.patterns must be bars or diagonals, got {:?}",
                self.patterns
            ));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return err("data.*_per_class must be positive".into());
        }
        self.sampler_config(1.0)
            .validate()
            .map_err(|e| ConfigError(format!("annealer: {e}")))?;
        self.det_config()
            .validate()
            .map_err(|e| ConfigError(format!("det: {e}")))?;
        self.fc_arch()
            .validate()
            .map_err(|e| ConfigError(format!("fc: {e}")))?;
        if self.task == Task::ConvPatterns {
            self.conv_arch()
                .validate()
                .map_err(|e| ConfigError(format!("conv: {e}")))?;
        }
        Ok(())
    }

    pub fn j_range(&self) -> Range<f64> {
        Range::new(self.j_min, self.j_max)
    }

    pub fn h_range(&self) -> Range<f64> {
        Range::new(self.h_min, self.h_max)
    }

    pub fn fc_arch(&self) -> FcArchitecture<f64> {
        FcArchitecture {
            n_inputs: 784,
            n_hidden: self.n_hidden,
            n_classes: 10,
            spins_per_class: self.spins_per_class,
            input_scale: self.input_scale,
            chip_scale: self.chip_scale,
            j_range: self.j_range(),
            h_range: self.h_range(),
        }
    }

    pub fn conv_arch(&self) -> ConvArchitecture<f64> {
        ConvArchitecture {
            pool_coef: self.pool_coef,
            input_bias_magnitude: self.input_bias,
            conv_scale: self.conv_scale,
            class_scale: self.class_scale,
            chain_strength: self.chain_strength,
            j_range: self.j_range(),
            h_range: self.h_range(),
            ..ConvArchitecture::default()
        }
    }

    pub fn sampler_config(&self, t_hot: f64) -> SamplerConfig<f64> {
        SamplerConfig {
            n_reads: self.n_reads,
            seed: self.annealer_seed,
            schedule_free: AnnealSchedule::forward(t_hot, self.t_cold, self.n_sweeps),
            schedule_nudge: AnnealSchedule::reverse(
                t_hot,
                self.t_cold,
                self.n_sweeps,
                self.reverse_fraction,
            ),
        }
    }

    pub fn train_config(&self) -> TrainConfig<f64> {
        TrainConfig {
            beta: self.beta,
            lr_w: self.lr_w,
            lr_b: self.lr_b,
            epochs: self.epochs,
            skip_nudge: self.skip_nudge,
            clip: self.clip,
            seed: self.seed,
        }
    }

    pub fn det_config(&self) -> DetConfig<f64> {
        DetConfig {
            t_free: self.t_free,
            k_nudge: self.k_nudge,
            dt: self.dt,
            beta: self.beta,
            lr_w: self.lr_w,
            lr_b: self.lr_b,
            epochs: self.epochs,
            skip_nudge: self.skip_nudge,
            gated_nudge: self.gated_nudge,
            derivative: self.derivative,
            seed: self.seed,
        }
    }

    /// Every setting as a config file that reproduces this run.
    pub fn to_toml(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Resolved settings keyed exactly like the config file.
    pub fn entries(&self) -> Vec<(&'static str, toml::Value)> {
        use toml::Value::{Boolean as B, Float as F, Integer as I, String as S};
        let p = |p: &Path| S(p.display().to_string());
        let mut v = vec![
            ("task", S(self.task.name().into())),
            ("sampler", S(self.sampler.name().into())),
            ("seed", I(self.seed as i64)),
            ("out", p(&self.out)),
            ("epochs", I(self.epochs as i64)),
            ("checkpoint_every", I(self.checkpoint_every as i64)),
            ("data.dir", p(&self.data_dir)),
            ("data.train_per_class", I(self.train_per_class as i64)),
            ("data.test_per_class", I(self.test_per_class as i64)),
            ("data.patterns", S(self.patterns.clone())),
            ("annealer.t_hot_factor", F(self.t_hot_factor)),
            ("annealer.t_cold", F(self.t_cold)),
            ("annealer.n_sweeps", I(self.n_sweeps as i64)),
            ("annealer.reverse_fraction", F(self.reverse_fraction)),
            ("annealer.n_reads", I(self.n_reads as i64)),
            ("annealer.seed", I(self.annealer_seed as i64)),
            ("train.beta", F(self.beta)),
            ("train.lr_w", F(self.lr_w)),
            ("train.lr_b", F(self.lr_b)),
            ("train.skip_nudge", B(self.skip_nudge)),
            ("train.clip", B(self.clip)),
            ("train.conv_sign", F(self.conv_sign)),
            ("fc.n_hidden", I(self.n_hidden as i64)),
            ("fc.spins_per_class", I(self.spins_per_class as i64)),
            ("fc.input_scale", F(self.input_scale)),
            ("fc.chip_scale", F(self.chip_scale)),
            ("chip.j_min", F(self.j_min)),
            ("chip.j_max", F(self.j_max)),
            ("chip.h_min", F(self.h_min)),
            ("chip.h_max", F(self.h_max)),
            ("chip.chain_strength", F(self.chain_strength)),
            ("conv.conv_scale", F(self.conv_scale)),
            ("conv.class_scale", F(self.class_scale)),
            ("conv.input_bias", F(self.input_bias)),
            ("conv.pool_coef", F(self.pool_coef)),
            ("det.t_free", I(self.t_free as i64)),
            ("det.k_nudge", I(self.k_nudge as i64)),
            ("det.dt", F(self.dt)),
            ("det.gated_nudge", B(self.gated_nudge)),
            ("det.derivative", S(self.derivative.name().into())),
        ];
        if let Some(t) = self.t_hot {
            v.push(("annealer.t_hot", F(t)));
        }
        v
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_task() {
        let fc = RunConfig::default();
        assert_eq!((fc.beta, fc.lr_w, fc.lr_b), (2.0, 1e-2, 1e-3));
        assert_eq!((fc.j_max, fc.h_max), (2.0, 4.0));
        let conv = RunConfig::parse("task = \"conv-patterns\"").unwrap();
        assert_eq!(
            (conv.beta, conv.lr_w, conv.chain_strength, conv.j_max),
            (5.0, 0.1, 2.0, 1.0)
        );
        let det = RunConfig::parse("sampler = \"deterministic\"").unwrap();
        assert_eq!((det.lr_w, det.lr_b), (0.1, 0.01));
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = RunConfig::parse("annealer.t_hto = 3.0").unwrap_err();
        assert!(e.0.contains("annealer.t_hto"), "{e}");
        let e = RunConfig::parse("[annealer]\nt_hto = 3.0").unwrap_err();
        assert!(e.0.contains("annealer.t_hto"), "{e}");
    }

    #[test]
    fn zero_beta_is_a_config_error() {
        assert!(RunConfig::parse("train.beta = 0").is_err());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg =
            RunConfig::parse("task = \"conv-patterns\"\nseed = 4\nannealer.t_hot = 3.5").unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
