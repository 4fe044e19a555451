//! Flat `key = value` run configuration with dotted section prefixes.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use risnet_core::baselines::BcdConfig;
use risnet_core::channel::ScenarioConfig;
use risnet_core::precoder::WmmseOptions;
use risnet_core::risnet::{Architecture, RisnetConfig, Variant};
use risnet_core::training::{AdamConfig, TrainConfig};
use risnet_core::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Preset::Paper),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected paper or desk)"
            ))),
        }
    }
}

/// Every accepted key, in the order `--help` lists them.
pub const KEYS: &[&str] = &[
    "scenario.n_bs",
    "scenario.n_ris",
    "scenario.n_users",
    "scenario.rho",
    "scenario.e_tr",
    "scenario.alpha",
    "scenario.seed",
    "scenario.train_samples",
    "scenario.test_samples",
    "risnet.variant",
    "risnet.layers",
    "risnet.branch_dim",
    "risnet.init_seed",
    "train.iterations",
    "train.batch_size",
    "train.learning_rate",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.eval_every",
    "train.checkpoint_every",
    "train.seed",
    "train.clip_grad_norm",
    "wmmse.max_iters",
    "wmmse.tol",
    "bcd.grid_size",
    "bcd.max_sweeps",
    "bcd.tol",
    "bcd.rewmmse",
    "eval.rho",
    "eval.seed",
    "paths.train_data",
    "paths.test_data",
    "paths.checkpoint",
    "paths.train_log",
    "paths.report",
    "paths.series",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub train_data: PathBuf,
    pub test_data: PathBuf,
    pub checkpoint: PathBuf,
    pub train_log: PathBuf,
    pub report: PathBuf,
    pub series: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train_data: "data/train.risd".into(),
            test_data: "data/test.risd".into(),
            checkpoint: "out/model.risp".into(),
            train_log: "out/train_log.csv".into(),
            report: "out/eval.csv".into(),
            series: "out/series.csv".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub scenario: ScenarioConfig,
    pub variant: Variant,
    pub layers: usize,
    /// Unset means the preset's width for the chosen variant.
    pub branch_dim: Option<usize>,
    pub init_seed: u64,
    /// Unset means the preset's iteration count for the chosen variant.
    pub iterations: Option<usize>,
    pub train: TrainConfig,
    pub bcd: BcdConfig,
    pub eval_rho: Vec<f64>,
    pub eval_seed: u64,
    pub paths: Paths,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base_train = TrainConfig {
            adam: AdamConfig::default(),
            wmmse: WmmseOptions::default(),
            ..TrainConfig::default()
        };
        match preset {
            Preset::Paper => Self {
                preset,
                scenario: ScenarioConfig::paper(),
                variant: Variant::Pv,
                layers: 8,
                branch_dim: None,
                init_seed: 0,
                iterations: None,
                train: TrainConfig {
                    batch_size: 512,
                    ..base_train
                },
                bcd: BcdConfig::default(),
                eval_rho: vec![1e11, 5e11, 1e12],
                eval_seed: 0,
                paths: Paths::default(),
            },
            Preset::Desk => Self {
                preset,
                scenario: ScenarioConfig::desk(),
                variant: Variant::Pv,
                layers: 8,
                branch_dim: None,
                init_seed: 0,
                iterations: None,
                train: TrainConfig {
                    batch_size: 64,
                    eval_every: 50,
                    checkpoint_every: 100,
                    ..base_train
                },
                bcd: BcdConfig::desk(),
                eval_rho: vec![10.0, 100.0, 1000.0],
                eval_seed: 0,
                paths: Paths::default(),
            },
        }
    }

    pub fn branch_dim(&self) -> usize {
        self.branch_dim.unwrap_or(match self.variant {
            Variant::Pv => 16,
            Variant::Pi => 8,
        })
    }

    pub fn iterations(&self) -> usize {
        self.iterations.unwrap_or(match (self.preset, self.variant) {
            (Preset::Paper, Variant::Pv) => 500,
            (Preset::Paper, Variant::Pi) => 1000,
            (Preset::Desk, _) => 300,
        })
    }

    pub fn risnet(&self) -> RisnetConfig {
        RisnetConfig {
            arch: Architecture {
                variant: self.variant,
                layers: self.layers,
                n_users: self.scenario.n_users,
                branch_dim: self.branch_dim(),
            },
            init_seed: self.init_seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations(),
            ..self.train.clone()
        }
    }

    /// Scenario with the SNR replaced, for evaluation sweeps.
    pub fn scenario_at(&self, rho: f64) -> ScenarioConfig {
        ScenarioConfig {
            rho,
            ..self.scenario.clone()
        }
    }

    /// Checks every cross-module constraint before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.risnet().arch.validate()?;
        self.train_config().validate()?;
        self.bcd.validate()?;
        if self.eval_rho.is_empty() {
            return Err(Error::Config("eval.rho needs at least one value".into()));
        }
        if let Some(r) = self.eval_rho.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("eval.rho values must be positive, got {r}")));
        }
        Ok(())
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "scenario.n_bs" => self.scenario.n_bs = parse(key, value)?,
            "scenario.n_ris" => self.scenario.n_ris = parse(key, value)?,
            "scenario.n_users" => {
                let u: usize = parse(key, value)?;
                if u > 0 && self.scenario.alpha.len() != u {
                    self.scenario.alpha = vec![1.0 / u as f64; u];
                }
                self.scenario.n_users = u;
            }
            "scenario.rho" => self.scenario.rho = parse(key, value)?,
            "scenario.e_tr" => self.scenario.e_tr = parse(key, value)?,
            "scenario.alpha" => self.scenario.alpha = parse_list(key, value)?,
            "scenario.seed" => self.scenario.seed = parse(key, value)?,
            "scenario.train_samples" => self.scenario.train_samples = parse(key, value)?,
            "scenario.test_samples" => self.scenario.test_samples = parse(key, value)?,
            "risnet.variant" => self.variant = parse(key, value)?,
            "risnet.layers" => self.layers = parse(key, value)?,
            "risnet.branch_dim" => self.branch_dim = Some(parse(key, value)?),
            "risnet.init_seed" => self.init_seed = parse(key, value)?,
            "train.iterations" => self.iterations = Some(parse(key, value)?),
            "train.batch_size" => self.train.batch_size = parse(key, value)?,
            "train.learning_rate" => self.train.adam.learning_rate = parse(key, value)?,
            "train.beta1" => self.train.adam.beta1 = parse(key, value)?,
            "train.beta2" => self.train.adam.beta2 = parse(key, value)?,
            "train.epsilon" => self.train.adam.epsilon = parse(key, value)?,
            "train.eval_every" => self.train.eval_every = parse(key, value)?,
            "train.checkpoint_every" => self.train.checkpoint_every = parse(key, value)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.clip_grad_norm" => {
                self.train.clip_grad_norm = match value {
                    "none" | "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "wmmse.max_iters" => self.train.wmmse.max_iters = parse(key, value)?,
            "wmmse.tol" => self.train.wmmse.tol = parse(key, value)?,
            "bcd.grid_size" => self.bcd.grid_size = parse(key, value)?,
            "bcd.max_sweeps" => self.bcd.max_sweeps = parse(key, value)?,
            "bcd.tol" => self.bcd.tol = parse(key, value)?,
            "bcd.rewmmse" => self.bcd.rewmmse = parse(key, value)?,
            "eval.rho" => self.eval_rho = parse_list(key, value)?,
            "eval.seed" => self.eval_seed = parse(key, value)?,
            "paths.train_data" => self.paths.train_data = value.into(),
            "paths.test_data" => self.paths.test_data = value.into(),
            "paths.checkpoint" => self.paths.checkpoint = value.into(),
            "paths.train_log" => self.paths.train_log = value.into(),
            "paths.report" => self.paths.report = value.into(),
            "paths.series" => self.paths.series = value.into(),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a config file. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{}:{}: expected `key = value`", origin.display(), i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("{}:{}: {}", origin.display(), i + 1, strip(&e))))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        self.apply_text(&text, path)
    }
}

fn strip(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}
