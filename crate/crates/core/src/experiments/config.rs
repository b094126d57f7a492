//! Run configuration: `key = value` files, env override, and CLI flag overrides.
//!
//! Precedence, lowest first: built-in defaults, config file, `PAUSE_LAB_SEED`, flags.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use super::variant::Variant;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::pause::Placement;
use crate::tasks::{build_vocab, TaskKind, Vocab};
use crate::train::TrainConfig;

pub const SEED_ENV: &str = "PAUSE_LAB_SEED";

/// A task family and size, written `lookup8`, `addition3`, `chain4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId {
    pub kind: TaskKind,
    pub size: usize,
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let split = s
            .find(|c: char| c.is_ascii_digit())
            .ok_or_else(|| Error::Config(format!("task {s:?} lacks a size, e.g. lookup8")))?;
        let kind = s[..split].parse()?;
        let size = s[split..]
            .parse()
            .map_err(|_| Error::Config(format!("bad task size in {s:?}")))?;
        Ok(Self { kind, size })
    }
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.kind, self.size)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub window: usize,
    pub fraction: f64,
    pub m_ft: usize,
    pub m_inf: Option<usize>,
    pub placement: Placement,
    pub mask_pause_logit: bool,
    pub tasks: Vec<TaskId>,
    pub data_seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub max_new: usize,
    pub eval_every: usize,
    pub target_em: Option<f64>,
    pub seeds: Vec<u64>,
    pub variants: Vec<Variant>,
    pub variant: Variant,
    pub pretrain_on_demand: bool,
    pub wall_time: bool,
    pub mft_grid: Vec<usize>,
    pub minf_grid: Option<Vec<usize>>,
    pub filler_counts: Vec<usize>,
    pub filler: String,
    /// Keys set by a file, the environment or a flag.
    pub explicit: BTreeSet<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vocab = Self::vocab();
        Self {
            model: ModelConfig::desk_default(vocab.len()),
            pretrain: TrainConfig {
                total_steps: 20_000,
                warmup_steps: 200,
                batch_size: 8,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
            window: 256,
            fraction: 0.1,
            m_ft: 10,
            m_inf: None,
            placement: Placement::Append,
            mask_pause_logit: true,
            tasks: vec![TaskId {
                kind: TaskKind::Lookup,
                size: 8,
            }],
            data_seed: 1234,
            n_train: 20_000,
            n_val: 200,
            n_test: 200,
            max_new: 12,
            eval_every: 0,
            target_em: None,
            seeds: (0..5).collect(),
            variants: Variant::ALL.to_vec(),
            variant: Variant::StdPtStdFt,
            pretrain_on_demand: false,
            wall_time: false,
            mft_grid: vec![10, 50],
            minf_grid: None,
            filler_counts: vec![10, 50],
            filler: ".".into(),
            explicit: BTreeSet::new(),
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("bad list item {s:?} for {key}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        out.push((normalize_key(k.trim()), v.trim().to_string()));
    }
    Ok(out)
}

/// `--model.d-model` and `model.d-model` both become `model.d_model`.
pub fn normalize_key(key: &str) -> String {
    key.trim_start_matches("--").replace('-', "_")
}

impl RunConfig {
    /// The shared vocabulary: every task alphabet plus the specials.
    pub fn vocab() -> Vocab {
        build_vocab(&TaskKind::ALL)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let key = key.as_str();
        if key == "model.vocab_size" {
            return Err(Error::Config(
                "model.vocab_size is derived from the task alphabets and cannot be set".into(),
            ));
        }
        let handled = if key.starts_with("model.") {
            self.model.set(key, value)?
        } else if key.starts_with("pretrain.") && key != "pretrain.window" {
            self.pretrain.set("pretrain", key, value)?
        } else if key.starts_with("train.") && !matches!(key, "train.eval_every" | "train.target_em") {
            self.finetune.set("train", key, value)?
        } else {
            self.set_run_key(key, value)?
        };
        if !handled {
            return Err(Error::Config(format!("unknown config key {key:?}")));
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    fn set_run_key(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "pretrain.window" => self.window = parse_one(key, value)?,
            "pause.fraction" => self.fraction = parse_one(key, value)?,
            "pause.m_ft" => self.m_ft = parse_one(key, value)?,
            "pause.m_inf" => {
                self.m_inf = match value {
                    "auto" | "" => None,
                    v => Some(parse_one(key, v)?),
                }
            }
            "pause.placement" => self.placement = value.parse()?,
            "pause.mask_pause_logit" => self.mask_pause_logit = parse_one(key, value)?,
            "data.tasks" => self.tasks = parse_list(key, value)?,
            "data.seed" => self.data_seed = parse_one(key, value)?,
            "data.n_train" => self.n_train = parse_one(key, value)?,
            "data.n_val" => self.n_val = parse_one(key, value)?,
            "data.n_test" => self.n_test = parse_one(key, value)?,
            "eval.max_new" => self.max_new = parse_one(key, value)?,
            "train.eval_every" => self.eval_every = parse_one(key, value)?,
            "train.target_em" => {
                self.target_em = match value {
                    "none" | "" => None,
                    v => Some(parse_one(key, v)?),
                }
            }
            "run.seeds" => self.seeds = parse_list(key, value)?,
            "run.variants" => {
                self.variants = if value == "all" {
                    Variant::ALL.to_vec()
                } else {
                    parse_list(key, value)?
                }
            }
            "run.variant" => self.variant = value.parse()?,
            "run.pretrain_on_demand" => self.pretrain_on_demand = parse_one(key, value)?,
            "report.wall_time" => self.wall_time = parse_one(key, value)?,
            "sweep.mft_grid" => self.mft_grid = parse_list(key, value)?,
            "sweep.minf_grid" => {
                self.minf_grid = match value {
                    "auto" | "" => None,
                    v => Some(parse_list(key, v)?),
                }
            }
            "filler.n" => self.filler_counts = parse_list(key, value)?,
            "filler.symbol" => self.filler = value.to_string(),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (k, v) in parse_kv_text(text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Applies `PAUSE_LAB_SEED` to `train.seed` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.set("train.seed", v.trim())
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an integer seed")))?;
        }
        Ok(())
    }

    /// Defaults, then `file_text`, then the environment, then `overrides`.
    pub fn resolve(file_text: Option<&str>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(text) = file_text {
            cfg.apply_text(text)?;
        }
        cfg.apply_env()?;
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        if self.tasks.is_empty() {
            return Err(Error::Config("data.tasks is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("run.seeds is empty".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Config("run.variants is empty".into()));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Config("data.n_train and data.n_test must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.fraction) {
            return Err(Error::Config(format!("pause.fraction {} not in [0, 1)", self.fraction)));
        }
        if self.max_new == 0 {
            return Err(Error::Config("eval.max_new must be positive".into()));
        }
        Ok(())
    }

    /// Delay at inference for a cell finetuned with `m_ft` pauses.
    pub fn m_inf_for(&self, m_ft: usize) -> usize {
        self.m_inf.unwrap_or(m_ft)
    }

    /// Full, stable text form written as `config.resolved`.
    pub fn to_text(&self) -> String {
        let mut out = self.model.to_kv();
        out.push_str(&self.pretrain.to_kv("pretrain"));
        let _ = writeln!(out, "pretrain.window = {}", self.window);
        out.push_str(&self.finetune.to_kv("train"));
        let _ = writeln!(out, "train.eval_every = {}", self.eval_every);
        let _ = writeln!(
            out,
            "train.target_em = {}",
            self.target_em.map_or_else(|| "none".into(), |v| v.to_string())
        );
        let _ = writeln!(out, "pause.fraction = {}", self.fraction);
        let _ = writeln!(out, "pause.m_ft = {}", self.m_ft);
        let _ = writeln!(
            out,
            "pause.m_inf = {}",
            self.m_inf.map_or_else(|| "auto".into(), |v| v.to_string())
        );
        let _ = writeln!(out, "pause.placement = {}", self.placement);
        let _ = writeln!(out, "pause.mask_pause_logit = {}", self.mask_pause_logit);
        let _ = writeln!(out, "data.tasks = {}", join(&self.tasks));
        let _ = writeln!(out, "data.seed = {}", self.data_seed);
        let _ = writeln!(out, "data.n_train = {}", self.n_train);
        let _ = writeln!(out, "data.n_val = {}", self.n_val);
        let _ = writeln!(out, "data.n_test = {}", self.n_test);
        let _ = writeln!(out, "eval.max_new = {}", self.max_new);
        let _ = writeln!(out, "run.seeds = {}", join(&self.seeds));
        let _ = writeln!(out, "run.variants = {}", join(&self.variants));
        let _ = writeln!(out, "run.variant = {}", self.variant);
        let _ = writeln!(out, "run.pretrain_on_demand = {}", self.pretrain_on_demand);
        let _ = writeln!(out, "report.wall_time = {}", self.wall_time);
        let _ = writeln!(out, "sweep.mft_grid = {}", join(&self.mft_grid));
        let _ = writeln!(
            out,
            "sweep.minf_grid = {}",
            self.minf_grid.as_ref().map_or_else(|| "auto".into(), |g| join(g))
        );
        let _ = writeln!(out, "filler.n = {}", join(&self.filler_counts));
        let _ = writeln!(out, "filler.symbol = {}", self.filler);
        out
    }
}
