//! Experiment operations over a run directory.
//!
//! Layout: `config.resolved`, `metrics.csv`, `summary.txt`, `checkpoints/`, `curves/`,
//! plus one CSV per sweep (`sweep_mft.csv`, `sweep_minf.csv`, `placement.csv`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::config::{RunConfig, TaskId};
use super::report::{best_mft_text, emit_report, MetricsRow};
use super::variant::{Variant, VariantSpec};
use crate::error::{Error, Result};
use crate::model::{AttentionMask, ModelParams};
use crate::numeric::{Precision, Scalar};
use crate::pause::generate::{generate_with_delay, DecodeOptions};
use crate::pause::loss::add_delay;
use crate::pause::Placement;
use crate::tasks::generate::mix_seed;
use crate::tasks::{exact_match, gen_pretrain_corpus, gen_task_examples, Split, TaskSpec, Vocab};
use crate::train::{
    file_digest, load_checkpoint_for, save_checkpoint, train_finetune, train_pretrain, write_curve, Control,
    CurvePoint, PretrainMode, PretrainOptions, TrainConfig, TrainReport,
};

/// An encoded evaluation example; `target` ends with `<eos>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalExample {
    pub prefix: Vec<usize>,
    pub target: Vec<usize>,
    pub gold: String,
}

#[derive(Debug, Clone)]
pub struct TaskData {
    pub train: Vec<(Vec<usize>, Vec<usize>)>,
    pub val: Vec<EvalExample>,
    pub test: Vec<EvalExample>,
}

/// Exact match and teacher-forced token accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub em: f64,
    pub token_accuracy: f64,
}

/// Inference-time delay: `n` copies of `token` at `placement`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delay {
    pub token: usize,
    pub n: usize,
    pub placement: Placement,
}

fn argmax_excluding<T: Scalar>(row: &[T], banned: Option<usize>) -> usize {
    let mut best = usize::MAX;
    for (i, &v) in row.iter().enumerate() {
        if Some(i) != banned && (best == usize::MAX || v > row[best]) {
            best = i;
        }
    }
    best
}

/// Greedy-decoding exact match and teacher-forced accuracy over `data`.
pub fn evaluate<T: Scalar>(
    params: &ModelParams<T>,
    vocab: &Vocab,
    data: &[EvalExample],
    delay: Delay,
    max_new: usize,
    banned: Option<usize>,
) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let v = params.config().vocab_size;
    let per_example = data
        .par_iter()
        .map(|ex| {
            let opts = DecodeOptions {
                max_new,
                eos: vocab.eos(),
                banned,
            };
            let out = generate_with_delay(params, &ex.prefix, delay.token, delay.n, delay.placement, opts)?;
            let pred = vocab.decode(&out)?;
            let em = exact_match(&pred, &ex.gold);
            let (mut tokens, p) = add_delay(&ex.prefix, delay.token, delay.n, delay.placement);
            tokens.extend_from_slice(&ex.target[..ex.target.len() - 1]);
            let mask = AttentionMask::prefix(p, tokens.len())?;
            let logits = params.logits(&tokens, &mask)?;
            let hits = ex
                .target
                .iter()
                .enumerate()
                .filter(|&(k, &t)| {
                    let row = p - 1 + k;
                    argmax_excluding(&logits[row * v..(row + 1) * v], banned) == t
                })
                .count();
            Ok((em, hits, ex.target.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let em = per_example.iter().map(|e| e.0 as f64).sum::<f64>() / data.len() as f64;
    let hits: usize = per_example.iter().map(|e| e.1).sum();
    let total: usize = per_example.iter().map(|e| e.2).sum();
    Ok(EvalResult {
        em,
        token_accuracy: hits as f64 / total as f64,
    })
}

/// Default inference grid around `m_ft`: `{0, .2m, .5m, m, 1.5m, 2m, 2.5m}`.
pub fn default_minf_grid(m_ft: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [0.0, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5]
        .iter()
        .map(|f| (f * m_ft as f64).round() as usize)
        .collect();
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// Adds the zero-delay probe and the matched delay to any grid.
pub fn complete_minf_grid(grid: &[usize], m_ft: usize) -> Vec<usize> {
    let mut g = grid.to_vec();
    g.push(0);
    g.push(m_ft);
    g.sort_unstable();
    g.dedup();
    g
}

pub struct Lab {
    cfg: RunConfig,
    run_dir: PathBuf,
    vocab: Vocab,
}

impl Lab {
    /// Prepares the run directory and writes `config.resolved`.
    pub fn new(cfg: RunConfig, run_dir: &Path) -> Result<Self> {
        cfg.validate()?;
        let vocab = RunConfig::vocab();
        if cfg.model.vocab_size != vocab.len() {
            return Err(Error::Config(format!(
                "model vocab size {} does not match the task vocabulary ({})",
                cfg.model.vocab_size,
                vocab.len()
            )));
        }
        fs::create_dir_all(run_dir.join("checkpoints"))?;
        fs::create_dir_all(run_dir.join("curves"))?;
        fs::write(run_dir.join("config.resolved"), cfg.to_text())?;
        Ok(Self {
            cfg,
            run_dir: run_dir.to_path_buf(),
            vocab,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    fn mode_name(pause: bool) -> &'static str {
        if pause {
            "pause"
        } else {
            "std"
        }
    }

    pub fn pretrain_path(&self, pause: bool) -> PathBuf {
        self.run_dir
            .join("checkpoints")
            .join(format!("pretrain_{}.ckpt", Self::mode_name(pause)))
    }

    pub fn finetuned_path(&self, variant: Variant, task: TaskId, seed: u64) -> PathBuf {
        self.run_dir
            .join("checkpoints")
            .join(format!("ft_{variant}_{task}_s{seed}.ckpt"))
    }

    fn wall(&self, start: Instant) -> f64 {
        if self.cfg.wall_time {
            (start.elapsed().as_secs_f64() * 1000.0).round() / 1000.0
        } else {
            0.0
        }
    }

    fn encode_pair(&self, prefix: &str, target: &str) -> Result<(Vec<usize>, Vec<usize>)> {
        let p = self.vocab.encode(prefix)?;
        let mut t = self.vocab.encode(target)?;
        t.push(self.vocab.eos());
        Ok((p, t))
    }

    fn eval_set(&self, spec: TaskSpec, n: usize) -> Result<Vec<EvalExample>> {
        gen_task_examples(&spec, n)?
            .into_iter()
            .map(|(p, t)| {
                let (prefix, target) = self.encode_pair(&p, &t)?;
                Ok(EvalExample { prefix, target, gold: t })
            })
            .collect()
    }

    /// Train, validation and test examples for one task.
    ///
    /// Validation draws fresh train-split instances; test uses the disjoint test split.
    pub fn task_data(&self, task: TaskId) -> Result<TaskData> {
        let seed = self.cfg.data_seed;
        let spec = |split, seed| TaskSpec::new(task.kind, task.size, split, seed);
        let train = gen_task_examples(&spec(Split::Train, seed), self.cfg.n_train)?
            .into_iter()
            .map(|(p, t)| self.encode_pair(&p, &t))
            .collect::<Result<Vec<_>>>()?;
        let val = if self.cfg.n_val == 0 {
            Vec::new()
        } else {
            self.eval_set(spec(Split::Train, mix_seed(seed, 0x7a1)), self.cfg.n_val)?
        };
        let test = self.eval_set(spec(Split::Test, seed), self.cfg.n_test)?;
        Ok(TaskData { train, val, test })
    }

    /// Pretrains one model and writes `checkpoints/pretrain_{std,pause}.ckpt`.
    pub fn pretrain(&self, pause: bool) -> Result<TrainReport> {
        let cfg = &self.cfg;
        let mut params = ModelParams::<f32>::init(&cfg.model, cfg.pretrain.seed)?;
        let mut report = TrainReport::default();
        if cfg.pretrain.total_steps > 0 {
            let specs: Vec<TaskSpec> = cfg
                .tasks
                .iter()
                .map(|t| TaskSpec::new(t.kind, t.size, Split::Train, cfg.data_seed))
                .collect();
            let needed = cfg.pretrain.total_steps * cfg.pretrain.batch_size * cfg.window;
            let corpus = gen_pretrain_corpus(&specs, &self.vocab, needed, cfg.data_seed)?;
            let opts = PretrainOptions {
                window: cfg.window,
                mode: if pause {
                    PretrainMode::Pause { fraction: cfg.fraction }
                } else {
                    PretrainMode::Standard
                },
                pause: self.vocab.pause(),
            };
            let (p, r) = match cfg.pretrain.precision {
                Precision::F32 => pretrain_in::<f32>(&params, &corpus, &cfg.pretrain, &opts)?,
                Precision::F64 => pretrain_in::<f64>(&params, &corpus, &cfg.pretrain, &opts)?,
            };
            params = p;
            report = r;
        }
        let name = Self::mode_name(pause);
        write_curve(&self.run_dir.join("curves").join(format!("pretrain_{name}.csv")), &report.curve)?;
        save_checkpoint(
            &self.pretrain_path(pause),
            &params,
            &cfg.pretrain.digest(),
            self.vocab.hash(),
            report.steps_run as u64,
        )?;
        log::info!(
            "pretrained {name}: {} steps, {} tokens ({} meaningful)",
            report.steps_run,
            report.tokens_seen,
            report.meaningful_tokens
        );
        Ok(report)
    }

    /// Loads a pretrained checkpoint, training it first if allowed.
    pub fn load_pretrained(&self, pause: bool) -> Result<ModelParams<f32>> {
        let path = self.pretrain_path(pause);
        if !path.exists() {
            if !self.cfg.pretrain_on_demand {
                return Err(Error::MissingCheckpoint {
                    hint: format!(
                        "pause-lab pretrain --mode {} --run-dir {}",
                        Self::mode_name(pause),
                        self.run_dir.display()
                    ),
                    path,
                });
            }
            self.pretrain(pause)?;
        }
        self.load_model(&path)
    }

    /// Loads any checkpoint of this run's model config and vocabulary.
    pub fn load_model(&self, path: &Path) -> Result<ModelParams<f32>> {
        if !path.exists() {
            return Err(Error::MissingCheckpoint {
                path: path.to_path_buf(),
                hint: format!("pause-lab finetune --run-dir {}", self.run_dir.display()),
            });
        }
        let ckpt = load_checkpoint_for(path, &self.cfg.model)?;
        if ckpt.header.vocab_hash != self.vocab.hash() {
            return Err(Error::Compatibility(format!(
                "{} was trained with a different vocabulary",
                path.display()
            )));
        }
        Ok(ckpt.params)
    }

    fn banned(&self) -> Option<usize> {
        self.cfg.mask_pause_logit.then_some(self.vocab.pause())
    }

    /// Evaluates a model on the task's test split with `m_inf` pauses.
    pub fn evaluate_params(
        &self,
        params: &ModelParams<f32>,
        data: &[EvalExample],
        delay: Delay,
    ) -> Result<EvalResult> {
        match self.cfg.finetune.precision {
            Precision::F32 => evaluate(params, &self.vocab, data, delay, self.cfg.max_new, self.banned()),
            Precision::F64 => evaluate(
                &params.cast::<f64>(),
                &self.vocab,
                data,
                delay,
                self.cfg.max_new,
                self.banned(),
            ),
        }
    }

    fn pause_delay(&self, n: usize, placement: Placement) -> Delay {
        Delay {
            token: self.vocab.pause(),
            n,
            placement,
        }
    }

    /// Longest sequence the cell would need, for overflow checks before training.
    fn cell_fits(&self, data: &TaskData, m_ft: usize, m_inf: usize) -> bool {
        let max = self.cfg.model.max_positions;
        let train_ok = data
            .train
            .iter()
            .all(|(p, t)| p.len() + m_ft + t.len() - 1 <= max);
        let eval_ok = data
            .test
            .iter()
            .chain(&data.val)
            .all(|ex| ex.prefix.len() + m_inf.max(m_ft) + self.cfg.max_new - 1 <= max);
        train_ok && eval_ok
    }

    /// Finetunes from a pretrained model and evaluates on the test split.
    ///
    /// Writes a loss curve; saves the finetuned model when `save_to` is given.
    pub fn finetune_cell(
        &self,
        spec: &VariantSpec,
        task: TaskId,
        seed: u64,
        data: &TaskData,
        save_to: Option<&Path>,
    ) -> Result<(MetricsRow, ModelParams<f32>)> {
        let start = Instant::now();
        let base = self.load_pretrained(spec.variant.pause_pretrained())?;
        let train_cfg = TrainConfig {
            seed,
            ..self.cfg.finetune.clone()
        };
        let (params, report) = match train_cfg.precision {
            Precision::F32 => self.finetune_in::<f32>(&base, data, &train_cfg, spec)?,
            Precision::F64 => self.finetune_in::<f64>(&base, data, &train_cfg, spec)?,
        };
        let result = self.evaluate_params(&params, &data.test, self.pause_delay(spec.m_inf, spec.placement))?;
        let curve_name = format!(
            "{}_{task}_mft{}_{}_s{seed}.csv",
            spec.variant, spec.m_ft, spec.placement
        );
        write_curve(&self.run_dir.join("curves").join(curve_name), &report.curve)?;
        if let Some(path) = save_to {
            save_checkpoint(path, &params, &train_cfg.digest(), self.vocab.hash(), report.steps_run as u64)?;
        }
        let row = MetricsRow {
            variant: spec.variant.to_string(),
            task: task.to_string(),
            m_ft: spec.m_ft,
            m_inf: spec.m_inf,
            placement: spec.placement.to_string(),
            seed,
            em: result.em,
            token_accuracy: result.token_accuracy,
            steps: report.steps_run,
            wall_seconds: self.wall(start),
        };
        log::info!(
            "{} {task} M_ft={} M_inf={} seed={seed}: EM {:.3} after {} steps",
            spec.variant,
            spec.m_ft,
            spec.m_inf,
            result.em,
            report.steps_run
        );
        Ok((row, params))
    }

    fn finetune_in<T: Scalar>(
        &self,
        base: &ModelParams<f32>,
        data: &TaskData,
        cfg: &TrainConfig,
        spec: &VariantSpec,
    ) -> Result<(ModelParams<f32>, TrainReport)> {
        let mut params: ModelParams<T> = base.cast();
        let pause = self.vocab.pause();
        let early = match self.cfg.target_em {
            Some(target) if self.cfg.eval_every > 0 && !data.val.is_empty() => Some(target),
            _ => None,
        };
        let delay = self.pause_delay(spec.m_inf, spec.placement);
        let mut observer = |p: &ModelParams<T>, point: &CurvePoint| -> Result<Control> {
            let Some(target) = early else {
                return Ok(Control::Continue);
            };
            if !point.step.is_multiple_of(self.cfg.eval_every) {
                return Ok(Control::Continue);
            }
            let r = evaluate(p, &self.vocab, &data.val, delay, self.cfg.max_new, self.banned())?;
            log::info!("step {}: loss {:.4}, validation EM {:.3}", point.step, point.loss, r.em);
            Ok(if r.em >= target { Control::Stop } else { Control::Continue })
        };
        let report = train_finetune(
            &mut params,
            &data.train,
            cfg,
            spec.m_ft,
            spec.placement,
            pause,
            Some(&mut observer),
        )?;
        Ok((params.cast(), report))
    }

    /// The cell for `variant` under this config; standard finetuning gets no pauses.
    pub fn spec_for(&self, variant: Variant, task: TaskId, explicit_check: bool) -> Result<VariantSpec> {
        let cfg = &self.cfg;
        let (m_ft, m_inf) = if variant.pause_finetuned() {
            (cfg.m_ft, Some(cfg.m_inf_for(cfg.m_ft)))
        } else if explicit_check && cfg.explicit.contains("pause.m_ft") {
            (cfg.m_ft, cfg.m_inf)
        } else if explicit_check {
            (0, cfg.m_inf)
        } else {
            (0, None)
        };
        VariantSpec::new(variant, m_ft, m_inf, cfg.placement, &task.to_string(), cfg.seeds.clone())
    }

    /// Single finetuning run for `run.variant` on the first task with `train.seed`.
    pub fn finetune_one(&self) -> Result<MetricsRow> {
        let task = self.cfg.tasks[0];
        let spec = self.spec_for(self.cfg.variant, task, true)?;
        let data = self.task_data(task)?;
        if !self.cell_fits(&data, spec.m_ft, spec.m_inf) {
            let max = self.cfg.model.max_positions;
            let index = data
                .train
                .iter()
                .position(|(p, t)| p.len() + spec.m_ft + t.len() - 1 > max)
                .unwrap_or(0);
            return Err(Error::ExampleLength {
                index,
                len: data.train[index].0.len() + spec.m_ft + data.train[index].1.len() - 1,
                max,
            });
        }
        let seed = self.cfg.finetune.seed;
        let path = self.finetuned_path(spec.variant, task, seed);
        let (row, _) = self.finetune_cell(&spec, task, seed, &data, Some(&path))?;
        emit_report(std::slice::from_ref(&row), &self.run_dir, "")?;
        Ok(row)
    }

    /// Every variant × task × seed, sharing one checkpoint per pretraining mode.
    pub fn run_variant_matrix(&self) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        let mut digests: [Option<String>; 2] = [None, None];
        for &task in &self.cfg.tasks {
            let data = self.task_data(task)?;
            for &variant in &self.cfg.variants {
                let spec = self.spec_for(variant, task, false)?;
                let slot = variant.pause_pretrained() as usize;
                for &seed in &spec.seeds {
                    // Load (or create) first so the digest names the checkpoint the cell uses.
                    self.load_pretrained(variant.pause_pretrained())?;
                    let d = file_digest(&self.pretrain_path(variant.pause_pretrained()))?;
                    match &digests[slot] {
                        Some(prev) if *prev != d => {
                            return Err(Error::Misuse(format!(
                                "pretrained checkpoint {} changed during the matrix",
                                self.pretrain_path(variant.pause_pretrained()).display()
                            )))
                        }
                        _ => digests[slot] = Some(d),
                    }
                    let path = self.finetuned_path(variant, task, seed);
                    let (row, _) = self.finetune_cell(&spec, task, seed, &data, Some(&path))?;
                    rows.push(row);
                }
            }
        }
        let mut extra = String::from("shared pretrained checkpoints (sha256):\n");
        for (slot, d) in digests.iter().enumerate() {
            if let Some(d) = d {
                let _ = writeln!(extra, "  {}: {d}", Self::mode_name(slot == 1));
            }
        }
        emit_report(&rows, &self.run_dir, &extra)?;
        Ok(rows)
    }

    /// One finetune + evaluation per grid point and seed with `M_inf = M_ft`.
    pub fn sweep_mft(&self, variant: Variant, task: TaskId, grid: &[usize]) -> Result<Vec<MetricsRow>> {
        if grid.is_empty() {
            return Err(Error::Usage("M_ft grid is empty".into()));
        }
        let data = self.task_data(task)?;
        let mut rows = Vec::new();
        let mut csv = String::from("M_ft,seed,EM\n");
        for &m in grid {
            let spec = VariantSpec::new(variant, m, Some(m), self.cfg.placement, &task.to_string(), self.cfg.seeds.clone())?;
            for &seed in &spec.seeds {
                if !self.cell_fits(&data, m, m) {
                    log::warn!("M_ft={m} exceeds max_positions {}; skipped", self.cfg.model.max_positions);
                    let _ = writeln!(csv, "{m},{seed},skipped");
                    continue;
                }
                let (row, _) = self.finetune_cell(&spec, task, seed, &data, None)?;
                let _ = writeln!(csv, "{m},{seed},{}", row.em);
                rows.push(row);
            }
        }
        fs::write(self.run_dir.join("sweep_mft.csv"), csv)?;
        if !rows.is_empty() {
            emit_report(&rows, &self.run_dir, &best_mft_text(&rows))?;
        }
        Ok(rows)
    }

    /// Evaluation-only sweep over inference delays for a model finetuned at `m_ft`.
    pub fn sweep_minf(&self, checkpoint: &Path, task: TaskId, m_ft: usize, seed: u64) -> Result<Vec<MetricsRow>> {
        let before = file_digest(checkpoint)?;
        let params = self.load_model(checkpoint)?;
        let grid = complete_minf_grid(
            &self.cfg.minf_grid.clone().unwrap_or_else(|| default_minf_grid(m_ft)),
            m_ft,
        );
        let data = self.task_data(task)?;
        let mut csv = String::from("M_inf,EM\n");
        let mut rows = Vec::new();
        for &m in &grid {
            let start = Instant::now();
            if !self.cell_fits(&TaskData { train: Vec::new(), ..data.clone() }, 0, m) {
                log::warn!("M_inf={m} exceeds max_positions; skipped");
                let _ = writeln!(csv, "{m},skipped");
                continue;
            }
            let r = self.evaluate_params(&params, &data.test, self.pause_delay(m, self.cfg.placement))?;
            let _ = writeln!(csv, "{m},{}", r.em);
            rows.push(MetricsRow {
                variant: self.cfg.variant.to_string(),
                task: task.to_string(),
                m_ft,
                m_inf: m,
                placement: self.cfg.placement.to_string(),
                seed,
                em: r.em,
                token_accuracy: r.token_accuracy,
                steps: 0,
                wall_seconds: self.wall(start),
            });
        }
        fs::write(self.run_dir.join("sweep_minf.csv"), csv)?;
        if file_digest(checkpoint)? != before {
            return Err(Error::Misuse(format!("{} changed during an evaluation-only sweep", checkpoint.display())));
        }
        emit_report(&rows, &self.run_dir, "")?;
        Ok(rows)
    }

    /// Append vs prepend, paired per seed.
    pub fn compare_placement(&self, variant: Variant, task: TaskId, m: usize) -> Result<Vec<MetricsRow>> {
        let data = self.task_data(task)?;
        let mut rows = Vec::new();
        let mut csv = String::from("seed,append,prepend,delta\n");
        for &seed in &self.cfg.seeds {
            let mut em = [0.0; 2];
            for (i, placement) in [Placement::Append, Placement::Prepend].into_iter().enumerate() {
                let spec = VariantSpec::new(variant, m, Some(m), placement, &task.to_string(), vec![seed])?;
                let (row, _) = self.finetune_cell(&spec, task, seed, &data, None)?;
                em[i] = row.em;
                rows.push(row);
            }
            let _ = writeln!(csv, "{seed},{},{},{}", em[0], em[1], em[1] - em[0]);
        }
        fs::write(self.run_dir.join("placement.csv"), csv)?;
        emit_report(&rows, &self.run_dir, "")?;
        Ok(rows)
    }

    /// Inference-only delay with `n` copies of an in-vocabulary filler on a standard model.
    pub fn filler_baseline(&self, checkpoint: &Path, task: TaskId, counts: &[usize], seed: u64) -> Result<Vec<MetricsRow>> {
        let ids = self.vocab.encode(&self.cfg.filler)?;
        let filler = match ids.as_slice() {
            [id] => *id,
            _ => {
                return Err(Error::Config(format!(
                    "filler {:?} must be exactly one token",
                    self.cfg.filler
                )))
            }
        };
        if filler == self.vocab.pause() {
            return Err(Error::Misuse("the filler must be a standard token, not <pause>".into()));
        }
        let before = file_digest(checkpoint)?;
        let params = self.load_model(checkpoint)?;
        let data = self.task_data(task)?;
        let mut rows = Vec::new();
        for &n in counts {
            let start = Instant::now();
            let delay = Delay {
                token: filler,
                n,
                placement: Placement::Append,
            };
            let r = self.evaluate_params(&params, &data.test, delay)?;
            rows.push(MetricsRow {
                variant: Variant::StdPtStdFt.to_string(),
                task: task.to_string(),
                m_ft: 0,
                m_inf: n,
                placement: "filler".into(),
                seed,
                em: r.em,
                token_accuracy: r.token_accuracy,
                steps: 0,
                wall_seconds: self.wall(start),
            });
        }
        if file_digest(checkpoint)? != before {
            return Err(Error::Misuse(format!("{} changed during filler evaluation", checkpoint.display())));
        }
        emit_report(&rows, &self.run_dir, "")?;
        Ok(rows)
    }

    /// Evaluates a saved model with `m_inf` pauses.
    pub fn eval_checkpoint(&self, checkpoint: &Path, task: TaskId, m_ft: usize, m_inf: usize, seed: u64) -> Result<MetricsRow> {
        let start = Instant::now();
        let params = self.load_model(checkpoint)?;
        let data = self.task_data(task)?;
        let r = self.evaluate_params(&params, &data.test, self.pause_delay(m_inf, self.cfg.placement))?;
        let row = MetricsRow {
            variant: self.cfg.variant.to_string(),
            task: task.to_string(),
            m_ft,
            m_inf,
            placement: self.cfg.placement.to_string(),
            seed,
            em: r.em,
            token_accuracy: r.token_accuracy,
            steps: 0,
            wall_seconds: self.wall(start),
        };
        emit_report(std::slice::from_ref(&row), &self.run_dir, "")?;
        Ok(row)
    }
}

fn pretrain_in<T: Scalar>(
    base: &ModelParams<f32>,
    corpus: &[usize],
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<(ModelParams<f32>, TrainReport)> {
    let mut params: ModelParams<T> = base.cast();
    let report = train_pretrain(&mut params, corpus, cfg, opts)?;
    Ok((params.cast(), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minf_grid_for_ten() {
        assert_eq!(default_minf_grid(10), vec![0, 2, 5, 10, 15, 20, 25]);
        assert_eq!(complete_minf_grid(&[3, 7], 10), vec![0, 3, 7, 10]);
        assert_eq!(default_minf_grid(0), vec![0]);
    }
}
