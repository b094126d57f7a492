//! Pretraining and finetuning loops.
//!
//! Each step stacks the whole batch into one graph, so the summed gradient is a
//! fixed function of the batch and does not depend on thread scheduling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::optim::{adam_step, lr_schedule, OptimizerState};
use crate::error::{Error, Result};
use crate::model::{BoundModel, ModelParams};
use crate::numeric::{Graph, NodeId, Scalar};
use crate::pause::insert::{check_fraction, inject_window, PausedSequence};
use crate::pause::loss::{finetune_batch_loss_node, pretrain_batch_loss_node, FinetuneExample, Placement};
use crate::tasks::generate::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    /// Mean per-token loss of the batch.
    pub loss: f64,
    pub lr: f64,
    /// Cumulative model-input tokens, pauses included.
    pub tokens_seen: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub curve: Vec<CurvePoint>,
    pub steps_run: usize,
    pub tokens_seen: u64,
    /// Tokens that were not `<pause>`.
    pub meaningful_tokens: u64,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn meaningful_share(&self) -> f64 {
        if self.tokens_seen == 0 {
            return 0.0;
        }
        self.meaningful_tokens as f64 / self.tokens_seen as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PretrainMode {
    Standard,
    /// Insert `round(fraction * window)` pauses per window, then trim back to the window.
    Pause { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOptions {
    pub window: usize,
    pub mode: PretrainMode,
    pub pause: usize,
}

/// Whether training should continue after an observed step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called after every optimizer step with the updated parameters.
pub type Observer<'a, T> = dyn FnMut(&ModelParams<T>, &CurvePoint) -> Result<Control> + 'a;

/// Summed loss, term count and summed gradients of one batch graph.
fn batch_gradient<T, F>(params: &ModelParams<T>, build: F) -> Result<(f64, usize, Vec<Vec<T>>)>
where
    T: Scalar,
    F: for<'p> FnOnce(&BoundModel<'p, T>, &mut Graph<'p, T>) -> Result<(NodeId, usize)>,
{
    let mut g = Graph::new();
    let model = BoundModel::new(params, &mut g);
    let (node, terms) = build(&model, &mut g)?;
    let loss = g.value(node)[0].as_f64();
    g.backward(node)?;
    Ok((loss, terms, model.take_grads(&mut g)))
}

/// Normalizes summed gradients by the term count and applies one Adam update.
fn apply_update<T: Scalar>(
    params: &mut ModelParams<T>,
    state: &mut OptimizerState<T>,
    mut grads: Vec<Vec<T>>,
    terms: usize,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if terms == 0 {
        log::warn!("step with no loss terms; update skipped");
        return Ok(());
    }
    let inv = T::from_f64_lossy(1.0 / terms as f64);
    for g in grads.iter_mut().flatten() {
        *g = *g * inv;
    }
    adam_step(params.tensors_mut(), &grads, state, lr, cfg)?;
    Ok(())
}

/// Pretrains on contiguous `window`-token slices of `corpus`.
///
/// Both modes feed exactly `window` tokens per sequence, so token counts match
/// step for step; the pause mode trims its injected windows back to `window`.
pub fn train_pretrain<T: Scalar>(
    params: &mut ModelParams<T>,
    corpus: &[usize],
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<TrainReport> {
    cfg.validate()?;
    if opts.window < 2 {
        return Err(Error::Config("pretraining window must hold at least 2 tokens".into()));
    }
    if opts.window > params.config().max_positions {
        return Err(Error::Config(format!(
            "window {} exceeds max_positions {}",
            opts.window,
            params.config().max_positions
        )));
    }
    if let PretrainMode::Pause { fraction } = opts.mode {
        check_fraction(fraction)?;
    }
    let needed = cfg.total_steps * cfg.batch_size * opts.window;
    if needed > corpus.len() {
        return Err(Error::Budget {
            needed,
            available: corpus.len(),
        });
    }
    let mut state = OptimizerState::new(params.tensors());
    let mut report = TrainReport::default();
    for step in 0..cfg.total_steps {
        let seqs = (0..cfg.batch_size)
            .map(|b| {
                let i = step * cfg.batch_size + b;
                let raw = &corpus[i * opts.window..(i + 1) * opts.window];
                match opts.mode {
                    PretrainMode::Standard => {
                        if let Some(position) = raw.iter().position(|&t| t == opts.pause) {
                            return Err(Error::Contamination { position });
                        }
                        Ok(PausedSequence::from_tokens(raw.to_vec(), opts.pause))
                    }
                    PretrainMode::Pause { fraction } => {
                        inject_window(raw, fraction, mix_seed(cfg.seed, i as u64), true, opts.pause)
                    }
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let p: &ModelParams<T> = params;
        let refs: Vec<&PausedSequence> = seqs.iter().collect();
        let (loss, terms, grads) = batch_gradient(p, |model, g| pretrain_batch_loss_node(model, g, &refs))?;
        let lr = lr_schedule(step + 1, cfg);
        apply_update(params, &mut state, grads, terms, lr, cfg)?;
        for s in &seqs {
            report.tokens_seen += s.len() as u64;
            report.meaningful_tokens += (s.len() - s.n_pauses) as u64;
        }
        report.curve.push(CurvePoint {
            step: step + 1,
            loss: if terms == 0 { 0.0 } else { loss / terms as f64 },
            lr,
            tokens_seen: report.tokens_seen,
        });
        report.steps_run = step + 1;
        if (step + 1) % 500 == 0 {
            log::info!("pretrain step {} loss {:.4}", step + 1, report.curve[step].loss);
        }
    }
    Ok(report)
}

/// Finetunes on `(prefix, target)` pairs with `m_ft` pauses at `placement`.
///
/// `m_ft = 0` runs the standard finetuning computation exactly.
#[allow(clippy::too_many_arguments)]
pub fn train_finetune<T: Scalar>(
    params: &mut ModelParams<T>,
    examples: &[(Vec<usize>, Vec<usize>)],
    cfg: &TrainConfig,
    m_ft: usize,
    placement: Placement,
    pause: usize,
    observer: Option<&mut Observer<'_, T>>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::Empty("finetuning examples"));
    }
    let max = params.config().max_positions;
    let examples: Vec<FinetuneExample> = examples
        .iter()
        .map(|(p, t)| FinetuneExample::new(p.clone(), t.clone(), m_ft, placement))
        .collect();
    for (index, ex) in examples.iter().enumerate() {
        ex.validate(pause)?;
        if ex.prefix.is_empty() {
            return Err(Error::Empty("finetune prefix"));
        }
        if ex.input_len() > max {
            return Err(Error::ExampleLength {
                index,
                len: ex.input_len(),
                max,
            });
        }
    }
    let mut observer = observer;
    let mut state = OptimizerState::new(params.tensors());
    let mut report = TrainReport::default();
    let n = examples.len();
    let mut epoch = usize::MAX;
    let mut order: Vec<usize> = Vec::new();
    for step in 0..cfg.total_steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for b in 0..cfg.batch_size {
            let i = step * cfg.batch_size + b;
            if i / n != epoch {
                epoch = i / n;
                order = epoch_order(n, cfg.seed, epoch);
            }
            batch.push(&examples[order[i % n]]);
        }
        let p: &ModelParams<T> = params;
        let (loss, terms, grads) = batch_gradient(p, |model, g| finetune_batch_loss_node(model, g, &batch, pause))?;
        let lr = lr_schedule(step + 1, cfg);
        apply_update(params, &mut state, grads, terms, lr, cfg)?;
        for ex in &batch {
            report.tokens_seen += ex.input_len() as u64;
            report.meaningful_tokens += (ex.input_len() - ex.m_ft) as u64;
        }
        let point = CurvePoint {
            step: step + 1,
            loss: loss / terms as f64,
            lr,
            tokens_seen: report.tokens_seen,
        };
        report.curve.push(point);
        report.steps_run = step + 1;
        if let Some(obs) = observer.as_deref_mut() {
            if obs(params, &point)? == Control::Stop {
                report.stopped_early = step + 1 < cfg.total_steps;
                break;
            }
        }
    }
    Ok(report)
}

/// Example order for one epoch; a fixed function of `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed ^ 0x5eed_f1e7, epoch as u64));
    order.shuffle(&mut rng);
    order
}

/// `step,loss,lr,tokens_seen` CSV.
pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("step,loss,lr,tokens_seen\n");
    for p in curve {
        let _ = writeln!(out, "{},{},{},{}", p.step, p.loss, p.lr, p.tokens_seen);
    }
    out
}

pub fn write_curve(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, curve_csv(curve))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    const PAUSE: usize = 11;

    fn tiny() -> ModelParams<f32> {
        ModelParams::init(&ModelConfig::new(1, 2, 8, 16, 32, 12), 1).unwrap()
    }

    fn corpus(n: usize) -> Vec<usize> {
        (0..n).map(|i| (i * 7 + i / 3) % 10).collect()
    }

    fn cfg(steps: usize) -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            warmup_steps: 2,
            total_steps: steps,
            batch_size: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn batch_graph_gradient_is_sum_of_example_gradients() {
        let p = ModelParams::<f64>::init(&ModelConfig::new(1, 2, 8, 16, 32, 12), 4).unwrap();
        let exs = [
            FinetuneExample::new(vec![1, 2, 3], vec![4, 5], 2, Placement::Append),
            FinetuneExample::new(vec![6], vec![7, 8, 9], 2, Placement::Append),
        ];
        let refs: Vec<&FinetuneExample> = exs.iter().collect();
        let (loss, terms, joint) = batch_gradient(&p, |m, g| finetune_batch_loss_node(m, g, &refs, PAUSE)).unwrap();
        assert_eq!(terms, 5);
        let mut total = 0.0;
        let mut summed: Option<Vec<Vec<f64>>> = None;
        for ex in &refs {
            let (l, _, gr) = batch_gradient(&p, |m, g| finetune_batch_loss_node(m, g, &[*ex], PAUSE)).unwrap();
            total += l;
            summed = Some(match summed {
                None => gr,
                Some(acc) => acc.iter().zip(&gr).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect(),
            });
        }
        assert!((loss - total).abs() < 1e-10);
        for (a, b) in joint.iter().flatten().zip(summed.unwrap().iter().flatten()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn budget_error_when_corpus_short() {
        let mut p = tiny();
        let opts = PretrainOptions { window: 16, mode: PretrainMode::Standard, pause: PAUSE };
        let err = train_pretrain(&mut p, &corpus(100), &cfg(5), &opts).unwrap_err();
        assert!(matches!(err, Error::Budget { needed: 240, available: 100 }));
    }

    #[test]
    fn modes_consume_equal_tokens_and_curve_has_every_step() {
        let data = corpus(16 * 3 * 6);
        let mut a = tiny();
        let mut b = tiny();
        let std = PretrainOptions { window: 16, mode: PretrainMode::Standard, pause: PAUSE };
        let pz = PretrainOptions { mode: PretrainMode::Pause { fraction: 0.1 }, ..std };
        let ra = train_pretrain(&mut a, &data, &cfg(6), &std).unwrap();
        let rb = train_pretrain(&mut b, &data, &cfg(6), &pz).unwrap();
        assert_eq!(ra.tokens_seen, rb.tokens_seen);
        assert_eq!(ra.curve.len(), 6);
        assert_eq!(ra.meaningful_tokens, ra.tokens_seen);
        assert!(rb.meaningful_tokens < rb.tokens_seen);
    }

    #[test]
    fn pretraining_is_reproducible() {
        let data = corpus(16 * 3 * 4);
        let opts = PretrainOptions { window: 16, mode: PretrainMode::Pause { fraction: 0.2 }, pause: PAUSE };
        let run = || {
            let mut p = tiny();
            let r = train_pretrain(&mut p, &data, &cfg(4), &opts).unwrap();
            (r, p)
        };
        let (r1, p1) = run();
        let (r2, p2) = run();
        assert_eq!(r1, r2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn finetune_reports_offending_example() {
        let mut p = tiny();
        let ex = vec![(vec![1, 2], vec![3]), (vec![1; 30], vec![3, 4])];
        let err = train_finetune(&mut p, &ex, &cfg(2), 2, Placement::Append, PAUSE, None).unwrap_err();
        assert!(matches!(err, Error::ExampleLength { index: 1, .. }));
    }

    #[test]
    fn epoch_order_is_seeded_permutation() {
        let a = epoch_order(20, 3, 0);
        assert_eq!(a, epoch_order(20, 3, 0));
        assert_ne!(a, epoch_order(20, 3, 1));
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn observer_can_stop_training() {
        let mut p = tiny();
        let ex = vec![(vec![1, 2, 3], vec![4, 5]); 4];
        let mut seen = 0;
        let mut obs = |_: &ModelParams<f32>, pt: &CurvePoint| {
            seen += 1;
            Ok(if pt.step == 2 { Control::Stop } else { Control::Continue })
        };
        let r = train_finetune(&mut p, &ex, &cfg(5), 0, Placement::Append, PAUSE, Some(&mut obs)).unwrap();
        assert_eq!(seen, 2);
        assert_eq!(r.steps_run, 2);
        assert!(r.stopped_early);
    }

    #[test]
    fn curve_csv_header() {
        let csv = curve_csv(&[CurvePoint { step: 1, loss: 0.5, lr: 0.001, tokens_seen: 16 }]);
        assert_eq!(csv, "step,loss,lr,tokens_seen\n1,0.5,0.001,16\n");
    }
}
