//! Python bindings for `pause_lab`.
//!
//! Token sequences cross the boundary as `list[int]`, logits as nested lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;

use pause_lab::model::{count_params as core_count_params, AttentionMask, ModelConfig, ModelParams};
use pause_lab::pause::{pause_generate, random_insert as core_random_insert, PausedSequence, Placement};
use pause_lab::pause::{pause_finetune_loss, pause_pretrain_loss, FinetuneExample};
use pause_lab::tasks::{build_vocab, gen_task_examples as core_gen, solve as core_solve, Split, TaskKind, TaskSpec};
use pause_lab::train::{load_checkpoint, save_checkpoint};
use pause_lab::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::Index { .. } | Error::Vocab { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

fn parse_split(s: &str) -> PyResult<Split> {
    match s {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(PyValueError::new_err(format!("unknown split {other:?}"))),
    }
}

/// Character vocabulary over every task alphabet plus `<sep>`, `<eos>`, `<pause>`.
#[pyclass(name = "Vocab", frozen)]
struct PyVocab {
    inner: pause_lab::tasks::Vocab,
}

#[pymethods]
impl PyVocab {
    #[new]
    fn new() -> Self {
        Self {
            inner: build_vocab(&TaskKind::ALL),
        }
    }

    fn encode(&self, text: &str) -> PyResult<Vec<usize>> {
        self.inner.encode(text).map_err(to_py)
    }

    fn decode(&self, ids: Vec<usize>) -> PyResult<String> {
        self.inner.decode(&ids).map_err(to_py)
    }

    #[getter]
    fn sep(&self) -> usize {
        self.inner.sep()
    }

    #[getter]
    fn eos(&self) -> usize {
        self.inner.eos()
    }

    #[getter]
    fn pause(&self) -> usize {
        self.inner.pause()
    }

    #[getter]
    fn hash(&self) -> u32 {
        self.inner.hash()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A float32 decoder-only model.
#[pyclass(name = "Model")]
struct PyModel {
    inner: ModelParams<f32>,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (vocab_size, n_layers=4, n_heads=4, d_model=128, d_ff=512, max_positions=512, seed=0))]
    fn new(
        vocab_size: usize,
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        d_ff: usize,
        max_positions: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = ModelConfig::new(n_layers, n_heads, d_model, d_ff, max_positions, vocab_size);
        cfg.validate().map_err(to_py)?;
        Ok(Self {
            inner: ModelParams::init(&cfg, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(to_py)?;
        Ok(Self { inner: ckpt.params })
    }

    #[pyo3(signature = (path, vocab_hash, step=0))]
    fn save(&self, path: PathBuf, vocab_hash: u32, step: u64) -> PyResult<()> {
        save_checkpoint(&path, &self.inner, "python", vocab_hash, step).map_err(to_py)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.inner.num_params()
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.inner.config().vocab_size
    }

    /// Logits `[K][V]`; `prefix_len` switches from a causal to a prefix-LM mask.
    #[pyo3(signature = (tokens, prefix_len=None))]
    fn logits(&self, tokens: Vec<usize>, prefix_len: Option<usize>) -> PyResult<Vec<Vec<f32>>> {
        let mask = match prefix_len {
            Some(p) => AttentionMask::prefix(p, tokens.len()),
            None => AttentionMask::causal(tokens.len()),
        }
        .map_err(to_py)?;
        let flat = self.inner.logits(&tokens, &mask).map_err(to_py)?;
        Ok(flat.chunks(self.inner.config().vocab_size).map(<[f32]>::to_vec).collect())
    }

    /// Greedy decoding after `m_inf` pauses.
    #[pyo3(signature = (prefix, m_inf, eos, pause, max_new=16, placement="append", mask_pause_logit=true))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        &self,
        prefix: Vec<usize>,
        m_inf: usize,
        eos: usize,
        pause: usize,
        max_new: usize,
        placement: &str,
        mask_pause_logit: bool,
    ) -> PyResult<Vec<usize>> {
        let placement: Placement = parse(placement)?;
        pause_generate(&self.inner, &prefix, m_inf, placement, max_new, eos, pause, mask_pause_logit).map_err(to_py)
    }

    /// Summed next-token loss with positions before a pause left out; returns `(sum, terms)`.
    fn pretrain_loss(&self, tokens: Vec<usize>, pause: usize) -> PyResult<(f64, usize)> {
        let seq = PausedSequence::from_tokens(tokens, pause);
        let l = pause_pretrain_loss(&self.inner, &seq).map_err(to_py)?;
        Ok((l.sum, l.terms))
    }

    /// Summed loss over the target tokens after `m_ft` pauses; returns `(sum, terms)`.
    #[pyo3(signature = (prefix, target, m_ft, pause, placement="append"))]
    fn finetune_loss(
        &self,
        prefix: Vec<usize>,
        target: Vec<usize>,
        m_ft: usize,
        pause: usize,
        placement: &str,
    ) -> PyResult<(f64, usize)> {
        let ex = FinetuneExample::new(prefix, target, m_ft, parse(placement)?);
        let l = pause_finetune_loss(&self.inner, &ex, pause).map_err(to_py)?;
        Ok((l.sum, l.terms))
    }
}

/// Inserts `m` pauses at uniformly random slots; returns `(tokens, ignore)`.
#[pyfunction]
fn random_insert(tokens: Vec<usize>, m: usize, seed: u64, pause: usize) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let s = core_random_insert(&tokens, m, seed, pause).map_err(to_py)?;
    Ok((s.tokens, s.ignore))
}

#[pyfunction]
fn causal_mask(n: usize) -> PyResult<Vec<Vec<bool>>> {
    Ok(AttentionMask::causal(n).map_err(to_py)?.to_rows())
}

#[pyfunction]
fn prefix_mask(prefix_len: usize, n: usize) -> PyResult<Vec<Vec<bool>>> {
    Ok(AttentionMask::prefix(prefix_len, n).map_err(to_py)?.to_rows())
}

/// `(prefix, target)` string pairs for `task` (e.g. `"lookup"`).
#[pyfunction]
#[pyo3(signature = (task, size, n, seed=0, split="train"))]
fn gen_task_examples(task: &str, size: usize, n: usize, seed: u64, split: &str) -> PyResult<Vec<(String, String)>> {
    let spec = TaskSpec::new(parse(task)?, size, parse_split(split)?, seed);
    core_gen(&spec, n).map_err(to_py)
}

#[pyfunction]
fn solve(task: &str, prefix: &str) -> PyResult<Option<String>> {
    Ok(core_solve(parse(task)?, prefix))
}

#[pyfunction]
fn exact_match(pred: &str, gold: &str) -> u8 {
    pause_lab::tasks::exact_match(pred, gold)
}

/// Per-component parameter counts of an architecture.
#[pyfunction]
#[pyo3(signature = (vocab_size, n_layers, n_heads, d_model, d_ff, max_positions))]
fn count_params(
    vocab_size: usize,
    n_layers: usize,
    n_heads: usize,
    d_model: usize,
    d_ff: usize,
    max_positions: usize,
) -> Vec<(&'static str, usize)> {
    let c = core_count_params(&ModelConfig::new(n_layers, n_heads, d_model, d_ff, max_positions, vocab_size));
    vec![
        ("token_embedding", c.token_embedding),
        ("position_embedding", c.position_embedding),
        ("attention", c.attention),
        ("feedforward", c.feedforward),
        ("layer_norm", c.layer_norm),
        ("unembedding", c.unembedding),
        ("total", c.total),
    ]
}

#[pymodule]
fn pause_lab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyVocab>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(random_insert, m)?)?;
    m.add_function(wrap_pyfunction!(causal_mask, m)?)?;
    m.add_function(wrap_pyfunction!(prefix_mask, m)?)?;
    m.add_function(wrap_pyfunction!(gen_task_examples, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    Ok(())
}
