//! Delayed greedy decoding.
//!
//! The delay tokens are computed with the rest of the prefix and their outputs
//! are simply never read: decoding starts from the logits of the last prefix row.

use super::loss::{add_delay, Placement};
use crate::error::{Error, Result};
use crate::model::{AttentionMask, ModelParams};
use crate::numeric::Scalar;

/// Decoding options shared by pause and filler inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    pub max_new: usize,
    pub eos: usize,
    /// Token whose logit is treated as `-inf` (the pause id), if any.
    pub banned: Option<usize>,
}

fn argmax<T: Scalar>(row: &[T], banned: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_v = T::neg_infinity();
    for (i, &v) in row.iter().enumerate() {
        if Some(i) == banned {
            continue;
        }
        if best == usize::MAX || v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Greedy continuation of an already-delayed prefix of length `p`.
fn decode_from<T: Scalar>(
    params: &ModelParams<T>,
    mut tokens: Vec<usize>,
    opts: DecodeOptions,
) -> Result<Vec<usize>> {
    let p = tokens.len();
    if p == 0 {
        return Err(Error::Empty("prefix"));
    }
    let max = params.config().max_positions;
    let needed = p + opts.max_new.saturating_sub(1);
    if needed > max {
        return Err(Error::Length { len: needed, max });
    }
    let v = params.config().vocab_size;
    let mut answer = Vec::new();
    for _ in 0..opts.max_new {
        let mask = AttentionMask::prefix(p, tokens.len())?;
        let logits = params.logits(&tokens, &mask)?;
        let last = &logits[(tokens.len() - 1) * v..];
        let next = argmax(last, opts.banned);
        if next == opts.eos {
            break;
        }
        answer.push(next);
        tokens.push(next);
    }
    Ok(answer)
}

/// Appends (or prepends) `n` copies of `delay_token`, then decodes greedily.
pub fn generate_with_delay<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &[usize],
    delay_token: usize,
    n: usize,
    placement: Placement,
    opts: DecodeOptions,
) -> Result<Vec<usize>> {
    if prefix.is_empty() {
        return Err(Error::Empty("prefix"));
    }
    let (tokens, _) = add_delay(prefix, delay_token, n, placement);
    decode_from(params, tokens, opts)
}

/// Pause inference: `m_inf` pauses, outputs ignored until the last one, pause logit masked
/// when `mask_pause_logit` is set.
#[allow(clippy::too_many_arguments)]
pub fn pause_generate<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &[usize],
    m_inf: usize,
    placement: Placement,
    max_new: usize,
    eos: usize,
    pause: usize,
    mask_pause_logit: bool,
) -> Result<Vec<usize>> {
    let opts = DecodeOptions {
        max_new,
        eos,
        banned: mask_pause_logit.then_some(pause),
    };
    generate_with_delay(params, prefix, pause, m_inf, placement, opts)
}

/// Plain greedy decoding with a bidirectional prefix and no delay.
pub fn greedy_generate<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &[usize],
    opts: DecodeOptions,
) -> Result<Vec<usize>> {
    decode_from(params, prefix.to_vec(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    const PAUSE: usize = 15;
    const EOS: usize = 14;

    fn model() -> ModelParams<f32> {
        let mut cfg = ModelConfig::new(2, 2, 16, 32, 40, 16);
        cfg.init_std = 0.5;
        ModelParams::init(&cfg, 2).unwrap()
    }

    fn pause_favoring_model() -> ModelParams<f32> {
        let mut p = model();
        let u = p.layout().unembedding.unwrap();
        // Column PAUSE of the unembedding dominates every other logit.
        let t = &mut p.tensors_mut()[u];
        for r in 0..16 {
            t.data_mut()[r * 16 + PAUSE] = 50.0;
        }
        p
    }

    #[test]
    fn answer_never_contains_pause() {
        let p = pause_favoring_model();
        let out = pause_generate(&p, &[1, 2, 3], 4, Placement::Append, 6, EOS, PAUSE, true).unwrap();
        assert!(!out.contains(&PAUSE));
        assert!(out.len() <= 6);
    }

    #[test]
    fn zero_delay_is_plain_greedy() {
        let p = model();
        let opts = DecodeOptions { max_new: 8, eos: EOS, banned: Some(PAUSE) };
        let a = pause_generate(&p, &[4, 5, 6], 0, Placement::Append, 8, EOS, PAUSE, true).unwrap();
        let b = greedy_generate(&p, &[4, 5, 6], opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decoding_is_deterministic() {
        let p = model();
        let run = || pause_generate(&p, &[7, 1], 3, Placement::Append, 5, EOS, PAUSE, true).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn overflow_is_length_error() {
        let p = model();
        let err = pause_generate(&p, &[1; 30], 10, Placement::Append, 4, EOS, PAUSE, true).unwrap_err();
        assert!(matches!(err, Error::Length { .. }));
    }
}
