//! Random pause insertion for pretraining sequences.
//!
//! Positions are 0-indexed. `ignore` holds every `k` with `tokens[k + 1] == <pause>`:
//! logits row `k` would have to predict a pause, so its loss term is skipped.
//! (With 1-indexed positions this is the set `{k : p̃_{k+1} = <pause>}` shifted by one.)

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::generate::mix_seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PausedSequence {
    pub tokens: Vec<usize>,
    pub ignore: Vec<usize>,
    pub n_original: usize,
    pub n_pauses: usize,
}

impl PausedSequence {
    /// Builds a sequence and derives its ignore set from the pause positions.
    pub fn from_tokens(tokens: Vec<usize>, pause: usize) -> Self {
        let ignore = ignore_positions(&tokens, pause);
        let n_pauses = tokens.iter().filter(|&&t| t == pause).count();
        Self {
            n_original: tokens.len() - n_pauses,
            tokens,
            ignore,
            n_pauses,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn strip_pauses(&self, pause: usize) -> Vec<usize> {
        self.tokens.iter().copied().filter(|&t| t != pause).collect()
    }

    /// Per-row loss targets: `Some(tokens[k+1])` unless `k` is ignored; the last row has none.
    pub fn targets(&self) -> Vec<Option<usize>> {
        let mut out: Vec<Option<usize>> = self.tokens.iter().skip(1).map(|&t| Some(t)).collect();
        for &k in &self.ignore {
            out[k] = None;
        }
        out.push(None);
        out
    }

    /// `ids<TAB>ignore`, pauses rendered as `<pause>`.
    pub fn to_line(&self, pause: usize) -> String {
        let ids: Vec<String> = self
            .tokens
            .iter()
            .map(|&t| if t == pause { "<pause>".to_string() } else { t.to_string() })
            .collect();
        let ign: Vec<String> = self.ignore.iter().map(usize::to_string).collect();
        format!("{}\t{}", ids.join(","), ign.join(","))
    }

    pub fn from_line(line: &str, pause: usize) -> Result<Self> {
        let (ids, ign) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format("paused sequence line without tab".into()))?;
        let bad = |s: &str| Error::Format(format!("bad token field {s:?}"));
        let tokens = ids
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| if s == "<pause>" { Ok(pause) } else { s.parse().map_err(|_| bad(s)) })
            .collect::<Result<Vec<usize>>>()?;
        let ignore = ign
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad(s)))
            .collect::<Result<Vec<usize>>>()?;
        let seq = Self::from_tokens(tokens, pause);
        if seq.ignore != ignore {
            return Err(Error::Format("ignore positions disagree with pause positions".into()));
        }
        Ok(seq)
    }
}

pub fn ignore_positions(tokens: &[usize], pause: usize) -> Vec<usize> {
    tokens
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] == pause)
        .map(|(k, _)| k)
        .collect()
}

/// Inserts `m` pauses into `p`.
///
/// Procedure: seed a `ChaCha8Rng` with `seed`, draw `m` gap indices i.i.d.
/// uniform on `0..=N` (gap `g` sits before original token `g`, gap `N` at the
/// end), then emit, for each gap in order, its pauses followed by token `g`.
pub fn random_insert(p: &[usize], m: usize, seed: u64, pause: usize) -> Result<PausedSequence> {
    if let Some(position) = p.iter().position(|&t| t == pause) {
        return Err(Error::Contamination { position });
    }
    let n = p.len();
    let mut counts = vec![0usize; n + 1];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..m {
        counts[rng.random_range(0..=n)] += 1;
    }
    let mut tokens = Vec::with_capacity(n + m);
    for (g, &c) in counts.iter().enumerate() {
        tokens.extend(std::iter::repeat_n(pause, c));
        if g < n {
            tokens.push(p[g]);
        }
    }
    Ok(PausedSequence::from_tokens(tokens, pause))
}

/// Pauses inserted into a window of `len` tokens at the given fraction.
pub fn pauses_for(fraction: f64, len: usize) -> usize {
    (fraction * len as f64).round() as usize
}

/// Splits `stream` into windows and pause-injects each one.
///
/// Every window receives `round(fraction * window_len)` pauses, seeded by
/// `(seed, window index)`. With `trim` the result is cut back to the window
/// length by dropping the tail. A trailing partial window is processed the same way.
pub fn inject_corpus(
    stream: &[usize],
    fraction: f64,
    window: usize,
    seed: u64,
    trim: bool,
    pause: usize,
) -> Result<Vec<PausedSequence>> {
    check_fraction(fraction)?;
    if window == 0 {
        return Err(Error::Range("window must be positive".into()));
    }
    stream
        .chunks(window)
        .enumerate()
        .map(|(i, w)| inject_window(w, fraction, mix_seed(seed, i as u64), trim, pause))
        .collect()
}

pub fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Range(format!("pause fraction {fraction} not in [0, 1)")));
    }
    Ok(())
}

pub fn inject_window(
    window: &[usize],
    fraction: f64,
    seed: u64,
    trim: bool,
    pause: usize,
) -> Result<PausedSequence> {
    let m = pauses_for(fraction, window.len());
    let seq = random_insert(window, m, seed, pause)?;
    if trim && seq.len() > window.len() {
        let mut tokens = seq.tokens;
        tokens.truncate(window.len());
        return Ok(PausedSequence::from_tokens(tokens, pause));
    }
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAUSE: usize = 99;

    #[test]
    fn zero_pauses_is_identity() {
        let s = random_insert(&[4, 5, 6], 0, 1, PAUSE).unwrap();
        assert_eq!(s.tokens, vec![4, 5, 6]);
        assert!(s.ignore.is_empty());
        assert_eq!((s.n_original, s.n_pauses), (3, 0));
    }

    #[test]
    fn contaminated_input_is_rejected() {
        assert!(matches!(
            random_insert(&[1, PAUSE, 2], 1, 0, PAUSE),
            Err(Error::Contamination { position: 1 })
        ));
    }

    #[test]
    fn golden_interleaving_for_seed_three() {
        // Independent reconstruction: draw the same gaps, then insert from the
        // highest gap down with Vec::insert so earlier indices stay valid.
        let p = [10, 11, 12, 13, 14, 15, 16, 17];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gaps: Vec<usize> = (0..3).map(|_| rng.random_range(0..=8)).collect();
        gaps.sort_unstable();
        let mut expect = p.to_vec();
        for &g in gaps.iter().rev() {
            expect.insert(g, PAUSE);
        }
        let got = random_insert(&p, 3, 3, PAUSE).unwrap();
        assert_eq!(got.tokens, expect);
        // Frozen from the procedure above.
        assert_eq!(
            got.tokens,
            vec![PAUSE, 10, 11, 12, 13, 14, PAUSE, PAUSE, 15, 16, 17]
        );
        assert_eq!(got.ignore, vec![5, 6]);
    }

    #[test]
    fn ignore_set_marks_rows_before_pauses() {
        let s = PausedSequence::from_tokens(vec![PAUSE, 1, PAUSE, PAUSE, 2, PAUSE], PAUSE);
        assert_eq!(s.ignore, vec![1, 2, 4]);
        assert_eq!(s.n_pauses, 4);
        assert_eq!(s.targets(), vec![Some(1), None, None, Some(2), None, None]);
    }

    #[test]
    fn fraction_zero_passes_windows_through() {
        let stream: Vec<usize> = (0..1000).map(|i| i % 17).collect();
        let out = inject_corpus(&stream, 0.0, 256, 3, true, PAUSE).unwrap();
        let joined: Vec<usize> = out.iter().flat_map(|s| s.tokens.clone()).collect();
        assert_eq!(joined, stream);
    }

    #[test]
    fn ten_percent_of_256_is_26_pauses() {
        assert_eq!(pauses_for(0.1, 256), 26);
        let stream: Vec<usize> = (0..512).map(|i| i % 17).collect();
        let kept = inject_corpus(&stream, 0.1, 256, 3, false, PAUSE).unwrap();
        assert!(kept.iter().all(|s| s.len() == 282 && s.n_pauses == 26));
        let trimmed = inject_corpus(&stream, 0.1, 256, 3, true, PAUSE).unwrap();
        assert!(trimmed.iter().all(|s| s.len() == 256));
    }

    #[test]
    fn fraction_must_be_below_one() {
        assert!(inject_corpus(&[1, 2], 1.0, 2, 0, true, PAUSE).is_err());
        assert!(inject_corpus(&[1, 2], -0.1, 2, 0, true, PAUSE).is_err());
    }

    #[test]
    fn line_format_round_trip() {
        let s = random_insert(&[3, 1, 4, 1, 5], 3, 2, PAUSE).unwrap();
        let line = s.to_line(PAUSE);
        assert!(line.contains("<pause>"));
        assert_eq!(PausedSequence::from_line(&line, PAUSE).unwrap(), s);
        assert_eq!(
            PausedSequence::from_tokens(vec![7, PAUSE, 8], PAUSE).to_line(PAUSE),
            "7,<pause>,8\t0"
        );
    }
}
