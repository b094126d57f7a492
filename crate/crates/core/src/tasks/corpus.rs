//! Pretraining corpus: solved task instances rendered as text, `<sep>`-separated.
//!
//! Binary dump layout (little-endian):
//!
//! | offset | size | field                              |
//! |--------|------|------------------------------------|
//! | 0      | 9    | magic `PAUSECORP`                  |
//! | 9      | 1    | format version (1)                 |
//! | 10     | 2    | reserved, zero                     |
//! | 12     | 4    | vocabulary hash (FNV-1a 32)        |
//! | 16     | 2·n  | token ids as u16                   |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::generate::{mix_seed, Split, TaskSampler, TaskSpec};
use super::vocab::Vocab;
use crate::error::{Error, Result};

pub const CORPUS_MAGIC: &[u8; 9] = b"PAUSECORP";
pub const CORPUS_VERSION: u8 = 1;
const HEADER_LEN: usize = 16;

/// Exactly `total_tokens` ids drawn from the train split of `specs`.
pub fn gen_pretrain_corpus(
    specs: &[TaskSpec],
    vocab: &Vocab,
    total_tokens: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if total_tokens == 0 {
        return Err(Error::Empty("corpus length"));
    }
    if specs.is_empty() {
        return Err(Error::Empty("corpus task specs"));
    }
    let mut samplers = specs
        .iter()
        .enumerate()
        .map(|(i, s)| TaskSampler::new(s.with_split(Split::Train), mix_seed(seed, i as u64 + 1)))
        .collect::<Result<Vec<_>>>()?;
    let mut pick = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(total_tokens + 64);
    while out.len() < total_tokens {
        let i = pick.random_range(0..samplers.len());
        let (p, t) = samplers[i].next_instance()?;
        out.extend(vocab.encode(&p)?);
        out.extend(vocab.encode(&t)?);
        out.push(vocab.sep());
    }
    out.truncate(total_tokens);
    Ok(out)
}

pub fn encode_corpus(tokens: &[usize], vocab: &Vocab) -> Result<Vec<u8>> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 2 * tokens.len());
    buf.extend_from_slice(CORPUS_MAGIC);
    buf.push(CORPUS_VERSION);
    buf.extend_from_slice(&[0, 0]);
    buf.extend_from_slice(&vocab.hash().to_le_bytes());
    for &t in tokens {
        let id = u16::try_from(t).map_err(|_| Error::Vocab {
            id: t,
            vocab_size: u16::MAX as usize + 1,
        })?;
        buf.extend_from_slice(&id.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_corpus(bytes: &[u8], vocab: &Vocab) -> Result<Vec<usize>> {
    if bytes.len() < HEADER_LEN || &bytes[..9] != CORPUS_MAGIC {
        return Err(Error::Format("missing PAUSECORP magic".into()));
    }
    if bytes[9] != CORPUS_VERSION {
        return Err(Error::Format(format!("unsupported corpus version {}", bytes[9])));
    }
    let hash = u32::from_le_bytes(bytes[12..16].try_into().unwrap());
    if hash != vocab.hash() {
        return Err(Error::Compatibility(format!(
            "corpus vocab hash {hash:08x} != {:08x}",
            vocab.hash()
        )));
    }
    let body = &bytes[HEADER_LEN..];
    if !body.len().is_multiple_of(2) {
        return Err(Error::Corruption("odd corpus body length".into()));
    }
    Ok(body
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]) as usize)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::generate::TaskKind;
    use crate::tasks::vocab::build_vocab;

    fn specs() -> Vec<TaskSpec> {
        vec![
            TaskSpec::new(TaskKind::Lookup, 4, Split::Train, 0),
            TaskSpec::new(TaskKind::Addition, 2, Split::Train, 0),
        ]
    }

    #[test]
    fn exact_length_and_no_pauses() {
        let vocab = build_vocab(&[TaskKind::Lookup, TaskKind::Addition]);
        let c = gen_pretrain_corpus(&specs(), &vocab, 10_000, 5).unwrap();
        assert_eq!(c.len(), 10_000);
        assert!(!c.contains(&vocab.pause()));
        assert!(c.contains(&vocab.sep()));
    }

    #[test]
    fn seeded_stream_is_reproducible() {
        let vocab = build_vocab(&[TaskKind::Lookup, TaskKind::Addition]);
        let a = gen_pretrain_corpus(&specs(), &vocab, 3_000, 5).unwrap();
        let b = gen_pretrain_corpus(&specs(), &vocab, 3_000, 5).unwrap();
        assert_eq!(encode_corpus(&a, &vocab).unwrap(), encode_corpus(&b, &vocab).unwrap());
        let c = gen_pretrain_corpus(&specs(), &vocab, 3_000, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn binary_dump_round_trip_and_header() {
        let vocab = build_vocab(&[TaskKind::Lookup, TaskKind::Addition]);
        let a = gen_pretrain_corpus(&specs(), &vocab, 500, 1).unwrap();
        let bytes = encode_corpus(&a, &vocab).unwrap();
        assert_eq!(&bytes[..9], b"PAUSECORP");
        assert_eq!(bytes.len(), 16 + 1000);
        assert_eq!(decode_corpus(&bytes, &vocab).unwrap(), a);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_corpus(&bad, &vocab), Err(Error::Format(_))));
    }
}
