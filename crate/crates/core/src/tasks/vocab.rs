use std::collections::{BTreeSet, HashMap};

use super::generate::TaskKind;
use crate::error::{Error, Result};

pub const PAUSE: &str = "<pause>";
pub const EOS: &str = "<eos>";
pub const SEP: &str = "<sep>";

/// Character vocabulary; specials sit above every standard symbol, `<pause>` last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

/// Characters every vocabulary carries regardless of task (the `.` filler).
const SHARED: &[char] = &['.'];

pub fn alphabet(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Lookup => "0123456789kv:;|=",
        TaskKind::Addition => "0123456789+=",
        TaskKind::Chain => "0123456789abcdefghij=;+?",
    }
}

pub fn build_vocab(kinds: &[TaskKind]) -> Vocab {
    let mut set: BTreeSet<char> = SHARED.iter().copied().collect();
    for &k in kinds {
        set.extend(alphabet(k).chars());
    }
    Vocab::from_symbols(set.into_iter().collect())
}

impl Vocab {
    pub fn from_symbols(symbols: Vec<char>) -> Self {
        let index = symbols.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        Self { symbols, index }
    }

    /// Number of standard (non-special) symbols.
    pub fn n_standard(&self) -> usize {
        self.symbols.len()
    }

    pub fn sep(&self) -> usize {
        self.symbols.len()
    }

    pub fn eos(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn pause(&self) -> usize {
        self.symbols.len() + 2
    }

    /// Total size including `<sep>`, `<eos>` and `<pause>`.
    pub fn len(&self) -> usize {
        self.symbols.len() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Size the model would need without the pause row.
    pub fn len_without_pause(&self) -> usize {
        self.len() - 1
    }

    pub fn id(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    /// Encodes characters; the literals `<pause>`, `<eos>`, `<sep>` map to their specials.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(text.len());
        let mut rest = text;
        while let Some(c) = rest.chars().next() {
            if c == '<' {
                let special = [(PAUSE, self.pause()), (EOS, self.eos()), (SEP, self.sep())]
                    .into_iter()
                    .find(|(lit, _)| rest.starts_with(lit));
                if let Some((lit, id)) = special {
                    out.push(id);
                    rest = &rest[lit.len()..];
                    continue;
                }
            }
            out.push(self.id(c).ok_or_else(|| Error::UnknownSymbol(c.to_string()))?);
            rest = &rest[c.len_utf8()..];
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out = String::with_capacity(ids.len());
        for &id in ids {
            match id {
                i if i < self.symbols.len() => out.push(self.symbols[i]),
                i if i == self.sep() => out.push_str(SEP),
                i if i == self.eos() => out.push_str(EOS),
                i if i == self.pause() => out.push_str(PAUSE),
                i => {
                    return Err(Error::Vocab {
                        id: i,
                        vocab_size: self.len(),
                    })
                }
            }
        }
        Ok(out)
    }

    /// FNV-1a over the symbol table, used to tag corpora and checkpoints.
    pub fn hash(&self) -> u32 {
        let mut h: u32 = 0x811c_9dc5;
        let mut feed = |b: u8| {
            h ^= b as u32;
            h = h.wrapping_mul(0x0100_0193);
        };
        let mut buf = [0u8; 4];
        for c in &self.symbols {
            c.encode_utf8(&mut buf).bytes().for_each(&mut feed);
        }
        for lit in [SEP, EOS, PAUSE] {
            lit.bytes().for_each(&mut feed);
        }
        h
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all() -> Vocab {
        build_vocab(&[TaskKind::Lookup, TaskKind::Addition, TaskKind::Chain])
    }

    #[test]
    fn ids_are_stable() {
        assert_eq!(all(), all());
        let v = build_vocab(&[TaskKind::Chain, TaskKind::Addition, TaskKind::Lookup]);
        assert_eq!(v, all());
    }

    #[test]
    fn pause_is_outside_the_standard_range() {
        let v = all();
        assert!(v.pause() >= v.n_standard());
        assert!(v.pause() > v.eos() && v.pause() > v.sep());
        assert_eq!(v.pause(), v.len() - 1);
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = all();
        assert_eq!(v.decode(&v.encode("12+3=").unwrap()).unwrap(), "12+3=");
        let ids: Vec<usize> = (0..v.len()).collect();
        assert_eq!(v.encode(&v.decode(&ids).unwrap()).unwrap(), ids);
    }

    #[test]
    fn unknown_symbols_are_rejected() {
        assert!(matches!(all().encode("x"), Err(Error::UnknownSymbol(_))));
        assert!(all().decode(&[999]).is_err());
    }

    #[test]
    fn filler_is_always_present() {
        assert!(build_vocab(&[TaskKind::Addition]).id('.').is_some());
    }
}
