//! Deterministic synthetic tasks.
//!
//! * lookup: `k3:v7;k1:v2|k1=` -> `v2` (retrieve the value bound to a key)
//! * addition: `23+45=` -> `68`
//! * chain: `a=3;b=a+2;b?` -> `5` (follow a chain of increments)
//!
//! Train and test splits partition the instance space by the parity of an
//! FNV-1a hash of `prefix \t target`, so they can never overlap.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    Lookup,
    Addition,
    Chain,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Lookup, TaskKind::Addition, TaskKind::Chain];

    fn tag(self) -> u64 {
        match self {
            Self::Lookup => 1,
            Self::Addition => 2,
            Self::Chain => 3,
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lookup" => Ok(Self::Lookup),
            "addition" => Ok(Self::Addition),
            "chain" => Ok(Self::Chain),
            other => Err(Error::Config(format!("unknown task kind {other:?}"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Lookup => "lookup",
            Self::Addition => "addition",
            Self::Chain => "chain",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

/// One task family with its size knob: number of keys, operand digits, or chain length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub size: usize,
    pub split: Split,
    pub seed: u64,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, size: usize, split: Split, seed: u64) -> Self {
        Self { kind, size, split, seed }
    }

    pub fn with_split(self, split: Split) -> Self {
        Self { split, ..self }
    }

    /// Short label such as `lookup8`, used in reports.
    pub fn label(&self) -> String {
        format!("{}{}", self.kind, self.size)
    }

    fn check(&self) -> Result<()> {
        let max = match self.kind {
            TaskKind::Lookup => 10,
            TaskKind::Addition => 9,
            TaskKind::Chain => 10,
        };
        if self.size == 0 || self.size > max {
            return Err(Error::Generation(format!(
                "{} size must be in 1..={max}, got {}",
                self.kind, self.size
            )));
        }
        Ok(())
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn split_of(prefix: &str, target: &str) -> Split {
    let h = fnv1a64(format!("{prefix}\t{target}").as_bytes());
    if h & 1 == 0 {
        Split::Train
    } else {
        Split::Test
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Endless stream of instances from one split of one task.
pub struct TaskSampler {
    spec: TaskSpec,
    rng: ChaCha8Rng,
}

const MAX_ATTEMPTS: usize = 100_000;

impl TaskSampler {
    pub fn new(spec: TaskSpec, seed: u64) -> Result<Self> {
        spec.check()?;
        let stream = mix_seed(mix_seed(seed, spec.kind.tag()), spec.size as u64);
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(stream),
        })
    }

    pub fn next_instance(&mut self) -> Result<(String, String)> {
        for _ in 0..MAX_ATTEMPTS {
            let (p, t) = sample(self.spec.kind, self.spec.size, &mut self.rng);
            if split_of(&p, &t) == self.spec.split {
                return Ok((p, t));
            }
        }
        Err(Error::Generation(format!(
            "no {:?} instance of {} found",
            self.spec.split,
            self.spec.label()
        )))
    }
}

fn sample(kind: TaskKind, size: usize, rng: &mut ChaCha8Rng) -> (String, String) {
    match kind {
        TaskKind::Lookup => {
            let mut keys: Vec<u32> = (0..10).collect();
            keys.shuffle(rng);
            keys.truncate(size);
            let values: Vec<u32> = (0..size).map(|_| rng.random_range(0..10)).collect();
            let pairs: Vec<String> = keys
                .iter()
                .zip(&values)
                .map(|(k, v)| format!("k{k}:v{v}"))
                .collect();
            let q = rng.random_range(0..size);
            (
                format!("{}|k{}=", pairs.join(";"), keys[q]),
                format!("v{}", values[q]),
            )
        }
        TaskKind::Addition => {
            let hi = 10u64.pow(size as u32);
            let a = rng.random_range(0..hi);
            let b = rng.random_range(0..hi);
            (format!("{a}+{b}="), format!("{}", a + b))
        }
        TaskKind::Chain => {
            let mut names: Vec<char> = ('a'..='j').collect();
            names.shuffle(rng);
            names.truncate(size);
            let mut value = rng.random_range(0..10u32);
            let mut parts = vec![format!("{}={value}", names[0])];
            let mut values = vec![value];
            for w in names.windows(2) {
                let step = rng.random_range(0..10u32);
                value += step;
                values.push(value);
                parts.push(format!("{}={}+{step}", w[1], w[0]));
            }
            let q = rng.random_range(0..size);
            (
                format!("{};{}?", parts.join(";"), names[q]),
                format!("{}", values[q]),
            )
        }
    }
}

/// `n` examples from the spec's split; deterministic per `(spec, n)`.
pub fn gen_task_examples(spec: &TaskSpec, n: usize) -> Result<Vec<(String, String)>> {
    if n == 0 {
        return Err(Error::Empty("example count"));
    }
    let mut sampler = TaskSampler::new(*spec, spec.seed)?;
    (0..n).map(|_| sampler.next_instance()).collect()
}

/// Re-solves an instance from its prefix alone.
pub fn solve(kind: TaskKind, prefix: &str) -> Option<String> {
    match kind {
        TaskKind::Lookup => {
            let (pairs, query) = prefix.split_once('|')?;
            let key = query.strip_suffix('=')?;
            pairs.split(';').find_map(|pair| {
                let (k, v) = pair.split_once(':')?;
                (k == key).then(|| v.to_string())
            })
        }
        TaskKind::Addition => {
            let (a, b) = prefix.strip_suffix('=')?.split_once('+')?;
            Some((a.parse::<u64>().ok()? + b.parse::<u64>().ok()?).to_string())
        }
        TaskKind::Chain => {
            let (defs, query) = prefix.rsplit_once(';')?;
            let query = query.strip_suffix('?')?;
            let mut env = std::collections::HashMap::new();
            for def in defs.split(';') {
                let (name, expr) = def.split_once('=')?;
                let v = match expr.split_once('+') {
                    Some((var, step)) => env.get(var)? + step.parse::<u64>().ok()?,
                    None => expr.parse::<u64>().ok()?,
                };
                env.insert(name, v);
            }
            env.get(query).map(u64::to_string)
        }
    }
}

/// Dataset dump: one `prefix<TAB>target` line per example.
pub fn dump_examples(examples: &[(String, String)]) -> String {
    examples
        .iter()
        .map(|(p, t)| format!("{p}\t{t}\n"))
        .collect()
}

pub fn parse_examples(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split_once('\t')
                .map(|(p, t)| (p.to_string(), t.to_string()))
                .ok_or_else(|| Error::Format(format!("dataset line without tab: {l:?}")))
        })
        .collect()
}
