use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numeric::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Linear warmup, then constant.
    #[default]
    Constant,
    /// Linear warmup, then cosine decay to zero at `total_steps`.
    Cosine,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Self::Constant),
            "cosine" => Ok(Self::Cosine),
            other => Err(Error::Config(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Constant => "constant",
            Self::Cosine => "cosine",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub grad_clip_norm: Option<f64>,
    pub precision: Precision,
    pub schedule: Schedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            warmup_steps: 100,
            total_steps: 3000,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            grad_clip_norm: Some(1.0),
            precision: Precision::F32,
            schedule: Schedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup_steps {} exceeds total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Stable text form; hashed into the checkpoint header.
    pub fn to_kv(&self, prefix: &str) -> String {
        let clip = self
            .grad_clip_norm
            .map_or_else(|| "none".to_string(), |c| c.to_string());
        format!(
            "{prefix}.lr = {}\n{prefix}.warmup_steps = {}\n{prefix}.total_steps = {}\n\
             {prefix}.batch_size = {}\n{prefix}.seed = {}\n{prefix}.beta1 = {}\n{prefix}.beta2 = {}\n\
             {prefix}.eps = {}\n{prefix}.grad_clip = {clip}\n{prefix}.precision = {}\n{prefix}.schedule = {}\n",
            self.learning_rate,
            self.warmup_steps,
            self.total_steps,
            self.batch_size,
            self.seed,
            self.beta1,
            self.beta2,
            self.eps,
            self.precision,
            self.schedule,
        )
    }

    /// Applies `<prefix>.<field>`; returns `false` when the key is not ours.
    pub fn set(&mut self, prefix: &str, key: &str, value: &str) -> Result<bool> {
        let Some(field) = key.strip_prefix(prefix).and_then(|k| k.strip_prefix('.')) else {
            return Ok(false);
        };
        fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match field {
            "lr" => self.learning_rate = parse(key, value)?,
            "warmup_steps" => self.warmup_steps = parse(key, value)?,
            "total_steps" | "steps" => self.total_steps = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "beta1" => self.beta1 = parse(key, value)?,
            "beta2" => self.beta2 = parse(key, value)?,
            "eps" => self.eps = parse(key, value)?,
            "grad_clip" => {
                self.grad_clip_norm = match value {
                    "none" | "off" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "precision" => self.precision = value.parse()?,
            "schedule" => self.schedule = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn digest(&self) -> String {
        hex_digest(self.to_kv("train").as_bytes())[..16].to_string()
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_cannot_exceed_total() {
        let cfg = TrainConfig {
            warmup_steps: 10,
            total_steps: 5,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn kv_keys_round_trip() {
        let mut cfg = TrainConfig::default();
        let text = TrainConfig {
            learning_rate: 3e-4,
            grad_clip_norm: None,
            seed: 9,
            ..TrainConfig::default()
        }
        .to_kv("train");
        for line in text.lines() {
            let (k, v) = line.split_once('=').unwrap();
            assert!(cfg.set("train", k.trim(), v.trim()).unwrap());
        }
        assert_eq!(cfg.learning_rate, 3e-4);
        assert_eq!(cfg.grad_clip_norm, None);
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn digest_tracks_content() {
        let a = TrainConfig::default();
        let b = TrainConfig {
            seed: 1,
            ..TrainConfig::default()
        };
        assert_eq!(a.digest(), TrainConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
