use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pause::Placement;

/// The four pretraining × finetuning combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    StdPtStdFt,
    StdPtPauseFt,
    PausePtStdFt,
    PausePtPauseFt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::StdPtStdFt,
        Variant::StdPtPauseFt,
        Variant::PausePtStdFt,
        Variant::PausePtPauseFt,
    ];

    pub fn pause_pretrained(self) -> bool {
        matches!(self, Self::PausePtStdFt | Self::PausePtPauseFt)
    }

    pub fn pause_finetuned(self) -> bool {
        matches!(self, Self::StdPtPauseFt | Self::PausePtPauseFt)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::StdPtStdFt => "StdPT_StdFT",
            Self::StdPtPauseFt => "StdPT_PauseFT",
            Self::PausePtStdFt => "PausePT_StdFT",
            Self::PausePtPauseFt => "PausePT_PauseFT",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

/// One experimental cell family: a variant with its delays, placement, task and seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariantSpec {
    pub variant: Variant,
    pub m_ft: usize,
    pub m_inf: usize,
    pub placement: Placement,
    pub task: String,
    pub seeds: Vec<u64>,
}

impl VariantSpec {
    /// `m_inf` defaults to `m_ft`. Standard finetuning admits no finetuning pauses.
    pub fn new(
        variant: Variant,
        m_ft: usize,
        m_inf: Option<usize>,
        placement: Placement,
        task: &str,
        seeds: Vec<u64>,
    ) -> Result<Self> {
        if !variant.pause_finetuned() && m_ft != 0 {
            return Err(Error::Config(format!(
                "{variant} uses standard finetuning and requires M_ft = 0, got {m_ft}"
            )));
        }
        if seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(Self {
            variant,
            m_ft,
            m_inf: m_inf.unwrap_or(m_ft),
            placement,
            task: task.to_string(),
            seeds,
        })
    }
}
