use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Standard fetal plane categories kept for classification.
///
/// The "other" category is recognised at ingestion time only and dropped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Abdomen,
    Brain,
    Femur,
    Thorax,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::Abdomen,
        ClassLabel::Brain,
        ClassLabel::Femur,
        ClassLabel::Thorax,
    ];

    /// Name of the ingestion-only category that is always discarded.
    pub const DROPPED: &'static str = "other";

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Abdomen => "abdomen",
            ClassLabel::Brain => "brain",
            ClassLabel::Femur => "femur",
            ClassLabel::Thorax => "thorax",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.name() == lower)
            .ok_or_else(|| format!("unknown class `{s}`"))
    }
}
