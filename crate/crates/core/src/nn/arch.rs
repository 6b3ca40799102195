use serde::{Deserialize, Serialize};

use super::NnError;

/// One residual stage: `blocks` basic blocks of `width` channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSpec {
    pub blocks: usize,
    pub width: usize,
}

/// Shape of the compact residual classifier.
///
/// A 3x3 stem convolution feeds the stages in order. Every stage after the
/// first halves the spatial resolution in its first block, which then needs
/// a 1x1 projection on the skip path. Global average pooling and a linear
/// head produce the logits.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_size: usize,
    pub channels: usize,
    pub num_classes: usize,
    /// Stride of the stem convolution (1 or 2).
    #[serde(default = "default_stem_stride")]
    pub stem_stride: usize,
    pub stages: Vec<StageSpec>,
}

fn default_stem_stride() -> usize {
    1
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            input_size: 32,
            channels: 1,
            num_classes: 4,
            stem_stride: 1,
            stages: vec![
                StageSpec { blocks: 2, width: 16 },
                StageSpec { blocks: 2, width: 32 },
                StageSpec { blocks: 2, width: 64 },
            ],
        }
    }
}

impl ArchitectureSpec {
    /// A narrow three-stage network with a strided stem, cheap enough to
    /// train the whole six-silo experiment on one CPU core in about a minute.
    pub fn desk() -> Self {
        Self {
            input_size: 32,
            channels: 1,
            num_classes: 4,
            stem_stride: 2,
            stages: vec![
                StageSpec { blocks: 1, width: 8 },
                StageSpec { blocks: 1, width: 16 },
                StageSpec { blocks: 1, width: 32 },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.num_classes < 2 {
            return Err(NnError::Config(format!(
                "num_classes must be at least 2, got {}",
                self.num_classes
            )));
        }
        if self.input_size == 0 || self.channels == 0 {
            return Err(NnError::Config(
                "input_size and channels must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.stem_stride) {
            return Err(NnError::Config(format!(
                "stem_stride must be 1 or 2, got {}",
                self.stem_stride
            )));
        }
        if self.stages.is_empty() {
            return Err(NnError::Config("at least one stage is required".into()));
        }
        for (i, s) in self.stages.iter().enumerate() {
            if s.blocks == 0 || s.width == 0 {
                return Err(NnError::Config(format!(
                    "stage {i} needs positive blocks and width, got {s:?}"
                )));
            }
        }
        Ok(())
    }
}
