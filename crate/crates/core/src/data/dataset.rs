use std::collections::{BTreeMap, HashSet};

use super::{ClassLabel, VariantParams};
use crate::nn::Tensor;

/// One labelled grayscale image, `[1, size, size]`, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: ClassLabel,
    /// Source image this sample was derived from; augmented variants share it.
    pub origin_id: u64,
    /// Augmentation applied to the origin, `None` for the original itself.
    pub transform: Option<VariantParams>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Disjoint index sets into [`SiloDataset::samples`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// One silo's private image set.
#[derive(Clone, Debug, PartialEq)]
pub struct SiloDataset {
    pub silo_id: String,
    pub input_size: usize,
    pub samples: Vec<Sample>,
    pub splits: Splits,
}

impl SiloDataset {
    /// Wraps samples with every index in the train split.
    pub fn unsplit(silo_id: impl Into<String>, input_size: usize, samples: Vec<Sample>) -> Self {
        let splits = Splits {
            train: (0..samples.len()).collect(),
            ..Splits::default()
        };
        Self {
            silo_id: silo_id.into(),
            input_size,
            samples,
            splits,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.splits.get(split).len()
    }

    /// `(image, class index)` pairs of one split, in split order.
    pub fn labelled(&self, split: Split) -> Vec<(&Tensor, usize)> {
        self.splits
            .get(split)
            .iter()
            .map(|&i| (&self.samples[i].image, self.samples[i].label.index()))
            .collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            *counts.entry(s.label).or_insert(0) += 1;
        }
        counts
    }

    pub fn split_class_counts(&self, split: Split) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for &i in self.splits.get(split) {
            *counts.entry(self.samples[i].label).or_insert(0) += 1;
        }
        counts
    }

    /// Checks split disjointness, coverage, origin grouping and pixel range.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut seen = vec![false; self.samples.len()];
        let mut origin_split: BTreeMap<u64, Split> = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            for &i in self.splits.get(split) {
                if i >= seen.len() {
                    return Err(format!("index {i} out of range"));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(format!("index {i} appears in more than one split"));
                }
                let origin = self.samples[i].origin_id;
                match origin_split.insert(origin, split) {
                    Some(prev) if prev != split => {
                        return Err(format!("origin {origin} leaks across {prev:?} and {split:?}"))
                    }
                    _ => {}
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("index {i} is in no split"));
        }
        let side = [1, self.input_size, self.input_size];
        for (i, s) in self.samples.iter().enumerate() {
            if s.image.shape() != side {
                return Err(format!("sample {i} has shape {:?}", s.image.shape()));
            }
            if s.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(format!("sample {i} has pixels outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn origins(&self) -> HashSet<u64> {
        self.samples.iter().map(|s| s.origin_id).collect()
    }
}
