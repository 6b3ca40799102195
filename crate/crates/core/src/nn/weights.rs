use std::collections::HashSet;
use std::fmt;

use sha2::{Digest, Sha256};

use super::{NnError, Tensor};

/// SHA-256 digest over the ordered tensor names and shapes of a weight set.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ManifestHash(pub [u8; 32]);

impl fmt::Display for ManifestHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ManifestHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ManifestHash({self})")
    }
}

/// Named, ordered collection of tensors exchanged between nodes.
///
/// Names and shapes are fixed at construction; only tensor values can be
/// mutated afterwards, so the manifest hash stays valid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    entries: Vec<(String, Tensor)>,
    manifest: ManifestHash,
}

impl ModelWeights {
    pub fn new(entries: Vec<(String, Tensor)>) -> Result<Self, NnError> {
        let mut seen = HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(NnError::Config(format!("duplicate tensor name `{name}`")));
            }
        }
        let manifest = manifest_of(&entries);
        Ok(Self { entries, manifest })
    }

    pub fn manifest_hash(&self) -> ManifestHash {
        self.manifest
    }

    /// Two weight sets are compatible iff their manifests are identical.
    pub fn is_compatible(&self, other: &ModelWeights) -> bool {
        self.manifest == other.manifest
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.entries[index].1
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].1
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn num_parameters(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// Largest absolute elementwise difference; `None` if incompatible.
    pub fn max_abs_diff(&self, other: &ModelWeights) -> Option<f32> {
        if !self.is_compatible(other) {
            return None;
        }
        let mut worst = 0.0f32;
        for ((_, a), (_, b)) in self.entries.iter().zip(&other.entries) {
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x - y).abs());
            }
        }
        Some(worst)
    }

    /// Raw little-endian bytes of every value, in manifest order.
    pub fn value_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.num_parameters() * 4);
        for (_, t) in &self.entries {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

fn manifest_of(entries: &[(String, Tensor)]) -> ManifestHash {
    let mut hasher = Sha256::new();
    hasher.update((entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        hasher.update((name.len() as u32).to_le_bytes());
        hasher.update(name.as_bytes());
        hasher.update((t.shape().len() as u32).to_le_bytes());
        for d in t.shape() {
            hasher.update((*d as u64).to_le_bytes());
        }
    }
    ManifestHash(hasher.finalize().into())
}
