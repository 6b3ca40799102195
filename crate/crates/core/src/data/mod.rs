//! Silo data: synthetic generation, directory ingestion, augmentation and
//! leakage-free splitting.

mod augment;
mod dataset;
mod ingest;
mod label;
mod pgm;
mod spec;
mod split;
mod synth;

use std::path::PathBuf;

use sha2::{Digest, Sha256};

pub use augment::{augment, VariantParams};
pub use dataset::{Sample, SiloDataset, Split, Splits};
pub use ingest::{ingest_directory, IngestReport};
pub use label::ClassLabel;
pub use pgm::{export_pgm, pgm_bytes, write_pgm};
pub use spec::{AugmentConfig, SiloSpec, SiloStyle, SILO_COUNTS};
pub use split::split;
pub use synth::{render, synth_silo};

pub(crate) use spec::largest_remainder;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("invalid silo spec: {0}")]
    InvalidSpec(String),
    #[error("ingestion failed: {0}")]
    Ingestion(String),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Derives an independent 64-bit seed from a base seed, a label and an index.
pub fn sub_seed(base: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
