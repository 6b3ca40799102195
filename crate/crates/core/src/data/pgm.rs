use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, SiloDataset};
use crate::nn::Tensor;

/// Binary (P5) 8-bit PGM encoding of a `[1, h, w]` image in `[0, 1]`.
pub fn pgm_bytes(image: &Tensor) -> Vec<u8> {
    let shape = image.shape();
    let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(
        image.data()[..h * w]
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn write_pgm(image: &Tensor, path: &Path) -> Result<(), DataError> {
    let io = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&pgm_bytes(image)).map_err(io)
}

/// Writes up to `limit` samples as `<dir>/<silo>_<index>_<class>.pgm`.
/// Returns the number of files written.
pub fn export_pgm(dataset: &SiloDataset, dir: &Path, limit: usize) -> Result<usize, DataError> {
    fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut n = 0;
    for (i, s) in dataset.samples.iter().enumerate().take(limit) {
        let name = format!("{}_{i:05}_{}.pgm", dataset.silo_id, s.label);
        write_pgm(&s.image, &dir.join(name))?;
        n += 1;
    }
    Ok(n)
}
