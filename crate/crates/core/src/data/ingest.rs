use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use super::{ClassLabel, DataError, Sample, SiloDataset};
use crate::nn::Tensor;

/// Outcome of [`ingest_directory`].
#[derive(Debug)]
pub struct IngestReport {
    pub dataset: SiloDataset,
    /// Files found under the dropped "other" class.
    pub skipped_other: usize,
    /// Files that could not be decoded.
    pub unreadable: Vec<PathBuf>,
    /// Subdirectories whose name is not a known class.
    pub unknown_dirs: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}

/// Loads `root/<class>/<image>` into a silo, every sample in the train split.
///
/// Images are converted to grayscale, resized bilinearly to
/// `input_size x input_size` and scaled to `[0, 1]`. The silo id is the
/// directory name.
pub fn ingest_directory(root: &Path, input_size: usize) -> Result<IngestReport, DataError> {
    if input_size == 0 {
        return Err(DataError::Ingestion("input_size must be positive".into()));
    }
    let mut samples = Vec::new();
    let mut skipped_other = 0;
    let mut unreadable = Vec::new();
    let mut unknown_dirs = Vec::new();

    for class_dir in sorted_entries(root)? {
        if !class_dir.is_dir() {
            continue;
        }
        let name = class_dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        if name.eq_ignore_ascii_case(ClassLabel::DROPPED) {
            skipped_other += sorted_entries(&class_dir)?.iter().filter(|p| p.is_file()).count();
            continue;
        }
        let Ok(label) = name.parse::<ClassLabel>() else {
            log::warn!("skipping unknown class directory {}", class_dir.display());
            unknown_dirs.push(name);
            continue;
        };
        for file in sorted_entries(&class_dir)? {
            if !file.is_file() {
                continue;
            }
            match load_gray(&file, input_size) {
                Ok(image) => {
                    let origin_id = samples.len() as u64;
                    samples.push(Sample {
                        image,
                        label,
                        origin_id,
                        transform: None,
                    });
                }
                Err(e) => {
                    log::warn!("skipping unreadable image {}: {e}", file.display());
                    unreadable.push(file);
                }
            }
        }
    }
    if skipped_other > 0 {
        log::info!("dropped {skipped_other} images of class `{}`", ClassLabel::DROPPED);
    }
    if samples.is_empty() {
        return Err(DataError::Ingestion(format!(
            "no usable images under {}",
            root.display()
        )));
    }
    let silo_id = root
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "ingested".into());
    Ok(IngestReport {
        dataset: SiloDataset::unsplit(silo_id, input_size, samples),
        skipped_other,
        unreadable,
        unknown_dirs,
    })
}

fn load_gray(path: &Path, size: usize) -> Result<Tensor, image::ImageError> {
    let img = image::open(path)?.to_luma8();
    let resized = image::imageops::resize(&img, size as u32, size as u32, FilterType::Triangle);
    let data = resized.as_raw().iter().map(|&p| p as f32 / 255.0).collect();
    Ok(Tensor::new(vec![1, size, size], data).expect("size x size buffer"))
}
