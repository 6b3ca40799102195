//! Split and pixel checks computed straight from the samples.

use std::collections::HashMap;

use fedkit::data::{synth_silo, ClassLabel, SiloDataset, SiloSpec, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every way `ds` breaks the split contract: an index missing or repeated,
/// an origin whose variants straddle two splits, a pixel outside [0, 1].
pub fn split_violations(ds: &SiloDataset) -> Vec<String> {
    let mut bad = Vec::new();
    let mut owner: Vec<Option<Split>> = vec![None; ds.samples.len()];
    for split in [Split::Train, Split::Val, Split::Test] {
        for &i in ds.splits.get(split) {
            match owner.get(i) {
                None => bad.push(format!("index {i} out of range")),
                Some(Some(prev)) => bad.push(format!("index {i} in {prev:?} and {split:?}")),
                Some(None) => owner[i] = Some(split),
            }
        }
    }
    let mut origin_split: HashMap<u64, Split> = HashMap::new();
    for (i, s) in ds.samples.iter().enumerate() {
        let Some(split) = owner[i] else {
            bad.push(format!("index {i} in no split"));
            continue;
        };
        match origin_split.insert(s.origin_id, split) {
            Some(prev) if prev != split => {
                bad.push(format!("origin {} in {prev:?} and {split:?}", s.origin_id))
            }
            _ => {}
        }
        if let Some(p) = s.image.data().iter().find(|p| !(0.0..=1.0).contains(*p)) {
            bad.push(format!("sample {i} has pixel {p}"));
        }
    }
    bad
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> SiloSpec {
    let counts = loop {
        let c: [usize; 4] = std::array::from_fn(|_| rng.random_range(0..7));
        if c.iter().sum::<usize>() > 0 {
            break c;
        }
    };
    let mut s = SiloSpec::new("random", counts);
    s.augmentation_factor = rng.random_range(1..5);
    s.train_fraction = rng.random_range(0.2..0.9);
    s.val_fraction = rng.random_range(0.0..0.1);
    s.input_size = rng.random_range(4..12);
    s
}

/// Generates `cases` random silos and checks each one.
pub fn random_specs_are_clean(cases: u64) -> Result<(), String> {
    for case in 0..cases {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let spec = random_spec(&mut rng);
        let ds = synth_silo(&spec, rng.random()).map_err(|e| format!("case {case}: {e}"))?;
        if ds.len() != spec.total_samples() {
            return Err(format!("case {case}: {} samples, expected {}", ds.len(), spec.total_samples()));
        }
        if let Some(v) = split_violations(&ds).first() {
            return Err(format!("case {case}: {v}"));
        }
    }
    Ok(())
}

/// The table silos: no thorax in the two silos without it, clean splits,
/// and the single-board node training on 240 images.
pub fn table_silos_are_clean(seed: u64) -> Result<(), String> {
    for spec in SiloSpec::reference_all() {
        let ds = synth_silo(&spec, seed).map_err(|e| e.to_string())?;
        if let Some(v) = split_violations(&ds).first() {
            return Err(format!("{}: {v}", spec.silo_id));
        }
        let thorax = ds.samples.iter().filter(|s| s.label == ClassLabel::Thorax).count();
        if matches!(spec.silo_id.as_str(), "uganda" | "ghana") && thorax > 0 {
            return Err(format!("{} has {thorax} thorax images", spec.silo_id));
        }
        if spec.silo_id == "malawi" && ds.split_len(Split::Train) != 240 {
            return Err(format!("malawi trains on {}", ds.split_len(Split::Train)));
        }
    }
    Ok(())
}
