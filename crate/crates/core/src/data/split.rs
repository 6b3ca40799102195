use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{largest_remainder, ClassLabel, DataError, SiloDataset, Splits};

/// Reassigns every sample to train/val/test.
///
/// Whole origin groups move together, so augmented variants never leak
/// across splits. Group totals are `round(G * train)` and `round(G * val)`,
/// distributed over classes by largest remainder; every present class keeps
/// at least one training group. The rest is test.
pub fn split(
    mut dataset: SiloDataset,
    train_fraction: f64,
    val_fraction: f64,
    seed: u64,
) -> Result<SiloDataset, DataError> {
    if !(train_fraction > 0.0 && train_fraction <= 1.0)
        || !(val_fraction >= 0.0 && train_fraction + val_fraction <= 1.0)
    {
        return Err(DataError::InvalidSpec(format!(
            "split fractions train={train_fraction} val={val_fraction}"
        )));
    }

    let mut groups: BTreeMap<u64, (ClassLabel, Vec<usize>)> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        let entry = groups.entry(s.origin_id).or_insert((s.label, Vec::new()));
        if entry.0 != s.label {
            return Err(DataError::InvalidSpec(format!(
                "origin {} carries two labels",
                s.origin_id
            )));
        }
        entry.1.push(i);
    }

    let mut by_class: BTreeMap<ClassLabel, Vec<u64>> = BTreeMap::new();
    for (&origin, (label, _)) in &groups {
        by_class.entry(*label).or_default().push(origin);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for origins in by_class.values_mut() {
        origins.shuffle(&mut rng);
    }

    let total = groups.len();
    let n_train = ((total as f64 * train_fraction).round() as usize).min(total);
    let n_val = ((total as f64 * val_fraction).round() as usize).min(total - n_train);
    let sizes: Vec<f64> = by_class.values().map(|v| v.len() as f64).collect();
    let train_q: Vec<f64> = sizes.iter().map(|g| g * train_fraction).collect();
    let val_q: Vec<f64> = sizes.iter().map(|g| g * val_fraction).collect();
    let train_alloc = largest_remainder(&train_q, n_train);
    let val_alloc = largest_remainder(&val_q, n_val);

    let mut splits = Splits::default();
    for (k, (label, origins)) in by_class.iter().enumerate() {
        let g = origins.len();
        let n_tr = train_alloc[k].clamp(1, g);
        let n_va = val_alloc[k].min(g - n_tr);
        let n_te = g - n_tr - n_va;
        let wants_test = train_fraction + val_fraction < 1.0;
        if (val_fraction > 0.0 && n_va == 0) || (wants_test && n_te == 0) {
            log::warn!(
                "{}: class {label} has {g} origin groups, too few for all three splits",
                dataset.silo_id
            );
        }
        for (j, origin) in origins.iter().enumerate() {
            let target = if j < n_tr {
                &mut splits.train
            } else if j < n_tr + n_va {
                &mut splits.val
            } else {
                &mut splits.test
            };
            target.extend_from_slice(&groups[origin].1);
        }
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    dataset.splits = splits;
    Ok(dataset)
}
